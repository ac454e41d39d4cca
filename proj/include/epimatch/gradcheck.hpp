#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace epimatch {

struct GradcheckComponent {
  std::string name;
  int instances = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int d_epi_instances = 1000;
  double d_epi_step = 1e-6;
  double d_epi_tolerance = 1e-5;
  int matcher_seeds = 20;
  double matcher_step = 1e-5;
  double matcher_tolerance = 1e-4;
  // Negates every analytic gradient; the suite must then fail.
  bool inject_sign_flip = false;
};

struct GradcheckReport {
  std::vector<GradcheckComponent> components;
  bool pass = false;
};

/// Analytic d_epi gradient vs central differences on random (F, x1, x2).
GradcheckComponent check_d_epi(const GradcheckOptions& opt);

/// Full matcher backward (coarse and fine, all parameters) vs central
/// differences on 32x32 toy pairs (4x4 coarse cells), one pair per seed.
/// Components: W_coarse, W_fine, tau.
std::vector<GradcheckComponent> check_matcher(const GradcheckOptions& opt);

GradcheckReport run_gradcheck(const GradcheckOptions& opt);

}  // namespace epimatch
