#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "epimatch/gradcheck.hpp"
#include "epimatch/io.hpp"
#include "epimatch/metrics.hpp"
#include "epimatch/pipeline.hpp"

namespace py = pybind11;
using namespace epimatch;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

std::vector<Correspondence> to_matches(const Points& x1, const Points& x2) {
  EPIMATCH_REQUIRE(x1.rows() == x2.rows(), ErrorCode::kBadDimensions, "x1 and x2 need the same number of rows");
  std::vector<Correspondence> out;
  out.reserve(static_cast<std::size_t>(x1.rows()));
  for (Eigen::Index i = 0; i < x1.rows(); ++i) out.push_back({{x1(i, 0), x1(i, 1)}, {x2(i, 0), x2(i, 1)}, 1.0});
  return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 5, Eigen::RowMajor> from_matches(const std::vector<Correspondence>& m) {
  Eigen::Matrix<double, Eigen::Dynamic, 5, Eigen::RowMajor> out(static_cast<Eigen::Index>(m.size()), 5);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& c = m[i];
    out.row(static_cast<Eigen::Index>(i)) << c.x1.u / c.x1.w, c.x1.v / c.x1.w, c.x2.u / c.x2.w, c.x2.v / c.x2.w,
        c.confidence;
  }
  return out;
}

py::dict pair_dict(const RenderedPair& p) {
  py::dict d;
  d["image1"] = p.image1;
  d["image2"] = p.image2;
  d["depth1"] = p.depth1;
  d["depth2"] = p.depth2;
  d["K"] = p.K;
  d["R"] = p.pose.R;
  d["t"] = p.pose.t;
  d["F"] = p.F_gt ? py::cast(p.F_gt->m) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Epipolar geometry, robust estimation and the epimatch matcher.";
  py::register_exception<Error>(m, "EpimatchError", PyExc_RuntimeError);

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init<>())
      .def(py::init([](double fx, double fy, double cx, double cy) { return CameraIntrinsics{fx, fy, cx, cy}; }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"))
      .def_readwrite("fx", &CameraIntrinsics::fx)
      .def_readwrite("fy", &CameraIntrinsics::fy)
      .def_readwrite("cx", &CameraIntrinsics::cx)
      .def_readwrite("cy", &CameraIntrinsics::cy)
      .def("__repr__", [](const CameraIntrinsics& k) {
        return "CameraIntrinsics(fx=" + std::to_string(k.fx) + ", fy=" + std::to_string(k.fy) +
               ", cx=" + std::to_string(k.cx) + ", cy=" + std::to_string(k.cy) + ")";
      });

  m.def(
      "fundamental_from_pose",
      [](const CameraIntrinsics& K1, const CameraIntrinsics& K2, const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
        return fundamental_from_pose(K1, K2, RelativePose{R, t}).m;
      },
      py::arg("K1"), py::arg("K2"), py::arg("R"), py::arg("t"),
      "F (unit Frobenius norm) for the camera-1 to camera-2 motion (R, t).");

  m.def(
      "symmetric_epipolar_distance_sq",
      [](const Eigen::Matrix3d& F, const Points& x1, const Points& x2) {
        const auto matches = to_matches(x1, x2);
        Eigen::VectorXd out(static_cast<Eigen::Index>(matches.size()));
        for (std::size_t i = 0; i < matches.size(); ++i) {
          out(static_cast<Eigen::Index>(i)) =
              symmetric_epipolar_distance_sq(FundamentalMatrix(F), matches[i].x1, matches[i].x2);
        }
        return out;
      },
      py::arg("F"), py::arg("x1"), py::arg("x2"));

  m.def(
      "estimate_relative_pose",
      [](const Points& x1, const Points& x2, const CameraIntrinsics& K1, const CameraIntrinsics& K2,
         double inlier_threshold, int iterations, std::uint64_t seed) {
        RansacConfig cfg;
        cfg.inlier_threshold = inlier_threshold;
        cfg.iterations = iterations;
        cfg.seed = seed;
        const PoseEstimate est = estimate_relative_pose(to_matches(x1, x2), K1, K2, cfg);
        py::dict d;
        d["R"] = est.pose.R;
        d["t"] = est.pose.t;
        d["F"] = est.ransac.F.m;
        d["inliers"] = est.ransac.inlier_mask;
        d["no_consensus"] = est.ransac.no_consensus;
        return d;
      },
      py::arg("x1"), py::arg("x2"), py::arg("K1"), py::arg("K2"), py::arg("inlier_threshold") = 1e-5,
      py::arg("iterations") = 500, py::arg("seed") = 0,
      "RANSAC eight-point F, then the cheirality-checked pose. The threshold is a squared symmetric "
      "epipolar distance on K-normalized points.");

  m.def(
      "pose_auc",
      [](const std::vector<double>& errors, const std::vector<double>& thresholds) {
        return pose_auc(errors, thresholds);
      },
      py::arg("errors"), py::arg("thresholds") = std::vector<double>{5.0, 10.0, 20.0});

  m.def(
      "synth_pair",
      [](const std::string& domain, std::uint64_t seed, int index) {
        return pair_dict(sample_pair(make_domain(domain, seed), index));
      },
      py::arg("domain"), py::arg("seed"), py::arg("index"));

  py::class_<MatcherParams>(m, "MatcherParams")
      .def_static(
          "init", [](std::uint64_t seed) { return MatcherParams::init(MatcherConfig{}, seed); }, py::arg("seed"))
      .def_static(
          "load", [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"))
      .def(
          "save", [](const MatcherParams& p, const std::string& path) { save_checkpoint(path, p); }, py::arg("path"))
      .def_readwrite("W_coarse", &MatcherParams::W_coarse)
      .def_readwrite("W_fine", &MatcherParams::W_fine)
      .def_readwrite("tau", &MatcherParams::tau)
      .def("__eq__", [](const MatcherParams& a, const MatcherParams& b) { return a == b; });

  m.def(
      "predict_matches",
      [](const MatcherParams& params, const Image& image1, const Image& image2, double match_threshold) {
        RenderedPair pair;
        pair.image1 = image1;
        pair.image2 = image2;
        MatcherConfig cfg;
        cfg.match_threshold = match_threshold;
        return from_matches(predict_matches(pair, params, cfg));
      },
      py::arg("params"), py::arg("image1"), py::arg("image2"), py::arg("match_threshold") = 0.2,
      "Rows of (u1, v1, u2, v2, confidence) in pixels.");

  m.def(
      "evaluate",
      [](const MatcherParams& params, const std::string& dataset_dir, double match_threshold,
         double precision_threshold, std::uint64_t seed) {
        EvalConfig cfg;
        cfg.matcher.match_threshold = match_threshold;
        cfg.precision_threshold = precision_threshold;
        cfg.ransac.seed = seed;
        const EvalReport r = evaluate(params, read_dataset(dataset_dir), cfg);
        return py::module_::import("json").attr("loads")(r.to_json());
      },
      py::arg("params"), py::arg("dataset_dir"), py::arg("match_threshold") = 0.2,
      py::arg("precision_threshold") = kIndoorPrecisionThreshold, py::arg("seed") = 0,
      "Evaluation report as a dict.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed, int d_epi_instances, int matcher_seeds) {
        GradcheckOptions opt;
        opt.seed = seed;
        opt.d_epi_instances = d_epi_instances;
        opt.matcher_seeds = matcher_seeds;
        const GradcheckReport r = run_gradcheck(opt);
        py::dict d;
        d["pass"] = r.pass;
        py::list comps;
        for (const auto& c : r.components) {
          py::dict e;
          e["name"] = c.name;
          e["max_rel_error"] = c.max_rel_error;
          e["tolerance"] = c.tolerance;
          e["pass"] = c.pass;
          comps.append(e);
        }
        d["components"] = comps;
        return d;
      },
      py::arg("seed") = 0, py::arg("d_epi_instances") = 1000, py::arg("matcher_seeds") = 20);

  m.attr("__version__") = EPIMATCH_VERSION;
}
