#pragma once

// File formats. All binary formats are little-endian.
//
// Checkpoint (.ckpt):
//   char[8] "EPIMCKPT", u32 version = 1,
//   i32 coarse_dim, i32 d, i32 fine_dim, i32 d_f, f64 tau,
//   f64[coarse_dim * d] W_coarse (row-major), f64[fine_dim * d_f] W_fine (row-major).
//
// Dataset pair (pairs/NNNNN.bin):
//   char[8] "EPIPAIR\0", u32 version = 1, i32 width, i32 height,
//   f64[4] fx fy cx cy,
//   f64[12] camera 1 world-to-camera R (row-major) then t, f64[12] camera 2 likewise,
//   u8 has_F, f64[9] F (row-major; zeros when has_F == 0),
//   f32[h*w] image 1, f32[h*w] image 2,
//   f64[h*w] depth 1, f64[h*w] depth 2,
//   i32[h*w] surface id 1, i32[h*w] surface id 2.
// index.txt lists "<index> pairs/NNNNN.bin" per line after a "# domain <name> seed <seed>" header.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "epimatch/matcher.hpp"
#include "epimatch/pairgen.hpp"
#include "epimatch/robust.hpp"
#include "epimatch/synth.hpp"

namespace epimatch {

void save_checkpoint(const std::filesystem::path& path, const MatcherParams& params);
MatcherParams load_checkpoint(const std::filesystem::path& path);

void write_pair(const std::filesystem::path& path, const RenderedPair& pair);
RenderedPair read_pair(const std::filesystem::path& path);

struct DatasetInfo {
  std::string domain;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> files;
};

/// Writes pairs/NNNNN.bin for each pair plus index.txt.
void write_dataset(const std::filesystem::path& dir, const std::string& domain, std::uint64_t seed,
                   const std::vector<RenderedPair>& pairs);
DatasetInfo read_dataset_index(const std::filesystem::path& dir);
std::vector<RenderedPair> read_dataset(const std::filesystem::path& dir);

/// `id fx fy cx cy qw qx qy qz tx ty tz` per line; '#' starts a comment.
std::vector<PoseRecord> read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, const std::vector<PoseRecord>& poses);

/// `u1 v1 u2 v2 conf` per line.
std::vector<Correspondence> read_match_file(const std::filesystem::path& path);
void write_match_file(const std::filesystem::path& path, const std::vector<Correspondence>& matches);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

void write_png_gray(const std::filesystem::path& path, const Image& image);
void write_png_rgb(const std::filesystem::path& path, int width, int height, const std::vector<Rgb>& pixels);

struct OverlayLine {
  HomPoint2 x1;
  HomPoint2 x2;
  bool good = true;
};

/// Side-by-side rendering of both images with one line per match, green when
/// good and red otherwise.
void write_match_overlay(const std::filesystem::path& path, const Image& image1, const Image& image2,
                         const std::vector<OverlayLine>& lines);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace epimatch
