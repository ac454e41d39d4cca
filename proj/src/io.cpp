#include "epimatch/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace epimatch {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr char kCheckpointMagic[8] = {'E', 'P', 'I', 'M', 'C', 'K', 'P', 'T'};
constexpr char kPairMagic[8] = {'E', 'P', 'I', 'P', 'A', 'I', 'R', '\0'};
constexpr std::uint32_t kVersion = 1;

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path) {
    ensure_parent(path);
    out_.open(path, std::ios::binary);
    EPIMATCH_REQUIRE(out_.good(), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    EPIMATCH_REQUIRE(out_.good(), ErrorCode::kIo, "write to " + path_.string() + " failed");
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    EPIMATCH_REQUIRE(in_.good(), ErrorCode::kIo, "cannot open " + path.string());
  }
  template <typename T>
  T get() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    EPIMATCH_REQUIRE(in_.gcount() == static_cast<std::streamsize>(n), ErrorCode::kFormat,
                     path_.string() + " is truncated");
  }
  void expect_end() {
    in_.peek();
    EPIMATCH_REQUIRE(in_.eof(), ErrorCode::kFormat, path_.string() + " has trailing bytes");
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ifstream in_;
};

void put_pose(Writer& w, const RelativePose& p) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) w.put(p.R(r, c));
  for (int k = 0; k < 3; ++k) w.put(p.t(k));
}

RelativePose get_pose(Reader& r) {
  RelativePose p;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) p.R(i, c) = r.get<double>();
  for (int k = 0; k < 3; ++k) p.t(k) = r.get<double>();
  return p;
}

void put_rowmajor(Writer& w, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.put(m(r, c));
}

void get_rowmajor(Reader& rd, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rd.get<double>();
}

std::string pair_filename(std::size_t index) {
  std::ostringstream s;
  s << std::setw(5) << std::setfill('0') << index << ".bin";
  return s.str();
}

void png_write(const fs::path& path, int width, int height, int color_type, int channels,
               const std::vector<std::uint8_t>& data) {
  ensure_parent(path);
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  EPIMATCH_REQUIRE(fp != nullptr, ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorCode::kIo, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(data.data() + static_cast<std::size_t>(r) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::uint8_t to_byte(double x) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
}

}  // namespace

void save_checkpoint(const fs::path& path, const MatcherParams& params) {
  Writer w(path);
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.put(kVersion);
  w.put(static_cast<std::int32_t>(params.W_coarse.rows()));
  w.put(static_cast<std::int32_t>(params.W_coarse.cols()));
  w.put(static_cast<std::int32_t>(params.W_fine.rows()));
  w.put(static_cast<std::int32_t>(params.W_fine.cols()));
  w.put(params.tau);
  put_rowmajor(w, params.W_coarse);
  put_rowmajor(w, params.W_fine);
  w.finish();
}

MatcherParams load_checkpoint(const fs::path& path) {
  EPIMATCH_REQUIRE(fs::exists(path), ErrorCode::kIo, "checkpoint " + path.string() + " does not exist");
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  EPIMATCH_REQUIRE(std::memcmp(magic, kCheckpointMagic, sizeof magic) == 0, ErrorCode::kFormat,
                   path.string() + " is not a checkpoint");
  EPIMATCH_REQUIRE(r.get<std::uint32_t>() == kVersion, ErrorCode::kFormat, "unsupported checkpoint version");
  const auto cr = r.get<std::int32_t>(), cc = r.get<std::int32_t>();
  const auto fr = r.get<std::int32_t>(), fc = r.get<std::int32_t>();
  EPIMATCH_REQUIRE(cr > 0 && cc > 0 && fr > 0 && fc > 0 && cr < 65536 && cc < 65536 && fr < 65536 && fc < 65536,
                   ErrorCode::kFormat, "implausible checkpoint dimensions");
  MatcherParams p;
  p.tau = r.get<double>();
  p.W_coarse.resize(cr, cc);
  p.W_fine.resize(fr, fc);
  get_rowmajor(r, p.W_coarse);
  get_rowmajor(r, p.W_fine);
  r.expect_end();
  return p;
}

void write_pair(const fs::path& path, const RenderedPair& pair) {
  Writer w(path);
  const auto W = static_cast<std::int32_t>(pair.image1.cols());
  const auto H = static_cast<std::int32_t>(pair.image1.rows());
  w.bytes(kPairMagic, sizeof kPairMagic);
  w.put(kVersion);
  w.put(W);
  w.put(H);
  for (double v : {pair.K.fx, pair.K.fy, pair.K.cx, pair.K.cy}) w.put(v);
  put_pose(w, pair.cam1.pose);
  put_pose(w, pair.cam2.pose);
  w.put(static_cast<std::uint8_t>(pair.F_gt ? 1 : 0));
  const Eigen::Matrix3d F = pair.F_gt ? pair.F_gt->m : Eigen::Matrix3d::Zero();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) w.put(F(r, c));
  for (const Image* im : {&pair.image1, &pair.image2}) {
    for (Eigen::Index k = 0; k < im->size(); ++k) w.put(static_cast<float>(im->data()[k]));
  }
  for (const Image* d : {&pair.depth1, &pair.depth2}) w.bytes(d->data(), sizeof(double) * static_cast<std::size_t>(d->size()));
  for (const auto* s : {&pair.surface1, &pair.surface2}) {
    for (Eigen::Index k = 0; k < s->size(); ++k) w.put(static_cast<std::int32_t>(s->data()[k]));
  }
  w.finish();
}

RenderedPair read_pair(const fs::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  EPIMATCH_REQUIRE(std::memcmp(magic, kPairMagic, sizeof magic) == 0, ErrorCode::kFormat,
                   path.string() + " is not a pair file");
  EPIMATCH_REQUIRE(r.get<std::uint32_t>() == kVersion, ErrorCode::kFormat, "unsupported pair file version");
  const auto W = r.get<std::int32_t>(), H = r.get<std::int32_t>();
  EPIMATCH_REQUIRE(W > 0 && H > 0 && W <= 16384 && H <= 16384, ErrorCode::kFormat, "implausible image size");
  RenderedPair p;
  p.K.fx = r.get<double>();
  p.K.fy = r.get<double>();
  p.K.cx = r.get<double>();
  p.K.cy = r.get<double>();
  p.cam1 = {p.K, get_pose(r)};
  p.cam2 = {p.K, get_pose(r)};
  p.pose = RelativePose::between(p.cam1.pose, p.cam2.pose);
  const bool has_F = r.get<std::uint8_t>() != 0;
  Eigen::Matrix3d F;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) F(i, c) = r.get<double>();
  if (has_F) p.F_gt = FundamentalMatrix(F);
  for (Image* im : {&p.image1, &p.image2}) {
    im->resize(H, W);
    for (Eigen::Index k = 0; k < im->size(); ++k) im->data()[k] = r.get<float>();
  }
  for (Image* d : {&p.depth1, &p.depth2}) {
    d->resize(H, W);
    r.bytes(d->data(), sizeof(double) * static_cast<std::size_t>(d->size()));
  }
  for (auto* s : {&p.surface1, &p.surface2}) {
    s->resize(H, W);
    for (Eigen::Index k = 0; k < s->size(); ++k) s->data()[k] = r.get<std::int32_t>();
  }
  r.expect_end();
  return p;
}

void write_dataset(const fs::path& dir, const std::string& domain, std::uint64_t seed,
                   const std::vector<RenderedPair>& pairs) {
  fs::create_directories(dir / "pairs");
  std::ostringstream index;
  index << "# domain " << domain << " seed " << seed << "\n";
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const std::string name = pair_filename(k);
    write_pair(dir / "pairs" / name, pairs[k]);
    index << k << " pairs/" << name << "\n";
  }
  write_text_file(dir / "index.txt", index.str());
}

DatasetInfo read_dataset_index(const fs::path& dir) {
  const fs::path index = dir / "index.txt";
  EPIMATCH_REQUIRE(fs::exists(index), ErrorCode::kIo, "dataset index " + index.string() + " does not exist");
  std::istringstream in(read_text_file(index));
  DatasetInfo info;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash;
      while (ls >> key) {
        if (key == "domain") ls >> info.domain;
        if (key == "seed") ls >> info.seed;
      }
      continue;
    }
    std::size_t k = 0;
    std::string rel;
    EPIMATCH_REQUIRE(static_cast<bool>(ls >> k >> rel), ErrorCode::kFormat, "bad index line: " + line);
    info.files.push_back(dir / rel);
  }
  return info;
}

std::vector<RenderedPair> read_dataset(const fs::path& dir) {
  std::vector<RenderedPair> out;
  for (const auto& f : read_dataset_index(dir).files) out.push_back(read_pair(f));
  return out;
}

std::vector<PoseRecord> read_pose_file(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<PoseRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    PoseRecord rec;
    double qw, qx, qy, qz;
    auto& K = rec.camera.intrinsics;
    auto& t = rec.camera.pose.t;
    EPIMATCH_REQUIRE(static_cast<bool>(ls >> rec.id >> K.fx >> K.fy >> K.cx >> K.cy >> qw >> qx >> qy >> qz >>
                                       t.x() >> t.y() >> t.z()),
                     ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": expected 12 fields");
    rec.camera.pose.R = rotation_from_quaternion(qw, qx, qy, qz);
    K.validate();
    out.push_back(std::move(rec));
  }
  return out;
}

void write_pose_file(const fs::path& path, const std::vector<PoseRecord>& poses) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& p : poses) {
    const auto& K = p.camera.intrinsics;
    const Eigen::Vector4d q = quaternion_from_rotation(p.camera.pose.R);
    const auto& t = p.camera.pose.t;
    out << p.id << ' ' << K.fx << ' ' << K.fy << ' ' << K.cx << ' ' << K.cy << ' ' << q(0) << ' ' << q(1) << ' '
        << q(2) << ' ' << q(3) << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<Correspondence> read_match_file(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Correspondence> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Correspondence c;
    EPIMATCH_REQUIRE(static_cast<bool>(ls >> c.x1.u >> c.x1.v >> c.x2.u >> c.x2.v >> c.confidence),
                     ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    out.push_back(c);
  }
  return out;
}

void write_match_file(const fs::path& path, const std::vector<Correspondence>& matches) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& m : matches) {
    const HomPoint2 a = m.x1.normalized(), b = m.x2.normalized();
    out << a.u << ' ' << a.v << ' ' << b.u << ' ' << b.v << ' ' << m.confidence << '\n';
  }
  write_text_file(path, out.str());
}

void write_png_gray(const fs::path& path, const Image& image) {
  std::vector<std::uint8_t> data(static_cast<std::size_t>(image.size()));
  for (Eigen::Index k = 0; k < image.size(); ++k) data[static_cast<std::size_t>(k)] = to_byte(image.data()[k]);
  png_write(path, static_cast<int>(image.cols()), static_cast<int>(image.rows()), PNG_COLOR_TYPE_GRAY, 1, data);
}

void write_png_rgb(const fs::path& path, int width, int height, const std::vector<Rgb>& pixels) {
  EPIMATCH_REQUIRE(pixels.size() == static_cast<std::size_t>(width) * height, ErrorCode::kBadDimensions,
                   "pixel buffer does not match the image size");
  std::vector<std::uint8_t> data;
  data.reserve(pixels.size() * 3);
  for (const Rgb& p : pixels) {
    data.push_back(p.r);
    data.push_back(p.g);
    data.push_back(p.b);
  }
  png_write(path, width, height, PNG_COLOR_TYPE_RGB, 3, data);
}

void write_match_overlay(const fs::path& path, const Image& image1, const Image& image2,
                         const std::vector<OverlayLine>& lines) {
  const int H = static_cast<int>(std::max(image1.rows(), image2.rows()));
  const int W1 = static_cast<int>(image1.cols());
  const int W = W1 + static_cast<int>(image2.cols());
  std::vector<Rgb> px(static_cast<std::size_t>(W) * H);
  auto blit = [&](const Image& im, int x0) {
    for (int r = 0; r < im.rows(); ++r) {
      for (int c = 0; c < im.cols(); ++c) {
        const std::uint8_t g = to_byte(im(r, c));
        px[static_cast<std::size_t>(r) * W + x0 + c] = {g, g, g};
      }
    }
  };
  blit(image1, 0);
  blit(image2, W1);
  for (const auto& l : lines) {
    const Rgb colour = l.good ? Rgb{40, 220, 40} : Rgb{230, 40, 40};
    const double x0 = l.x1.u, y0 = l.x1.v, x1 = l.x2.u + W1, y1 = l.x2.v;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))));
    for (int s = 0; s <= steps; ++s) {
      const double a = static_cast<double>(s) / steps;
      const int c = static_cast<int>(std::floor(x0 + a * (x1 - x0)));
      const int r = static_cast<int>(std::floor(y0 + a * (y1 - y0)));
      if (c >= 0 && c < W && r >= 0 && r < H) px[static_cast<std::size_t>(r) * W + c] = colour;
    }
  }
  write_png_rgb(path, W, H, px);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  EPIMATCH_REQUIRE(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path);
  EPIMATCH_REQUIRE(out.good(), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  EPIMATCH_REQUIRE(out.good(), ErrorCode::kIo, "write to " + path.string() + " failed");
}

}  // namespace epimatch
