#include "beamkd/preprocess.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "beamkd/errors.hpp"

namespace beamkd::preprocess {
namespace {

constexpr std::array<char, 8> kMaskMagic{'B', 'K', 'D', 'M', 'A', 'S', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "mask cache I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("truncated mask file " + path.string());
  return v;
}

}  // namespace

MaskBatch MaskBatch::suffix(int n) const {
  if (n < 1 || n > length) throw UsageError("MaskBatch::suffix: length out of range");
  if (n == length) return *this;
  MaskBatch out{batch, n, height, width, {}};
  out.values.reserve(static_cast<std::size_t>(batch) * n * image_size());
  for (int b = 0; b < batch; ++b) {
    const double* first = image(b, length - n);
    out.values.insert(out.values.end(), first, first + static_cast<std::size_t>(n) * image_size());
  }
  return out;
}

void PreprocessConfig::validate() const {
  if (out_height < 1 || out_width < 1) throw UsageError("PreprocessConfig: zero-sized target");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw UsageError("PreprocessConfig: epsilon must be in (0,1)");
}

GrayImage grayscale_resize(const RgbImage& frame, const PreprocessConfig& config) {
  if (frame.empty()) throw UsageError("grayscale_resize: empty frame");
  if (config.out_height < 1 || config.out_width < 1) throw UsageError("grayscale_resize: zero-sized target");
  if (config.out_height > frame.height || config.out_width > frame.width)
    throw UsageError("grayscale_resize: target larger than the frame");

  GrayImage luma(frame.height, frame.width);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const std::uint8_t* p = frame.at(y, x);
      // Integer weights keep white exactly 1.0.
      luma(y, x) = (299.0 * p[0] + 587.0 * p[1] + 114.0 * p[2]) / (1000.0 * 255.0);
    }
  }
  if (config.out_height == frame.height && config.out_width == frame.width) return luma;

  GrayImage out(config.out_height, config.out_width);
  const double sy = static_cast<double>(frame.height) / config.out_height;
  const double sx = static_cast<double>(frame.width) / config.out_width;
  for (int y = 0; y < config.out_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, frame.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, frame.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < config.out_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, frame.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, frame.width - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * luma(y0, x0) + wx * luma(y0, x1);
      const double bottom = (1.0 - wx) * luma(y1, x0) + wx * luma(y1, x1);
      out(y, x) = (1.0 - wy) * top + wy * bottom;
    }
  }
  return out;
}

std::vector<GrayImage> difference_sequence(std::span<const GrayImage> grays) {
  if (grays.size() < 2) throw UsageError("difference_sequence: need at least two frames");
  std::vector<GrayImage> out;
  out.reserve(grays.size() - 1);
  for (std::size_t k = 1; k < grays.size(); ++k) {
    const GrayImage& a = grays[k - 1];
    const GrayImage& b = grays[k];
    if (a.height != b.height || a.width != b.width) throw UsageError("difference_sequence: size mismatch");
    GrayImage d(a.height, a.width);
    for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = std::abs(b.values[i] - a.values[i]);
    out.push_back(std::move(d));
  }
  return out;
}

MotionMask motion_mask(const GrayImage& diff, double epsilon) {
  MotionMask m{diff.height, diff.width, std::vector<std::uint8_t>(diff.values.size(), 0)};
  if (diff.values.empty()) return m;
  const double peak = *std::max_element(diff.values.begin(), diff.values.end());
  if (!(peak > 0.0)) return m;
  const double threshold = epsilon * peak;
  for (std::size_t i = 0; i < diff.values.size(); ++i) m.values[i] = diff.values[i] >= threshold ? 1 : 0;
  return m;
}

MotionMaskSequence preprocess_sequence(std::span<const RgbImage> raw, const PreprocessConfig& config) {
  config.validate();
  if (raw.size() < 2) throw UsageError("preprocess_sequence: need L+1 >= 2 frames");
  std::vector<GrayImage> grays;
  grays.reserve(raw.size());
  for (const auto& f : raw) grays.push_back(grayscale_resize(f, config));
  MotionMaskSequence seq;
  for (const auto& d : difference_sequence(grays)) seq.masks.push_back(motion_mask(d, config.epsilon));
  return seq;
}

std::vector<std::uint8_t> pack_bits(const MotionMask& mask) {
  std::vector<std::uint8_t> out((mask.values.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    if (mask.values[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return out;
}

MotionMask unpack_bits(std::span<const std::uint8_t> bytes, int height, int width) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (bytes.size() < (n + 7) / 8) throw UsageError("unpack_bits: buffer too small");
  MotionMask m{height, width, std::vector<std::uint8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) m.values[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u;
  return m;
}

void write_mask_file(const std::filesystem::path& path, const MotionMaskSequence& seq, double epsilon) {
  if (seq.masks.empty()) throw UsageError("write_mask_file: empty sequence");
  const auto& first = seq.masks.front();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMaskMagic.data(), kMaskMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(first.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(first.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.masks.size()));
  put<double>(out, epsilon);
  for (const auto& m : seq.masks) {
    if (m.height != first.height || m.width != first.width) throw UsageError("write_mask_file: ragged masks");
    const auto bytes = pack_bits(m);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

MaskFile read_mask_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMaskMagic) throw IoError("not a mask cache file: " + path.string());
  const auto h = get<std::uint32_t>(in, path);
  const auto w = get<std::uint32_t>(in, path);
  const auto len = get<std::uint32_t>(in, path);
  MaskFile file;
  file.epsilon = get<double>(in, path);
  const std::size_t nbytes = (static_cast<std::size_t>(h) * w + 7) / 8;
  std::vector<std::uint8_t> buf(nbytes);
  for (std::uint32_t l = 0; l < len; ++l) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(nbytes));
    if (!in) throw IoError("truncated mask file " + path.string());
    file.sequence.masks.push_back(unpack_bits(buf, static_cast<int>(h), static_cast<int>(w)));
  }
  return file;
}

}  // namespace beamkd::preprocess
