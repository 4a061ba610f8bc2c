#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "beamkd/image.hpp"

// Raw RGB window -> binary motion masks: grayscale + bilinear resize,
// absolute frame differences, relative thresholding.

namespace beamkd::preprocess {

struct PreprocessConfig {
  int out_height = 64;
  int out_width = 64;
  double epsilon = 0.1;

  void validate() const;
};

/// Binary mask, entries 0 or 1, row-major.
struct MotionMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t operator()(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const MotionMask&) const = default;
};

struct MotionMaskSequence {
  std::vector<MotionMask> masks;  ///< chronological, oldest first
  bool operator==(const MotionMaskSequence&) const = default;
};

/// Model input: B windows of L masks as doubles, layout [B][L][H][W].
struct MaskBatch {
  int batch = 0;
  int length = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  std::size_t image_size() const { return static_cast<std::size_t>(height) * width; }
  const double* image(int b, int l) const {
    return values.data() + (static_cast<std::size_t>(b) * length + l) * image_size();
  }
  /// Keeps only the most recent `n` masks of every window.
  MaskBatch suffix(int n) const;
};

/// ITU-R BT.601 luma on [0,1] channels, then bilinear (half-pixel centres)
/// resize.  Target must be non-empty and no larger than the frame.
GrayImage grayscale_resize(const RgbImage& frame, const PreprocessConfig& config);

/// |Z'[k] - Z'[k-1]| for k = 1..n-1, in input order.
std::vector<GrayImage> difference_sequence(std::span<const GrayImage> grays);

/// 1 where diff >= epsilon * max(diff); all zeros when max(diff) == 0.
MotionMask motion_mask(const GrayImage& diff, double epsilon);

/// L+1 chronological frames -> L masks.
MotionMaskSequence preprocess_sequence(std::span<const RgbImage> raw, const PreprocessConfig& config);

// Bit packing (row-major, most significant bit first within each byte).
std::vector<std::uint8_t> pack_bits(const MotionMask& mask);
MotionMask unpack_bits(std::span<const std::uint8_t> bytes, int height, int width);

/// Cache file for one sample window:
///   8-byte magic "BKDMASK1", u32 height, u32 width, u32 length, f64 epsilon
///   (all little-endian), then `length` packed masks of ceil(h*w/8) bytes.
void write_mask_file(const std::filesystem::path& path, const MotionMaskSequence& seq, double epsilon);

struct MaskFile {
  MotionMaskSequence sequence;
  double epsilon = 0.0;
};
MaskFile read_mask_file(const std::filesystem::path& path);

}  // namespace beamkd::preprocess
