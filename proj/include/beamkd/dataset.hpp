#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beamkd/image.hpp"
#include "beamkd/preprocess.hpp"

namespace beamkd::data {

struct FrameRecord {
  std::string sequence_id;
  int frame_index = 0;
  std::filesystem::path image_path;
  std::optional<std::vector<double>> powers;
  std::optional<int> label;
};

/// argmax of per-beam received power, lowest index on ties.
int labels_from_power(std::span<const double> powers);

/// Reads a line-delimited JSON manifest.  Each line holds sequence_id,
/// frame_index, image_path and either `label`, inline `powers`, or
/// `powers_path` (flat little-endian float32 file).  Relative paths resolve
/// against the manifest's directory.
std::vector<FrameRecord> read_manifest(const std::filesystem::path& manifest);

/// Writes one line per record with sequence_id, frame_index, image_path and
/// label (computed from powers when needed).
void write_manifest(const std::filesystem::path& manifest, std::span<const FrameRecord> records);

std::vector<double> read_power_file(const std::filesystem::path& path);

/// One training window anchored at time t.
struct Sample {
  std::string sequence_id;
  int anchor = 0;                      ///< frame_index of t
  std::vector<std::size_t> frames;     ///< record indices for t-L .. t
  std::vector<int> labels;             ///< beams for t .. t+J
};

/// Records must be grouped by sequence and ordered by frame_index; a gap in
/// frame_index starts a new segment.  A segment of F frames yields
/// max(0, F - L - J) samples.
std::vector<Sample> window_sequences(std::span<const FrameRecord> records, int input_length, int horizon);

enum class Granularity { kSequence, kSample };

struct SplitSpec {
  double train_fraction = 0.8;
  Granularity granularity = Granularity::kSequence;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::size_t> train;       ///< sample indices, ascending
  std::vector<std::size_t> validation;  ///< sample indices, ascending
};

Split split_dataset(std::span<const Sample> samples, const SplitSpec& spec);

/// Per-epoch shuffled partition of [0, n) into batches of `batch_size`
/// (last one possibly shorter).  Same (seed, epoch) -> same batches.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, std::uint64_t seed, int epoch);

/// Label counts over every slot of every sample.
std::vector<std::size_t> class_histogram(std::span<const Sample> samples, int num_classes);

/// Packed motion masks shared by overlapping windows.
class MaskBank {
 public:
  MaskBank() = default;

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t num_samples() const { return sample_masks_.size(); }
  /// Masks available to sample s (its full window length).
  int window_length(std::size_t s) const { return static_cast<int>(sample_masks_.at(s).size()); }

  /// Computes one mask per consecutive frame pair, reusing pairs across
  /// windows.  `load(r)` returns the RGB frame of record r.
  static MaskBank from_frames(std::span<const Sample> samples, int input_length,
                              const std::function<RgbImage(std::size_t)>& load,
                              const preprocess::PreprocessConfig& config);

  /// One cached sequence per sample, in sample order.
  static MaskBank from_sequences(std::span<const preprocess::MotionMaskSequence> seqs);

  preprocess::MotionMaskSequence sequence(std::size_t s) const;

  /// Batch of the most recent `length` masks of each listed sample.
  preprocess::MaskBatch gather(std::span<const std::size_t> samples, int length) const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::vector<std::uint8_t>> packed_;
  std::vector<std::vector<std::size_t>> sample_masks_;
};

/// Labels of the listed samples, row-major [B][J+1].
std::vector<int> gather_labels(std::span<const Sample> samples, std::span<const std::size_t> ids);

std::string granularity_name(Granularity g);
Granularity parse_granularity(const std::string& s);

}  // namespace beamkd::data
