#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "beamkd/beam_oracle.hpp"
#include "beamkd/image.hpp"

// Desk-scale stand-in for a camera-equipped base station: one bright object
// crosses a static textured scene; its column maps to an azimuth, a
// line-of-sight channel and an exhaustive-search beam label.

namespace beamkd::scene {

struct SceneConfig {
  int frame_height = 64;
  int frame_width = 64;
  int object_height = 7;
  int object_width = 7;
  double speed_min = 1.0;  ///< pixels per step
  double speed_max = 1.8;
  double fov_min = -std::numbers::pi / 3;  ///< azimuth at column 0
  double fov_max = std::numbers::pi / 3;   ///< azimuth at column width-1
  int n_distractors = 3;
  int frames_per_sequence = 30;
  int n_sequences = 120;
  beam::ArrayGeometry geometry{8, 0.5};
  int codebook_size = 16;
  std::uint64_t rng_seed = 2024;

  void validate() const;
};

struct Position {
  int x = 0;  ///< object centre column
  int y = 0;  ///< object centre row
};

struct SequenceRecord {
  int sequence_id = 0;
  std::vector<RgbImage> frames;
  std::vector<Position> positions;
  std::vector<int> labels;
};

/// Linear column -> azimuth map, LoS steering channel, unit noise power.
beam::ChannelSnapshot position_to_channel(double x, const SceneConfig& config);

/// Beam label for an object centred at column x.
int label_for_column(double x, const SceneConfig& config, const beam::Codebook& codebook);

/// Integer centre columns start + direction * speed * k, k = 0..frames-1.
std::vector<int> trajectory(double start_x, double speed, int direction, int frames);

/// One traversal.  The rng drives direction, speed, start, row, textures.
SequenceRecord generate_sequence(const SceneConfig& config, int sequence_id, std::mt19937_64& rng);

/// Per-sequence generator seeded from (rng_seed, sequence_id).
std::mt19937_64 sequence_rng(std::uint64_t seed, int sequence_id);

/// All S sequences, ordered by sequence_id.
std::vector<SequenceRecord> generate_dataset(const SceneConfig& config);

std::string sequence_name(int sequence_id);

/// Writes frames/<seq>/frame_XXXX.png and manifest.jsonl under out_dir and
/// returns the manifest path.
std::filesystem::path write_dataset(const std::vector<SequenceRecord>& records,
                                    const std::filesystem::path& out_dir);

}  // namespace beamkd::scene
