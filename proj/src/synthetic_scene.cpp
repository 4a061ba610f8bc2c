#include "beamkd/synthetic_scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "beamkd/errors.hpp"

namespace beamkd::scene {
namespace {

// Background and distractor channels stay at or below this value; the
// object channels at or above kObjectFloor.  The luma gap is >= 0.3.
constexpr int kBackgroundCeil = 140;
constexpr int kObjectFloor = 235;

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void fill_rect(RgbImage& img, int y0, int x0, int h, int w, const std::uint8_t rgb[3]) {
  const int y1 = std::min(img.height, y0 + h);
  const int x1 = std::min(img.width, x0 + w);
  for (int y = std::max(0, y0); y < y1; ++y)
    for (int x = std::max(0, x0); x < x1; ++x) std::copy(rgb, rgb + 3, img.at(y, x));
}

}  // namespace

void SceneConfig::validate() const {
  if (frame_height < 2 || frame_width < 2) throw UsageError("SceneConfig: frame must be at least 2x2");
  if (object_height < 1 || object_width < 1 || object_height > frame_height || object_width > frame_width)
    throw UsageError("SceneConfig: object must fit inside the frame");
  if (!(speed_min >= 0.0) || speed_max < speed_min) throw UsageError("SceneConfig: invalid speed range");
  if (!(fov_min < fov_max)) throw UsageError("SceneConfig: fov_min must be < fov_max");
  if (fov_min < -std::numbers::pi / 2 || fov_max > std::numbers::pi / 2)
    throw UsageError("SceneConfig: field of view must lie within [-pi/2, pi/2]");
  if (n_distractors < 0) throw UsageError("SceneConfig: n_distractors must be >= 0");
  if (frames_per_sequence < 2) throw UsageError("SceneConfig: frames_per_sequence must be >= 2");
  if (n_sequences < 1) throw UsageError("SceneConfig: n_sequences must be >= 1");
  if (codebook_size < 1) throw UsageError("SceneConfig: codebook_size must be >= 1");
  geometry.validate();
}

beam::ChannelSnapshot position_to_channel(double x, const SceneConfig& config) {
  if (!(x >= 0.0 && x < config.frame_width))
    throw DomainError("position_to_channel: column outside the frame");
  const double frac = x / (config.frame_width - 1);
  const double theta = config.fov_min + frac * (config.fov_max - config.fov_min);
  return beam::ChannelSnapshot{beam::steering_vector(theta, config.geometry), 1.0};
}

int label_for_column(double x, const SceneConfig& config, const beam::Codebook& codebook) {
  return beam::optimal_beam(position_to_channel(x, config), codebook);
}

std::vector<int> trajectory(double start_x, double speed, int direction, int frames) {
  std::vector<int> xs(static_cast<std::size_t>(std::max(frames, 0)));
  for (int k = 0; k < frames; ++k)
    xs[k] = static_cast<int>(std::lround(start_x + direction * speed * k));
  return xs;
}

std::mt19937_64 sequence_rng(std::uint64_t seed, int sequence_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(sequence_id), 0x5eedu};
  return std::mt19937_64(seq);
}

SequenceRecord generate_sequence(const SceneConfig& config, int sequence_id, std::mt19937_64& rng) {
  config.validate();
  const beam::Codebook codebook = beam::build_codebook(config.geometry, config.codebook_size);
  const int H = config.frame_height, W = config.frame_width;
  const int F = config.frames_per_sequence;
  const int half_w = config.object_width / 2, half_h = config.object_height / 2;

  const int direction = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
  double speed = std::uniform_real_distribution<double>(config.speed_min, config.speed_max)(rng);
  // Centre columns available with the object fully visible.
  const double lo = half_w, hi = W - 1 - (config.object_width - 1 - half_w);
  const double span = std::max(0.0, hi - lo);
  speed = std::min(speed, span / std::max(1, F - 1));
  const double slack = span - speed * (F - 1);
  const double offset = std::uniform_real_distribution<double>(0.0, std::max(slack, 0.0))(rng);
  const double start = direction > 0 ? lo + offset : hi - offset;
  const std::vector<int> xs = trajectory(start, speed, direction, F);
  const int row = uniform_int(rng, half_h, H - 1 - (config.object_height - 1 - half_h));

  // Static background: per-pixel texture plus distractor rectangles.
  RgbImage background(H, W);
  for (auto& p : background.pixels) p = static_cast<std::uint8_t>(uniform_int(rng, 0, kBackgroundCeil));
  for (int d = 0; d < config.n_distractors; ++d) {
    const int h = uniform_int(rng, 3, std::max(3, H / 4));
    const int w = uniform_int(rng, 3, std::max(3, W / 4));
    const int y0 = uniform_int(rng, 0, H - 1), x0 = uniform_int(rng, 0, W - 1);
    std::uint8_t rgb[3];
    for (auto& c : rgb) c = static_cast<std::uint8_t>(uniform_int(rng, 0, kBackgroundCeil));
    fill_rect(background, y0, x0, h, w, rgb);
  }
  std::uint8_t object_rgb[3];
  for (auto& c : object_rgb) c = static_cast<std::uint8_t>(uniform_int(rng, kObjectFloor, 255));

  SequenceRecord rec;
  rec.sequence_id = sequence_id;
  for (int k = 0; k < F; ++k) {
    RgbImage frame = background;
    fill_rect(frame, row - half_h, xs[k] - half_w, config.object_height, config.object_width, object_rgb);
    rec.frames.push_back(std::move(frame));
    rec.positions.push_back({xs[k], row});
    rec.labels.push_back(label_for_column(std::clamp(xs[k], 0, W - 1), config, codebook));
  }
  return rec;
}

std::vector<SequenceRecord> generate_dataset(const SceneConfig& config) {
  config.validate();
  std::vector<SequenceRecord> out;
  out.reserve(static_cast<std::size_t>(config.n_sequences));
  for (int s = 0; s < config.n_sequences; ++s) {
    auto rng = sequence_rng(config.rng_seed, s);
    out.push_back(generate_sequence(config, s, rng));
  }
  return out;
}

std::string sequence_name(int sequence_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%04d", sequence_id);
  return buf;
}

std::filesystem::path write_dataset(const std::vector<SequenceRecord>& records,
                                    const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "frames", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "frames").string() + ": " + ec.message());
  const fs::path manifest = out_dir / "manifest.jsonl";
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest.string());
  for (const auto& rec : records) {
    const std::string seq = sequence_name(rec.sequence_id);
    fs::create_directories(out_dir / "frames" / seq, ec);
    if (ec) throw IoError("cannot create frame directory for " + seq);
    for (std::size_t k = 0; k < rec.frames.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.png", k);
      const fs::path rel = fs::path("frames") / seq / name;
      write_png(out_dir / rel, rec.frames[k]);
      nlohmann::ordered_json line;
      line["sequence_id"] = seq;
      line["frame_index"] = k;
      line["image_path"] = rel.generic_string();
      line["label"] = rec.labels[k];
      out << line.dump() << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + manifest.string());
  return manifest;
}

}  // namespace beamkd::scene
