#include "beamkd/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

#include "beamkd/errors.hpp"
#include "json.hpp"

namespace beamkd::data {

using nlohmann::json;
namespace fs = std::filesystem;

int labels_from_power(std::span<const double> powers) {
  if (powers.empty()) throw UsageError("labels_from_power: empty power vector");
  std::size_t best = 0;
  for (std::size_t i = 0; i < powers.size(); ++i) {
    if (!std::isfinite(powers[i])) throw UsageError("labels_from_power: non-finite power");
    if (powers[i] > powers[best]) best = i;
  }
  return static_cast<int>(best);
}

std::vector<double> read_power_file(const fs::path& path) {
  static_assert(std::endian::native == std::endian::little, "power files are little-endian float32");
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open power file " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes == 0 || bytes % sizeof(float) != 0) throw IoError("malformed power file " + path.string());
  std::vector<float> raw(bytes / sizeof(float));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("read failed for " + path.string());
  return {raw.begin(), raw.end()};
}

std::vector<FrameRecord> read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  const fs::path base = manifest.parent_path();
  std::vector<FrameRecord> out;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> num_beams;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(where + ": " + e.what());
    }
    try {
      FrameRecord r;
      const auto& sid = j.at("sequence_id");
      r.sequence_id = sid.is_string() ? sid.get<std::string>() : sid.dump();
      r.frame_index = j.at("frame_index").get<int>();
      fs::path img = j.at("image_path").get<std::string>();
      r.image_path = img.is_relative() ? base / img : img;
      if (j.contains("powers")) {
        r.powers = j["powers"].get<std::vector<double>>();
      } else if (j.contains("powers_path")) {
        fs::path pp = j["powers_path"].get<std::string>();
        r.powers = read_power_file(pp.is_relative() ? base / pp : pp);
      }
      if (j.contains("label")) r.label = j["label"].get<int>();
      if (!r.powers && !r.label) throw UsageError("record needs a label or powers");
      if (r.powers) {
        if (num_beams && *num_beams != r.powers->size()) throw UsageError("inconsistent power vector length");
        num_beams = r.powers->size();
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw UsageError(where + ": " + e.what());
    } catch (const UsageError& e) {
      throw UsageError(where + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const fs::path& manifest, std::span<const FrameRecord> records) {
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["sequence_id"] = r.sequence_id;
    j["frame_index"] = r.frame_index;
    j["image_path"] = r.image_path.generic_string();
    j["label"] = r.label ? *r.label : labels_from_power(*r.powers);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + manifest.string());
}

std::vector<Sample> window_sequences(std::span<const FrameRecord> records, int input_length, int horizon) {
  if (input_length < 1) throw UsageError("window_sequences: L must be >= 1");
  if (horizon < 0) throw UsageError("window_sequences: J must be >= 0");
  std::vector<Sample> out;
  auto label_of = [&](std::size_t r) {
    const auto& rec = records[r];
    return rec.label ? *rec.label : labels_from_power(*rec.powers);
  };
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin + 1;
    while (end < records.size() && records[end].sequence_id == records[begin].sequence_id &&
           records[end].frame_index == records[end - 1].frame_index + 1)
      ++end;
    // Segment [begin, end): anchors need L frames before and J after.
    const auto L = static_cast<std::size_t>(input_length), J = static_cast<std::size_t>(horizon);
    for (std::size_t t = begin + L; t + J < end; ++t) {
      Sample s;
      s.sequence_id = records[t].sequence_id;
      s.anchor = records[t].frame_index;
      for (std::size_t r = t - L; r <= t; ++r) s.frames.push_back(r);
      for (std::size_t r = t; r <= t + J; ++r) s.labels.push_back(label_of(r));
      out.push_back(std::move(s));
    }
    begin = end;
  }
  return out;
}

Split split_dataset(std::span<const Sample> samples, const SplitSpec& spec) {
  if (samples.empty()) throw UsageError("split_dataset: no samples");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw UsageError("split_dataset: train_fraction must be in (0,1)");
  std::mt19937_64 rng(spec.seed);
  Split split;
  if (spec.granularity == Granularity::kSample) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * samples.size()));
    if (n_train == 0 || n_train == samples.size()) throw UsageError("split_dataset: fraction leaves one side empty");
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  } else {
    std::vector<std::string> ids;
    for (const auto& s : samples)
      if (std::find(ids.begin(), ids.end(), s.sequence_id) == ids.end()) ids.push_back(s.sequence_id);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * ids.size()));
    if (n_train == 0 || n_train == ids.size()) throw UsageError("split_dataset: fraction leaves one side empty");
    std::unordered_map<std::string, bool> in_train;
    for (std::size_t i = 0; i < ids.size(); ++i) in_train[ids[i]] = i < n_train;
    for (std::size_t i = 0; i < samples.size(); ++i)
      (in_train[samples[i].sequence_id] ? split.train : split.validation).push_back(i);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw UsageError("make_batches: batch size must be >= 1");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0xba7cu};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    const std::size_t j = std::min(n, i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return out;
}

std::vector<std::size_t> class_histogram(std::span<const Sample> samples, int num_classes) {
  std::vector<std::size_t> h(static_cast<std::size_t>(num_classes), 0);
  for (const auto& s : samples)
    for (int b : s.labels) {
      if (b < 0 || b >= num_classes) throw UsageError("class_histogram: label out of range");
      ++h[static_cast<std::size_t>(b)];
    }
  return h;
}

MaskBank MaskBank::from_frames(std::span<const Sample> samples, int input_length,
                               const std::function<RgbImage(std::size_t)>& load,
                               const preprocess::PreprocessConfig& config) {
  config.validate();
  MaskBank bank;
  bank.height_ = config.out_height;
  bank.width_ = config.out_width;
  std::map<std::size_t, std::size_t> mask_of_record;  // record r -> mask(r-1, r)
  std::map<std::size_t, GrayImage> grays;
  auto gray = [&](std::size_t r) -> const GrayImage& {
    auto it = grays.find(r);
    if (it == grays.end()) it = grays.emplace(r, preprocess::grayscale_resize(load(r), config)).first;
    return it->second;
  };
  for (const auto& s : samples) {
    if (static_cast<int>(s.frames.size()) < input_length + 1)
      throw UsageError("MaskBank: sample window shorter than L+1");
    std::vector<std::size_t> ids;
    for (std::size_t k = s.frames.size() - static_cast<std::size_t>(input_length); k < s.frames.size(); ++k) {
      const std::size_t r = s.frames[k];
      auto it = mask_of_record.find(r);
      if (it == mask_of_record.end()) {
        const GrayImage pair[2] = {gray(s.frames[k - 1]), gray(r)};
        const auto diff = preprocess::difference_sequence(pair);
        bank.packed_.push_back(preprocess::pack_bits(preprocess::motion_mask(diff.front(), config.epsilon)));
        it = mask_of_record.emplace(r, bank.packed_.size() - 1).first;
      }
      ids.push_back(it->second);
    }
    bank.sample_masks_.push_back(std::move(ids));
    // Keep the gray cache bounded to the current neighbourhood.
    while (!grays.empty() && grays.begin()->first + 1 < s.frames.front()) grays.erase(grays.begin());
  }
  return bank;
}

MaskBank MaskBank::from_sequences(std::span<const preprocess::MotionMaskSequence> seqs) {
  MaskBank bank;
  for (const auto& seq : seqs) {
    if (seq.masks.empty()) throw UsageError("MaskBank: empty mask sequence");
    std::vector<std::size_t> ids;
    for (const auto& m : seq.masks) {
      if (bank.packed_.empty()) {
        bank.height_ = m.height;
        bank.width_ = m.width;
      } else if (m.height != bank.height_ || m.width != bank.width_) {
        throw UsageError("MaskBank: inconsistent mask sizes");
      }
      bank.packed_.push_back(preprocess::pack_bits(m));
      ids.push_back(bank.packed_.size() - 1);
    }
    bank.sample_masks_.push_back(std::move(ids));
  }
  return bank;
}

preprocess::MotionMaskSequence MaskBank::sequence(std::size_t s) const {
  preprocess::MotionMaskSequence seq;
  for (std::size_t id : sample_masks_.at(s)) seq.masks.push_back(preprocess::unpack_bits(packed_[id], height_, width_));
  return seq;
}

preprocess::MaskBatch MaskBank::gather(std::span<const std::size_t> samples, int length) const {
  preprocess::MaskBatch batch{static_cast<int>(samples.size()), length, height_, width_, {}};
  const std::size_t hw = batch.image_size();
  batch.values.assign(samples.size() * static_cast<std::size_t>(length) * hw, 0.0);
  double* dst = batch.values.data();
  for (std::size_t s : samples) {
    const auto& ids = sample_masks_.at(s);
    if (static_cast<int>(ids.size()) < length) throw UsageError("MaskBank::gather: window shorter than requested");
    for (std::size_t k = ids.size() - static_cast<std::size_t>(length); k < ids.size(); ++k) {
      const auto& bytes = packed_[ids[k]];
      for (std::size_t i = 0; i < hw; ++i) dst[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u;
      dst += hw;
    }
  }
  return batch;
}

std::vector<int> gather_labels(std::span<const Sample> samples, std::span<const std::size_t> ids) {
  std::vector<int> out;
  for (std::size_t i : ids) out.insert(out.end(), samples[i].labels.begin(), samples[i].labels.end());
  return out;
}

std::string granularity_name(Granularity g) { return g == Granularity::kSequence ? "sequence" : "sample"; }

Granularity parse_granularity(const std::string& s) {
  if (s == "sequence") return Granularity::kSequence;
  if (s == "sample") return Granularity::kSample;
  throw UsageError("granularity must be 'sequence' or 'sample', got '" + s + "'");
}

}  // namespace beamkd::data
