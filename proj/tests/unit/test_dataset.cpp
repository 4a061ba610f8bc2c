#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "beamkd/dataset.hpp"
#include "beamkd/errors.hpp"
#include "doctest.h"

using namespace beamkd;
using namespace beamkd::data;
namespace fs = std::filesystem;

namespace {

std::vector<FrameRecord> frames(const std::string& seq, int count, int first_index = 0) {
  std::vector<FrameRecord> out;
  for (int k = 0; k < count; ++k) out.push_back({seq, first_index + k, {}, std::nullopt, k % 5});
  return out;
}

}  // namespace

TEST_CASE("labels from power") {
  std::vector<double> p{0.1, 0.9, 0.3};
  CHECK(labels_from_power(p) == 1);
  std::vector<double> tie{0.5, 0.5};
  CHECK(labels_from_power(tie) == 0);
  std::vector<double> none;
  CHECK_THROWS_AS(labels_from_power(none), UsageError);
}

TEST_CASE("window counts") {
  CHECK(window_sequences(frames("a", 20), 8, 6).size() == 6);
  CHECK(window_sequences(frames("a", 15), 8, 6).size() == 1);
  CHECK(window_sequences(frames("a", 14), 8, 6).empty());

  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const int F = static_cast<int>(rng() % 25), L = 1 + static_cast<int>(rng() % 8), J = static_cast<int>(rng() % 7);
    const auto samples = window_sequences(frames("s", F), L, J);
    CHECK(samples.size() == static_cast<std::size_t>(std::max(0, F - L - J)));
    for (const auto& s : samples) {
      CHECK(s.frames.size() == static_cast<std::size_t>(L + 1));
      CHECK(s.labels.size() == static_cast<std::size_t>(J + 1));
      CHECK(s.frames.back() == static_cast<std::size_t>(s.anchor));
    }
  }
}

TEST_CASE("windows never cross sequence boundaries or gaps") {
  auto recs = frames("a", 10);
  auto b = frames("b", 10);
  recs.insert(recs.end(), b.begin(), b.end());
  auto gap = frames("c", 6, 0);
  auto rest = frames("c", 6, 20);
  recs.insert(recs.end(), gap.begin(), gap.end());
  recs.insert(recs.end(), rest.begin(), rest.end());
  const auto samples = window_sequences(recs, 3, 1);
  CHECK(samples.size() == 6 + 6 + 2 + 2);
  for (const auto& s : samples)
    for (auto r : s.frames) CHECK(recs[r].sequence_id == s.sequence_id);
}

TEST_CASE("manifest round trip with power vectors") {
  const fs::path dir = fs::temp_directory_path() / "beamkd_manifest_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream p(dir / "p.bin", std::ios::binary);
    const float v[3] = {0.2f, 0.1f, 0.7f};
    p.write(reinterpret_cast<const char*>(v), sizeof v);
    std::ofstream m(dir / "manifest.jsonl");
    m << R"({"sequence_id":"s1","frame_index":0,"image_path":"a.png","powers":[0.1,0.9,0.3]})" << "\n";
    m << R"({"sequence_id":"s1","frame_index":1,"image_path":"b.png","powers_path":"p.bin"})" << "\n";
    m << R"({"sequence_id":"s1","frame_index":2,"image_path":"/abs/c.png","label":1})" << "\n";
  }
  const auto recs = read_manifest(dir / "manifest.jsonl");
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].image_path == dir / "a.png");
  CHECK(recs[2].image_path == fs::path("/abs/c.png"));
  CHECK(labels_from_power(*recs[1].powers) == 2);
  write_manifest(dir / "out.jsonl", recs);
  const auto back = read_manifest(dir / "out.jsonl");
  CHECK(*back[0].label == 1);
  CHECK(*back[1].label == 2);
  CHECK(*back[2].label == 1);

  std::ofstream bad(dir / "bad.jsonl");
  bad << R"({"sequence_id":"s1","frame_index":0,"image_path":"a.png"})" << "\n";
  bad.close();
  CHECK_THROWS_AS(read_manifest(dir / "bad.jsonl"), UsageError);
  fs::remove_all(dir);
}

TEST_CASE("split is a seeded partition") {
  std::vector<Sample> samples;
  for (int i = 0; i < 10; ++i) samples.push_back({"s" + std::to_string(i / 2), i, {}, {0}});
  const auto s = split_dataset(samples, {0.8, Granularity::kSample, 3});
  CHECK(s.train.size() == 8);
  CHECK(s.validation.size() == 2);
  const auto again = split_dataset(samples, {0.8, Granularity::kSample, 3});
  CHECK(again.train == s.train);
  CHECK(again.validation == s.validation);

  const auto q = split_dataset(samples, {0.6, Granularity::kSequence, 5});
  std::set<std::string> train_seq, val_seq;
  for (auto i : q.train) train_seq.insert(samples[i].sequence_id);
  for (auto i : q.validation) val_seq.insert(samples[i].sequence_id);
  for (const auto& id : train_seq) CHECK(val_seq.count(id) == 0);
  CHECK(q.train.size() + q.validation.size() == samples.size());
  CHECK(std::is_sorted(q.train.begin(), q.train.end()));

  CHECK_THROWS_AS(split_dataset(samples, {0.01, Granularity::kSample, 3}), UsageError);
  CHECK_THROWS_AS(split_dataset({}, {0.8, Granularity::kSample, 3}), UsageError);
}

TEST_CASE("batches partition the training set") {
  const auto b = make_batches(100, 32, 1, 1);
  REQUIRE(b.size() == 4);
  CHECK(b[0].size() == 32);
  CHECK(b[3].size() == 4);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(make_batches(100, 32, 1, 1) == b);
  CHECK(make_batches(100, 32, 1, 2) != b);
}

TEST_CASE("class histogram and label gathering") {
  std::vector<Sample> s{{"a", 0, {}, {0, 1}}, {"a", 1, {}, {1, 1}}};
  CHECK(class_histogram(s, 3) == std::vector<std::size_t>{1, 3, 0});
  std::vector<std::size_t> ids{1, 0};
  CHECK(gather_labels(s, ids) == std::vector<int>{1, 1, 0, 1});
  CHECK(parse_granularity("sample") == Granularity::kSample);
  CHECK_THROWS_AS(parse_granularity("frame"), UsageError);
}

TEST_CASE("mask bank shares frame pairs across windows") {
  std::vector<FrameRecord> recs = frames("a", 8);
  std::vector<RgbImage> imgs;
  for (int k = 0; k < 8; ++k) {
    RgbImage img(6, 6);
    img.at(2, k % 6)[0] = 255;
    img.at(2, k % 6)[1] = 255;
    img.at(2, k % 6)[2] = 255;
    imgs.push_back(img);
  }
  const auto samples = window_sequences(recs, 3, 1);
  int loads = 0;
  const auto bank = MaskBank::from_frames(
      samples, 3, [&](std::size_t r) { ++loads; return imgs[r]; }, {6, 6, 0.1});
  CHECK(loads == 7);  // frames 0..6 are used by the windows
  CHECK(bank.num_samples() == samples.size());
  CHECK(bank.window_length(0) == 3);

  for (std::size_t s = 0; s < samples.size(); ++s) {
    std::vector<RgbImage> raw;
    for (auto r : samples[s].frames) raw.push_back(imgs[r]);
    CHECK(bank.sequence(s) == preprocess::preprocess_sequence(raw, {6, 6, 0.1}));
  }
  std::vector<std::size_t> ids{2, 0};
  const auto batch = bank.gather(ids, 2);
  CHECK(batch.batch == 2);
  CHECK(batch.length == 2);
  const auto seq = bank.sequence(2);
  for (int i = 0; i < 36; ++i) CHECK(batch.image(0, 0)[i] == seq.masks[1].values[static_cast<std::size_t>(i)]);
  CHECK_THROWS_AS(bank.gather(ids, 4), UsageError);

  std::vector<preprocess::MotionMaskSequence> seqs{bank.sequence(0), bank.sequence(1)};
  const auto cached = MaskBank::from_sequences(seqs);
  CHECK(cached.sequence(1) == bank.sequence(1));
}
