#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "mynd/common.hpp"
#include "mynd/datastore/container.hpp"

namespace mynd::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mynd-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
  std::filesystem::path path_;
};

/// Seeded dataset with random samples, markers, quality trace and metadata.
inline datastore::RecordingDataset random_dataset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> frames_d(0, 700), small(0, 6);
  std::normal_distribution<float> g(0.0f, 30.0f);
  datastore::RecordingDataset ds;
  ds.subject_id = "subj-" + std::to_string(seed % 97);
  ds.scenario_id = "d" + std::to_string(1 + seed % 7) + "-positive_memories";
  ds.day = 1 + static_cast<int>(seed % 7);
  const auto frames = static_cast<std::size_t>(frames_d(rng));
  ds.samples.resize(frames * ds.channels());
  for (auto& v : ds.samples) v = g(rng);
  if (seed % 5 == 0 && !ds.samples.empty()) ds.samples[0] = -0.0f;
  const int markers = frames == 0 ? 0 : small(rng);
  std::uint64_t at = 0;
  for (int i = 0; i < markers; ++i) {
    at = std::min<std::uint64_t>(frames, at + rng() % (frames / 4 + 1));
    ds.markers.push_back({at, static_cast<std::int32_t>(1 + i % 5), i % 2 ? "memory" : "subtraction \"q\" ü"});
  }
  ds.metadata.started_at = "2024-03-04T08:00:00.000Z";
  ds.metadata.ended_at = "2024-03-04T08:03:00.000Z";
  ds.metadata.fitting_time_s = std::uniform_real_distribution<double>(0.0, 300.0)(rng);
  ds.metadata.sensor_locations.assign(kChannelLabels.begin(), kChannelLabels.end());
  for (int i = 0; i < small(rng); ++i) {
    datastore::QualitySample q;
    q.sample_index = static_cast<std::uint64_t>(i) * 128;
    for (auto& x : q.quality) x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    ds.metadata.quality_trace.push_back(q);
  }
  ds.metadata.extra = {{"strategy", "positive_memories"}, {"block", static_cast<int>(seed % 3)},
                       {"ratio", 1.0 / 3.0}, {"task_labels", {{"memory", 1}, {"subtraction", -1}}}};
  return ds;
}

} // namespace mynd::test
