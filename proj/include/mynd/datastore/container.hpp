#pragma once

// Recording container.
//
// Byte layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "MYND"
//   4       2     version (1)
//   6       4     header length H
//   10      H     header: canonical JSON (UTF-8, sorted keys, no whitespace)
//   10+H    4·F·C samples as IEEE-754 float32, frame-major
//                 (frame 0 ch 0..C-1, frame 1 ch 0..C-1, ...)
//
// F and C are the header's "frames" and the length of "channel_labels". The
// file ends exactly after the sample block.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mynd/bytes.hpp"
#include "mynd/common.hpp"

namespace mynd::datastore {

using json = nlohmann::json;

inline constexpr std::string_view kContainerMagic = "MYND";
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::string_view kRecordingFormatTag = "mynd-recording";

enum class FormatErrc {
  BadMagic,
  UnsupportedVersion,
  Truncated,
  TrailingData,
  MalformedHeader,
  MarkerOutOfRange,
  InvalidDataset,
};

inline const char* to_string(FormatErrc c) {
  switch (c) {
  case FormatErrc::BadMagic: return "bad magic";
  case FormatErrc::UnsupportedVersion: return "unsupported version";
  case FormatErrc::Truncated: return "truncated payload";
  case FormatErrc::TrailingData: return "trailing data";
  case FormatErrc::MalformedHeader: return "malformed header";
  case FormatErrc::MarkerOutOfRange: return "marker out of range";
  case FormatErrc::InvalidDataset: return "invalid dataset";
  }
  return "unknown";
}

class FormatError : public std::runtime_error {
public:
  FormatError(FormatErrc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}
  FormatErrc code() const { return code_; }

private:
  FormatErrc code_;
};

/// Phase boundary annotations written by the recorder.
namespace marker_code {
inline constexpr std::int32_t kTrialStart = 1;
inline constexpr std::int32_t kTrialEnd = 2;
inline constexpr std::int32_t kBlockStart = 3;
inline constexpr std::int32_t kBlockEnd = 4;
inline constexpr std::int32_t kBreak = 5;
} // namespace marker_code

struct Marker {
  std::uint64_t sample_index = 0; // may equal the frame count (end-of-data marker)
  std::int32_t code = 0;
  std::string label;

  bool operator==(const Marker&) const = default;
};

struct QualitySample {
  std::uint64_t sample_index = 0;
  std::array<double, kChannelCount> quality{};

  bool operator==(const QualitySample&) const = default;
};

struct RecordingMetadata {
  std::string started_at; // ISO-8601 UTC
  std::string ended_at;
  std::string locale = "en";
  double fitting_time_s = 0.0;
  std::vector<std::string> sensor_locations;
  std::vector<QualitySample> quality_trace;
  json extra = json::object();

  bool operator==(const RecordingMetadata&) const = default;
};

struct RecordingDataset {
  std::string subject_id;
  std::string scenario_id;
  int day = 1;
  double sample_rate = kSampleRate;
  std::vector<std::string> channel_labels{kChannelLabels.begin(), kChannelLabels.end()};
  std::vector<float> samples; // frame-major, channel-interleaved, µV
  std::vector<Marker> markers;
  RecordingMetadata metadata;

  std::size_t channels() const { return channel_labels.size(); }
  std::size_t frames() const { return channels() == 0 ? 0 : samples.size() / channels(); }
  float at(std::size_t frame, std::size_t channel) const { return samples[frame * channels() + channel]; }

  bool operator==(const RecordingDataset&) const = default;
};

/// Throws FormatError when a dataset breaks one of its invariants.
inline void validate(const RecordingDataset& ds) {
  if (ds.channel_labels.empty()) throw FormatError(FormatErrc::InvalidDataset, "no channels");
  if (ds.samples.size() % ds.channels() != 0)
    throw FormatError(FormatErrc::InvalidDataset, "sample count not divisible by channel count");
  if (!(ds.sample_rate > 0.0) || !std::isfinite(ds.sample_rate))
    throw FormatError(FormatErrc::InvalidDataset, "sample rate must be positive");
  if (ds.day < 1) throw FormatError(FormatErrc::InvalidDataset, "day must be >= 1");
  for (float v : ds.samples)
    if (!std::isfinite(v)) throw FormatError(FormatErrc::InvalidDataset, "non-finite sample");
  const auto frames = static_cast<std::uint64_t>(ds.frames());
  for (std::size_t i = 0; i < ds.markers.size(); ++i) {
    if (ds.markers[i].sample_index > frames)
      throw FormatError(FormatErrc::MarkerOutOfRange,
                        "marker " + std::to_string(i) + " at " + std::to_string(ds.markers[i].sample_index));
    if (i > 0 && ds.markers[i].sample_index < ds.markers[i - 1].sample_index)
      throw FormatError(FormatErrc::MarkerOutOfRange, "markers not sorted at " + std::to_string(i));
  }
}

namespace detail {

inline json metadata_to_json(const RecordingMetadata& m) {
  json trace = json::array();
  for (const auto& q : m.quality_trace) {
    json row = json::array({q.sample_index});
    for (double v : q.quality) row.push_back(v);
    trace.push_back(std::move(row));
  }
  return json{{"started_at", m.started_at},
              {"ended_at", m.ended_at},
              {"locale", m.locale},
              {"fitting_time_s", m.fitting_time_s},
              {"sensor_locations", m.sensor_locations},
              {"quality_trace", std::move(trace)},
              {"extra", m.extra}};
}

inline RecordingMetadata metadata_from_json(const json& j) {
  RecordingMetadata m;
  m.started_at = j.at("started_at").get<std::string>();
  m.ended_at = j.at("ended_at").get<std::string>();
  m.locale = j.at("locale").get<std::string>();
  m.fitting_time_s = j.at("fitting_time_s").get<double>();
  m.sensor_locations = j.at("sensor_locations").get<std::vector<std::string>>();
  for (const auto& row : j.at("quality_trace")) {
    if (!row.is_array() || row.size() != kChannelCount + 1) throw std::invalid_argument("quality_trace row");
    QualitySample q;
    q.sample_index = row[0].get<std::uint64_t>();
    for (std::size_t c = 0; c < kChannelCount; ++c) q.quality[c] = row[c + 1].get<double>();
    m.quality_trace.push_back(q);
  }
  m.extra = j.at("extra");
  if (!m.extra.is_object()) throw std::invalid_argument("extra must be an object");
  return m;
}

} // namespace detail

inline std::string canonical_header(const RecordingDataset& ds) {
  json markers = json::array();
  for (const auto& mk : ds.markers) markers.push_back(json::array({mk.sample_index, mk.code, mk.label}));
  const json header{{"format", kRecordingFormatTag},
                    {"subject_id", ds.subject_id},
                    {"scenario_id", ds.scenario_id},
                    {"day", ds.day},
                    {"sample_rate", ds.sample_rate},
                    {"channel_labels", ds.channel_labels},
                    {"frames", static_cast<std::uint64_t>(ds.frames())},
                    {"markers", std::move(markers)},
                    {"metadata", detail::metadata_to_json(ds.metadata)}};
  return header.dump(-1, ' ', false, json::error_handler_t::strict);
}

inline Bytes write_dataset(const RecordingDataset& ds) {
  validate(ds);
  const std::string header = canonical_header(ds);
  ByteWriter w;
  w.bytes().reserve(10 + header.size() + ds.samples.size() * 4);
  w.raw(kContainerMagic);
  w.u16(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.raw(header);
  for (float v : ds.samples) w.f32(v);
  return w.take();
}

inline RecordingDataset read_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  RecordingDataset ds;
  json header;
  try {
    if (r.remaining() < kContainerMagic.size() || r.str(kContainerMagic.size()) != kContainerMagic)
      throw FormatError(FormatErrc::BadMagic, "not a recording container");
    const std::uint16_t version = r.u16();
    if (version != kContainerVersion)
      throw FormatError(FormatErrc::UnsupportedVersion, "version " + std::to_string(version));
    const std::uint32_t hlen = r.u32();
    const std::string text = r.str(hlen);
    header = json::parse(text, nullptr, false);
    if (header.is_discarded() || !header.is_object())
      throw FormatError(FormatErrc::MalformedHeader, "header is not a JSON object");
  } catch (const TruncatedInput&) {
    throw FormatError(FormatErrc::Truncated, "header incomplete");
  }

  std::uint64_t frames = 0;
  try {
    if (header.at("format").get<std::string>() != kRecordingFormatTag)
      throw FormatError(FormatErrc::MalformedHeader, "unexpected format tag");
    ds.subject_id = header.at("subject_id").get<std::string>();
    ds.scenario_id = header.at("scenario_id").get<std::string>();
    ds.day = header.at("day").get<int>();
    ds.sample_rate = header.at("sample_rate").get<double>();
    ds.channel_labels = header.at("channel_labels").get<std::vector<std::string>>();
    frames = header.at("frames").get<std::uint64_t>();
    for (const auto& m : header.at("markers")) {
      if (!m.is_array() || m.size() != 3) throw FormatError(FormatErrc::MalformedHeader, "marker entry");
      ds.markers.push_back({m[0].get<std::uint64_t>(), m[1].get<std::int32_t>(), m[2].get<std::string>()});
    }
    ds.metadata = detail::metadata_from_json(header.at("metadata"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(FormatErrc::MalformedHeader, e.what());
  }
  if (ds.channel_labels.empty()) throw FormatError(FormatErrc::MalformedHeader, "no channels");

  const std::uint64_t count = frames * ds.channel_labels.size();
  if (count > r.remaining() / 4) throw FormatError(FormatErrc::Truncated, "sample block shorter than header claims");
  ds.samples.resize(static_cast<std::size_t>(count));
  for (auto& v : ds.samples) v = r.f32();
  if (r.remaining() != 0) throw FormatError(FormatErrc::TrailingData, std::to_string(r.remaining()) + " bytes");
  validate(ds);
  return ds;
}

/// Phase-tagged trial segment recovered from the marker table.
struct MarkedTrial {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  std::string label;
};

/// Pairs TrialStart/TrialEnd markers. An unmatched start is an error.
inline std::vector<MarkedTrial> marked_trials(const RecordingDataset& ds) {
  std::vector<MarkedTrial> out;
  std::optional<MarkedTrial> open;
  for (const auto& m : ds.markers) {
    if (m.code == marker_code::kTrialStart) {
      if (open) throw FormatError(FormatErrc::InvalidDataset, "nested trial start at " + std::to_string(m.sample_index));
      open = MarkedTrial{m.sample_index, 0, m.label};
    } else if (m.code == marker_code::kTrialEnd) {
      if (!open) throw FormatError(FormatErrc::InvalidDataset, "trial end without start");
      open->end = m.sample_index;
      out.push_back(*open);
      open.reset();
    }
  }
  if (open) throw FormatError(FormatErrc::InvalidDataset, "unterminated trial");
  return out;
}

} // namespace mynd::datastore
