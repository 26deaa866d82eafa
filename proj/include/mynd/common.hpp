#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mynd {

inline constexpr std::size_t kChannelCount = 4;
inline constexpr double kSampleRate = 256.0;

// Sensor order of the headband, used everywhere a channel index appears.
inline constexpr std::array<std::string_view, kChannelCount> kChannelLabels{"AF7", "AF8", "TP9", "TP10"};

using ChannelValues = std::array<double, kChannelCount>;

/// One raw multi-channel sample as delivered by the headset (or the simulator).
struct EegFrame {
  std::uint64_t sample_index = 0;
  ChannelValues channels{};
  double sample_rate = kSampleRate;
};

/// Thrown when caller input violates a documented precondition.
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when there is not enough data to compute a requested estimate.
class InsufficientData : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  return splitmix64(splitmix64(parent) ^ (tag * 0xD6E8FEB86659FD93ULL));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  // FNV-1a over the tag text.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return derive_seed(parent, h);
}

} // namespace mynd
