#pragma once

// Run manifest written next to every command's outputs. It records what is
// needed to reproduce the run (version, seed, parameters, input digests) and
// deliberately no wall-clock time, so identical runs give identical files.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mynd/datastore/envelope.hpp"

namespace mynd::app {

inline constexpr std::string_view kVersion = "0.3.0";

inline std::string file_digest(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  const Bytes data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return datastore::digest_hex(data, 32);
}

class Manifest {
public:
  Manifest(std::string command, std::uint64_t seed) {
    doc_ = {{"command", std::move(command)},
            {"version", std::string(kVersion)},
            {"seed", seed},
            {"parameters", nlohmann::json::object()},
            {"inputs", nlohmann::json::object()},
            {"outputs", nlohmann::json::array()}};
  }

  template <class T>
  void parameter(const std::string& key, const T& value) {
    doc_["parameters"][key] = value;
  }

  void input(const std::string& name, const std::filesystem::path& p) { doc_["inputs"][name] = file_digest(p); }

  /// Digest of every regular file below `dir` (sorted by relative path),
  /// optionally only those with the given extension.
  void input_tree(const std::string& name, const std::filesystem::path& dir, const std::string& extension = {}) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
      if (e.is_regular_file() && (extension.empty() || e.path().extension() == extension)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    nlohmann::json tree = nlohmann::json::object();
    for (const auto& f : files) tree[std::filesystem::relative(f, dir).generic_string()] = file_digest(f);
    doc_["inputs"][name] = tree;
  }

  void output(const std::string& relative) { doc_["outputs"].push_back(relative); }

  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_to(dir / "manifest.json");
  }

  void write_to(const std::filesystem::path& file) const {
    std::ofstream os(file, std::ios::trunc);
    os << doc_.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + file.string());
  }

  const nlohmann::json& json() const { return doc_; }

private:
  nlohmann::json doc_;
};

using SimTime = std::chrono::time_point<std::chrono::system_clock, std::chrono::milliseconds>;

inline std::string format_time(SimTime t) {
  const auto ms = t.time_since_epoch().count();
  const std::time_t secs = static_cast<std::time_t>(ms >= 0 ? ms / 1000 : (ms - 999) / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(((ms % 1000) + 1000) % 1000));
  return out;
}

} // namespace mynd::app
