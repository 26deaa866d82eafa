#pragma once

// Store-and-forward upload queue.
//
// Envelopes live in the queue directory as <entry-id>.env next to an
// append-only log (queue.log, one JSON object per line):
//
//   {"op":"enqueue","id":...,"seq":n,"created_at":...,"subject":...}
//   {"op":"attempt","id":...,"ok":false,"error":...}
//   {"op":"sent","id":...}
//
// Replaying the log reconstructs the queue. Entry ids are content digests of
// the envelope, so re-sending an entry is idempotent on the receiving side.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mynd/bytes.hpp"
#include "mynd/datastore/envelope.hpp"
#include "mynd/datastore/transport.hpp"

namespace mynd::datastore {

enum class EntryState { Pending, Sent };

struct UploadQueueEntry {
  std::string id;
  std::uint64_t seq = 0;
  std::string created_at;
  std::string subject;
  int attempts = 0;
  EntryState state = EntryState::Pending;
  std::filesystem::path path;
};

struct EntryResult {
  std::string id;
  bool sent = false;
  std::string error;
};

struct FlushReport {
  std::vector<EntryResult> results;
  std::optional<std::string> error; // aggregate error if any entry failed

  bool ok() const { return !error.has_value(); }
  std::size_t sent() const {
    return static_cast<std::size_t>(std::count_if(results.begin(), results.end(), [](auto& r) { return r.sent; }));
  }
};

class UploadQueue {
public:
  explicit UploadQueue(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    replay();
  }

  /// Stores an envelope and appends it to the queue; returns its entry id.
  std::string enqueue(const Bytes& envelope, const std::string& subject, const std::string& created_at) {
    const std::string id = digest_hex(envelope);
    std::lock_guard lock(mu_);
    if (find(id)) return id;
    const auto path = dir_ / (id + ".env");
    {
      std::ofstream os(path, std::ios::binary | std::ios::trunc);
      os.write(reinterpret_cast<const char*>(envelope.data()), static_cast<std::streamsize>(envelope.size()));
      if (!os) throw std::runtime_error("upload queue: cannot write " + path.string());
    }
    UploadQueueEntry e{id, next_seq_++, created_at, subject, 0, EntryState::Pending, path};
    append({{"op", "enqueue"}, {"id", id}, {"seq", e.seq}, {"created_at", created_at}, {"subject", subject}});
    entries_.push_back(std::move(e));
    return id;
  }

  std::vector<UploadQueueEntry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  std::vector<UploadQueueEntry> pending() const {
    std::lock_guard lock(mu_);
    std::vector<UploadQueueEntry> out;
    for (const auto& e : entries_)
      if (e.state == EntryState::Pending) out.push_back(e);
    return out;
  }

  const std::filesystem::path& directory() const { return dir_; }

  /// Attempts every pending entry oldest-first. Failed entries stay pending
  /// with one more attempt counted.
  FlushReport flush(Transport& transport) {
    std::lock_guard flush_lock(flush_mu_);
    FlushReport report;
    std::size_t unreachable = 0;
    for (const auto& e : pending()) {
      EntryResult r{e.id, false, {}};
      Bytes body;
      {
        std::ifstream is(e.path, std::ios::binary);
        if (is) body.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
      }
      SendResult s;
      if (body.empty()) {
        s.error = "envelope file missing";
      } else {
        s = transport.send({e.id, e.subject, &body});
      }
      r.sent = s.acknowledged && s.echoed_id == e.id;
      if (!r.sent) r.error = s.error.empty() ? "not acknowledged" : s.error;
      if (s.unreachable) ++unreachable;
      record_attempt(e.id, r);
      report.results.push_back(std::move(r));
    }
    const std::size_t failed = report.results.size() - report.sent();
    if (failed > 0) {
      report.error = unreachable == report.results.size()
                         ? "transport unreachable; " + std::to_string(failed) + " entr" + (failed == 1 ? "y" : "ies") +
                               " left pending"
                         : std::to_string(failed) + " of " + std::to_string(report.results.size()) +
                               " uploads failed";
    }
    return report;
  }

private:
  UploadQueueEntry* find(const std::string& id) {
    for (auto& e : entries_)
      if (e.id == id) return &e;
    return nullptr;
  }

  void record_attempt(const std::string& id, const EntryResult& r) {
    std::lock_guard lock(mu_);
    auto* e = find(id);
    if (!e) return;
    ++e->attempts;
    nlohmann::json line{{"op", "attempt"}, {"id", id}, {"ok", r.sent}};
    if (!r.sent) line["error"] = r.error;
    append(line);
    if (r.sent) {
      e->state = EntryState::Sent;
      append({{"op", "sent"}, {"id", id}});
    }
  }

  void append(const nlohmann::json& line) {
    std::ofstream os(dir_ / "queue.log", std::ios::app);
    os << line.dump() << '\n';
    if (!os) throw std::runtime_error("upload queue: cannot append to log");
  }

  void replay() {
    std::ifstream is(dir_ / "queue.log");
    std::string line;
    while (std::getline(is, line)) {
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue; // torn final line after a crash
      const std::string op = j.value("op", "");
      const std::string id = j.value("id", "");
      if (op == "enqueue") {
        if (find(id)) continue;
        UploadQueueEntry e;
        e.id = id;
        e.seq = j.value("seq", std::uint64_t{0});
        e.created_at = j.value("created_at", "");
        e.subject = j.value("subject", "");
        e.path = dir_ / (id + ".env");
        next_seq_ = std::max(next_seq_, e.seq + 1);
        entries_.push_back(std::move(e));
      } else if (auto* e = find(id)) {
        if (op == "attempt") ++e->attempts;
        if (op == "sent") e->state = EntryState::Sent;
      }
    }
    std::sort(entries_.begin(), entries_.end(), [](auto& a, auto& b) { return a.seq < b.seq; });
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::mutex flush_mu_;
  std::vector<UploadQueueEntry> entries_;
  std::uint64_t next_seq_ = 0;
};

inline FlushReport flush_uploads(UploadQueue& queue, Transport& transport) { return queue.flush(transport); }

// ---------------------------------------------------------------------------
// Announcements

struct Announcement {
  std::string id;
  std::string locale;
  std::string text;
};

/// Remembers which announcements were already surfaced.
class MessageInbox {
public:
  std::vector<Announcement> fetch(Transport& transport, const std::string& locale) {
    std::vector<Announcement> out;
    const auto body = transport.get_messages(locale);
    if (!body) return out;
    const auto j = nlohmann::json::parse(*body, nullptr, false);
    if (j.is_discarded() || !j.is_array()) {
      diagnostics_.push_back("message document is not a JSON array");
      return out;
    }
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto& m = j[i];
      const bool ok = m.is_object() && m.contains("id") && m["id"].is_string() && m.contains("text") &&
                      m["text"].is_string() && (!m.contains("locale") || m["locale"].is_string());
      if (!ok) {
        diagnostics_.push_back("skipped malformed message #" + std::to_string(i));
        continue;
      }
      Announcement a{m["id"].get<std::string>(), m.value("locale", locale), m["text"].get<std::string>()};
      if (std::find(seen_.begin(), seen_.end(), a.id) != seen_.end()) continue;
      seen_.push_back(a.id);
      out.push_back(std::move(a));
    }
    return out;
  }

  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

private:
  std::vector<std::string> seen_;
  std::vector<std::string> diagnostics_;
};

inline std::vector<Announcement> fetch_messages(Transport& transport, MessageInbox& inbox,
                                                const std::string& locale = "en") {
  return inbox.fetch(transport, locale);
}

} // namespace mynd::datastore
