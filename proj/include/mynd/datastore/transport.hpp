#pragma once

// Upload transports. Two adapters share one interface:
//
//  * DirectoryTransport drops envelopes into <root>/recordings/<entry-id>.env
//    and reads announcements from <root>/messages/<locale>.json (falling back
//    to <root>/messages.json).
//  * HttpTransport talks to a server:
//      POST /recordings        body: envelope bytes (application/octet-stream)
//                              headers: X-Subject-Token, X-Entry-Id
//                              reply 200/201: {"id": "<entry id>"}
//      GET  /messages?locale=L reply 200: [{"id","locale","text"}, ...]
//
// Both echo the entry id, which is what marks a queue entry as sent.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "mynd/bytes.hpp"

namespace mynd::datastore {

struct Delivery {
  std::string entry_id;
  std::string subject_token;
  const Bytes* body = nullptr;
};

struct SendResult {
  bool acknowledged = false;
  std::string echoed_id;
  std::string error;
  bool unreachable = false;
};

class Transport {
public:
  virtual ~Transport() = default;
  virtual SendResult send(const Delivery& d) = 0;
  /// Raw announcement document for a locale; nullopt when unreachable.
  virtual std::optional<std::string> get_messages(const std::string& locale) = 0;
};

class DirectoryTransport : public Transport {
public:
  explicit DirectoryTransport(std::filesystem::path root) : root_(std::move(root)) {}

  SendResult send(const Delivery& d) override {
    namespace fs = std::filesystem;
    SendResult res;
    std::error_code ec;
    if (!fs::is_directory(root_, ec)) {
      res.unreachable = true;
      res.error = "directory " + root_.string() + " is not available";
      return res;
    }
    const fs::path dir = root_ / "recordings";
    fs::create_directories(dir, ec);
    const fs::path target = dir / (d.entry_id + ".env");
    if (!fs::exists(target)) {
      const fs::path tmp = dir / (d.entry_id + ".part");
      {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        os.write(reinterpret_cast<const char*>(d.body->data()), static_cast<std::streamsize>(d.body->size()));
        if (!os) {
          res.error = "write failed";
          return res;
        }
      }
      fs::rename(tmp, target, ec);
      if (ec) {
        res.error = ec.message();
        return res;
      }
    }
    res.acknowledged = true;
    res.echoed_id = d.entry_id;
    return res;
  }

  std::optional<std::string> get_messages(const std::string& locale) override {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(root_, ec)) return std::nullopt;
    for (const fs::path& p : {root_ / "messages" / (locale + ".json"), root_ / "messages.json"}) {
      std::ifstream is(p);
      if (is) return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    }
    return std::string("[]");
  }

  const std::filesystem::path& root() const { return root_; }

private:
  std::filesystem::path root_;
};

class HttpTransport : public Transport {
public:
  explicit HttpTransport(std::string base_url, int timeout_s = 5) : client_(base_url) {
    client_.set_connection_timeout(timeout_s, 0);
    client_.set_read_timeout(timeout_s, 0);
    client_.set_write_timeout(timeout_s, 0);
  }

  SendResult send(const Delivery& d) override {
    SendResult res;
    httplib::Headers headers{{"X-Subject-Token", d.subject_token}, {"X-Entry-Id", d.entry_id}};
    const std::string body(reinterpret_cast<const char*>(d.body->data()), d.body->size());
    auto r = client_.Post("/recordings", headers, body, "application/octet-stream");
    if (!r) {
      res.unreachable = true;
      res.error = "connection failed: " + httplib::to_string(r.error());
      return res;
    }
    if (r->status != 200 && r->status != 201) {
      res.error = "server replied " + std::to_string(r->status);
      return res;
    }
    const auto j = nlohmann::json::parse(r->body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string()) {
      res.error = "malformed acknowledgement";
      return res;
    }
    res.echoed_id = j["id"].get<std::string>();
    res.acknowledged = res.echoed_id == d.entry_id;
    if (!res.acknowledged) res.error = "server echoed a different entry id";
    return res;
  }

  std::optional<std::string> get_messages(const std::string& locale) override {
    auto r = client_.Get("/messages", httplib::Params{{"locale", locale}}, httplib::Headers{});
    if (!r || r->status != 200) return std::nullopt;
    return r->body;
  }

private:
  httplib::Client client_;
};

} // namespace mynd::datastore
