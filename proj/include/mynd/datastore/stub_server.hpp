#pragma once

// Minimal receiving server for the HTTP transport. Stores envelopes under
// <root>/recordings like DirectoryTransport does and serves announcements from
// <root>/messages. Meant for tests and local demos, not deployment.

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mynd/datastore/transport.hpp"

namespace mynd::datastore {

class StubServer {
public:
  explicit StubServer(std::filesystem::path root) : root_(std::move(root)), store_(root_) {
    std::filesystem::create_directories(root_);
    server_.Post("/recordings", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.get_header_value("X-Entry-Id");
      if (id.empty() || id.find_first_not_of("0123456789abcdef") != std::string::npos) {
        res.status = 400;
        return;
      }
      const Bytes body(req.body.begin(), req.body.end());
      {
        std::lock_guard lock(mu_);
        ++posts_;
        ++per_id_[id];
      }
      const SendResult r = store_.send({id, req.get_header_value("X-Subject-Token"), &body});
      if (!r.acknowledged) {
        res.status = 500;
        return;
      }
      res.status = 201;
      res.set_content(nlohmann::json{{"id", r.echoed_id}}.dump(), "application/json");
    });
    server_.Get("/messages", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string locale = req.has_param("locale") ? req.get_param_value("locale") : "en";
      const auto body = store_.get_messages(locale);
      res.set_content(body.value_or("[]"), "application/json");
    });
  }

  ~StubServer() { stop(); }

  /// Binds to 127.0.0.1 on `port` (0 picks a free one) and serves in a
  /// background thread. Returns the bound port.
  int start(int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port("127.0.0.1") : (server_.bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ < 0) throw std::runtime_error("stub server: cannot bind");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop() is called elsewhere.
  void run(int port) {
    if (!server_.bind_to_port("127.0.0.1", port)) throw std::runtime_error("stub server: cannot bind");
    port_ = port;
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t posts() const {
    std::lock_guard lock(mu_);
    return posts_;
  }
  std::size_t unique_entries() const {
    std::lock_guard lock(mu_);
    return per_id_.size();
  }

private:
  std::filesystem::path root_;
  DirectoryTransport store_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  mutable std::mutex mu_;
  std::size_t posts_ = 0;
  std::map<std::string, int> per_id_;
};

} // namespace mynd::datastore
