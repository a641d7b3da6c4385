#pragma once

// Service headers pull in Eigen, which must precede httplib's system includes.
#include "tiltshift/service.hpp"

#include <httplib.h>

#include <thread>

namespace tiltshift::test {

/// The HTTP service on an ephemeral loopback port, for the lifetime of the object.
class LiveServer {
 public:
  explicit LiveServer(service::ServiceOptions options = {}) : manager_(options) {
    service::register_routes(server_, manager_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  int port() const { return port_; }
  bool bound() const { return port_ > 0; }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(120, 0);
    return c;
  }

 private:
  service::SessionManager manager_;
  httplib::Server server_;
  int port_ = -1;
  std::thread thread_;
};

}  // namespace tiltshift::test
