// Eigen (via service.hpp) must precede httplib: <resolv.h> defines _res.
#include "tiltshift/service.hpp"

#include <httplib.h>

#include <iostream>

#include "tiltshift/errors.hpp"

namespace tiltshift::service {

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::MissingView:
      return 404;
    case ErrorCode::NoPlane:
      return 409;
    case ErrorCode::InvalidArgument:
    case ErrorCode::MalformedManifest:
      return 400;
    default:
      return 422;
  }
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Wraps a handler so engine errors become JSON error payloads.
template <typename Fn>
httplib::Server::Handler guarded(Fn&& fn) {
  return [fn = std::forward<Fn>(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "InvalidArgument", e.what());
    } catch (const std::logic_error& e) {
      send_error(res, 400, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& manager) {
  server.Post("/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    send_json(res, manager.create_session(body.at("dataset").get<std::string>()), 201);
  }));

  server.Get(R"(/sessions/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
    send_json(res, manager.session_state(req.matches[1]));
  }));

  server.Get(R"(/sessions/([^/]+)/pointcloud)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    std::size_t max_points = 300000;
    if (req.has_param("max_points")) max_points = std::stoul(req.get_param_value("max_points"));
    res.set_content(manager.pointcloud_payload(req.matches[1], max_points), "application/octet-stream");
  }));

  server.Get(R"(/sessions/([^/]+)/views/(\d+)/(\d+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const ViewIndex view{std::stoi(req.matches[2]), std::stoi(req.matches[3])};
    res.set_content(encode_png(manager.view_image(req.matches[1], view)), "image/png");
  }));

  server.Post(R"(/sessions/([^/]+)/plane)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    send_json(res, manager.set_plane(req.matches[1], parse_body(req)));
  }));

  server.Post(R"(/sessions/([^/]+)/view)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    send_json(res, manager.set_view(req.matches[1], parse_body(req)));
  }));

  server.Post(R"(/sessions/([^/]+)/render)", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const std::string quality = body.value("quality", std::string("full"));
    if (quality != "full" && quality != "preview") {
      throw Error(ErrorCode::InvalidArgument, "quality must be 'preview' or 'full'");
    }
    send_json(res, manager.render(req.matches[1], quality == "preview" ? Quality::Preview : Quality::Full));
  }));

  server.Get(R"(/renders/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
    const auto result = manager.fetch_render(req.matches[1]);
    res.set_header("X-Covered-Fraction", result->stats.at("covered_fraction").dump());
    res.set_header("X-Min-Coverage", result->stats.at("min_coverage").dump());
    res.set_content(result->png, "image/png");
  }));
}

int serve(const std::string& host, int port, ServiceOptions options) {
  SessionManager manager(options);
  httplib::Server server;
  register_routes(server, manager);
  std::cerr << "tiltshift service listening on " << host << ":" << port << "\n";
  return server.listen(host, port) ? 0 : 1;
}

}  // namespace tiltshift::service
