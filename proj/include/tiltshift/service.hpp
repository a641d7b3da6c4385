#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "tiltshift/depth_pointcloud.hpp"
#include "tiltshift/lightfield_io.hpp"
#include "tiltshift/refocus.hpp"

namespace httplib {
class Server;
}

namespace tiltshift::service {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct ServiceOptions {
  std::chrono::seconds idle_timeout{30 * 60};
  /// Preview renders use at most this many aperture views.
  std::size_t preview_max_views = 9;
  /// Neighbour count for the normal map behind single-click planes.
  int normal_neighbours = 8;
};

enum class Quality { Preview, Full };

struct RenderResult {
  std::string render_id;
  std::string png;
  json stats;
};

class Session;

/// In-process implementation of the studio service. Every method is safe to
/// call concurrently; gestures and renders on one session are serialized.
/// Failures surface as tiltshift::Error.
class SessionManager {
 public:
  explicit SessionManager(ServiceOptions options = {});
  ~SessionManager();

  /// Returns {"id": ..., ...state}. Load errors propagate (NotFound for a bad path).
  json create_session(const std::string& dataset_path);
  json session_state(const std::string& id);

  /// Binary point cloud of the reference view, decimated to <= max_points.
  std::string pointcloud_payload(const std::string& id, std::size_t max_points);
  Image view_image(const std::string& id, ViewIndex view);

  /// Gesture is one of
  ///   {"mode": "click", "u": .., "v": ..}
  ///   {"mode": "three_points", "points": [[x,y,z], [x,y,z], [x,y,z]]}
  ///   {"mode": "manual", "z": .., "rot_x": .., "rot_y": .., "rot_z": ..}
  ///   {"mode": "adjust", "dz": .., "drot_x": .., "drot_y": ..}
  json set_plane(const std::string& id, const json& gesture);

  /// Body {"s_r", "t_r", "radius", "profile": "uniform"|"gaussian"}.
  json set_view(const std::string& id, const json& body);

  /// Renders the current state (or serves it from the session cache) and
  /// returns {"render_id", "cached", "quality", "width", "height", ...stats}.
  json render(const std::string& id, Quality quality);
  std::shared_ptr<const RenderResult> fetch_render(const std::string& render_id) const;

  /// Drops sessions idle for longer than the timeout; returns how many.
  std::size_t expire_idle(Clock::time_point now = Clock::now());
  std::size_t session_count() const;

 private:
  std::shared_ptr<Session> find(const std::string& id);
  std::shared_ptr<const LightFieldDataset> dataset_for(const std::string& path);

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::weak_ptr<const LightFieldDataset>> datasets_;
  std::map<std::string, std::shared_ptr<const RenderResult>> renders_;
  std::uint64_t next_id_ = 1;
};

/// Point cloud wire format, little endian:
///   char[4] "TSPC", u32 version (1), u32 count, u32 flags (bit 0: normals),
///   f32 xyz[count][3], u8 rgb[count][3], f32 normals[count][3] if flagged.
std::string encode_pointcloud(const PointCloud& cloud);
PointCloud decode_pointcloud(const std::string& payload);

/// Installs the documented endpoints on `server`.
void register_routes(httplib::Server& server, SessionManager& manager);

/// Blocking HTTP server.
int serve(const std::string& host, int port, ServiceOptions options = {});

}  // namespace tiltshift::service
