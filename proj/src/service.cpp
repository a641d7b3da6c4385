#include "tiltshift/service.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "tiltshift/errors.hpp"
#include "tiltshift/plane_interaction.hpp"

namespace tiltshift::service {

namespace {

constexpr std::size_t kInteractiveCloudBudget = 300000;

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::InvalidArgument, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string profile_name(ApertureProfile p) {
  return p == ApertureProfile::Uniform ? "uniform" : "gaussian";
}

ApertureProfile parse_profile(const std::string& name) {
  if (name == "uniform") return ApertureProfile::Uniform;
  if (name == "gaussian") return ApertureProfile::Gaussian;
  throw Error(ErrorCode::InvalidArgument, "unknown aperture profile '" + name + "'");
}

class Fnv1a {
 public:
  void add(const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 1099511628211ull;
    }
  }
  void add(double x) { add(&x, sizeof x); }
  void add(int x) { add(&x, sizeof x); }
  std::string hex() const {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << hash_;
    return out.str();
  }

 private:
  std::uint64_t hash_ = 14695981039346656037ull;
};

// Polygon where the plane cuts the axis-aligned box [lo, hi], ordered around
// its centroid. Empty when the plane misses the box.
std::vector<Vec3> clip_plane_to_box(const RefocusPlane& plane, const Vec3& lo, const Vec3& hi) {
  Vec3 corners[8];
  for (int i = 0; i < 8; ++i) {
    corners[i] = Vec3((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  std::vector<Vec3> hits;
  for (int a = 0; a < 8; ++a) {
    for (int bit = 1; bit < 8; bit <<= 1) {
      if (a & bit) continue;
      const int b = a | bit;
      const double da = plane.signed_distance(corners[a]);
      const double db = plane.signed_distance(corners[b]);
      if ((da > 0.0 && db > 0.0) || (da < 0.0 && db < 0.0)) continue;
      const Vec3 p = da == db ? corners[a] : Vec3(corners[a] + (da / (da - db)) * (corners[b] - corners[a]));
      const bool seen = std::any_of(hits.begin(), hits.end(), [&](const Vec3& q) { return (q - p).norm() < 1e-12; });
      if (!seen) hits.push_back(p);
    }
  }
  if (hits.size() < 3) return {};
  Vec3 centroid = Vec3::Zero();
  for (const auto& h : hits) centroid += h;
  centroid /= static_cast<double>(hits.size());
  const Vec3& n = plane.normal();
  Vec3 e1 = (hits.front() - centroid).normalized();
  const Vec3 e2 = n.cross(e1);
  std::sort(hits.begin(), hits.end(), [&](const Vec3& a, const Vec3& b) {
    return std::atan2((a - centroid).dot(e2), (a - centroid).dot(e1)) <
           std::atan2((b - centroid).dot(e2), (b - centroid).dot(e1));
  });
  return hits;
}

}  // namespace

class Session {
 public:
  Session(std::string id, std::string path, std::shared_ptr<const LightFieldDataset> ds)
      : id(std::move(id)), dataset_path(std::move(path)), dataset(std::move(ds)) {
    virtual_ref = {0.5 * (dataset->grid_rows() - 1), 0.5 * (dataset->grid_cols() - 1)};
    radius = std::hypot(virtual_ref.s, virtual_ref.t) + 1e-9;
    if (radius <= 1e-9) radius = 0.5;
    aperture = make_aperture(*dataset, virtual_ref, radius, profile);
  }

  ViewIndex reference_view() const {
    return {static_cast<int>(std::lround(virtual_ref.s)), static_cast<int>(std::lround(virtual_ref.t))};
  }
  CameraCalibration reference_calibration() const { return virtual_calibration(*dataset, virtual_ref); }

  const NormalEstimate& click_normals(int k) {
    const ViewIndex view = reference_view();
    auto it = dense_normals.find(view);
    if (it == dense_normals.end()) {
      const ViewIndex views[] = {view};
      it = dense_normals.emplace(view, estimate_normals(build_point_cloud(*dataset, views, 1), k)).first;
    }
    return it->second;
  }

  std::optional<std::pair<Vec3, Vec3>> cloud_bounds() {
    if (!dataset->has_disparity() || !dataset->disparity(reference_view())) return std::nullopt;
    const ViewIndex view = reference_view();
    auto it = bounds.find(view);
    if (it == bounds.end()) {
      const ViewIndex views[] = {view};
      const PointCloud cloud = build_point_cloud(*dataset, views, stride_for_budget(*dataset, views, kInteractiveCloudBudget));
      if (cloud.points.empty()) return std::nullopt;
      Vec3 lo = cloud.points.front();
      Vec3 hi = lo;
      for (const auto& p : cloud.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
      it = bounds.emplace(view, std::pair{lo, hi}).first;
    }
    return it->second;
  }

  json plane_summary() {
    if (!plane) return nullptr;
    const CameraCalibration ref = reference_calibration();
    json out = {{"p", to_json(plane->point())},
                {"n", to_json(plane->normal())},
                {"d", (plane->point() - ref.center()).dot(plane->normal())}};
    json corners = json::array();
    if (const auto box = cloud_bounds()) {
      for (const auto& c : clip_plane_to_box(*plane, box->first, box->second)) corners.push_back(to_json(c));
    }
    out["corners"] = std::move(corners);
    return out;
  }

  json aperture_summary() const {
    json entries = json::array();
    for (const auto& e : aperture.entries) {
      entries.push_back({{"s", e.view.s}, {"t", e.view.t}, {"weight", e.weight}});
    }
    return {{"reference", {virtual_ref.s, virtual_ref.t}},
            {"radius", radius},
            {"profile", profile_name(profile)},
            {"entries", std::move(entries)}};
  }

  json state() {
    return {{"id", id},
            {"dataset", dataset_path},
            {"grid_rows", dataset->grid_rows()},
            {"grid_cols", dataset->grid_cols()},
            {"width", dataset->width()},
            {"height", dataset->height()},
            {"has_disparity", dataset->has_disparity()},
            {"plane", plane_summary()},
            {"aperture", aperture_summary()},
            {"virtual_ref", {virtual_ref.s, virtual_ref.t}}};
  }

  std::string render_key(Quality quality) const {
    Fnv1a h;
    h.add(plane->point().x());
    h.add(plane->point().y());
    h.add(plane->point().z());
    h.add(plane->normal().x());
    h.add(plane->normal().y());
    h.add(plane->normal().z());
    h.add(virtual_ref.s);
    h.add(virtual_ref.t);
    for (const auto& e : aperture.entries) {
      h.add(e.view.s);
      h.add(e.view.t);
      h.add(e.weight);
    }
    h.add(static_cast<int>(quality));
    return h.hex();
  }

  const std::string id;
  const std::string dataset_path;
  const std::shared_ptr<const LightFieldDataset> dataset;

  std::mutex mutex;
  Clock::time_point last_access = Clock::now();
  std::optional<RefocusPlane> plane;
  AngularPosition virtual_ref;
  double radius = 1.0;
  ApertureProfile profile = ApertureProfile::Uniform;
  Aperture aperture;
  std::map<std::string, std::string> render_cache;  // key -> render id
  std::map<ViewIndex, NormalEstimate> dense_normals;
  std::map<ViewIndex, std::pair<Vec3, Vec3>> bounds;
  std::map<std::size_t, std::string> cloud_payloads;  // stride -> payload
};

SessionManager::SessionManager(ServiceOptions options) : options_(options) {}
SessionManager::~SessionManager() = default;

std::shared_ptr<const LightFieldDataset> SessionManager::dataset_for(const std::string& path) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = datasets_.find(path); it != datasets_.end()) {
      if (auto ds = it->second.lock()) return ds;
    }
  }
  auto ds = std::make_shared<const LightFieldDataset>(load_dataset(path));
  std::lock_guard lock(mutex_);
  datasets_[path] = ds;
  return ds;
}

json SessionManager::create_session(const std::string& dataset_path) {
  expire_idle();
  auto ds = dataset_for(dataset_path);
  std::string id;
  {
    std::lock_guard lock(mutex_);
    Fnv1a h;
    h.add(dataset_path.data(), dataset_path.size());
    const std::uint64_t serial = next_id_++;
    h.add(&serial, sizeof serial);
    id = "s" + std::to_string(serial) + "-" + h.hex().substr(0, 8);
  }
  auto session = std::make_shared<Session>(id, dataset_path, std::move(ds));
  json state = session->state();
  std::lock_guard lock(mutex_);
  sessions_[id] = std::move(session);
  return state;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "no session '" + id + "'");
  return it->second;
}

json SessionManager::session_state(const std::string& id) {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  session->last_access = Clock::now();
  return session->state();
}

std::string SessionManager::pointcloud_payload(const std::string& id, std::size_t max_points) {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  session->last_access = Clock::now();
  const LightFieldDataset& ds = *session->dataset;
  const ViewIndex views[] = {session->reference_view()};
  if (!ds.disparity(views[0])) throw Error(ErrorCode::NoDisparity, "dataset has no disparity maps");
  if (max_points == 0) throw Error(ErrorCode::InvalidArgument, "max_points must be positive");
  const auto stride = static_cast<std::size_t>(stride_for_budget(ds, views, max_points));
  auto& cached = session->cloud_payloads[stride];
  if (cached.empty()) {
    PointCloud cloud = build_point_cloud(ds, views, static_cast<int>(stride));
    if (cloud.size() > static_cast<std::size_t>(options_.normal_neighbours)) {
      cloud = estimate_normals(std::move(cloud), options_.normal_neighbours).cloud;
    }
    cached = encode_pointcloud(cloud);
  }
  return cached;
}

Image SessionManager::view_image(const std::string& id, ViewIndex view) {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  session->last_access = Clock::now();
  if (!session->dataset->contains(view)) throw Error(ErrorCode::NotFound, "no such view");
  return session->dataset->view(view);
}

json SessionManager::set_plane(const std::string& id, const json& gesture) {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  session->last_access = Clock::now();
  const LightFieldDataset& ds = *session->dataset;
  try {
    const std::string mode = gesture.at("mode").get<std::string>();
    const CameraCalibration ref = session->reference_calibration();
    if (mode == "click") {
      const Vec2 uv(gesture.at("u").get<double>(), gesture.at("v").get<double>());
      if (!ds.disparity(session->reference_view())) {
        throw Error(ErrorCode::NoDisparity, "single-click planes need disparity maps");
      }
      const auto& normals = session->click_normals(options_.normal_neighbours);
      session->plane = plane_from_click(ds, session->reference_view(), uv, *normals.normal_map);
    } else if (mode == "three_points") {
      const json& pts = gesture.at("points");
      if (!pts.is_array() || pts.size() != 3) {
        throw Error(ErrorCode::InvalidArgument, "three_points needs exactly three points");
      }
      session->plane = plane_from_three_points(vec3_from(pts[0]), vec3_from(pts[1]), vec3_from(pts[2]), ref.center());
    } else if (mode == "manual") {
      ManualPlaneState state;
      state.z = gesture.at("z").get<double>();
      state.rot_x = gesture.value("rot_x", 0.0);
      state.rot_y = gesture.value("rot_y", 0.0);
      state.rot_z = gesture.value("rot_z", 0.0);
      session->plane = plane_from_manual(state, ref);
    } else if (mode == "adjust") {
      if (!session->plane) throw Error(ErrorCode::NoPlane, "no plane to adjust");
      const PlaneAdjustment delta{gesture.value("dz", 0.0), gesture.value("drot_x", 0.0),
                                  gesture.value("drot_y", 0.0)};
      session->plane = adjust_plane(*session->plane, delta, ref);
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown gesture mode '" + mode + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed gesture: ") + e.what());
  }
  return session->plane_summary();
}

json SessionManager::set_view(const std::string& id, const json& body) {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  session->last_access = Clock::now();
  try {
    const AngularPosition ref{body.at("s_r").get<double>(), body.at("t_r").get<double>()};
    const double radius = body.value("radius", session->radius);
    const ApertureProfile profile = parse_profile(body.value("profile", profile_name(session->profile)));
    Aperture aperture = make_aperture(*session->dataset, ref, radius, profile);
    session->virtual_ref = ref;
    session->radius = radius;
    session->profile = profile;
    session->aperture = std::move(aperture);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed view request: ") + e.what());
  }
  return session->aperture_summary();
}

json SessionManager::render(const std::string& id, Quality quality) {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  session->last_access = Clock::now();
  if (!session->plane) throw Error(ErrorCode::NoPlane, "set a refocus plane before rendering");

  const std::string key = session->render_key(quality);
  if (auto it = session->render_cache.find(key); it != session->render_cache.end()) {
    auto result = fetch_render(it->second);
    json out = result->stats;
    out["cached"] = true;
    return out;
  }

  const LightFieldDataset& ds = *session->dataset;
  CameraCalibration ref = session->reference_calibration();
  Aperture aperture = session->aperture;
  int w = ds.width();
  int h = ds.height();
  if (quality == Quality::Preview) {
    aperture = cap_aperture(aperture, options_.preview_max_views);
    ref = ref.rescaled(0.5);
    w = std::max(1, w / 2);
    h = std::max(1, h / 2);
  }
  const RefocusImage image = refocus_generalized(ds, aperture, *session->plane, ref, w, h);

  double min_cov = std::numeric_limits<double>::infinity();
  double sum_cov = 0.0;
  for (float c : image.coverage.data()) {
    min_cov = std::min<double>(min_cov, c);
    sum_cov += c;
  }
  auto result = std::make_shared<RenderResult>();
  result->render_id = session->id + "-" + key;
  result->png = encode_png(to_8bit(image.image));
  result->stats = {{"render_id", result->render_id},
                   {"quality", quality == Quality::Preview ? "preview" : "full"},
                   {"width", w},
                   {"height", h},
                   {"views", aperture.entries.size()},
                   {"covered_fraction", image.covered_fraction()},
                   {"min_coverage", min_cov},
                   {"mean_coverage", sum_cov / static_cast<double>(image.coverage.pixel_count())}};
  {
    std::lock_guard lock_renders(mutex_);
    renders_[result->render_id] = result;
  }
  session->render_cache[key] = result->render_id;
  json out = result->stats;
  out["cached"] = false;
  return out;
}

std::shared_ptr<const RenderResult> SessionManager::fetch_render(const std::string& render_id) const {
  std::lock_guard lock(mutex_);
  const auto it = renders_.find(render_id);
  if (it == renders_.end()) throw Error(ErrorCode::NotFound, "no render '" + render_id + "'");
  return it->second;
}

std::size_t SessionManager::expire_idle(Clock::time_point now) {
  std::lock_guard lock(mutex_);
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock session_lock(it->second->mutex, std::try_to_lock);
    if (session_lock.owns_lock() && now - it->second->last_access > options_.idle_timeout) {
      const std::string prefix = it->first + "-";
      std::erase_if(renders_, [&](const auto& kv) { return kv.first.starts_with(prefix); });
      session_lock.unlock();
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t SessionManager::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

std::string encode_pointcloud(const PointCloud& cloud) {
  const auto count = static_cast<std::uint32_t>(cloud.size());
  const std::uint32_t header[3] = {1u, count, cloud.has_normals() ? 1u : 0u};
  std::string out("TSPC");
  out.append(reinterpret_cast<const char*>(header), sizeof header);
  const auto put_vectors = [&](const std::vector<Vec3>& vs) {
    for (const auto& v : vs) {
      const float f[3] = {static_cast<float>(v.x()), static_cast<float>(v.y()), static_cast<float>(v.z())};
      out.append(reinterpret_cast<const char*>(f), sizeof f);
    }
  };
  put_vectors(cloud.points);
  for (const auto& c : cloud.colors) out.append(reinterpret_cast<const char*>(c.data()), 3);
  if (cloud.has_normals()) put_vectors(cloud.normals);
  return out;
}

PointCloud decode_pointcloud(const std::string& payload) {
  if (payload.size() < 16 || payload.compare(0, 4, "TSPC") != 0) {
    throw Error(ErrorCode::InvalidArgument, "not a point cloud payload");
  }
  std::uint32_t header[3];
  std::memcpy(header, payload.data() + 4, sizeof header);
  const std::size_t n = header[1];
  const bool normals = (header[2] & 1u) != 0;
  const std::size_t expected = 16 + n * 12 + n * 3 + (normals ? n * 12 : 0);
  if (header[0] != 1u || payload.size() != expected) {
    throw Error(ErrorCode::InvalidArgument, "point cloud payload has the wrong size");
  }
  PointCloud cloud;
  const char* cursor = payload.data() + 16;
  const auto get_vectors = [&](std::vector<Vec3>& vs) {
    vs.resize(n);
    for (auto& v : vs) {
      float f[3];
      std::memcpy(f, cursor, sizeof f);
      cursor += sizeof f;
      v = Vec3(f[0], f[1], f[2]);
    }
  };
  get_vectors(cloud.points);
  cloud.colors.resize(n);
  for (auto& c : cloud.colors) {
    std::memcpy(c.data(), cursor, 3);
    cursor += 3;
  }
  if (normals) get_vectors(cloud.normals);
  return cloud;
}

}  // namespace tiltshift::service
