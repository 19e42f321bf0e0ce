// SPDX-License-Identifier: Apache-2.0
#include "kinesplat/scene_io.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace kinesplat {

namespace {

using nlohmann::json;

json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_of(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const Eigen::Matrix3d& m) {
  json out = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
  }
  return out;
}

Eigen::Matrix3d mat3_of(const json& j) {
  if (!j.is_array() || j.size() != 9) throw std::runtime_error("expected row-major 3x3 matrix");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = j[static_cast<std::size_t>(r * 3 + c)].get<double>();
  }
  return m;
}

json gaussian_to_json(const Gaussian3D& g) {
  json sh = json::array();
  for (const auto& c : g.sh) {
    sh.push_back(c.x());
    sh.push_back(c.y());
    sh.push_back(c.z());
  }
  json logits = json::array();
  for (Eigen::Index i = 0; i < g.logits.size(); ++i) logits.push_back(g.logits[i]);
  return json{{"mu", to_json(g.mu)},
              {"quat", json::array({g.rotation.w(), g.rotation.x(), g.rotation.y(),
                                    g.rotation.z()})},
              {"log_scale", to_json(g.log_scale)},
              {"opacity_logit", g.opacity_logit},
              {"sh", sh},
              {"logits", logits}};
}

Gaussian3D gaussian_of(const json& j) {
  Gaussian3D g;
  g.mu = vec3_of(j.at("mu"));
  const json& q = j.at("quat");
  if (!q.is_array() || q.size() != 4) throw std::runtime_error("quat must be [w,x,y,z]");
  g.rotation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                  q[3].get<double>());
  g.log_scale = vec3_of(j.at("log_scale"));
  g.opacity_logit = j.at("opacity_logit").get<double>();
  const json& sh = j.at("sh");
  if (sh.size() % 3 != 0) throw std::runtime_error("sh must be a flat list of RGB triplets");
  g.sh.resize(sh.size() / 3);
  for (std::size_t k = 0; k < g.sh.size(); ++k) {
    g.sh[k] = Eigen::Vector3d(sh[3 * k].get<double>(), sh[3 * k + 1].get<double>(),
                              sh[3 * k + 2].get<double>());
  }
  const json& lg = j.at("logits");
  g.logits.resize(static_cast<Eigen::Index>(lg.size()));
  for (std::size_t i = 0; i < lg.size(); ++i) {
    g.logits[static_cast<Eigen::Index>(i)] = lg[i].get<double>();
  }
  return g;
}

json track_to_json(const UnicycleTrack& t) {
  json states = json::array();
  for (const auto& s : t.states) states.push_back(json::array({s.x, s.y, s.theta}));
  json vel = json::array();
  for (const auto& v : t.velocities) vel.push_back(json::array({v.x(), v.y()}));
  return json{{"timestamps", t.timestamps},
              {"states", states},
              {"heights", t.heights},
              {"velocities", vel}};
}

UnicycleTrack track_of(const json& j) {
  UnicycleTrack t;
  t.timestamps = j.at("timestamps").get<std::vector<double>>();
  for (const json& s : j.at("states")) {
    if (!s.is_array() || s.size() != 3) throw std::runtime_error("state must be [x,y,theta]");
    t.states.push_back({s[0].get<double>(), s[1].get<double>(), s[2].get<double>()});
  }
  t.heights = j.at("heights").get<std::vector<double>>();
  for (const json& v : j.at("velocities")) {
    if (!v.is_array() || v.size() != 2) throw std::runtime_error("velocity must be [v,omega]");
    t.velocities.emplace_back(v[0].get<double>(), v[1].get<double>());
  }
  validate_track(t);
  return t;
}

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  f >> j;
  return j;
}

void save_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("write failed for " + path);
}

}  // namespace

SceneGraph load_scene(const std::string& path) {
  const json j = load_json(path);
  SceneGraph scene;
  scene.class_count = j.at("class_count").get<int>();
  scene.background_color = vec3_of(j.at("background_color"));
  for (const json& g : j.at("static_gaussians")) scene.static_gaussians.push_back(gaussian_of(g));
  for (const json& o : j.at("objects")) {
    DynamicObject obj;
    obj.id = o.at("id").get<int>();
    for (const json& g : o.at("canonical")) obj.canonical.push_back(gaussian_of(g));
    obj.track = track_of(o.at("track"));
    scene.objects.push_back(std::move(obj));
  }
  validate_scene(scene);
  return scene;
}

void save_scene(const std::string& path, const SceneGraph& scene) {
  json statics = json::array();
  for (const auto& g : scene.static_gaussians) statics.push_back(gaussian_to_json(g));
  json objects = json::array();
  for (const auto& o : scene.objects) {
    json canon = json::array();
    for (const auto& g : o.canonical) canon.push_back(gaussian_to_json(g));
    objects.push_back(
        json{{"id", o.id}, {"canonical", canon}, {"track", track_to_json(o.track)}});
  }
  save_json(path, json{{"class_count", scene.class_count},
                       {"background_color", to_json(scene.background_color)},
                       {"static_gaussians", statics},
                       {"objects", objects}});
}

UnicycleTrack load_track(const std::string& path) { return track_of(load_json(path)); }

void save_track(const std::string& path, const UnicycleTrack& track) {
  save_json(path, track_to_json(track));
}

std::vector<FrameCamera> load_cameras(const std::string& path) {
  const json j = load_json(path);
  std::vector<FrameCamera> cams;
  for (const json& c : j.at("cameras")) {
    FrameCamera cam;
    cam.K = mat3_of(c.at("K"));
    cam.R = mat3_of(c.at("R"));
    cam.t = vec3_of(c.at("t"));
    cam.timestamp = c.at("timestamp").get<double>();
    cam.width = c.at("width").get<int>();
    cam.height = c.at("height").get<int>();
    if (c.contains("exposure_A")) cam.exposure_A = mat3_of(c.at("exposure_A"));
    if (c.contains("exposure_b")) cam.exposure_b = vec3_of(c.at("exposure_b"));
    validate_camera(cam);
    cams.push_back(cam);
  }
  return cams;
}

void save_cameras(const std::string& path, const std::vector<FrameCamera>& cams) {
  json arr = json::array();
  for (const auto& cam : cams) {
    arr.push_back(json{{"K", to_json(cam.K)},
                       {"R", to_json(cam.R)},
                       {"t", to_json(cam.t)},
                       {"timestamp", cam.timestamp},
                       {"width", cam.width},
                       {"height", cam.height},
                       {"exposure_A", to_json(cam.exposure_A)},
                       {"exposure_b", to_json(cam.exposure_b)}});
  }
  save_json(path, json{{"cameras", arr}});
}

}  // namespace kinesplat
