#include <coopsar/error.hpp>
#include <coopsar/worldsim.hpp>

#include <json.hpp>

#include <istream>
#include <ostream>

namespace coopsar {

using nlohmann::json;

namespace {

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::ConfigInvalid, path + "." + key + ": missing");
  return j.at(key);
}

Vec3d to_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ConfigInvalid, path + ": expected [x, y, z]");
  Vec3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw Error(ErrorCode::ConfigInvalid, path + ": not a number");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

json from_vec3(const Vec3d& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename T>
T number(const json& j, const std::string& path) {
  if (!j.is_number()) throw Error(ErrorCode::ConfigInvalid, path + ": not a number");
  return j.get<T>();
}

}  // namespace

World read_world(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("world: ") + e.what());
  }
  World w;
  if (j.contains("seed")) w.seed = number<std::uint64_t>(j["seed"], "world.seed");
  const json& bounds = require(j, "bounds", "world");
  w.bounds = {to_vec3(require(bounds, "min", "world.bounds"), "world.bounds.min"),
              to_vec3(require(bounds, "max", "world.bounds.max"), "world.bounds.max")};

  if (j.contains("landmarks")) {
    std::size_t i = 0;
    for (const json& l : j["landmarks"]) {
      const std::string path = "world.landmarks[" + std::to_string(i++) + "]";
      Landmark lm;
      lm.id = number<int>(require(l, "id", path), path + ".id");
      lm.position = to_vec3(require(l, "position", path), path + ".position");
      lm.descriptor = l.contains("descriptor") ? number<int>(l["descriptor"], path + ".descriptor") : lm.id;
      w.landmarks.push_back(lm);
    }
  }
  if (j.contains("obstacles")) {
    std::size_t i = 0;
    for (const json& o : j["obstacles"]) {
      const std::string path = "world.obstacles[" + std::to_string(i++) + "]";
      w.obstacles.push_back({to_vec3(require(o, "min", path), path + ".min"),
                             to_vec3(require(o, "max", path), path + ".max")});
    }
  }
  if (j.contains("victims")) {
    std::size_t i = 0;
    for (const json& v : j["victims"]) {
      const std::string path = "world.victims[" + std::to_string(i++) + "]";
      Victim vic;
      vic.id = number<int>(require(v, "id", path), path + ".id");
      vic.pose.position = to_vec3(require(v, "position", path), path + ".position");
      if (v.contains("orientation")) {
        const json& q = v["orientation"];
        if (!q.is_array() || q.size() != 4) throw Error(ErrorCode::ConfigInvalid, path + ".orientation: need 4 values");
        vic.pose.orientation = Quatd(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
      } else if (v.contains("yaw")) {
        vic.pose.orientation = Quatd::about_z(number<double>(v["yaw"], path + ".yaw"));
      }
      w.victims.push_back(vic);
    }
  }
  if (j.contains("terrain")) {
    const json& t = j["terrain"];
    if (t.contains("origin")) {
      const json& o = t["origin"];
      if (!o.is_array() || o.size() != 2) throw Error(ErrorCode::ConfigInvalid, "world.terrain.origin: need [x, y]");
      w.terrain.origin_x = o[0].get<double>();
      w.terrain.origin_y = o[1].get<double>();
    }
    if (t.contains("resolution")) w.terrain.resolution = number<double>(t["resolution"], "world.terrain.resolution");
    if (t.contains("rows")) w.terrain.rows = number<int>(t["rows"], "world.terrain.rows");
    if (t.contains("cols")) w.terrain.cols = number<int>(t["cols"], "world.terrain.cols");
    if (t.contains("heights")) w.terrain.heights = t["heights"].get<std::vector<double>>();
  }
  w.validate();
  return w;
}

void write_world(std::ostream& out, const World& world) {
  json j;
  j["seed"] = world.seed;
  j["bounds"] = {{"min", from_vec3(world.bounds.min)}, {"max", from_vec3(world.bounds.max)}};
  j["landmarks"] = json::array();
  for (const Landmark& l : world.landmarks) {
    j["landmarks"].push_back({{"id", l.id}, {"position", from_vec3(l.position)}, {"descriptor", l.descriptor}});
  }
  j["obstacles"] = json::array();
  for (const Box& b : world.obstacles) j["obstacles"].push_back({{"min", from_vec3(b.min)}, {"max", from_vec3(b.max)}});
  j["victims"] = json::array();
  for (const Victim& v : world.victims) {
    const Quatd& q = v.pose.orientation;
    j["victims"].push_back({{"id", v.id},
                            {"position", from_vec3(v.pose.position)},
                            {"orientation", json::array({q.w(), q.x(), q.y(), q.z()})}});
  }
  j["terrain"] = {{"origin", json::array({world.terrain.origin_x, world.terrain.origin_y})},
                  {"resolution", world.terrain.resolution},
                  {"rows", world.terrain.rows},
                  {"cols", world.terrain.cols},
                  {"heights", world.terrain.heights}};
  out << j.dump(2) << '\n';
}

}  // namespace coopsar
