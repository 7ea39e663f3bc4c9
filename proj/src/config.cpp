#include "layerstack/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "layerstack/errors.hpp"

namespace layerstack {

namespace {

using json = nlohmann::json;

// Object view that records which keys were read so leftovers can be rejected.
class Fields {
 public:
  Fields(const json& value, std::string path) : value_(value), path_(std::move(path)) {
    if (!value_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = value_.find(key);
    return it == value_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (v == nullptr) throw ConfigError(at(key), "missing required key");
    return *v;
  }

  void finish() const {
    for (const auto& [key, unused] : value_.items()) {
      if (seen_.count(key) == 0) throw ConfigError(at(key), "unknown key");
    }
  }

 private:
  const json& value_;
  std::string path_;
  std::set<std::string> seen_;
};

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
  return x;
}

double positive(const json& v, const std::string& path) {
  const double x = number(v, path);
  if (!(x > 0.0)) throw ConfigError(path, "must be > 0");
  return x;
}

int integer(const json& v, const std::string& path, int min_value) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  const auto x = v.get<long long>();
  if (x < min_value || x > 1'000'000'000) throw ConfigError(path, "out of range");
  return static_cast<int>(x);
}

bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

std::string string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

const json& array(const json& v, const std::string& path, std::size_t size) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  if (size > 0 && v.size() != size) throw ConfigError(path, "expected " + std::to_string(size) + " entries");
  return v;
}

std::array<double, 2> interval(const json& v, const std::string& path) {
  array(v, path, 2);
  const std::array<double, 2> r{number(v[0], path + "/0"), number(v[1], path + "/1")};
  if (!(r[0] < r[1])) throw ConfigError(path, "interval must satisfy lower < upper");
  return r;
}

Vec3 vec3(const json& v, const std::string& path) {
  array(v, path, 3);
  return {number(v[0], path + "/0"), number(v[1], path + "/1"), number(v[2], path + "/2")};
}

FrictionBound friction(const json& v, const std::string& path) {
  FrictionBound bound;
  if (v.is_number()) {
    bound.constant = number(v, path);
    if (bound.constant < 0.0) throw ConfigError(path, "friction bound must be >= 0");
    return bound;
  }
  Fields f(v, path);
  const json& table = f.require("table");
  array(table, f.at("table"), 0);
  if (table.empty()) throw ConfigError(f.at("table"), "table must not be empty");
  for (std::size_t k = 0; k < table.size(); ++k) {
    const std::string row_path = f.at("table") + "/" + std::to_string(k);
    array(table[k], row_path, 3);
    const std::array<double, 3> row{number(table[k][0], row_path + "/0"), number(table[k][1], row_path + "/1"),
                                    number(table[k][2], row_path + "/2")};
    if (row[2] < 0.0) throw ConfigError(row_path + "/2", "friction bound must be >= 0");
    bound.table.push_back(row);
  }
  f.finish();
  return bound;
}

void parse_solver(const json& v, const std::string& path, LdConfig& s) {
  Fields f(v, path);
  if (const json* x = f.find("theta")) s.theta = positive(*x, f.at("theta"));
  if (const json* x = f.find("tol")) s.tol = positive(*x, f.at("tol"));
  if (const json* x = f.find("max_iter")) s.max_iter = integer(*x, f.at("max_iter"), 1);
  if (const json* x = f.find("tol_sub")) s.tol_sub = positive(*x, f.at("tol_sub"));
  if (const json* x = f.find("tol_lin")) s.tol_lin = positive(*x, f.at("tol_lin"));
  if (const json* x = f.find("max_sweeps")) s.max_sweeps = integer(*x, f.at("max_sweeps"), 1);
  if (const json* x = f.find("divergence_window")) s.divergence_window = integer(*x, f.at("divergence_window"), 2);
  if (const json* x = f.find("certify_every_iteration")) {
    s.certify_every_iteration = boolean(*x, f.at("certify_every_iteration"));
  }
  if (const json* x = f.find("threads")) s.threads = integer(*x, f.at("threads"), 0);
  f.finish();
}

json to_json(const std::array<double, 2>& a) { return json::array({a[0], a[1]}); }
json to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace

ProblemConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("malformed JSON: ") + e.what());
  }
  ProblemConfig c;
  Fields root(doc, "");
  ProblemDefinition& p = c.problem;

  if (const json* x = root.find("description")) c.description = string(*x, "/description");

  {
    Fields domain(root.require("domain"), "/domain");
    p.geometry.x_extent = interval(domain.require("x"), "/domain/x");
    p.geometry.y_extent = interval(domain.require("y"), "/domain/y");
    domain.finish();
  }
  p.geometry.h = positive(root.require("h"), "/h");

  const json& layers = array(root.require("layers"), "/layers", 0);
  if (layers.empty()) throw ConfigError("/layers", "at least one layer is required");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string path = "/layers/" + std::to_string(l);
    Fields f(layers[l], path);
    Material m;
    m.youngs_modulus = positive(f.require("E"), f.at("E"));
    m.poisson_ratio = number(f.require("nu"), f.at("nu"));
    if (!(m.poisson_ratio >= 0.0 && m.poisson_ratio < 0.5)) throw ConfigError(f.at("nu"), "must lie in [0, 0.5)");
    f.finish();
    p.materials.push_back(m);
  }

  const json& planes = array(root.require("z_planes"), "/z_planes", layers.size() + 1);
  for (std::size_t k = 0; k < planes.size(); ++k) {
    const std::string path = "/z_planes/" + std::to_string(k);
    p.geometry.layer_z.push_back(number(planes[k], path));
    if (k > 0 && !(p.geometry.layer_z[k] < p.geometry.layer_z[k - 1])) {
      throw ConfigError(path, "z-planes must be strictly decreasing (top to bottom)");
    }
  }

  const json& interfaces = array(root.require("interfaces"), "/interfaces", 0);
  if (interfaces.size() != layers.size() - 1) {
    throw ConfigError("/interfaces", "expected " + std::to_string(layers.size() - 1) +
                                         " entries (one per interface), got " + std::to_string(interfaces.size()));
  }
  for (std::size_t i = 0; i < interfaces.size(); ++i) {
    const std::string path = "/interfaces/" + std::to_string(i);
    Fields f(interfaces[i], path);
    p.friction.push_back(friction(f.require("g"), f.at("g")));
    f.finish();
  }

  if (const json* x = root.find("body_force")) p.body_force = vec3(*x, "/body_force");
  if (const json* x = root.find("tractions")) {
    array(*x, "/tractions", 0);
    for (std::size_t k = 0; k < x->size(); ++k) {
      const std::string path = "/tractions/" + std::to_string(k);
      Fields f((*x)[k], path);
      TractionPatch patch;
      patch.x = interval(f.require("x"), f.at("x"));
      patch.y = interval(f.require("y"), f.at("y"));
      patch.traction = vec3(f.require("value"), f.at("value"));
      f.finish();
      p.tractions.push_back(patch);
    }
  }
  if (const json* x = root.find("solver")) parse_solver(*x, "/solver", c.solver);
  if (const json* x = root.find("output")) {
    Fields f(*x, "/output");
    if (const json* d = f.find("directory")) c.output_directory = string(*d, f.at("directory"));
    f.finish();
  }
  if (const json* x = root.find("mode")) {
    Fields f(*x, "/mode");
    if (const json* b = f.find("serial")) c.serial = boolean(*b, f.at("serial"));
    if (const json* b = f.find("long_running")) c.long_running = boolean(*b, f.at("long_running"));
    f.finish();
  }
  root.finish();
  return c;
}

ProblemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const ProblemConfig& c) {
  const ProblemDefinition& p = c.problem;
  json doc;
  doc["description"] = c.description;
  doc["domain"] = {{"x", to_json(p.geometry.x_extent)}, {"y", to_json(p.geometry.y_extent)}};
  doc["z_planes"] = p.geometry.layer_z;
  doc["h"] = p.geometry.h;
  doc["layers"] = json::array();
  for (const auto& m : p.materials) doc["layers"].push_back({{"E", m.youngs_modulus}, {"nu", m.poisson_ratio}});
  doc["interfaces"] = json::array();
  for (const auto& b : p.friction) {
    json g = b.constant;
    if (b.tabulated()) {
      g = {{"table", json::array()}};
      for (const auto& row : b.table) g["table"].push_back({row[0], row[1], row[2]});
    }
    doc["interfaces"].push_back({{"g", g}});
  }
  doc["body_force"] = to_json(p.body_force);
  doc["tractions"] = json::array();
  for (const auto& t : p.tractions) {
    doc["tractions"].push_back({{"x", to_json(t.x)}, {"y", to_json(t.y)}, {"value", to_json(t.traction)}});
  }
  const LdConfig& s = c.solver;
  doc["solver"] = {{"theta", s.theta},
                   {"tol", s.tol},
                   {"max_iter", s.max_iter},
                   {"tol_sub", s.tol_sub},
                   {"tol_lin", s.tol_lin},
                   {"max_sweeps", s.max_sweeps},
                   {"divergence_window", s.divergence_window},
                   {"certify_every_iteration", s.certify_every_iteration},
                   {"threads", s.threads}};
  doc["output"] = {{"directory", c.output_directory}};
  doc["mode"] = {{"serial", c.serial}, {"long_running", c.long_running}};
  return doc.dump(2) + "\n";
}

}  // namespace layerstack
