#include "twinadapt/pool.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <tuple>

#include "twinadapt/error.hpp"

namespace twinadapt {

std::string_view to_string(BehaviorType type) {
  switch (type) {
    case BehaviorType::DiscreteEvent: return "discrete-event";
    case BehaviorType::DiscreteTime: return "discrete-time";
    case BehaviorType::Continuous: return "continuous";
  }
  return "?";
}

std::string_view to_string(PortDirection dir) { return dir == PortDirection::In ? "in" : "out"; }

std::string_view to_string(ConfigStatus status) {
  switch (status) {
    case ConfigStatus::Active: return "active";
    case ConfigStatus::Candidate: return "candidate";
    case ConfigStatus::Retired: return "retired";
  }
  return "?";
}

std::string_view to_string(DepthDirective directive) {
  switch (directive) {
    case DepthDirective::Any: return "any";
    case DepthDirective::Increase: return "increase";
    case DepthDirective::Decrease: return "decrease";
  }
  return "?";
}

BehaviorType behavior_type_from_string(std::string_view text) {
  if (text == "discrete-event") return BehaviorType::DiscreteEvent;
  if (text == "discrete-time") return BehaviorType::DiscreteTime;
  if (text == "continuous") return BehaviorType::Continuous;
  throw Error(ErrorKind::InvalidDescriptor, "unknown behavior_type '" + std::string(text) + "'");
}

DepthDirective depth_directive_from_string(std::string_view text) {
  if (text == "any") return DepthDirective::Any;
  if (text == "increase") return DepthDirective::Increase;
  if (text == "decrease") return DepthDirective::Decrease;
  throw Error(ErrorKind::InvalidRequest, "unknown depth directive '" + std::string(text) + "'");
}

const Port* ModelDescriptor::find_port(const std::string& name) const {
  auto it = std::find_if(ports.begin(), ports.end(), [&](const Port& p) { return p.name == name; });
  return it == ports.end() ? nullptr : &*it;
}

const Tunable* ModelDescriptor::find_tunable(const std::string& name) const {
  auto it = std::find_if(tunables.begin(), tunables.end(), [&](const Tunable& t) { return t.name == name; });
  return it == tunables.end() ? nullptr : &*it;
}

std::string ModelDescriptor::implementation_key() const {
  if (!implementation.empty()) return implementation;
  return slot + ".d" + std::to_string(depth);
}

ParameterSet ModelDescriptor::resolve(const ParameterSet& assignment) const {
  ParameterSet out;
  for (const auto& t : tunables) out[t.name] = t.nominal;
  for (const auto& [name, value] : assignment) out[name] = value;
  return out;
}

std::vector<std::string> descriptor_violations(const ModelDescriptor& d) {
  std::vector<std::string> v;
  if (d.id.empty()) v.push_back("id must be nonempty");
  if (d.slot.empty()) v.push_back("slot must be nonempty");
  if (d.depth < 1 || d.depth > 5) {
    v.push_back("depth must be in 1..5 (got " + std::to_string(d.depth) + ")");
  } else {
    static constexpr BehaviorType kExpected[] = {BehaviorType::DiscreteEvent, BehaviorType::DiscreteTime,
                                                 BehaviorType::Continuous};
    if (d.depth <= 3 && d.behavior_type != kExpected[d.depth - 1]) {
      v.push_back("behavior_type " + std::string(to_string(d.behavior_type)) + " inconsistent with depth " +
                  std::to_string(d.depth));
    }
  }
  std::set<std::string> seen;
  for (const auto& p : d.ports) {
    if (!seen.insert(p.name).second) v.push_back("duplicate port name '" + p.name + "'");
  }
  std::set<std::string> tunable_names;
  for (const auto& t : d.tunables) {
    if (!tunable_names.insert(t.name).second) v.push_back("duplicate tunable '" + t.name + "'");
    if (!(t.lower <= t.nominal && t.nominal <= t.upper)) {
      v.push_back("tunable '" + t.name + "' violates lower <= nominal <= upper");
    }
  }
  if (!(d.cost_rating >= 0.0)) v.push_back("cost_rating must be >= 0");
  if (!(d.compute_rating >= 0.0)) v.push_back("compute_rating must be >= 0");
  return v;
}

std::string ModelConfiguration::structure_id() const {
  std::string out;
  for (const auto& [slot, b] : bindings) {
    if (!out.empty()) out += '+';
    out += b.model_id;
  }
  return out;
}

int ModelConfiguration::total_depth(const ModelPool& pool) const {
  int sum = 0;
  for (const auto& [slot, b] : bindings) sum += pool.get(b.model_id).depth;
  return sum;
}

ModelPool::ModelPool(const ModelPool& other) {
  std::shared_lock lock(other.mutex_);
  models_ = other.models_;
}

ModelPool& ModelPool::operator=(const ModelPool& other) {
  if (this == &other) return *this;
  std::map<std::string, ModelDescriptor> copy;
  {
    std::shared_lock lock(other.mutex_);
    copy = other.models_;
  }
  std::unique_lock lock(mutex_);
  models_ = std::move(copy);
  return *this;
}

std::string ModelPool::register_model(ModelDescriptor descriptor) {
  auto violations = descriptor_violations(descriptor);
  if (!violations.empty()) {
    throw Error(ErrorKind::InvalidDescriptor, descriptor.id + ": " + violations.front());
  }
  std::unique_lock lock(mutex_);
  if (models_.count(descriptor.id)) throw Error(ErrorKind::DuplicateId, descriptor.id);
  std::string id = descriptor.id;
  models_.emplace(id, std::move(descriptor));
  return id;
}

const ModelDescriptor& ModelPool::get(const std::string& id) const {
  const ModelDescriptor* d = find(id);
  if (!d) throw Error(ErrorKind::UnknownModelId, id);
  return *d;
}

const ModelDescriptor* ModelPool::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = models_.find(id);
  return it == models_.end() ? nullptr : &it->second;
}

std::size_t ModelPool::size() const {
  std::shared_lock lock(mutex_);
  return models_.size();
}

std::vector<ModelDescriptor> ModelPool::all() const {
  std::shared_lock lock(mutex_);
  std::vector<ModelDescriptor> out;
  for (const auto& [_, d] : models_) out.push_back(d);
  return out;
}

namespace {

bool provides(const ModelDescriptor& d, const PhenomenonRequirement& req) {
  return d.provided_phenomena.count(req.tag) && (!req.min_depth || d.depth >= *req.min_depth);
}

}  // namespace

std::vector<ModelDescriptor> ModelPool::query_suitable(const std::string& slot,
                                                       const std::vector<PhenomenonRequirement>& phenomena) const {
  std::vector<ModelDescriptor> out;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [_, d] : models_) {
      if (d.slot != slot) continue;
      bool ok = std::all_of(phenomena.begin(), phenomena.end(), [&](const auto& r) { return provides(d, r); });
      if (ok) out.push_back(d);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const ModelDescriptor& a, const ModelDescriptor& b) { return std::tie(a.depth, a.id) < std::tie(b.depth, b.id); });
  return out;
}

SuitabilityResult ModelPool::check_suitability(const ModelConfiguration& config, const RequirementSpec& req) const {
  std::vector<const ModelDescriptor*> bound;
  for (const auto& [slot, b] : config.bindings) bound.push_back(&get(b.model_id));
  SuitabilityResult result;
  for (const auto& r : req.required_phenomena) {
    bool covered = std::any_of(bound.begin(), bound.end(), [&](const ModelDescriptor* d) { return provides(*d, r); });
    if (!covered) result.missing.insert(r.tag);
  }
  result.suitable = result.missing.empty();
  return result;
}

std::vector<Violation> ModelPool::validate_configuration(const ModelConfiguration& config) const {
  std::vector<Violation> out;
  std::map<std::string, const ModelDescriptor*> slots;
  for (const auto& [slot, b] : config.bindings) {
    const ModelDescriptor* d = find(b.model_id);
    if (!d) {
      out.push_back({"unknown model", slot + " -> " + b.model_id});
      continue;
    }
    slots[slot] = d;
    for (const auto& [name, value] : b.params) {
      const Tunable* t = d->find_tunable(name);
      if (!t) {
        out.push_back({"unknown parameter", b.model_id + "." + name});
      } else if (!(value >= t->lower && value <= t->upper)) {
        std::ostringstream os;
        os << b.model_id << "." << name << " = " << value << " outside [" << t->lower << ", " << t->upper << "]";
        out.push_back({"parameter out of bounds", os.str()});
      }
    }
  }

  std::map<std::string, std::set<std::string>> edges;
  for (const auto& c : config.couplings) {
    std::string label = c.from_slot + "." + c.from_port + " -> " + c.to_slot + "." + c.to_port;
    auto from = slots.find(c.from_slot);
    auto to = slots.find(c.to_slot);
    if (!config.bindings.count(c.from_slot) || !config.bindings.count(c.to_slot)) {
      out.push_back({"unknown slot", label});
      continue;
    }
    if (from == slots.end() || to == slots.end()) continue;  // already reported as unknown model
    const Port* src = from->second->find_port(c.from_port);
    const Port* dst = to->second->find_port(c.to_port);
    if (!src || !dst) {
      out.push_back({"unknown port", label});
      continue;
    }
    if (src->direction != PortDirection::Out || dst->direction != PortDirection::In) {
      out.push_back({"direction mismatch", label});
    }
    if (src->signal != dst->signal) {
      out.push_back({"signal mismatch", label + " (" + src->signal + " vs " + dst->signal + ")"});
    }
    edges[c.from_slot].insert(c.to_slot);
  }

  // Cycle detection over the slot graph (colors: 0 new, 1 on stack, 2 done).
  std::map<std::string, int> color;
  bool cyclic = false;
  std::function<void(const std::string&)> visit = [&](const std::string& n) {
    color[n] = 1;
    for (const auto& m : edges[n]) {
      if (color[m] == 1) cyclic = true;
      else if (color[m] == 0) visit(m);
    }
    color[n] = 2;
  };
  for (const auto& [slot, _] : config.bindings) {
    if (color[slot] == 0) visit(slot);
  }
  if (cyclic) out.push_back({"algebraic loop", config.id});
  return out;
}

std::vector<ModelConfiguration> ModelPool::enumerate_candidates(
    const RequirementSpec& req, const ModelConfiguration& current,
    const std::map<std::string, DepthDirective>& directives, std::size_t limit) const {
  if (limit < 1) throw Error(ErrorKind::InvalidRequest, "enumerate_candidates: limit must be >= 1");

  std::vector<std::string> slot_names;
  std::vector<std::vector<ModelDescriptor>> options;
  for (const auto& [slot, binding] : current.bindings) {
    const int current_depth = get(binding.model_id).depth;
    DepthDirective dir = DepthDirective::Any;
    if (auto it = directives.find(slot); it != directives.end()) dir = it->second;
    std::vector<ModelDescriptor> opts;
    for (auto& d : query_suitable(slot, {})) {
      if (d.depth > 3) continue;  // metadata only, not executable
      if (dir == DepthDirective::Increase && d.depth <= current_depth) continue;
      if (dir == DepthDirective::Decrease && d.depth >= current_depth) continue;
      opts.push_back(std::move(d));
    }
    slot_names.push_back(slot);
    options.push_back(std::move(opts));
  }

  struct Ranked {
    int distance;
    int depth;
    ModelConfiguration config;
  };
  std::vector<Ranked> ranked;
  const std::string current_structure = current.structure_id();

  std::vector<std::size_t> index(slot_names.size(), 0);
  const bool any_empty = std::any_of(options.begin(), options.end(), [](const auto& o) { return o.empty(); });
  while (!any_empty && !slot_names.empty()) {
    ModelConfiguration cand;
    cand.status = ConfigStatus::Candidate;
    cand.couplings = current.couplings;
    int distance = 0;
    int depth = 0;
    for (std::size_t s = 0; s < slot_names.size(); ++s) {
      const ModelDescriptor& d = options[s][index[s]];
      const ModelBinding& cur = current.bindings.at(slot_names[s]);
      if (d.id == cur.model_id) {
        cand.bindings[slot_names[s]] = cur;
      } else {
        cand.bindings[slot_names[s]] = ModelBinding{d.id, {}};
        ++distance;
      }
      depth += d.depth;
    }
    cand.id = cand.structure_id();
    if (cand.id != current_structure && validate_configuration(cand).empty() &&
        check_suitability(cand, req).suitable) {
      ranked.push_back({distance, depth, std::move(cand)});
    }
    // odometer increment
    std::size_t s = 0;
    for (; s < index.size(); ++s) {
      if (++index[s] < options[s].size()) break;
      index[s] = 0;
    }
    if (s == index.size()) break;
  }

  if (ranked.empty()) throw Error(ErrorKind::NoSuitableCandidate, "no configuration satisfies suitability and directives");
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return std::tie(a.distance, a.depth, a.config.id) < std::tie(b.distance, b.depth, b.config.id);
  });
  std::vector<ModelConfiguration> out;
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) out.push_back(std::move(ranked[i].config));
  return out;
}

TagSet output_signals(const ModelConfiguration& config, const ModelPool& pool) {
  TagSet out;
  for (const auto& [slot, b] : config.bindings) {
    for (const auto& p : pool.get(b.model_id).ports) {
      if (p.direction == PortDirection::Out) out.insert(p.signal);
    }
  }
  return out;
}

// ---- JSON ---------------------------------------------------------------

namespace {

TagSet tags_from(const nlohmann::json& j, const char* key) {
  TagSet out;
  if (auto it = j.find(key); it != j.end()) {
    for (const auto& t : *it) out.insert(t.get<std::string>());
  }
  return out;
}

}  // namespace

nlohmann::json descriptor_to_json(const ModelDescriptor& d) {
  nlohmann::json j;
  j["id"] = d.id;
  j["slot"] = d.slot;
  j["depth"] = d.depth;
  j["behavior_type"] = std::string(to_string(d.behavior_type));
  j["implementation"] = d.implementation_key();
  j["range"] = d.range;
  j["width"] = d.width;
  j["provided_phenomena"] = d.provided_phenomena;
  j["ports"] = nlohmann::json::array();
  for (const auto& p : d.ports) {
    j["ports"].push_back({{"name", p.name},
                          {"direction", std::string(to_string(p.direction))},
                          {"signal", p.signal},
                          {"kind", std::string(to_string(p.kind))}});
  }
  j["tunables"] = nlohmann::json::array();
  for (const auto& t : d.tunables) {
    j["tunables"].push_back({{"name", t.name},
                             {"unit", t.unit},
                             {"lower", t.lower},
                             {"upper", t.upper},
                             {"nominal", t.nominal},
                             {"fit", t.fit}});
  }
  j["cost_rating"] = d.cost_rating;
  j["compute_rating"] = d.compute_rating;
  j["endpoint"] = d.endpoint ? nlohmann::json(*d.endpoint) : nlohmann::json(nullptr);
  return j;
}

ModelDescriptor descriptor_from_json(const nlohmann::json& j) {
  try {
    ModelDescriptor d;
    d.id = j.at("id").get<std::string>();
    d.slot = j.at("slot").get<std::string>();
    d.depth = j.at("depth").get<int>();
    // depth 4/5 descriptors may omit behavior_type; default by depth for 1..3
    if (auto bt = j.find("behavior_type"); bt != j.end()) {
      d.behavior_type = behavior_type_from_string(bt->get<std::string>());
    } else {
      d.behavior_type = d.depth == 1 ? BehaviorType::DiscreteEvent
                        : d.depth == 2 ? BehaviorType::DiscreteTime
                                       : BehaviorType::Continuous;
    }
    d.implementation = j.value("implementation", std::string{});
    d.range = tags_from(j, "range");
    d.width = tags_from(j, "width");
    d.provided_phenomena = tags_from(j, "provided_phenomena");
    for (const auto& p : j.value("ports", nlohmann::json::array())) {
      Port port;
      port.name = p.at("name").get<std::string>();
      const auto dir = p.at("direction").get<std::string>();
      if (dir != "in" && dir != "out") throw Error(ErrorKind::InvalidDescriptor, "port direction must be in|out");
      port.direction = dir == "in" ? PortDirection::In : PortDirection::Out;
      port.signal = p.at("signal").get<std::string>();
      port.kind = signal_kind_from_string(p.value("kind", std::string("event")));
      d.ports.push_back(std::move(port));
    }
    for (const auto& t : j.value("tunables", nlohmann::json::array())) {
      Tunable tun;
      tun.name = t.at("name").get<std::string>();
      tun.unit = t.value("unit", std::string{});
      tun.lower = t.at("lower").get<double>();
      tun.upper = t.at("upper").get<double>();
      tun.nominal = t.at("nominal").get<double>();
      tun.fit = t.value("fit", true);
      d.tunables.push_back(std::move(tun));
    }
    d.cost_rating = j.value("cost_rating", 0.0);
    d.compute_rating = j.value("compute_rating", 0.0);
    if (auto e = j.find("endpoint"); e != j.end() && e->is_string()) d.endpoint = e->get<std::string>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidDescriptor, e.what());
  }
}

nlohmann::json configuration_to_json(const ModelConfiguration& c) {
  nlohmann::json j;
  j["id"] = c.id;
  j["status"] = std::string(to_string(c.status));
  j["bindings"] = nlohmann::json::object();
  for (const auto& [slot, b] : c.bindings) j["bindings"][slot] = {{"model", b.model_id}, {"params", b.params}};
  j["couplings"] = nlohmann::json::array();
  for (const auto& cp : c.couplings) {
    j["couplings"].push_back({{"from", cp.from_slot + "." + cp.from_port}, {"to", cp.to_slot + "." + cp.to_port}});
  }
  return j;
}

namespace {

std::pair<std::string, std::string> split_endpoint(const std::string& s) {
  auto dot = s.find('.');
  if (dot == std::string::npos) throw Error(ErrorKind::InvalidConfiguration, "coupling endpoint '" + s + "' must be slot.port");
  return {s.substr(0, dot), s.substr(dot + 1)};
}

}  // namespace

ModelConfiguration configuration_from_json(const nlohmann::json& j) {
  try {
    ModelConfiguration c;
    c.id = j.value("id", std::string{});
    const auto status = j.value("status", std::string("candidate"));
    c.status = status == "active" ? ConfigStatus::Active : status == "retired" ? ConfigStatus::Retired : ConfigStatus::Candidate;
    for (const auto& [slot, b] : j.at("bindings").items()) {
      ModelBinding binding;
      binding.model_id = b.at("model").get<std::string>();
      if (auto p = b.find("params"); p != b.end()) binding.params = p->get<ParameterSet>();
      c.bindings[slot] = std::move(binding);
    }
    for (const auto& cp : j.value("couplings", nlohmann::json::array())) {
      auto [fs, fp] = split_endpoint(cp.at("from").get<std::string>());
      auto [ts, tp] = split_endpoint(cp.at("to").get<std::string>());
      c.couplings.push_back({fs, fp, ts, tp});
    }
    if (c.id.empty()) c.id = c.structure_id();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfiguration, e.what());
  }
}

nlohmann::json requirement_to_json(const RequirementSpec& r) {
  nlohmann::json j;
  j["app_id"] = r.app_id;
  j["required_phenomena"] = nlohmann::json::array();
  for (const auto& p : r.required_phenomena) {
    nlohmann::json e{{"tag", p.tag}};
    if (p.min_depth) e["min_depth"] = *p.min_depth;
    j["required_phenomena"].push_back(std::move(e));
  }
  j["monitored_signals"] = r.monitored_signals;
  j["window_length"] = r.window_length;
  return j;
}

RequirementSpec requirement_from_json(const nlohmann::json& j) {
  try {
    RequirementSpec r;
    r.app_id = j.at("app_id").get<std::string>();
    for (const auto& p : j.at("required_phenomena")) {
      PhenomenonRequirement req;
      if (p.is_string()) {
        req.tag = p.get<std::string>();
      } else {
        req.tag = p.at("tag").get<std::string>();
        if (auto m = p.find("min_depth"); m != p.end() && !m->is_null()) req.min_depth = m->get<int>();
      }
      r.required_phenomena.push_back(std::move(req));
    }
    r.monitored_signals = tags_from(j, "monitored_signals");
    r.window_length = j.value("window_length", 30.0);
    if (r.required_phenomena.empty()) throw Error(ErrorKind::InvalidRequest, "required_phenomena must be nonempty");
    if (!(r.window_length > 0.0)) throw Error(ErrorKind::InvalidRequest, "window_length must be > 0");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidRequest, e.what());
  }
}

ModelPool pool_from_json(const nlohmann::json& j) {
  ModelPool pool;
  if (!j.contains("models") || !j["models"].is_array()) {
    throw Error(ErrorKind::InvalidDescriptor, "manifest must contain a \"models\" array");
  }
  for (const auto& m : j["models"]) pool.register_model(descriptor_from_json(m));
  return pool;
}

namespace {

nlohmann::json read_json_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::ConfigError, "pool manifest not found: " + path);
  std::ifstream in(path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::ConfigError, "pool manifest is not valid JSON: " + path);
  return j;
}

}  // namespace

ModelPool load_pool_manifest(const std::string& path) { return pool_from_json(read_json_file(path)); }

std::vector<std::string> validate_pool_manifest(const std::string& path) {
  std::vector<std::string> problems;
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    return {e.detail()};
  }
  if (!j.contains("models") || !j["models"].is_array()) return {"manifest must contain a \"models\" array"};
  std::set<std::string> ids;
  std::size_t index = 0;
  for (const auto& m : j["models"]) {
    const std::string where = "models[" + std::to_string(index++) + "]";
    try {
      ModelDescriptor d = descriptor_from_json(m);
      for (const auto& v : descriptor_violations(d)) problems.push_back(where + " (" + d.id + "): " + v);
      if (!ids.insert(d.id).second) problems.push_back(where + ": duplicate id '" + d.id + "'");
    } catch (const Error& e) {
      problems.push_back(where + ": " + e.detail());
    }
  }
  return problems;
}

}  // namespace twinadapt
