#pragma once

#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/signal.hpp"

namespace twinadapt {

enum class BehaviorType { DiscreteEvent, DiscreteTime, Continuous };
enum class PortDirection { In, Out };
enum class ConfigStatus { Active, Candidate, Retired };
enum class DepthDirective { Any, Increase, Decrease };

std::string_view to_string(BehaviorType type);
std::string_view to_string(PortDirection dir);
std::string_view to_string(ConfigStatus status);
std::string_view to_string(DepthDirective directive);
BehaviorType behavior_type_from_string(std::string_view text);
DepthDirective depth_directive_from_string(std::string_view text);

using ParameterSet = std::map<std::string, double>;
using TagSet = std::set<std::string>;

struct Port {
  std::string name;
  PortDirection direction = PortDirection::In;
  std::string signal;
  SignalKind kind = SignalKind::Event;
};

struct Tunable {
  std::string name;
  std::string unit;
  double lower = 0.0;
  double upper = 0.0;
  double nominal = 0.0;
  // Excluded from parameter fitting when false (structural or boolean parameters).
  bool fit = true;

  double width() const { return upper - lower; }
};

struct ModelDescriptor {
  std::string id;
  std::string slot;
  int depth = 1;
  BehaviorType behavior_type = BehaviorType::DiscreteEvent;
  TagSet range;
  TagSet width;
  TagSet provided_phenomena;
  std::vector<Port> ports;
  std::vector<Tunable> tunables;
  double cost_rating = 0.0;
  double compute_rating = 0.0;
  std::optional<std::string> endpoint;
  // Executable behavior; defaults to "<slot>.d<depth>".
  std::string implementation;

  const Port* find_port(const std::string& name) const;
  const Tunable* find_tunable(const std::string& name) const;
  std::string implementation_key() const;
  // Nominal values overlaid with the given assignment.
  ParameterSet resolve(const ParameterSet& assignment) const;
};

// Returns the violated rules; empty when the descriptor is well formed.
std::vector<std::string> descriptor_violations(const ModelDescriptor& d);

struct PhenomenonRequirement {
  std::string tag;
  std::optional<int> min_depth;

  bool operator<(const PhenomenonRequirement& o) const { return tag < o.tag; }
};

struct RequirementSpec {
  std::string app_id;
  std::vector<PhenomenonRequirement> required_phenomena;
  TagSet monitored_signals;
  double window_length = 30.0;
};

struct ModelBinding {
  std::string model_id;
  ParameterSet params;

  bool operator==(const ModelBinding&) const = default;
};

// Directed link between slots: from_slot.from_port -> to_slot.to_port.
struct Coupling {
  std::string from_slot;
  std::string from_port;
  std::string to_slot;
  std::string to_port;

  bool operator==(const Coupling&) const = default;
};

struct ModelConfiguration {
  std::string id;
  std::map<std::string, ModelBinding> bindings;  // slot -> binding
  std::vector<Coupling> couplings;
  ConfigStatus status = ConfigStatus::Candidate;

  // "<model>+<model>" in slot order.
  std::string structure_id() const;
  // Sum of depths of bound models.
  int total_depth(const class ModelPool& pool) const;
};

struct SuitabilityResult {
  bool suitable = true;
  TagSet missing;
};

struct Violation {
  std::string rule;
  std::string detail;
};

// Registry of model metadata. Registration is serialized; descriptors are immutable once added.
class ModelPool {
 public:
  ModelPool() = default;
  ModelPool(const ModelPool& other);
  ModelPool& operator=(const ModelPool& other);

  std::string register_model(ModelDescriptor descriptor);

  const ModelDescriptor& get(const std::string& id) const;
  const ModelDescriptor* find(const std::string& id) const;
  std::size_t size() const;
  std::vector<ModelDescriptor> all() const;

  std::vector<ModelDescriptor> query_suitable(const std::string& slot,
                                              const std::vector<PhenomenonRequirement>& phenomena) const;

  SuitabilityResult check_suitability(const ModelConfiguration& config, const RequirementSpec& req) const;

  std::vector<Violation> validate_configuration(const ModelConfiguration& config) const;

  std::vector<ModelConfiguration> enumerate_candidates(const RequirementSpec& req,
                                                       const ModelConfiguration& current,
                                                       const std::map<std::string, DepthDirective>& directives,
                                                       std::size_t limit) const;

 private:
  mutable std::shared_mutex mutex_;
  // node-based storage keeps references stable across registrations
  std::map<std::string, ModelDescriptor> models_;
};

// Output signal tags of every bound model (through its out-ports).
TagSet output_signals(const ModelConfiguration& config, const ModelPool& pool);

// Pool manifest (JSON): {"models":[descriptor...]}. Throws Error on any violation.
ModelPool load_pool_manifest(const std::string& path);
ModelPool pool_from_json(const nlohmann::json& j);
// Collects every problem instead of stopping at the first.
std::vector<std::string> validate_pool_manifest(const std::string& path);

nlohmann::json descriptor_to_json(const ModelDescriptor& d);
ModelDescriptor descriptor_from_json(const nlohmann::json& j);
nlohmann::json configuration_to_json(const ModelConfiguration& c);
ModelConfiguration configuration_from_json(const nlohmann::json& j);
nlohmann::json requirement_to_json(const RequirementSpec& r);
RequirementSpec requirement_from_json(const nlohmann::json& j);

}  // namespace twinadapt
