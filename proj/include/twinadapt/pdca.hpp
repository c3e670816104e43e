#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinadapt/agents.hpp"
#include "twinadapt/estimation.hpp"
#include "twinadapt/gap.hpp"
#include "twinadapt/pool.hpp"
#include "twinadapt/scoring.hpp"

namespace twinadapt {

enum class TriggerKind { NewApplication, RequirementChange, AssetDeviation };
std::string_view to_string(TriggerKind kind);
TriggerKind trigger_kind_from_string(std::string_view text);

struct TriggerEvent {
  TriggerKind kind = TriggerKind::AssetDeviation;
  std::optional<RequirementSpec> requirement;       // NewApplication, RequirementChange
  std::optional<DeviationReport> report;            // AssetDeviation
  std::shared_ptr<const RecordedWindow> recorded;   // telemetry the cycle works on
  std::string source = "monitor";
  double received_at = 0.0;  // unix seconds; wall-clock metadata

  // Same variant and payload (report window, or requirement).
  bool coalesces_with(const TriggerEvent& other) const;
};

nlohmann::json trigger_to_json(const TriggerEvent& t);

struct AdaptionGoal {
  RequirementSpec requirement;
  std::map<std::string, DepthDirective> directives;  // missing slot = any
  Weights weights;

  bool all_any() const;
};

nlohmann::json goal_to_json(const AdaptionGoal& g);

struct EngineConfig {
  Weights weights;
  std::map<std::string, DepthDirective> directives;
  double epsilon_accept = 0.05;
  std::size_t batch_size = 4;
  int max_rounds = 3;
  FitOptions fit;
  MonitorConfig monitor;  // evaluation settings shared with the gap monitor
};

struct PlanResult {
  std::optional<AdaptionGoal> goal;
  // Configuration to bind when no adaptation is needed.
  std::optional<ModelConfiguration> bind;
  std::string note;
  std::vector<DeviationReport> reevaluated;
};

// Decides whether an adaptation is needed. For AssetDeviation every active configuration is
// re-evaluated on the trigger window; one with D <= epsilon resolves the deviation.
PlanResult plan(const TriggerEvent& trigger, const std::vector<ModelConfiguration>& active,
                const RequirementSpec& requirement, const ModelPool& pool, const EngineConfig& cfg,
                const ModelRunner* runner = nullptr);

struct Stage1Result {
  bool ran = false;
  std::string note;
  std::optional<FitResult> fit;
  std::optional<ModelConfiguration> candidate;  // set when the fit closes the gap
};

// Parameter-only adaptation of the active configuration; bypassed for structural directives.
Stage1Result do_stage1(const AdaptionGoal& goal, const ModelConfiguration& active, const RecordedWindow& rec,
                       const ModelPool& pool, const EngineConfig& cfg);

struct Candidate {
  ModelConfiguration config;
  std::optional<FitResult> fit;
  std::optional<std::string> failed;
};

// Page batch_index of the candidate enumeration (unfitted). Throws NoSuitableCandidate when exhausted.
std::vector<ModelConfiguration> stage2_batch(const AdaptionGoal& goal, const ModelPool& pool,
                                             const ModelConfiguration& current, std::size_t batch_index,
                                             std::size_t batch_size);

// Next batch of structural candidates, each parameter-fitted on its fittable tunables.
std::vector<Candidate> do_stage2(const AdaptionGoal& goal, const ModelPool& pool, const ModelConfiguration& current,
                                 std::size_t batch_index, const RecordedWindow& rec, const EngineConfig& cfg);

// Evaluates candidates (concurrently) and ranks them on the magic triangle.
Ranking check(const std::vector<Candidate>& candidates, const RecordedWindow& rec, const AdaptionGoal& goal,
              const ModelPool& pool, const EngineConfig& cfg, const ModelRunner* runner = nullptr);

struct DiagnosisEntry {
  std::string parameter;  // <slot>.<name>
  double nominal = 0.0;
  double fitted = 0.0;
  double relative_change = 0.0;
};

// Fitted parameters of the selected configuration against descriptor nominals, largest change first.
std::vector<DiagnosisEntry> diagnose(const ModelConfiguration& selected, const ModelPool& pool);

struct RoundRecord {
  int round = 0;
  std::string stage;  // "stage1" | "stage2"
  std::optional<std::size_t> batch_index;
  std::vector<CandidateEvaluation> evaluations;  // ranked
  std::optional<std::string> selected;
};

struct AdaptationRecord {
  std::string cycle_id;
  TriggerEvent trigger;
  std::optional<AdaptionGoal> goal;
  // "activated" | "no_adaptation_needed" | "rebound" | "failed"
  std::string outcome;
  std::string plan_note;
  std::vector<DeviationReport> reevaluated;
  std::optional<Stage1Result> stage1;
  std::vector<RoundRecord> rounds;
  std::optional<std::string> selected;  // structure id of the selection
  std::optional<ModelConfiguration> activated;
  std::optional<ModelConfiguration> previous;
  std::optional<std::string> failure_reason;
  int loop_count = 0;
  std::vector<DiagnosisEntry> diagnosis;
  std::vector<std::string> log;

  struct WallClock {
    double started_at = 0.0;
    double duration_s = 0.0;
    double stage1_s = 0.0;
    double stage2_s = 0.0;
    double check_s = 0.0;
    struct CandidateTiming {
      std::string config_id;
      int max_depth = 0;
      std::size_t fit_iterations = 0;
      double fit_sim_s = 0.0;
      double eval_sim_s = 0.0;
    };
    std::vector<CandidateTiming> candidates;
  } wall_clock;

  std::size_t stage2_batch_count() const;
};

// Everything outside "wall_clock" is a deterministic function of the inputs.
nlohmann::json record_to_json(const AdaptationRecord& r);

// Callbacks from the Act and Output agents.
struct EngineHooks {
  std::function<void(const ModelConfiguration&)> on_activate;
  std::function<void(const AdaptationRecord&)> on_record;
  // Latest recorded telemetry for triggers that carry none (new application, requirement change).
  std::function<std::shared_ptr<const RecordedWindow>()> latest_window;
};

struct EngineStatus {
  ModelConfiguration active;
  std::vector<ModelConfiguration> active_set;
  RequirementSpec requirement;
  Weights weights;
  std::map<std::string, DepthDirective> directives;
  bool in_progress = false;
  std::size_t cycles_run = 0;
  std::size_t queued = 0;
};

// Agent runtime hosting the PDCA workflow. Trigger, Plan, Do, Check, Act and Output are separate
// mailboxes; one cycle is in flight at a time, later triggers queue FIFO and identical ones coalesce.
class Engine {
 public:
  Engine(std::shared_ptr<const ModelPool> pool, EngineConfig cfg, RequirementSpec requirement,
         ModelConfiguration active, EngineHooks hooks = {}, std::shared_ptr<EventBus> bus = nullptr);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  struct Ticket {
    std::string cycle_id;
    std::shared_future<AdaptationRecord> record;
    bool coalesced = false;
  };
  Ticket submit(TriggerEvent trigger);
  // Blocking convenience: submit and wait.
  AdaptationRecord run_cycle(TriggerEvent trigger);

  // Operator goal template (sticky). Weights are normalized; throws InvalidRequest.
  void set_goal(Weights weights, std::map<std::string, DepthDirective> directives);
  // Extra configuration considered by Plan when resolving deviations.
  void add_active(ModelConfiguration config);

  EngineStatus status() const;
  std::vector<ModelConfiguration> retired() const;
  const EventBus& bus() const { return *bus_; }
  std::shared_ptr<EventBus> bus_ptr() const { return bus_; }
  const ModelPool& pool() const { return *pool_; }
  const EngineConfig& config() const { return cfg_; }

 private:
  struct Pending {
    std::string cycle_id;
    TriggerEvent trigger;
    std::shared_ptr<std::promise<AdaptationRecord>> promise;
    std::shared_future<AdaptationRecord> future;
  };
  struct Cycle {
    AdaptationRecord record;
    std::shared_ptr<std::promise<AdaptationRecord>> promise;
    ModelConfiguration active;
    std::vector<ModelConfiguration> active_set;
    std::shared_ptr<const RecordedWindow> window;
    std::size_t next_batch = 0;
    std::vector<Candidate> candidates;
    double t_start = 0.0;
  };
  // Trigger agent input: a trigger was queued, or the running cycle finished.
  struct TriggerMsg {
    bool finished = false;
  };
  using CycleMsg = std::shared_ptr<Cycle>;

  void on_trigger(TriggerMsg msg);
  void on_plan(CycleMsg c);
  void on_do(CycleMsg c);
  void on_check(CycleMsg c);
  void on_act(CycleMsg c);
  void on_output(CycleMsg c);
  void fail(CycleMsg c, const std::string& reason);
  void publish(const std::string& type, nlohmann::json data);

  std::shared_ptr<const ModelPool> pool_;
  EngineConfig cfg_;
  EngineHooks hooks_;
  std::shared_ptr<EventBus> bus_;
  ModelRunner runner_;
  std::unique_ptr<PartialModelAgents> model_agents_;

  mutable std::mutex state_mutex_;
  RequirementSpec requirement_;
  ModelConfiguration active_;
  std::vector<ModelConfiguration> extra_active_;
  std::vector<ModelConfiguration> retired_;
  Weights weights_;
  std::map<std::string, DepthDirective> directives_;
  std::size_t cycles_run_ = 0;
  std::size_t cycle_counter_ = 0;
  std::atomic<bool> in_progress_{false};

  std::deque<Pending> queue_;  // guarded by state_mutex_
  bool busy_ = false;          // trigger agent thread only

  // Declared last: destroyed first, joining their threads before the state above goes away.
  std::unique_ptr<Mailbox<CycleMsg>> output_;
  std::unique_ptr<Mailbox<CycleMsg>> act_;
  std::unique_ptr<Mailbox<CycleMsg>> check_;
  std::unique_ptr<Mailbox<CycleMsg>> do_;
  std::unique_ptr<Mailbox<CycleMsg>> plan_;
  std::unique_ptr<Mailbox<TriggerMsg>> trigger_;
};

}  // namespace twinadapt
