#include "twinadapt/pdca.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "twinadapt/error.hpp"
#include "twinadapt/remote.hpp"

namespace twinadapt {

std::string_view to_string(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::NewApplication: return "new_application";
    case TriggerKind::RequirementChange: return "requirement_change";
    case TriggerKind::AssetDeviation: return "asset_deviation";
  }
  return "?";
}

TriggerKind trigger_kind_from_string(std::string_view text) {
  if (text == "new_application") return TriggerKind::NewApplication;
  if (text == "requirement_change") return TriggerKind::RequirementChange;
  if (text == "asset_deviation") return TriggerKind::AssetDeviation;
  throw Error(ErrorKind::InvalidRequest, "unknown trigger kind '" + std::string(text) + "'");
}

bool TriggerEvent::coalesces_with(const TriggerEvent& o) const {
  if (kind != o.kind) return false;
  if (kind == TriggerKind::AssetDeviation) {
    Window a = report ? report->window : recorded ? recorded->window : Window{};
    Window b = o.report ? o.report->window : o.recorded ? o.recorded->window : Window{};
    return a == b;
  }
  if (requirement.has_value() != o.requirement.has_value()) return false;
  return !requirement || requirement_to_json(*requirement) == requirement_to_json(*o.requirement);
}

nlohmann::json trigger_to_json(const TriggerEvent& t) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(t.kind));
  j["source"] = t.source;
  j["report"] = t.report ? report_to_json(*t.report) : nlohmann::json(nullptr);
  j["requirement"] = t.requirement ? requirement_to_json(*t.requirement) : nlohmann::json(nullptr);
  j["window"] = t.recorded ? nlohmann::json{t.recorded->window.t0, t.recorded->window.t1} : nlohmann::json(nullptr);
  return j;
}

bool AdaptionGoal::all_any() const {
  return std::all_of(directives.begin(), directives.end(), [](const auto& d) { return d.second == DepthDirective::Any; });
}

nlohmann::json goal_to_json(const AdaptionGoal& g) {
  nlohmann::json j;
  j["requirement"] = requirement_to_json(g.requirement);
  j["directives"] = nlohmann::json::object();
  for (const auto& [slot, d] : g.directives) j["directives"][slot] = std::string(to_string(d));
  j["weights"] = weights_to_json(g.weights);
  return j;
}

// ---- workflow steps -----------------------------------------------------

PlanResult plan(const TriggerEvent& trigger, const std::vector<ModelConfiguration>& active,
                const RequirementSpec& requirement, const ModelPool& pool, const EngineConfig& cfg,
                const ModelRunner* runner) {
  PlanResult r;
  RequirementSpec req = trigger.requirement.value_or(requirement);
  if (trigger.kind != TriggerKind::AssetDeviation) {
    for (const auto& c : active) {
      if (pool.check_suitability(c, req).suitable) {
        r.bind = c;
        r.note = "active configuration " + c.id + " is functionally suitable";
        return r;
      }
    }
    r.note = "no active configuration is functionally suitable";
  } else if (trigger.recorded) {
    for (const auto& c : active) {
      try {
        Evaluation ev = evaluate_configuration(pool, c, *trigger.recorded, cfg.monitor, runner);
        r.reevaluated.push_back(ev.report);
        if (ev.report.aggregate <= cfg.monitor.epsilon) {
          r.bind = c;
          r.note = "deviation resolved by active configuration " + c.id;
          return r;
        }
      } catch (const Error& e) {
        r.reevaluated.push_back(DeviationReport{trigger.recorded->window, {}, 0.0, cfg.monitor.epsilon, false, false, c.id,
                                                std::string(e.what())});
      }
    }
    r.note = "no active configuration resolves the deviation";
  } else {
    r.note = "deviation without recorded window";
  }
  r.goal = AdaptionGoal{req, cfg.directives, cfg.weights};
  return r;
}

Stage1Result do_stage1(const AdaptionGoal& goal, const ModelConfiguration& active, const RecordedWindow& rec,
                       const ModelPool& pool, const EngineConfig& cfg) {
  Stage1Result s;
  if (!goal.all_any()) {
    s.note = "stage1 bypassed: structural directive";
    return s;
  }
  if (!pool.check_suitability(active, goal.requirement).suitable) {
    s.note = "stage1 bypassed: active configuration not suitable";
    return s;
  }
  FitRequest req;
  req.pool = &pool;
  req.config = active;
  req.tunables = fittable_tunables(active, pool);
  req.recorded = rec;
  req.monitor = cfg.monitor;
  req.options = cfg.fit;
  if (req.tunables.empty()) {
    s.note = "stage1 skipped: no fittable parameters";
    return s;
  }
  s.ran = true;
  s.fit = fit_parameters(req);
  if (s.fit->residual <= cfg.epsilon_accept) {
    ModelConfiguration c = s.fit->config;
    c.id = c.structure_id();
    c.status = ConfigStatus::Candidate;
    s.candidate = std::move(c);
    s.note = "stage1 closed the gap";
  } else {
    s.note = "stage1 residual above epsilon_accept";
  }
  return s;
}

std::vector<ModelConfiguration> stage2_batch(const AdaptionGoal& goal, const ModelPool& pool,
                                             const ModelConfiguration& current, std::size_t batch_index,
                                             std::size_t batch_size) {
  if (batch_size < 1) throw Error(ErrorKind::InvalidRequest, "batch_size must be >= 1");
  auto all = pool.enumerate_candidates(goal.requirement, current, goal.directives, (batch_index + 1) * batch_size);
  const std::size_t from = batch_index * batch_size;
  if (from >= all.size()) throw Error(ErrorKind::NoSuitableCandidate, "candidate enumeration exhausted");
  return {all.begin() + static_cast<std::ptrdiff_t>(from), all.end()};
}

std::vector<Candidate> do_stage2(const AdaptionGoal& goal, const ModelPool& pool, const ModelConfiguration& current,
                                 std::size_t batch_index, const RecordedWindow& rec, const EngineConfig& cfg) {
  std::vector<Candidate> out;
  for (auto& config : stage2_batch(goal, pool, current, batch_index, cfg.batch_size)) {
    Candidate cand;
    cand.config = std::move(config);
    FitRequest req;
    req.pool = &pool;
    req.config = cand.config;
    req.tunables = fittable_tunables(cand.config, pool);
    req.recorded = rec;
    req.monitor = cfg.monitor;
    req.options = cfg.fit;
    if (!req.tunables.empty()) {
      try {
        cand.fit = fit_parameters(req);
        cand.config = cand.fit->config;
      } catch (const Error& e) {
        cand.failed = e.what();
      }
    }
    cand.config.id = cand.config.structure_id();
    out.push_back(std::move(cand));
  }
  return out;
}

Ranking check(const std::vector<Candidate>& candidates, const RecordedWindow& rec, const AdaptionGoal& goal,
              const ModelPool& pool, const EngineConfig& cfg, const ModelRunner* runner) {
  if (candidates.empty()) throw Error(ErrorKind::InvalidRequest, "check needs at least one candidate");
  std::vector<std::future<CandidateEvaluation>> jobs;
  for (const auto& cand : candidates) {
    jobs.push_back(std::async(std::launch::async, [&pool, &rec, &cfg, runner, cand] {
      CandidateEvaluation e;
      e.config_id = cand.config.id;
      e.config = cand.config;
      e.fit = cand.fit;
      e.failed = cand.failed;
      for (const auto& [slot, b] : cand.config.bindings) {
        const ModelDescriptor& d = pool.get(b.model_id);
        e.total_depth += d.depth;
        e.T += d.compute_rating * rec.window.length();
        e.C += d.cost_rating;
      }
      if (e.failed) return e;
      try {
        Evaluation ev = evaluate_configuration(pool, cand.config, rec, cfg.monitor, runner);
        e.D = ev.report.aggregate;
        e.wall_time_s = ev.wall_time_s;
      } catch (const std::exception& ex) {
        e.failed = ex.what();
      }
      return e;
    }));
  }
  std::vector<CandidateEvaluation> evals;
  for (auto& j : jobs) evals.push_back(j.get());
  return rank_candidates(std::move(evals), goal.weights, cfg.epsilon_accept);
}

std::vector<DiagnosisEntry> diagnose(const ModelConfiguration& selected, const ModelPool& pool) {
  std::vector<DiagnosisEntry> out;
  for (const auto& [slot, b] : selected.bindings) {
    const ModelDescriptor& d = pool.get(b.model_id);
    for (const auto& [name, value] : b.params) {
      const Tunable* t = d.find_tunable(name);
      if (!t || !t->fit) continue;
      const double rel = t->nominal != 0.0 ? (value - t->nominal) / t->nominal : value - t->nominal;
      out.push_back({slot + "." + name, t->nominal, value, rel});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (std::abs(a.relative_change) != std::abs(b.relative_change)) {
      return std::abs(a.relative_change) > std::abs(b.relative_change);
    }
    return a.parameter < b.parameter;
  });
  return out;
}

std::size_t AdaptationRecord::stage2_batch_count() const {
  return static_cast<std::size_t>(std::count_if(rounds.begin(), rounds.end(), [](const auto& r) { return r.stage == "stage2"; }));
}

nlohmann::json record_to_json(const AdaptationRecord& r) {
  nlohmann::json j;
  j["cycle_id"] = r.cycle_id;
  j["trigger"] = trigger_to_json(r.trigger);
  j["goal"] = r.goal ? goal_to_json(*r.goal) : nlohmann::json(nullptr);
  j["outcome"] = r.outcome;
  j["plan"] = {{"note", r.plan_note}, {"reevaluated", nlohmann::json::array()}};
  for (const auto& rep : r.reevaluated) j["plan"]["reevaluated"].push_back(report_to_json(rep));
  if (r.stage1) {
    j["stage1"] = {{"ran", r.stage1->ran},
                   {"note", r.stage1->note},
                   {"fit", r.stage1->fit ? fit_result_to_json(*r.stage1->fit) : nlohmann::json(nullptr)},
                   {"candidate", r.stage1->candidate ? nlohmann::json(r.stage1->candidate->id) : nlohmann::json(nullptr)}};
  } else {
    j["stage1"] = nullptr;
  }
  j["stage2_batches"] = nlohmann::json::array();
  j["rounds"] = nlohmann::json::array();
  for (const auto& round : r.rounds) {
    nlohmann::json rj;
    rj["round"] = round.round;
    rj["stage"] = round.stage;
    rj["batch_index"] = round.batch_index ? nlohmann::json(*round.batch_index) : nlohmann::json(nullptr);
    rj["evaluations"] = nlohmann::json::array();
    std::vector<std::string> ids;
    for (const auto& e : round.evaluations) {
      rj["evaluations"].push_back(evaluation_to_json(e));
      ids.push_back(e.config_id);
    }
    rj["selected"] = round.selected ? nlohmann::json(*round.selected) : nlohmann::json(nullptr);
    if (round.stage == "stage2") {
      std::sort(ids.begin(), ids.end());
      j["stage2_batches"].push_back({{"round", round.round}, {"batch_index", *round.batch_index}, {"candidates", ids}});
    }
    j["rounds"].push_back(std::move(rj));
  }
  j["selected"] = r.selected ? nlohmann::json(*r.selected) : nlohmann::json(nullptr);
  j["activated"] = r.activated ? configuration_to_json(*r.activated) : nlohmann::json(nullptr);
  j["previous"] = r.previous ? configuration_to_json(*r.previous) : nlohmann::json(nullptr);
  j["failure_reason"] = r.failure_reason ? nlohmann::json(*r.failure_reason) : nlohmann::json(nullptr);
  j["loop_count"] = r.loop_count;
  j["diagnosis"] = nlohmann::json::array();
  for (const auto& d : r.diagnosis) {
    j["diagnosis"].push_back(
        {{"parameter", d.parameter}, {"nominal", d.nominal}, {"fitted", d.fitted}, {"relative_change", d.relative_change}});
  }
  j["log"] = r.log;

  nlohmann::json w;
  w["started_at"] = r.wall_clock.started_at;
  w["duration_s"] = r.wall_clock.duration_s;
  w["stage1_s"] = r.wall_clock.stage1_s;
  w["stage2_s"] = r.wall_clock.stage2_s;
  w["check_s"] = r.wall_clock.check_s;
  w["trigger_received_at"] = r.trigger.received_at;
  w["candidates"] = nlohmann::json::array();
  for (const auto& c : r.wall_clock.candidates) {
    w["candidates"].push_back({{"config_id", c.config_id},
                               {"max_depth", c.max_depth},
                               {"fit_iterations", c.fit_iterations},
                               {"fit_sim_s", c.fit_sim_s},
                               {"eval_sim_s", c.eval_sim_s}});
  }
  j["wall_clock"] = std::move(w);
  return j;
}

// ---- Engine -------------------------------------------------------------

namespace {

double unix_now() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

double steady_now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string format_cycle_id(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cycle-%04zu", n);
  return buf;
}

int max_depth(const ModelConfiguration& c, const ModelPool& pool) {
  int m = 0;
  for (const auto& [_, b] : c.bindings) m = std::max(m, pool.get(b.model_id).depth);
  return m;
}

}  // namespace

Engine::Engine(std::shared_ptr<const ModelPool> pool, EngineConfig cfg, RequirementSpec requirement,
               ModelConfiguration active, EngineHooks hooks, std::shared_ptr<EventBus> bus)
    : pool_(std::move(pool)),
      cfg_(std::move(cfg)),
      hooks_(std::move(hooks)),
      bus_(bus ? std::move(bus) : std::make_shared<EventBus>()),
      requirement_(std::move(requirement)),
      active_(std::move(active)),
      weights_(cfg_.weights),
      directives_(cfg_.directives) {
  active_.status = ConfigStatus::Active;
  model_agents_ = std::make_unique<PartialModelAgents>(default_model_runner());
  runner_ = model_agents_->runner();
  output_ = std::make_unique<Mailbox<CycleMsg>>([this](CycleMsg c) { on_output(std::move(c)); });
  act_ = std::make_unique<Mailbox<CycleMsg>>([this](CycleMsg c) { on_act(std::move(c)); });
  check_ = std::make_unique<Mailbox<CycleMsg>>([this](CycleMsg c) { on_check(std::move(c)); });
  do_ = std::make_unique<Mailbox<CycleMsg>>([this](CycleMsg c) { on_do(std::move(c)); });
  plan_ = std::make_unique<Mailbox<CycleMsg>>([this](CycleMsg c) { on_plan(std::move(c)); });
  trigger_ = std::make_unique<Mailbox<TriggerMsg>>([this](TriggerMsg m) { on_trigger(m); });
}

Engine::~Engine() {
  trigger_->stop();
  plan_->stop();
  do_->stop();
  check_->stop();
  act_->stop();
  output_->stop();
}

Engine::Ticket Engine::submit(TriggerEvent trigger) {
  if (trigger.received_at == 0.0) trigger.received_at = unix_now();
  Ticket ticket;
  {
    std::lock_guard lock(state_mutex_);
    for (const auto& p : queue_) {
      if (p.trigger.coalesces_with(trigger)) return {p.cycle_id, p.future, true};
    }
    Pending p;
    p.cycle_id = format_cycle_id(++cycle_counter_);
    p.trigger = std::move(trigger);
    p.promise = std::make_shared<std::promise<AdaptationRecord>>();
    p.future = p.promise->get_future().share();
    ticket = {p.cycle_id, p.future, false};
    queue_.push_back(std::move(p));
  }
  publish("trigger_queued", {{"cycle_id", ticket.cycle_id}});
  trigger_->post(TriggerMsg{false});
  return ticket;
}

AdaptationRecord Engine::run_cycle(TriggerEvent trigger) { return submit(std::move(trigger)).record.get(); }

void Engine::set_goal(Weights weights, std::map<std::string, DepthDirective> directives) {
  Weights w = normalize_weights(weights.time, weights.cost, weights.quality);
  std::lock_guard lock(state_mutex_);
  weights_ = w;
  directives_ = std::move(directives);
}

void Engine::add_active(ModelConfiguration config) {
  std::lock_guard lock(state_mutex_);
  config.status = ConfigStatus::Active;
  extra_active_.push_back(std::move(config));
}

EngineStatus Engine::status() const {
  std::lock_guard lock(state_mutex_);
  EngineStatus s;
  s.active = active_;
  s.active_set.push_back(active_);
  for (const auto& c : extra_active_) s.active_set.push_back(c);
  s.requirement = requirement_;
  s.weights = weights_;
  s.directives = directives_;
  s.in_progress = in_progress_.load();
  s.cycles_run = cycles_run_;
  s.queued = queue_.size();
  return s;
}

std::vector<ModelConfiguration> Engine::retired() const {
  std::lock_guard lock(state_mutex_);
  return retired_;
}

void Engine::publish(const std::string& type, nlohmann::json data) { bus_->publish(type, std::move(data)); }

void Engine::on_trigger(TriggerMsg msg) {
  if (msg.finished) busy_ = false;
  if (busy_) return;
  auto c = std::make_shared<Cycle>();
  {
    std::lock_guard lock(state_mutex_);
    if (queue_.empty()) return;
    Pending p = std::move(queue_.front());
    queue_.pop_front();
    c->record.cycle_id = p.cycle_id;
    c->record.trigger = std::move(p.trigger);
    c->promise = std::move(p.promise);
    c->active = active_;
    c->active_set.push_back(active_);
    for (const auto& a : extra_active_) c->active_set.push_back(a);
  }
  busy_ = true;
  in_progress_ = true;
  c->t_start = steady_now();
  c->record.wall_clock.started_at = unix_now();
  c->window = c->record.trigger.recorded;
  if (!c->window && hooks_.latest_window) c->window = hooks_.latest_window();
  publish("cycle_started", {{"cycle_id", c->record.cycle_id}, {"trigger", trigger_to_json(c->record.trigger)}});
  plan_->post(std::move(c));
}

void Engine::fail(CycleMsg c, const std::string& reason) {
  c->record.outcome = "failed";
  c->record.failure_reason = reason;
  publish("failure", {{"cycle_id", c->record.cycle_id}, {"reason", reason}});
  output_->post(std::move(c));
}

void Engine::on_plan(CycleMsg c) {
  publish("stage_entered", {{"cycle_id", c->record.cycle_id}, {"stage", "plan"}});
  try {
    EngineConfig cfg = cfg_;
    RequirementSpec req;
    {
      std::lock_guard lock(state_mutex_);
      cfg.weights = weights_;
      cfg.directives = directives_;
      req = requirement_;
    }
    PlanResult pr = plan(c->record.trigger, c->active_set, req, *pool_, cfg, &runner_);
    c->record.plan_note = pr.note;
    c->record.reevaluated = pr.reevaluated;
    c->record.log.push_back("plan: " + pr.note);
    if (pr.bind) {
      const bool same = pr.bind->id == c->active.id;
      c->record.outcome = same ? "no_adaptation_needed" : "rebound";
      {
        std::lock_guard lock(state_mutex_);
        if (c->record.trigger.requirement) requirement_ = *c->record.trigger.requirement;
        if (!same) {
          c->record.previous = active_;
          ModelConfiguration old = active_;
          old.status = ConfigStatus::Retired;
          retired_.push_back(old);
          active_ = *pr.bind;
          active_.status = ConfigStatus::Active;
          extra_active_.erase(std::remove_if(extra_active_.begin(), extra_active_.end(),
                                             [&](const auto& x) { return x.id == pr.bind->id; }),
                              extra_active_.end());
          extra_active_.push_back(old);
          extra_active_.back().status = ConfigStatus::Active;
        }
      }
      if (!same) {
        c->record.activated = *pr.bind;
        if (hooks_.on_activate) hooks_.on_activate(*pr.bind);
        publish("activation", {{"cycle_id", c->record.cycle_id}, {"config_id", pr.bind->id}});
      }
      output_->post(std::move(c));
      return;
    }
    c->record.goal = pr.goal;
    if (!c->window) {
      fail(std::move(c), "no recorded telemetry window");
      return;
    }
    do_->post(std::move(c));
  } catch (const std::exception& e) {
    fail(std::move(c), std::string("plan failed: ") + e.what());
  }
}

void Engine::on_do(CycleMsg c) {
  auto& rec = c->record;
  ++rec.loop_count;
  publish("stage_entered", {{"cycle_id", rec.cycle_id}, {"stage", "do"}, {"round", rec.loop_count}});
  EngineConfig cfg = cfg_;
  cfg.weights = rec.goal->weights;
  cfg.directives = rec.goal->directives;
  try {
    if (rec.loop_count == 1) {
      const double t0 = steady_now();
      Stage1Result s1 = do_stage1(*rec.goal, c->active, *c->window, *pool_, cfg);
      rec.wall_clock.stage1_s += steady_now() - t0;
      rec.log.push_back(s1.note);
      if (s1.fit) {
        rec.wall_clock.candidates.push_back({c->active.structure_id(), max_depth(c->active, *pool_), s1.fit->iterations,
                                             s1.fit->sim_wall_s, 0.0});
      }
      publish("stage_entered", {{"cycle_id", rec.cycle_id}, {"stage", "stage1"}, {"note", s1.note}});
      rec.stage1 = s1;
      if (s1.candidate) {
        c->candidates = {Candidate{*s1.candidate, s1.fit, std::nullopt}};
        rec.rounds.push_back({rec.loop_count, "stage1", std::nullopt, {}, std::nullopt});
        check_->post(std::move(c));
        return;
      }
    }
    const std::size_t batch = c->next_batch++;
    publish("stage_entered", {{"cycle_id", rec.cycle_id}, {"stage", "stage2"}, {"batch_index", batch}});
    const double t0 = steady_now();
    std::vector<Candidate> cands;
    try {
      cands = do_stage2(*rec.goal, *pool_, c->active, batch, *c->window, cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoSuitableCandidate) throw;
      rec.wall_clock.stage2_s += steady_now() - t0;
      rec.log.push_back(std::string("stage2: ") + e.what());
      fail(std::move(c), "NoAdequateConfiguration");
      return;
    }
    rec.wall_clock.stage2_s += steady_now() - t0;
    for (const auto& cand : cands) {
      rec.wall_clock.candidates.push_back({cand.config.id, max_depth(cand.config, *pool_),
                                           cand.fit ? cand.fit->iterations : 0, cand.fit ? cand.fit->sim_wall_s : 0.0, 0.0});
    }
    c->candidates = std::move(cands);
    rec.rounds.push_back({rec.loop_count, "stage2", batch, {}, std::nullopt});
    check_->post(std::move(c));
  } catch (const std::exception& e) {
    fail(std::move(c), e.what());
  }
}

void Engine::on_check(CycleMsg c) {
  auto& rec = c->record;
  publish("stage_entered", {{"cycle_id", rec.cycle_id}, {"stage", "check"}, {"round", rec.loop_count}});
  try {
    EngineConfig cfg = cfg_;
    const double t0 = steady_now();
    Ranking ranking = check(c->candidates, *c->window, *rec.goal, *pool_, cfg, &runner_);
    rec.wall_clock.check_s += steady_now() - t0;
    for (const auto& e : ranking.ranked) {
      for (auto& timing : rec.wall_clock.candidates) {
        if (timing.config_id == e.config_id && timing.eval_sim_s == 0.0) timing.eval_sim_s = e.wall_time_s;
      }
      publish("candidate_evaluated", {{"cycle_id", rec.cycle_id}, {"evaluation", evaluation_to_json(e)}});
    }
    RoundRecord& round = rec.rounds.back();
    round.evaluations = ranking.ranked;
    if (ranking.selected) {
      const auto& sel = ranking.ranked[*ranking.selected];
      round.selected = sel.config_id;
      rec.selected = sel.config_id;
      publish("selection", {{"cycle_id", rec.cycle_id}, {"config_id", sel.config_id}});
      act_->post(std::move(c));
      return;
    }
    rec.log.push_back("check: no adequate candidate in round " + std::to_string(rec.loop_count));
    if (rec.loop_count < cfg_.max_rounds) {
      do_->post(std::move(c));
    } else {
      fail(std::move(c), "NoAdequateConfiguration");
    }
  } catch (const std::exception& e) {
    fail(std::move(c), e.what());
  }
}

void Engine::on_act(CycleMsg c) {
  auto& rec = c->record;
  publish("stage_entered", {{"cycle_id", rec.cycle_id}, {"stage", "act"}});
  const auto& round = rec.rounds.back();
  ModelConfiguration selected = round.evaluations[0].config;
  selected.id = selected.structure_id() + "@" + rec.cycle_id;
  selected.status = ConfigStatus::Active;
  {
    std::lock_guard lock(state_mutex_);
    if (active_.id != c->active.id) {
      // single-flight makes this unreachable
      rec.outcome = "failed";
      rec.failure_reason = "ActivationConflict";
    } else {
      rec.previous = active_;
      ModelConfiguration old = active_;
      old.status = ConfigStatus::Retired;
      retired_.push_back(std::move(old));
      active_ = selected;
    }
  }
  if (rec.failure_reason) {
    output_->post(std::move(c));
    return;
  }
  rec.activated = selected;
  rec.outcome = "activated";
  rec.diagnosis = diagnose(selected, *pool_);
  if (hooks_.on_activate) hooks_.on_activate(selected);
  publish("activation", {{"cycle_id", rec.cycle_id}, {"config_id", selected.id}, {"structure", rec.selected.value_or("")}});
  output_->post(std::move(c));
}

void Engine::on_output(CycleMsg c) {
  auto& rec = c->record;
  rec.wall_clock.duration_s = steady_now() - c->t_start;
  {
    std::lock_guard lock(state_mutex_);
    ++cycles_run_;
  }
  if (hooks_.on_record) {
    try {
      hooks_.on_record(rec);
    } catch (const std::exception& e) {
      publish("persistence_error", {{"cycle_id", rec.cycle_id}, {"error", e.what()}});
    }
  }
  publish("cycle_completed", {{"cycle_id", rec.cycle_id}, {"outcome", rec.outcome}, {"record", record_to_json(rec)}});
  in_progress_ = false;
  c->promise->set_value(rec);
  trigger_->post(TriggerMsg{true});
}

}  // namespace twinadapt
