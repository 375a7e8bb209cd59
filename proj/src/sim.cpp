#include "alignfleet/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>

#include <json.hpp>

namespace alignfleet::sim {
namespace {

using nlohmann::json;

constexpr double kGibToGb = 1.073741824;  // 2^30 / 1e9
constexpr double kSecondsPerMonth = 30.0 * 24.0 * 3600.0;
constexpr double kHugeVisibility = 1e18;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t h = seed ^ (salt + 0x9e3779b97f4a7c15ull);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return h;
}

enum class InternalEvent { Arrive, IndexShare, StageFinish, Interrupt, Poke };

struct Event {
    double t = 0.0;
    std::uint64_t seq = 0;
    InternalEvent type = InternalEvent::Poke;
    int slot = -1;
    std::uint64_t gen = 0;  // validity token (worker generation or load epoch)
};

struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        if (a.t != b.t) return a.t > b.t;
        return a.seq > b.seq;
    }
};

struct StagePlanEntry {
    Stage stage = Stage::Prefetch;
    double duration = 0.0;
    StageOutcome::Status status = StageOutcome::Status::Ok;
    std::optional<double> final_mapping_rate;
};

enum class SlotState { NotStarted, Loading, Idle, Busy, Stopped };

struct WorkerSlot {
    std::uint64_t gen = 0;
    SlotState state = SlotState::NotStarted;
    double incarnation_start = 0.0;
    bool is_replacement = false;
    std::uint64_t incarnations = 0;
    // current task
    LeasedMessage lease;
    QueueId queue_id = QueueId::Small;
    double task_start = 0.0;
    std::size_t stage_index = 0;
    std::vector<StagePlanEntry> plan;
};

}  // namespace

const char* event_kind_name(EventKind kind) {
    switch (kind) {
        case EventKind::WorkerStart: return "WorkerStart";
        case EventKind::IndexLoaded: return "IndexLoaded";
        case EventKind::TaskStart: return "TaskStart";
        case EventKind::StageDone: return "StageDone";
        case EventKind::EarlyStop: return "EarlyStop";
        case EventKind::Interrupted: return "Interrupted";
        case EventKind::TaskComplete: return "TaskComplete";
        case EventKind::TaskFailed: return "TaskFailed";
        case EventKind::WorkerStop: return "WorkerStop";
    }
    return "Unknown";
}

std::vector<TaskSpec> generate_tasks(const SyntheticTasksSpec& spec, std::uint64_t seed) {
    std::vector<TaskSpec> tasks;
    if (spec.count <= 0) return tasks;
    std::mt19937_64 rng(mix_seed(seed, 0x7a5c5));

    // Exact proportional rate assignment, then a seeded shuffle.
    std::vector<double> rates;
    rates.reserve(spec.count);
    for (const auto& [rate, fraction] : spec.rate_mix) {
        const auto n = static_cast<std::size_t>(std::llround(fraction * spec.count));
        for (std::size_t i = 0; i < n && rates.size() < static_cast<std::size_t>(spec.count); ++i)
            rates.push_back(rate);
    }
    while (rates.size() < static_cast<std::size_t>(spec.count))
        rates.push_back(spec.rate_mix.empty() ? 0.85 : spec.rate_mix.front().first);
    std::shuffle(rates.begin(), rates.end(), rng);

    std::uniform_real_distribution<double> log_size(
        std::log(static_cast<double>(std::max<std::uint64_t>(spec.size_bytes_min, 1))),
        std::log(static_cast<double>(std::max(spec.size_bytes_max, spec.size_bytes_min + 1))));
    for (int i = 0; i < spec.count; ++i) {
        TaskSpec task;
        task.sra_id = "SYN" + std::to_string(i);
        task.compressed_size_bytes = static_cast<std::uint64_t>(std::exp(log_size(rng)));
        task.expected_total_reads = static_cast<std::uint64_t>(
            static_cast<double>(task.compressed_size_bytes) * spec.reads_per_byte);
        task.tissue = spec.tissue;
        task.final_mapping_rate = rates[i];
        tasks.push_back(std::move(task));
    }
    return tasks;
}

double index_distribution_time(double index_size_gib, int concurrent_workers,
                               double server_bandwidth_gib_s,
                               double per_worker_cap_gib_s) {
    if (concurrent_workers <= 0) return 0.0;
    if (index_size_gib <= 0.0 || server_bandwidth_gib_s <= 0.0)
        throw ScenarioError("index size and server bandwidth must be positive");
    double rate = server_bandwidth_gib_s / concurrent_workers;
    if (per_worker_cap_gib_s > 0.0) rate = std::min(rate, per_worker_cap_gib_s);
    return index_size_gib / rate;
}

CostBreakdown cost_of(const CostInputs& inputs, double total_instance_seconds,
                      std::uint64_t worker_initializations, double duration_seconds,
                      std::uint64_t files_completed) {
    CostBreakdown cost;
    cost.compute = total_instance_seconds / 3600.0 * inputs.price_per_hour *
                   (1.0 - inputs.spot_discount);
    cost.transfer = inputs.index_size_gib * kGibToGb * inputs.transfer_price_per_gb *
                    static_cast<double>(worker_initializations);
    cost.storage = inputs.disk_gib * kGibToGb * inputs.storage_price_gb_month *
                   inputs.fleet_size * (duration_seconds / kSecondsPerMonth);
    cost.total = cost.compute + cost.storage + cost.transfer;
    cost.per_file = files_completed > 0 ? cost.total / static_cast<double>(files_completed)
                                        : 0.0;
    return cost;
}

std::string SimSummary::to_json() const {
    json j;
    j["node_hours"] = node_hours;
    j["files_completed"] = files_completed;
    j["files_failed"] = files_failed;
    j["early_stopped"] = early_stopped;
    j["interruptions"] = interruptions;
    j["replacements"] = replacements;
    j["total_instance_seconds"] = total_instance_seconds;
    j["wasted_seconds"] = wasted_seconds;
    j["wasted_fraction"] = wasted_fraction;
    j["makespan_seconds"] = makespan_seconds;
    j["init_index_loaded_seconds"] = init_index_loaded_seconds;
    j["avg_mapping_rate"] = avg_mapping_rate;
    j["total_align_seconds"] = total_align_seconds;
    j["cost"] = {{"compute", cost.compute},   {"storage", cost.storage},
                 {"transfer", cost.transfer}, {"total", cost.total},
                 {"per_file", cost.per_file}};
    return j.dump(2);
}

namespace {

class Simulation {
  public:
    explicit Simulation(const SimScenario& scenario)
        : scenario_(scenario),
          executor_(scenario.executor),
          router_(0),
          rng_(scenario.seed) {
        if (scenario.fleet_size < 1) throw ScenarioError("fleet_size must be >= 1");
        if (scenario.index_size_gib <= 0.0 || scenario.server_bandwidth_gib_s <= 0.0)
            throw ScenarioError("index size and server bandwidth must be positive");
        if (scenario.tasks.empty()) throw ScenarioError("scenario has no tasks");
        slots_.resize(scenario.fleet_size);
    }

    std::pair<FleetTrace, SimSummary> run() {
        for (const auto& task : scenario_.tasks) router_.enqueue(task, 0.0);

        std::uniform_real_distribution<double> stagger(
            0.0, std::max(scenario_.start_stagger_max_seconds, 0.0));
        for (int s = 0; s < scenario_.fleet_size; ++s) {
            const double t = scenario_.start_stagger_max_seconds > 0.0 ? stagger(rng_) : 0.0;
            push(t, InternalEvent::Arrive, s, slots_[s].gen);
        }
        for (const auto& [slot, t] : scenario_.interruption.trace)
            if (slot >= 0 && slot < scenario_.fleet_size)
                push(t, InternalEvent::Interrupt, slot, kTraceGen);

        while (!events_.empty()) {
            const Event ev = events_.top();
            events_.pop();
            if (!is_valid(ev)) continue;  // stale events must not advance the clock
            now_ = std::max(now_, ev.t);
            dispatch(ev);
        }
        finish();
        return {std::move(trace_), summary_};
    }

  private:
    static constexpr std::uint64_t kTraceGen = ~0ull;

    void push(double t, InternalEvent type, int slot, std::uint64_t gen) {
        events_.push(Event{t, next_seq_++, type, slot, gen});
    }

    void emit(double t, int slot, EventKind kind, std::string payload = {}) {
        trace_.events.push_back(TraceEvent{t, slot, kind, std::move(payload)});
    }

    bool is_valid(const Event& ev) const {
        switch (ev.type) {
            case InternalEvent::Arrive:
                return ev.gen == slots_[ev.slot].gen;
            case InternalEvent::IndexShare:
                return ev.gen == load_epoch_;
            case InternalEvent::StageFinish:
                return ev.gen == slots_[ev.slot].gen &&
                       slots_[ev.slot].state == SlotState::Busy;
            case InternalEvent::Interrupt: {
                const WorkerSlot& w = slots_[ev.slot];
                if (ev.gen != kTraceGen && ev.gen != w.gen) return false;
                return w.state == SlotState::Loading || w.state == SlotState::Idle ||
                       w.state == SlotState::Busy;
            }
            case InternalEvent::Poke:
                return true;
        }
        return false;
    }

    void dispatch(const Event& ev) {
        switch (ev.type) {
            case InternalEvent::Arrive: on_arrive(ev); break;
            case InternalEvent::IndexShare: on_index_share(ev); break;
            case InternalEvent::StageFinish: on_stage_finish(ev); break;
            case InternalEvent::Interrupt: on_interrupt(ev); break;
            case InternalEvent::Poke: on_poke(); break;
        }
    }

    // ---- index distribution (fair-share processor sharing) ----

    double loader_rate() const {
        double rate = scenario_.server_bandwidth_gib_s /
                      static_cast<double>(std::max<std::size_t>(loaders_.size(), 1));
        if (scenario_.per_worker_bandwidth_gib_s > 0.0)
            rate = std::min(rate, scenario_.per_worker_bandwidth_gib_s);
        return rate;
    }

    void advance_loaders(double t) {
        const double dt = t - loaders_updated_;
        if (dt > 0.0 && !loaders_.empty()) {
            const double delivered = dt * loader_rate();
            for (auto& [slot, remaining] : loaders_) remaining -= delivered;
        }
        loaders_updated_ = t;
    }

    void reschedule_loaders() {
        ++load_epoch_;
        if (loaders_.empty()) return;
        double min_remaining = std::numeric_limits<double>::infinity();
        for (const auto& [slot, remaining] : loaders_)
            min_remaining = std::min(min_remaining, remaining);
        const double eta = std::max(min_remaining, 0.0) / loader_rate();
        push(now_ + eta, InternalEvent::IndexShare, -1, load_epoch_);
    }

    void on_index_share(const Event& ev) {
        if (ev.gen != load_epoch_) return;
        advance_loaders(now_);
        std::vector<int> done;
        for (const auto& [slot, remaining] : loaders_)
            if (remaining <= 1e-9) done.push_back(slot);
        std::sort(done.begin(), done.end());
        for (int slot : done) {
            loaders_.erase(slot);
            WorkerSlot& w = slots_[slot];
            emit(now_, slot, EventKind::IndexLoaded,
                 w.is_replacement ? "replacement" : "initial");
            if (w.is_replacement)
                summary_.wasted_seconds += now_ - w.incarnation_start;
            else
                summary_.init_index_loaded_seconds =
                    std::max(summary_.init_index_loaded_seconds, now_);
            w.state = SlotState::Idle;
            try_lease(slot);
        }
        reschedule_loaders();
    }

    // ---- worker lifecycle ----

    void on_arrive(const Event& ev) {
        WorkerSlot& w = slots_[ev.slot];
        if (ev.gen != w.gen) return;
        w.state = SlotState::Loading;
        w.incarnation_start = now_;
        ++w.incarnations;
        ++total_initializations_;
        emit(now_, ev.slot, EventKind::WorkerStart,
             w.is_replacement ? "replacement" : "initial");
        schedule_poisson_interrupt(ev.slot);
        advance_loaders(now_);
        loaders_[ev.slot] = scenario_.index_size_gib;
        reschedule_loaders();
    }

    void schedule_poisson_interrupt(int slot) {
        if (!scenario_.interruption.trace.empty()) return;
        const double rate = scenario_.interruption.poisson_rate_per_instance_hour;
        if (rate <= 0.0) return;
        std::exponential_distribution<double> exp_dt(rate / 3600.0);
        push(now_ + exp_dt(rng_), InternalEvent::Interrupt, slot, slots_[slot].gen);
    }

    void stop_worker(int slot, const char* payload) {
        WorkerSlot& w = slots_[slot];
        summary_.total_instance_seconds += now_ - w.incarnation_start;
        w.state = SlotState::Stopped;
        ++w.gen;
        emit(now_, slot, EventKind::WorkerStop, payload);
    }

    void on_interrupt(const Event& ev) {
        WorkerSlot& w = slots_[ev.slot];
        if (ev.gen != kTraceGen && ev.gen != w.gen) return;
        if (w.state == SlotState::Stopped || w.state == SlotState::NotStarted) return;

        ++summary_.interruptions;
        std::string payload = "idle";
        if (w.state == SlotState::Busy) {
            // Two-minute notice: the lease goes straight back, elapsed task
            // time is waste, partial outputs are discarded.
            summary_.wasted_seconds += now_ - w.task_start;
            router_.queue(w.queue_id).nack(w.lease.receipt, now_);
            payload = w.lease.task.sra_id;
        } else if (w.state == SlotState::Loading) {
            advance_loaders(now_);
            loaders_.erase(ev.slot);
            reschedule_loaders();
            payload = "loading";
        }
        emit(now_, ev.slot, EventKind::Interrupted, payload);
        stop_worker(ev.slot, "interrupted");

        if (router_.queue(QueueId::Small).pending_count() > 0) {
            ++summary_.replacements;
            w.is_replacement = true;
            push(now_ + scenario_.provisioning_delay_seconds, InternalEvent::Arrive,
                 ev.slot, w.gen);
        }
        push(now_, InternalEvent::Poke, -1, 0);
    }

    // ---- task processing ----

    std::vector<StagePlanEntry> build_plan(const TaskSpec& task) {
        std::vector<StagePlanEntry> plan;
        constexpr Stage kStages[] = {Stage::Prefetch, Stage::Convert, Stage::Align,
                                     Stage::SortNormalize, Stage::Upload};
        for (Stage stage : kStages) {
            StageOutcome outcome = executor_.run_stage(stage, task, scenario_.policy, nullptr);
            StagePlanEntry entry;
            entry.stage = stage;
            entry.duration = outcome.wall_seconds;
            entry.status = outcome.status;
            entry.final_mapping_rate = outcome.final_mapping_rate;
            plan.push_back(entry);
            if (outcome.status != StageOutcome::Status::Ok) break;
        }
        return plan;
    }

    void try_lease(int slot) {
        WorkerSlot& w = slots_[slot];
        if (w.state != SlotState::Idle) return;
        for (;;) {
            auto leased = router_.lease(kHugeVisibility, now_);
            if (!leased) break;
            if (ledger_.already_processed(leased->second.task.sra_id)) {
                router_.queue(leased->first).ack(leased->second.receipt, now_);
                continue;
            }
            w.queue_id = leased->first;
            w.lease = leased->second;
            w.task_start = now_;
            w.stage_index = 0;
            w.plan = build_plan(w.lease.task);
            w.state = SlotState::Busy;
            emit(now_, slot, EventKind::TaskStart, w.lease.task.sra_id);
            push(now_ + w.plan.front().duration, InternalEvent::StageFinish, slot, w.gen);
            return;
        }
        if (router_.queue(QueueId::Small).pending_count() == 0) {
            stop_worker(slot, "drained");
            push(now_, InternalEvent::Poke, -1, 0);
        }
        // else: stay idle until a requeue or completion pokes us
    }

    void on_stage_finish(const Event& ev) {
        WorkerSlot& w = slots_[ev.slot];
        if (ev.gen != w.gen || w.state != SlotState::Busy) return;
        const StagePlanEntry& entry = w.plan[w.stage_index];
        const TaskSpec& task = w.lease.task;

        if (entry.status == StageOutcome::Status::Ok ||
            entry.status == StageOutcome::Status::EarlyStopped) {
            if (entry.stage == Stage::Align)
                summary_.total_align_seconds += entry.duration;
            emit(now_, ev.slot, EventKind::StageDone,
                 std::string(stage_name(entry.stage)) + ":" + task.sra_id);
        }

        const bool last = w.stage_index + 1 >= w.plan.size();
        if (entry.status == StageOutcome::Status::Ok && !last) {
            ++w.stage_index;
            push(now_ + w.plan[w.stage_index].duration, InternalEvent::StageFinish,
                 ev.slot, w.gen);
            return;
        }

        if (entry.status == StageOutcome::Status::Ok ||
            entry.status == StageOutcome::Status::EarlyStopped) {
            LedgerRecord rec;
            rec.sra_id = task.sra_id;
            rec.status = TaskStatus::Completed;
            rec.worker_id = "w" + std::to_string(ev.slot);
            rec.attempt = w.lease.attempt;
            rec.terminated_early = entry.status == StageOutcome::Status::EarlyStopped;
            std::optional<double> task_rate;
            for (std::size_t i = 0; i <= w.stage_index; ++i) {
                rec.stage_timings.emplace_back(stage_name(w.plan[i].stage),
                                               w.plan[i].duration);
                if (w.plan[i].final_mapping_rate)
                    task_rate = w.plan[i].final_mapping_rate;
            }
            rec.final_mapping_rate = task_rate;
            ledger_.record(rec);
            if (rec.terminated_early) {
                ++summary_.early_stopped;
                emit(now_, ev.slot, EventKind::EarlyStop, task.sra_id);
            }
            if (task_rate) {
                mapping_rate_sum_ += *task_rate;
                ++mapping_rate_count_;
            }
            ++summary_.files_completed;
            router_.queue(w.queue_id).ack(w.lease.receipt, now_);
            emit(now_, ev.slot, EventKind::TaskComplete, task.sra_id);
            push(now_, InternalEvent::Poke, -1, 0);  // idle workers may now drain
        } else {
            // Stage failed after consuming its duration.
            const bool terminal = w.lease.attempt >= scenario_.retry_limit;
            if (terminal) {
                LedgerRecord rec;
                rec.sra_id = task.sra_id;
                rec.status = TaskStatus::Failed;
                rec.worker_id = "w" + std::to_string(ev.slot);
                rec.attempt = w.lease.attempt;
                ledger_.record(rec);
                ++summary_.files_failed;
                router_.queue(w.queue_id).ack(w.lease.receipt, now_);
                emit(now_, ev.slot, EventKind::TaskFailed,
                     task.sra_id + ":" + std::string(stage_name(entry.stage)));
            } else {
                router_.queue(w.queue_id).nack(w.lease.receipt, now_);
                push(now_, InternalEvent::Poke, -1, 0);
            }
        }
        w.state = SlotState::Idle;
        try_lease(ev.slot);
    }

    void on_poke() {
        for (int s = 0; s < scenario_.fleet_size; ++s)
            if (slots_[s].state == SlotState::Idle) try_lease(s);
    }

    void finish() {
        for (int s = 0; s < scenario_.fleet_size; ++s)
            if (slots_[s].state != SlotState::Stopped &&
                slots_[s].state != SlotState::NotStarted)
                stop_worker(s, "end");
        std::stable_sort(trace_.events.begin(), trace_.events.end(),
                         [](const TraceEvent& a, const TraceEvent& b) {
                             return a.timestamp < b.timestamp;
                         });
        if (!trace_.events.empty())
            summary_.makespan_seconds = trace_.events.back().timestamp;
        summary_.node_hours = summary_.total_instance_seconds / 3600.0;
        summary_.wasted_fraction =
            summary_.total_instance_seconds > 0.0
                ? summary_.wasted_seconds / summary_.total_instance_seconds
                : 0.0;
        summary_.avg_mapping_rate =
            mapping_rate_count_ > 0 ? mapping_rate_sum_ / mapping_rate_count_ : 0.0;

        CostInputs inputs;
        inputs.price_per_hour = scenario_.instance.on_demand_price_per_hour;
        inputs.spot_discount = scenario_.spot_discount;
        inputs.transfer_price_per_gb = scenario_.transfer_price_per_gb;
        inputs.index_size_gib = scenario_.index_size_gib;
        inputs.storage_price_gb_month = scenario_.storage_price_gb_month;
        inputs.disk_gib = scenario_.disk_gib;
        inputs.fleet_size = scenario_.fleet_size;
        summary_.cost = cost_of(inputs, summary_.total_instance_seconds,
                                total_initializations_, summary_.makespan_seconds,
                                summary_.files_completed);
    }

    const SimScenario& scenario_;
    SyntheticExecutor executor_;
    QueueRouter router_;  // single-queue: sim routes by worker availability
    Ledger ledger_;
    std::mt19937_64 rng_;
    std::priority_queue<Event, std::vector<Event>, EventLater> events_;
    std::uint64_t next_seq_ = 0;
    double now_ = 0.0;
    std::vector<WorkerSlot> slots_;
    std::map<int, double> loaders_;  // slot -> remaining GiB
    double loaders_updated_ = 0.0;
    std::uint64_t load_epoch_ = 0;
    std::uint64_t total_initializations_ = 0;
    double mapping_rate_sum_ = 0.0;
    std::uint64_t mapping_rate_count_ = 0;
    FleetTrace trace_;
    SimSummary summary_;
};

}  // namespace

std::pair<FleetTrace, SimSummary> simulate(const SimScenario& scenario) {
    Simulation simulation(scenario);
    return simulation.run();
}

std::vector<TimelineRow> emit_timeline(const FleetTrace& trace, double bucket_seconds) {
    std::vector<TimelineRow> rows;
    if (trace.events.empty() || bucket_seconds <= 0.0) return rows;
    const double end = trace.events.back().timestamp;
    std::size_t i = 0;
    int running = 0;
    std::uint64_t completed = 0;
    for (double t = 0.0; t <= end + bucket_seconds * 0.5; t += bucket_seconds) {
        while (i < trace.events.size() && trace.events[i].timestamp <= t) {
            switch (trace.events[i].kind) {
                case EventKind::WorkerStart: ++running; break;
                case EventKind::WorkerStop: --running; break;
                case EventKind::TaskComplete: ++completed; break;
                default: break;
            }
            ++i;
        }
        rows.push_back(TimelineRow{t, running, completed});
    }
    return rows;
}

void write_trace_csv(const std::string& path, const FleetTrace& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace: " + path);
    out << "timestamp,worker_id,kind,payload\n";
    char buffer[64];
    for (const auto& ev : trace.events) {
        std::snprintf(buffer, sizeof(buffer), "%.6f", ev.timestamp);
        out << buffer << ',' << ev.worker_id << ',' << event_kind_name(ev.kind) << ','
            << ev.payload << '\n';
    }
}

FleetTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read trace: " + path);
    FleetTrace trace;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string ts, worker, kind, payload;
        std::getline(ss, ts, ',');
        std::getline(ss, worker, ',');
        std::getline(ss, kind, ',');
        std::getline(ss, payload);
        TraceEvent ev;
        ev.timestamp = std::stod(ts);
        ev.worker_id = std::stoi(worker);
        ev.payload = payload;
        bool found = false;
        for (int k = 0; k <= static_cast<int>(EventKind::WorkerStop); ++k) {
            if (kind == event_kind_name(static_cast<EventKind>(k))) {
                ev.kind = static_cast<EventKind>(k);
                found = true;
                break;
            }
        }
        if (!found) throw std::runtime_error("unknown event kind in trace: " + kind);
        trace.events.push_back(std::move(ev));
    }
    return trace;
}

void write_timeline_csv(const std::string& path, const std::vector<TimelineRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write timeline: " + path);
    out << "t,running_instances,cumulative_completed\n";
    for (const auto& row : rows)
        out << row.t << ',' << row.running_instances << ',' << row.cumulative_completed
            << '\n';
}

SimScenario load_scenario_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ScenarioError("scenario parse error: " + std::string(e.what()));
    }

    SimScenario s;
    s.fleet_size = j.value("fleet_size", 1);
    s.seed = j.value("seed", 0ull);
    s.index_size_gib = j.value("index_size_gib", 29.5);
    s.server_bandwidth_gib_s = j.value("server_bandwidth_gib_s", 1.756);
    s.per_worker_bandwidth_gib_s = j.value("per_worker_bandwidth_gib_s", 0.0);
    s.spot_discount = j.value("spot_discount", 0.55);
    s.storage_price_gb_month = j.value("storage_price_gb_month", 0.08);
    s.transfer_price_per_gb = j.value("transfer_price_per_gb", 0.01);
    s.disk_gib = j.value("disk_gib", 550.0);
    s.provisioning_delay_seconds = j.value("provisioning_delay_seconds", 180.0);
    s.start_stagger_max_seconds = j.value("start_stagger_max_seconds", 300.0);
    s.retry_limit = j.value("retry_limit", 3u);

    if (j.contains("instance")) {
        const auto& ji = j["instance"];
        s.instance.name = ji.value("name", "r7a.2xlarge");
        s.instance.vcpus = ji.value("vcpus", 8);
        s.instance.physical_cores = ji.value("cores", 8);
        s.instance.smt = s.instance.vcpus > s.instance.physical_cores;
        s.instance.ram_gib = ji.value("ram_gib", 64.0);
        s.instance.on_demand_price_per_hour = ji.value("price_per_hour", 0.6086);
    }

    if (j.contains("interruption")) {
        const auto& jint = j["interruption"];
        s.interruption.poisson_rate_per_instance_hour =
            jint.value("poisson_rate_per_instance_hour", 0.0);
        if (jint.contains("trace"))
            for (const auto& row : jint["trace"])
                s.interruption.trace.emplace_back(row.at(0).get<int>(),
                                                  row.at(1).get<double>());
    }

    if (j.contains("policy")) {
        const auto& jp = j["policy"];
        s.policy.threshold = jp.value("threshold", 0.30);
        s.policy.min_processed_fraction = jp.value("min_processed_fraction", 0.10);
        s.policy.poll_interval_seconds = jp.value("poll_interval_seconds", 30.0);
    }

    if (j.contains("executor")) {
        const auto& je = j["executor"];
        s.executor.threads = je.value("threads", 8);
        s.executor.base_throughput_bytes_per_thread_second =
            je.value("base_throughput_bytes_per_thread_second", 2.0 * 1024 * 1024);
        s.executor.prefetch_seconds_per_gib = je.value("prefetch_seconds_per_gib", 20.0);
        s.executor.convert_seconds_per_gib = je.value("convert_seconds_per_gib", 60.0);
        s.executor.upload_seconds_per_gib = je.value("upload_seconds_per_gib", 15.0);
        s.executor.sort_normalize_fraction_of_align =
            je.value("sort_normalize_fraction_of_align", 0.05);
        s.executor.default_mapping_rate = je.value("default_mapping_rate", 0.8);
        s.executor.noise_std = je.value("noise_std", 0.0);
        s.executor.trajectory_ramp_fraction = je.value("trajectory_ramp_fraction", 0.0);
        s.executor.reads_per_byte = je.value("reads_per_byte", 0.01);
        s.executor.failure_probability = je.value("failure_probability", 0.0);
        s.executor.oom_probability = je.value("oom_probability", 0.0);
        if (je.contains("scaling")) {
            const auto& js = je["scaling"];
            s.executor.scaling.parallel_fraction = js.value("parallel_fraction", 0.9873);
            s.executor.scaling.smt_penalty = js.value("smt_penalty", 0.55);
            s.executor.scaling.physical_cores = js.value("physical_cores", 0);
        }
        if (je.contains("tissue_mapping_rate"))
            for (const auto& [tissue, rate] : je["tissue_mapping_rate"].items())
                s.executor.tissue_mapping_rate[tissue] = rate.get<double>();
    }
    s.executor.seed = s.seed;

    if (j.contains("tasks")) {
        const auto& jt = j["tasks"];
        if (jt.contains("manifest")) {
            auto loaded = load_manifest_csv(jt["manifest"].get<std::string>());
            s.tasks = std::move(loaded.admitted);
        } else if (jt.contains("synthetic")) {
            const auto& jsyn = jt["synthetic"];
            SyntheticTasksSpec spec;
            spec.count = jsyn.value("count", 0);
            spec.size_bytes_min = jsyn.value("size_bytes_min", spec.size_bytes_min);
            spec.size_bytes_max = jsyn.value("size_bytes_max", spec.size_bytes_max);
            spec.reads_per_byte = jsyn.value("reads_per_byte", spec.reads_per_byte);
            spec.tissue = jsyn.value("tissue", spec.tissue);
            if (jsyn.contains("rate_mix")) {
                spec.rate_mix.clear();
                for (const auto& row : jsyn["rate_mix"])
                    spec.rate_mix.emplace_back(row.at("rate").get<double>(),
                                               row.at("fraction").get<double>());
            }
            s.tasks = generate_tasks(spec, s.seed);
        }
    }
    if (s.tasks.empty()) throw ScenarioError("scenario defines no tasks: " + path);
    return s;
}

}  // namespace alignfleet::sim
