#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "alignfleet/executor.hpp"
#include "alignfleet/perf.hpp"
#include "alignfleet/progress.hpp"
#include "alignfleet/queue.hpp"

namespace alignfleet::sim {

struct InterruptionModel {
    double poisson_rate_per_instance_hour = 0.0;
    std::vector<std::pair<int, double>> trace;  // (worker slot, timestamp); wins over Poisson
};

struct SyntheticTasksSpec {
    int count = 0;
    std::uint64_t size_bytes_min = 500ull * 1000 * 1000;
    std::uint64_t size_bytes_max = 5ull * 1000 * 1000 * 1000;
    // Final-mapping-rate mix; fractions should sum to 1. Assignment is a
    // seeded shuffle over exact proportional counts.
    std::vector<std::pair<double, double>> rate_mix = {{0.85, 1.0}};  // (rate, fraction)
    double reads_per_byte = 0.01;
    std::string tissue = "synthetic";
};

std::vector<TaskSpec> generate_tasks(const SyntheticTasksSpec& spec, std::uint64_t seed);

struct SimScenario {
    int fleet_size = 1;
    InstanceType instance;
    InterruptionModel interruption;
    double index_size_gib = 29.5;
    double server_bandwidth_gib_s = 1.756;
    double per_worker_bandwidth_gib_s = 0.0;  // 0 = uncapped
    std::vector<TaskSpec> tasks;
    SyntheticExecutorConfig executor;  // scaling, stage-time and trajectory model
    EarlyStopPolicy policy;
    double spot_discount = 0.55;
    double storage_price_gb_month = 0.08;
    double transfer_price_per_gb = 0.01;
    double disk_gib = 550.0;
    std::uint64_t seed = 0;
    double provisioning_delay_seconds = 180.0;
    double start_stagger_max_seconds = 300.0;
    std::uint32_t retry_limit = 3;
};

enum class EventKind {
    WorkerStart,
    IndexLoaded,
    TaskStart,
    StageDone,
    EarlyStop,
    Interrupted,
    TaskComplete,
    TaskFailed,
    WorkerStop,
};

const char* event_kind_name(EventKind kind);

struct TraceEvent {
    double timestamp = 0.0;
    int worker_id = 0;
    EventKind kind = EventKind::WorkerStart;
    std::string payload;
};

struct FleetTrace {
    std::vector<TraceEvent> events;
};

struct CostBreakdown {
    double compute = 0.0;
    double storage = 0.0;
    double transfer = 0.0;
    double total = 0.0;
    double per_file = 0.0;
};

struct SimSummary {
    double node_hours = 0.0;
    std::uint64_t files_completed = 0;
    std::uint64_t files_failed = 0;
    std::uint64_t early_stopped = 0;
    std::uint64_t interruptions = 0;
    std::uint64_t replacements = 0;
    double total_instance_seconds = 0.0;
    double wasted_seconds = 0.0;
    double wasted_fraction = 0.0;
    double makespan_seconds = 0.0;
    double init_index_loaded_seconds = 0.0;  // when the initial fleet finished loading
    double avg_mapping_rate = 0.0;
    double total_align_seconds = 0.0;
    CostBreakdown cost;

    std::string to_json() const;
};

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Time for `concurrent_workers` simultaneous receivers to pull the index when
// the server bandwidth is shared fairly.
double index_distribution_time(double index_size_gib, int concurrent_workers,
                               double server_bandwidth_gib_s,
                               double per_worker_cap_gib_s);

std::pair<FleetTrace, SimSummary> simulate(const SimScenario& scenario);

struct CostInputs {
    double price_per_hour = 0.0;
    double spot_discount = 0.0;
    double transfer_price_per_gb = 0.0;
    double index_size_gib = 0.0;
    double storage_price_gb_month = 0.0;
    double disk_gib = 0.0;
    int fleet_size = 0;
};

CostBreakdown cost_of(const CostInputs& inputs, double total_instance_seconds,
                      std::uint64_t worker_initializations, double duration_seconds,
                      std::uint64_t files_completed);

// Step-function sampling of running instances and cumulative completions.
struct TimelineRow {
    double t = 0.0;
    int running_instances = 0;
    std::uint64_t cumulative_completed = 0;
};
std::vector<TimelineRow> emit_timeline(const FleetTrace& trace, double bucket_seconds);

void write_trace_csv(const std::string& path, const FleetTrace& trace);
FleetTrace read_trace_csv(const std::string& path);
void write_timeline_csv(const std::string& path, const std::vector<TimelineRow>& rows);

SimScenario load_scenario_json(const std::string& path);

}  // namespace alignfleet::sim
