#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "alignfleet/perf.hpp"
#include "alignfleet/progress.hpp"
#include "alignfleet/queue.hpp"

namespace alignfleet {

// Deterministic stand-in for an alignment run: constant mean mapping rate
// with seeded Gaussian noise, or an optional linear ramp toward the final
// rate.
struct TrajectorySpec {
    double final_mapping_rate = 0.9;
    double read_speed_reads_per_second = 1000.0;
    std::uint64_t total_reads = 0;
    double noise_std = 0.02;
    std::uint64_t seed = 0;
    double ramp_fraction = 0.0;  // 0 = constant mean; 1 = full linear ramp
};

std::vector<ProgressSample> synth_progress(const TrajectorySpec& spec,
                                           double poll_interval_seconds);

struct ExecResult {
    enum class Kind { Exited, Timeout, KilledByPolicy, SpawnFailure };
    Kind kind = Kind::SpawnFailure;
    int exit_code = -1;
    double wall_seconds = 0.0;
};

// Runs `command` under /bin/sh in its own process group. `kill_requested`,
// when set, is polled and triggers SIGTERM escalation to SIGKILL after the
// grace period.
ExecResult exec_stage(const std::string& command, double timeout_seconds,
                      const std::function<bool()>& kill_requested = {},
                      double poll_interval_seconds = 0.05,
                      double grace_seconds = 10.0);

// Replaces {sra_id}, {workdir}, {threads}, {index_dir} style placeholders.
std::string substitute_placeholders(std::string templ,
                                    const std::map<std::string, std::string>& values);

enum class Stage { Prefetch, Convert, Align, SortNormalize, Upload };
constexpr int kStageCount = 5;
const char* stage_name(Stage stage);

struct StageOutcome {
    enum class Status {
        Ok,
        EarlyStopped,
        RetryableFailure,
        OutOfMemory,
        SpawnFailure,
        Timeout,
    };
    Status status = Status::Ok;
    double wall_seconds = 0.0;
    std::optional<double> final_mapping_rate;  // Align only
    double consumed_fraction = 1.0;            // Align only
    std::string detail;
};

class StageExecutor {
  public:
    virtual ~StageExecutor() = default;
    virtual StageOutcome run_stage(Stage stage, const TaskSpec& task,
                                   const EarlyStopPolicy& policy,
                                   const std::atomic<bool>* interrupt) = 0;
};

// Models stage durations instead of running them: non-align stages scale with
// file size, Align comes from the thread-scaling model with early-stop applied
// over a synthesized progress trajectory.
struct SyntheticExecutorConfig {
    ScalingModel scaling;
    int threads = 8;
    double base_throughput_bytes_per_thread_second = 2.0 * 1024 * 1024;
    double prefetch_seconds_per_gib = 20.0;
    double convert_seconds_per_gib = 60.0;
    double upload_seconds_per_gib = 15.0;
    double sort_normalize_fraction_of_align = 0.05;
    double default_mapping_rate = 0.8;
    std::map<std::string, double> tissue_mapping_rate;  // mean final rate per tissue
    double noise_std = 0.0;
    double trajectory_ramp_fraction = 0.0;
    std::uint64_t seed = 0;
    double reads_per_byte = 0.01;  // expected reads estimate when manifest omits it
    double failure_probability = 0.0;
    double oom_probability = 0.0;
};

class SyntheticExecutor : public StageExecutor {
  public:
    explicit SyntheticExecutor(SyntheticExecutorConfig config);

    StageOutcome run_stage(Stage stage, const TaskSpec& task,
                           const EarlyStopPolicy& policy,
                           const std::atomic<bool>* interrupt) override;

    // Modeled durations, exposed for the simulator and visibility estimates.
    double stage_seconds(Stage stage, const TaskSpec& task) const;
    double full_align_seconds(const TaskSpec& task) const;
    double task_mapping_rate(const TaskSpec& task) const;
    TrajectorySpec trajectory_for(const TaskSpec& task) const;
    double estimate_total_seconds(const TaskSpec& task) const;

    const SyntheticExecutorConfig& config() const { return config_; }

  private:
    SyntheticExecutorConfig config_;
};

struct SubprocessExecutorConfig {
    std::map<std::string, std::string> stage_commands;  // keyed by stage_name()
    std::string workdir;
    std::string index_dir;
    int threads = 8;
    double timeout_seconds = 24.0 * 3600;
    double grace_seconds = 10.0;
    std::string progress_log_name = "Log.progress.out";
    ColumnMap columns;
};

// Launches external tools per stage; during Align it tails the progress log
// at the policy's poll interval and kills the child on a Terminate verdict.
class SubprocessExecutor : public StageExecutor {
  public:
    explicit SubprocessExecutor(SubprocessExecutorConfig config);

    StageOutcome run_stage(Stage stage, const TaskSpec& task,
                           const EarlyStopPolicy& policy,
                           const std::atomic<bool>* interrupt) override;

  private:
    SubprocessExecutorConfig config_;
};

// Last parseable sample in a progress log, if any.
std::optional<ProgressSample> tail_progress_file(const std::string& path,
                                                 const ColumnMap& columns);

}  // namespace alignfleet
