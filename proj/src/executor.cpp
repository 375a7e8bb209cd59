#include "alignfleet/executor.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <fstream>
#include <random>
#include <thread>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace alignfleet {
namespace {

constexpr double kGib = 1024.0 * 1024.0 * 1024.0;

double monotonic_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& key) {
    std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

std::vector<ProgressSample> synth_progress(const TrajectorySpec& spec,
                                           double poll_interval_seconds) {
    std::vector<ProgressSample> samples;
    if (spec.total_reads == 0 || spec.read_speed_reads_per_second <= 0.0 ||
        poll_interval_seconds <= 0.0)
        return samples;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    const double total_seconds =
        static_cast<double>(spec.total_reads) / spec.read_speed_reads_per_second;
    const std::size_t steps = static_cast<std::size_t>(
        std::ceil(total_seconds / poll_interval_seconds - 1e-9));
    samples.reserve(steps);
    for (std::size_t k = 1; k <= steps; ++k) {
        const double t = std::min(k * poll_interval_seconds, total_seconds);
        const double progress = t / total_seconds;
        double mean = spec.final_mapping_rate;
        if (spec.ramp_fraction > 0.0) {
            // linear ramp from (1-ramp_fraction)*final toward final
            mean = spec.final_mapping_rate * (1.0 - spec.ramp_fraction * (1.0 - progress));
        }
        double rate = mean + (spec.noise_std > 0.0 ? noise(rng) : 0.0);
        rate = std::clamp(rate, 0.0, 1.0);
        ProgressSample sample;
        sample.elapsed_seconds = t;
        sample.reads_processed = static_cast<std::uint64_t>(
            std::llround(progress * static_cast<double>(spec.total_reads)));
        // Split the rate 90/10 between unique and multi mapped.
        sample.pct_unique_mapped = rate * 0.9;
        sample.pct_multi_mapped = rate * 0.1;
        samples.push_back(sample);
    }
    if (!samples.empty()) samples.back().reads_processed = spec.total_reads;
    return samples;
}

std::string substitute_placeholders(std::string templ,
                                    const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        const std::string needle = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = templ.find(needle, pos)) != std::string::npos) {
            templ.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return templ;
}

ExecResult exec_stage(const std::string& command, double timeout_seconds,
                      const std::function<bool()>& kill_requested,
                      double poll_interval_seconds, double grace_seconds) {
    ExecResult result;
    const double start = monotonic_seconds();
    const pid_t pid = fork();
    if (pid < 0) {
        result.kind = ExecResult::Kind::SpawnFailure;
        return result;
    }
    if (pid == 0) {
        setpgid(0, 0);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid);  // may fail if the child already execed; harmless

    bool killing = false;
    double kill_start = 0.0;
    ExecResult::Kind pending_kind = ExecResult::Kind::Exited;
    for (;;) {
        int status = 0;
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) {
            result.kind = killing ? pending_kind : ExecResult::Kind::Exited;
            result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
            result.wall_seconds = monotonic_seconds() - start;
            return result;
        }
        if (r < 0 && errno != EINTR) {
            result.kind = ExecResult::Kind::SpawnFailure;
            result.wall_seconds = monotonic_seconds() - start;
            return result;
        }
        const double elapsed = monotonic_seconds() - start;
        if (!killing) {
            if (timeout_seconds > 0.0 && elapsed >= timeout_seconds) {
                killing = true;
                pending_kind = ExecResult::Kind::Timeout;
            } else if (kill_requested && kill_requested()) {
                killing = true;
                pending_kind = ExecResult::Kind::KilledByPolicy;
            }
            if (killing) {
                kill_start = monotonic_seconds();
                kill(-pid, SIGTERM);
            }
        } else if (monotonic_seconds() - kill_start >= grace_seconds) {
            kill(-pid, SIGKILL);
        }
        std::this_thread::sleep_for(
            std::chrono::duration<double>(std::max(poll_interval_seconds, 0.001)));
    }
}

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::Prefetch: return "prefetch";
        case Stage::Convert: return "convert";
        case Stage::Align: return "align";
        case Stage::SortNormalize: return "sort_normalize";
        case Stage::Upload: return "upload";
    }
    return "unknown";
}

SyntheticExecutor::SyntheticExecutor(SyntheticExecutorConfig config)
    : config_(std::move(config)) {}

double SyntheticExecutor::task_mapping_rate(const TaskSpec& task) const {
    if (task.final_mapping_rate) return *task.final_mapping_rate;
    auto it = config_.tissue_mapping_rate.find(task.tissue);
    if (it != config_.tissue_mapping_rate.end()) return it->second;
    return config_.default_mapping_rate;
}

TrajectorySpec SyntheticExecutor::trajectory_for(const TaskSpec& task) const {
    TrajectorySpec spec;
    spec.final_mapping_rate = task_mapping_rate(task);
    spec.total_reads = task.expected_total_reads.value_or(static_cast<std::uint64_t>(
        static_cast<double>(task.compressed_size_bytes) * config_.reads_per_byte));
    if (spec.total_reads == 0) spec.total_reads = 1;
    const double align = full_align_seconds(task);
    spec.read_speed_reads_per_second =
        static_cast<double>(spec.total_reads) / std::max(align, 1e-9);
    spec.noise_std = config_.noise_std;
    spec.ramp_fraction = config_.trajectory_ramp_fraction;
    spec.seed = mix_seed(config_.seed, task.sra_id);
    return spec;
}

double SyntheticExecutor::full_align_seconds(const TaskSpec& task) const {
    return align_duration(config_.scaling,
                          static_cast<double>(task.compressed_size_bytes),
                          config_.threads,
                          config_.base_throughput_bytes_per_thread_second);
}

double SyntheticExecutor::stage_seconds(Stage stage, const TaskSpec& task) const {
    const double gib = static_cast<double>(task.compressed_size_bytes) / kGib;
    switch (stage) {
        case Stage::Prefetch: return config_.prefetch_seconds_per_gib * gib;
        case Stage::Convert: return config_.convert_seconds_per_gib * gib;
        case Stage::Align: return full_align_seconds(task);
        case Stage::SortNormalize:
            return config_.sort_normalize_fraction_of_align * full_align_seconds(task);
        case Stage::Upload: return config_.upload_seconds_per_gib * gib;
    }
    return 0.0;
}

double SyntheticExecutor::estimate_total_seconds(const TaskSpec& task) const {
    double total = 0.0;
    for (int s = 0; s < kStageCount; ++s)
        total += stage_seconds(static_cast<Stage>(s), task);
    return total;
}

StageOutcome SyntheticExecutor::run_stage(Stage stage, const TaskSpec& task,
                                          const EarlyStopPolicy& policy,
                                          const std::atomic<bool>* interrupt) {
    (void)interrupt;  // synthetic stages complete instantaneously in wall time
    StageOutcome outcome;
    outcome.wall_seconds = stage_seconds(stage, task);

    if (config_.failure_probability > 0.0 || config_.oom_probability > 0.0) {
        std::mt19937_64 rng(mix_seed(config_.seed ^ 0xfa11, task.sra_id));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double draw = u(rng);
        if (stage == Stage::SortNormalize && draw < config_.oom_probability) {
            outcome.status = StageOutcome::Status::OutOfMemory;
            outcome.detail = "synthetic OOM during BAM sort";
            return outcome;
        }
        if (draw < config_.failure_probability) {
            outcome.status = StageOutcome::Status::RetryableFailure;
            outcome.detail = "synthetic transient failure";
            return outcome;
        }
    }

    if (stage == Stage::Align) {
        const TrajectorySpec traj = trajectory_for(task);
        const auto samples = synth_progress(traj, policy.poll_interval_seconds);
        const auto result = supervise(samples, policy, traj.total_reads);
        outcome.final_mapping_rate =
            result.decision.observed_rate.value_or(traj.final_mapping_rate);
        if (result.decision.verdict == Verdict::Terminate) {
            outcome.status = StageOutcome::Status::EarlyStopped;
            outcome.consumed_fraction = result.consumed_fraction;
            outcome.wall_seconds *= result.consumed_fraction;
        }
    }
    return outcome;
}

std::optional<ProgressSample> tail_progress_file(const std::string& path,
                                                 const ColumnMap& columns) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::optional<ProgressSample> last;
    std::string line;
    while (std::getline(in, line))
        if (auto sample = parse_progress_line(line, columns)) last = sample;
    return last;
}

SubprocessExecutor::SubprocessExecutor(SubprocessExecutorConfig config)
    : config_(std::move(config)) {}

StageOutcome SubprocessExecutor::run_stage(Stage stage, const TaskSpec& task,
                                           const EarlyStopPolicy& policy,
                                           const std::atomic<bool>* interrupt) {
    StageOutcome outcome;
    auto it = config_.stage_commands.find(stage_name(stage));
    if (it == config_.stage_commands.end()) {
        outcome.status = StageOutcome::Status::SpawnFailure;
        outcome.detail = std::string("no command configured for stage ") + stage_name(stage);
        return outcome;
    }
    const std::string command = substitute_placeholders(
        it->second, {{"sra_id", task.sra_id},
                     {"workdir", config_.workdir},
                     {"threads", std::to_string(config_.threads)},
                     {"index_dir", config_.index_dir}});

    const std::string progress_path = config_.workdir + "/" + config_.progress_log_name;
    bool early_stop_fired = false;
    std::optional<double> last_rate;

    std::function<bool()> kill_hook;
    if (stage == Stage::Align) {
        kill_hook = [&]() {
            if (interrupt && interrupt->load()) return true;
            const auto sample = tail_progress_file(progress_path, config_.columns);
            if (!sample) return false;
            last_rate = mapping_rate(*sample);
            const auto decision = evaluate(policy, *sample, task.expected_total_reads);
            if (decision.verdict == Verdict::Terminate) {
                early_stop_fired = true;
                return true;
            }
            return false;
        };
    } else if (interrupt) {
        kill_hook = [interrupt]() { return interrupt->load(); };
    }

    const double poll = stage == Stage::Align ? policy.poll_interval_seconds : 0.05;
    const ExecResult result = exec_stage(command, config_.timeout_seconds, kill_hook,
                                         poll, config_.grace_seconds);
    outcome.wall_seconds = result.wall_seconds;
    outcome.final_mapping_rate = last_rate;
    switch (result.kind) {
        case ExecResult::Kind::Exited:
            outcome.status = result.exit_code == 0 ? StageOutcome::Status::Ok
                                                   : StageOutcome::Status::RetryableFailure;
            if (result.exit_code != 0)
                outcome.detail = "exit code " + std::to_string(result.exit_code);
            break;
        case ExecResult::Kind::KilledByPolicy:
            outcome.status = early_stop_fired ? StageOutcome::Status::EarlyStopped
                                              : StageOutcome::Status::RetryableFailure;
            if (!early_stop_fired) outcome.detail = "killed on interruption notice";
            break;
        case ExecResult::Kind::Timeout:
            outcome.status = StageOutcome::Status::Timeout;
            outcome.detail = "stage timeout";
            break;
        case ExecResult::Kind::SpawnFailure:
            outcome.status = StageOutcome::Status::SpawnFailure;
            outcome.detail = "spawn failure";
            break;
    }
    return outcome;
}

}  // namespace alignfleet
