#include "alignfleet/worker.hpp"

#include <chrono>
#include <thread>

#include <json.hpp>

namespace alignfleet {
namespace {

constexpr double kGib = 1024.0 * 1024.0 * 1024.0;

double wall_now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

bool interrupted(const std::atomic<bool>* flag) { return flag && flag->load(); }

}  // namespace

const char* worker_phase_name(WorkerPhase phase) {
    switch (phase) {
        case WorkerPhase::Provisioning: return "provisioning";
        case WorkerPhase::LoadingIndex: return "loading_index";
        case WorkerPhase::Polling: return "polling";
        case WorkerPhase::Prefetch: return "prefetch";
        case WorkerPhase::Convert: return "convert";
        case WorkerPhase::Align: return "align";
        case WorkerPhase::SortNormalize: return "sort_normalize";
        case WorkerPhase::Upload: return "upload";
        case WorkerPhase::Draining: return "draining";
        case WorkerPhase::Terminated: return "terminated";
    }
    return "unknown";
}

double required_disk_gib(const TaskSpec& task, const ResourceEnvelope& envelope) {
    const double sra_gib = static_cast<double>(task.compressed_size_bytes) / kGib;
    const double expansion =
        task.fastq_expansion_factor.value_or(envelope.fastq_expansion_default);
    const double fastq_gib = expansion * sra_gib;
    const double bam_gib = fastq_gib;
    return sra_gib + fastq_gib + bam_gib;
}

std::string WorkerReport::to_json() const {
    nlohmann::json j;
    j["worker_id"] = worker_id;
    j["tasks_completed"] = tasks_completed;
    j["tasks_failed"] = tasks_failed;
    j["terminated_early"] = terminated_early;
    j["skipped_already_processed"] = skipped_already_processed;
    j["disk_rejections"] = disk_rejections;
    j["stage_total_seconds"] = stage_total_seconds;
    j["index_load_seconds"] = index_load_seconds;
    j["wasted_seconds"] = wasted_seconds;
    j["interrupted"] = interrupted;
    return j.dump(2);
}

WorkerReport run_worker(QueueRouter& router, Ledger& ledger, StageExecutor& executor,
                        const WorkerConfig& config, const std::atomic<bool>* interrupt) {
    WorkerReport report;
    report.worker_id = config.worker_id;

    // LoadingIndex
    report.index_load_seconds = config.index_load_seconds;
    if (interrupted(interrupt)) {
        report.interrupted = true;
        report.wasted_seconds += config.index_load_seconds;
        return report;
    }

    const double sort_memory_max = config.envelope.sort_memory_max_gib;
    constexpr Stage kStages[] = {Stage::Prefetch, Stage::Convert, Stage::Align,
                                 Stage::SortNormalize, Stage::Upload};

    for (;;) {
        if (interrupted(interrupt)) {
            report.interrupted = true;
            break;
        }
        auto leased = router.lease(config.visibility_seconds, wall_now());
        if (!leased) {
            if (router.empty()) break;
            std::this_thread::sleep_for(
                std::chrono::duration<double>(config.lease_poll_sleep_seconds));
            continue;
        }
        auto& [queue_id, message] = *leased;
        const TaskSpec& task = message.task;

        if (ledger.already_processed(task.sra_id)) {
            router.queue(queue_id).ack(message.receipt, wall_now());
            ++report.skipped_already_processed;
            continue;
        }

        // Disk admission
        const double disk_needed = required_disk_gib(task, config.envelope);
        if (disk_needed > config.envelope.disk_capacity_gib) {
            ++report.disk_rejections;
            if (router.double_queue_mode() && queue_id == QueueId::Small) {
                router.queue(queue_id).ack(message.receipt, wall_now());
                router.enqueue_to(QueueId::Large, task, wall_now());
            } else if (message.attempt >= config.retry_limit) {
                LedgerRecord rec;
                rec.sra_id = task.sra_id;
                rec.status = TaskStatus::Failed;
                rec.worker_id = config.worker_id;
                rec.attempt = message.attempt;
                ledger.record(rec);
                router.queue(queue_id).ack(message.receipt, wall_now());
                ++report.tasks_failed;
            } else {
                router.queue(queue_id).nack(message.receipt, wall_now());
            }
            continue;
        }

        // Memory admission: index plus sort buffer must fit before Align runs.
        const double sort_estimate =
            task.sort_memory_gib.value_or(config.envelope.sort_memory_default_gib);
        const bool memory_ok =
            config.envelope.ram_gib >=
            config.envelope.index_size_gib + std::min(sort_estimate, sort_memory_max);

        LedgerRecord rec;
        rec.sra_id = task.sra_id;
        rec.worker_id = config.worker_id;
        rec.attempt = message.attempt;
        rec.status = TaskStatus::InProgress;

        bool task_interrupted = false;
        bool failed = false;
        bool terminal_failure = false;
        std::string failure_detail;
        double task_elapsed = 0.0;

        for (const Stage stage : kStages) {
            if (interrupted(interrupt)) {
                task_interrupted = true;
                break;
            }
            if (stage == Stage::Align && !memory_ok) {
                failed = true;
                terminal_failure = true;
                failure_detail = "memory admission: index + sort exceeds RAM";
                break;
            }
            StageOutcome outcome =
                executor.run_stage(stage, task, config.policy, interrupt);
            if (interrupted(interrupt) &&
                outcome.status == StageOutcome::Status::RetryableFailure) {
                task_interrupted = true;
                task_elapsed += outcome.wall_seconds;
                break;
            }
            switch (outcome.status) {
                case StageOutcome::Status::Ok:
                case StageOutcome::Status::EarlyStopped:
                    rec.stage_timings.emplace_back(stage_name(stage),
                                                   outcome.wall_seconds);
                    report.stage_total_seconds[stage_name(stage)] +=
                        outcome.wall_seconds;
                    task_elapsed += outcome.wall_seconds;
                    if (outcome.final_mapping_rate)
                        rec.final_mapping_rate = outcome.final_mapping_rate;
                    break;
                case StageOutcome::Status::OutOfMemory:
                    failed = true;
                    terminal_failure = message.attempt >= config.retry_limit;
                    failure_detail = outcome.detail;
                    break;
                case StageOutcome::Status::RetryableFailure:
                case StageOutcome::Status::Timeout:
                case StageOutcome::Status::SpawnFailure:
                    failed = true;
                    terminal_failure = message.attempt >= config.retry_limit;
                    failure_detail = outcome.detail;
                    break;
            }
            if (failed) break;
            if (outcome.status == StageOutcome::Status::EarlyStopped) {
                rec.terminated_early = true;
                break;  // discard the sequence; no sort or upload
            }
            // Heartbeat between stages keeps long tasks leased.
            router.queue(queue_id).extend(message.receipt, config.visibility_seconds,
                                          wall_now());
        }

        if (task_interrupted) {
            // 2-minute notice path: return the task, count elapsed work as waste.
            router.queue(queue_id).nack(message.receipt, wall_now());
            report.wasted_seconds += task_elapsed;
            report.interrupted = true;
            break;
        }
        if (failed) {
            if (terminal_failure) {
                rec.status = TaskStatus::Failed;
                ledger.record(rec);
                router.queue(queue_id).ack(message.receipt, wall_now());
                ++report.tasks_failed;
            } else {
                router.queue(queue_id).nack(message.receipt, wall_now());
            }
            continue;
        }
        rec.status = TaskStatus::Completed;
        ledger.record(rec);
        router.queue(queue_id).ack(message.receipt, wall_now());
        ++report.tasks_completed;
        if (rec.terminated_early) ++report.terminated_early;
    }
    return report;
}

}  // namespace alignfleet
