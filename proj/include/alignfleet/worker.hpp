#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <string>

#include "alignfleet/executor.hpp"
#include "alignfleet/progress.hpp"
#include "alignfleet/queue.hpp"

namespace alignfleet {

enum class WorkerPhase {
    Provisioning,
    LoadingIndex,
    Polling,
    Prefetch,
    Convert,
    Align,
    SortNormalize,
    Upload,
    Draining,
    Terminated,
};

const char* worker_phase_name(WorkerPhase phase);

struct ResourceEnvelope {
    double disk_capacity_gib = 550.0;
    double ram_gib = 64.0;
    double index_size_gib = 29.5;
    double fastq_expansion_default = 7.5;
    double fastq_expansion_max = 17.0;
    double sort_memory_default_gib = 2.0;
    double sort_memory_max_gib = 20.5;
};

// Peak working-set estimate: SRA + FASTQ (expansion x SRA) + BAM (bounded by
// the FASTQ size).
double required_disk_gib(const TaskSpec& task, const ResourceEnvelope& envelope);

struct WorkerReport {
    std::string worker_id;
    std::uint64_t tasks_completed = 0;
    std::uint64_t tasks_failed = 0;
    std::uint64_t terminated_early = 0;
    std::uint64_t skipped_already_processed = 0;
    std::uint64_t disk_rejections = 0;
    std::map<std::string, double> stage_total_seconds;
    double index_load_seconds = 0.0;
    double wasted_seconds = 0.0;
    bool interrupted = false;

    std::string to_json() const;
};

struct WorkerConfig {
    std::string worker_id = "worker-0";
    EarlyStopPolicy policy;
    ResourceEnvelope envelope;
    std::uint32_t retry_limit = 3;
    double index_load_seconds = 0.0;  // modeled; subprocess mode may run a command
    double visibility_seconds = 3600.0;
    double lease_poll_sleep_seconds = 0.01;
};

// One worker: load index, drain the router, record every outcome in the
// ledger. `interrupt` models the spot termination notice; once set, the
// current lease is returned to the queue, partial work is counted as waste
// and the worker drains.
WorkerReport run_worker(QueueRouter& router, Ledger& ledger, StageExecutor& executor,
                        const WorkerConfig& config,
                        const std::atomic<bool>* interrupt = nullptr);

}  // namespace alignfleet
