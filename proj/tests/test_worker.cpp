#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include "alignfleet/worker.hpp"

using namespace alignfleet;

namespace {

TaskSpec make_task(const std::string& id, double rate, std::uint64_t size = 1'000'000'000) {
    TaskSpec task;
    task.sra_id = id;
    task.compressed_size_bytes = size;
    task.expected_total_reads = 10'000'000;
    task.final_mapping_rate = rate;
    return task;
}

SyntheticExecutorConfig executor_config() {
    SyntheticExecutorConfig config;
    config.scaling.parallel_fraction = 0.9873;
    config.scaling.smt_penalty = 1.0;
    config.noise_std = 0.0;
    return config;
}

WorkerConfig worker_config() {
    WorkerConfig config;
    config.lease_poll_sleep_seconds = 0.001;
    return config;
}

}  // namespace

TEST_CASE("required disk follows sra + fastq + bam") {
    ResourceEnvelope envelope;
    TaskSpec task;
    task.compressed_size_bytes = static_cast<std::uint64_t>(2.5 * 1024 * 1024 * 1024);
    CHECK(required_disk_gib(task, envelope) == doctest::Approx(2.5 * 16.0));  // 40 GiB

    // Worst-case outlier blows the default 550 GiB budget.
    task.compressed_size_bytes = 30ull * 1024 * 1024 * 1024;
    task.fastq_expansion_factor = 17.0;
    CHECK(required_disk_gib(task, envelope) == doctest::Approx(30.0 * 35.0));  // 1050
    CHECK(required_disk_gib(task, envelope) > envelope.disk_capacity_gib);
}

TEST_CASE("empty queue: report carries only the index load") {
    QueueRouter router;
    Ledger ledger;
    SyntheticExecutor executor(executor_config());
    auto config = worker_config();
    config.index_load_seconds = 840.0;
    const auto report = run_worker(router, ledger, executor, config);
    CHECK(report.tasks_completed == 0);
    CHECK(report.index_load_seconds == doctest::Approx(840.0));
}

TEST_CASE("happy path records all five stages in order") {
    QueueRouter router;
    Ledger ledger;
    router.enqueue(make_task("A", 0.9));
    SyntheticExecutor executor(executor_config());
    const auto report = run_worker(router, ledger, executor, worker_config());
    CHECK(report.tasks_completed == 1);
    const auto records = ledger.records();
    REQUIRE(records.size() == 1);
    REQUIRE(records[0].stage_timings.size() == 5);
    const char* expected[] = {"prefetch", "convert", "align", "sort_normalize", "upload"};
    for (int i = 0; i < 5; ++i) CHECK(records[0].stage_timings[i].first == expected[i]);
    CHECK(records[0].status == TaskStatus::Completed);
    CHECK_FALSE(records[0].terminated_early);
}

TEST_CASE("low-rate task completes terminated_early with truncated align time") {
    QueueRouter router;
    Ledger ledger;
    const auto task = make_task("A", 0.1);
    router.enqueue(task);
    SyntheticExecutor executor(executor_config());
    auto config = worker_config();
    config.policy.poll_interval_seconds = 0.5;  // keep the stop near the 10% gate
    const auto report = run_worker(router, ledger, executor, config);
    CHECK(report.tasks_completed == 1);
    CHECK(report.terminated_early == 1);
    const auto records = ledger.records();
    REQUIRE(records.size() == 1);
    CHECK(records[0].terminated_early);
    // Early-stop keeps the invariant that terminated tasks are sub-threshold.
    REQUIRE(records[0].final_mapping_rate.has_value());
    CHECK(*records[0].final_mapping_rate < 0.30);
    // Align ~ min_processed_fraction x full time; no sort/upload after the stop.
    const double full = executor.full_align_seconds(task);
    REQUIRE(records[0].stage_timings.size() == 3);
    CHECK(records[0].stage_timings[2].first == "align");
    CHECK(records[0].stage_timings[2].second < 0.15 * full);
}

TEST_CASE("already-processed tasks are skipped and acked") {
    QueueRouter router;
    Ledger ledger;
    LedgerRecord done;
    done.sra_id = "A";
    done.status = TaskStatus::Completed;
    ledger.record(done);
    router.enqueue(make_task("A", 0.9));
    SyntheticExecutor executor(executor_config());
    const auto report = run_worker(router, ledger, executor, worker_config());
    CHECK(report.tasks_completed == 0);
    CHECK(report.skipped_already_processed == 1);
    CHECK(router.empty());
}

TEST_CASE("disk admission: oversized task terminal-fails in single-queue mode") {
    QueueRouter router;
    Ledger ledger;
    auto task = make_task("BIG", 0.9, 30ull * 1024 * 1024 * 1024);
    task.fastq_expansion_factor = 17.0;
    router.enqueue(task);
    SyntheticExecutor executor(executor_config());
    const auto report = run_worker(router, ledger, executor, worker_config());
    CHECK(report.tasks_failed == 1);
    CHECK(report.disk_rejections >= 1);
    CHECK(ledger.latest_status("BIG") == TaskStatus::Failed);
    CHECK(router.empty());
}

TEST_CASE("disk admission: double-queue mode reroutes to the large queue") {
    QueueRouter router(10ull * 1024 * 1024 * 1024);
    Ledger ledger;
    auto task = make_task("BIG", 0.9, 5ull * 1024 * 1024 * 1024);
    task.fastq_expansion_factor = 17.0;  // 175 GiB needed
    router.enqueue(task);                // below threshold: lands small
    SyntheticExecutor executor(executor_config());
    auto config = worker_config();
    config.envelope.disk_capacity_gib = 100.0;  // small-queue worker with a small disk
    const auto report = run_worker(router, ledger, executor, config);
    // Rerouted once, then leased from the large queue; this worker still has
    // too little disk, so it terminal-fails after the retry budget.
    CHECK(report.disk_rejections >= 1);
    CHECK(router.empty());
}

TEST_CASE("memory admission blocks align") {
    QueueRouter router;
    Ledger ledger;
    auto task = make_task("A", 0.9);
    task.sort_memory_gib = 20.5;
    router.enqueue(task);
    SyntheticExecutor executor(executor_config());
    auto config = worker_config();
    config.envelope.ram_gib = 32.0;  // < 29.5 index + 20.5 sort
    const auto report = run_worker(router, ledger, executor, config);
    CHECK(report.tasks_failed == 1);
    const auto records = ledger.records();
    REQUIRE(!records.empty());
    for (const auto& [stage, _] : records.back().stage_timings)
        CHECK(stage != std::string("align"));
}

TEST_CASE("deterministic stage failure exhausts retries then terminal-fails") {
    QueueRouter router;
    Ledger ledger;
    router.enqueue(make_task("A", 0.9));
    auto exec_config = executor_config();
    exec_config.failure_probability = 1.0;
    SyntheticExecutor executor(exec_config);
    const auto report = run_worker(router, ledger, executor, worker_config());
    CHECK(report.tasks_failed == 1);
    CHECK(router.empty());
    const auto records = ledger.records();
    CHECK(records.back().attempt == 3);
}

TEST_CASE("interruption notice returns the lease and counts waste") {
    QueueRouter router;
    Ledger ledger;
    router.enqueue(make_task("A", 0.9));
    SyntheticExecutor executor(executor_config());
    std::atomic<bool> interrupt{true};  // notice arrives before any stage starts
    const auto report = run_worker(router, ledger, executor, worker_config(), &interrupt);
    CHECK(report.interrupted);
    CHECK(report.tasks_completed == 0);
    // Task is re-leasable by a replacement worker.
    CHECK_FALSE(router.empty());
    const auto again = router.lease(10.0, 1e12);
    REQUIRE(again);
    CHECK(again->second.task.sra_id == "A");
}

TEST_CASE("interruption while polling loses nothing") {
    QueueRouter router;
    Ledger ledger;
    SyntheticExecutor executor(executor_config());
    std::atomic<bool> interrupt{true};
    const auto report = run_worker(router, ledger, executor, worker_config(), &interrupt);
    CHECK(report.wasted_seconds == 0.0);
    CHECK(report.tasks_completed == 0);
}

TEST_CASE("several workers drain a shared router exactly once") {
    QueueRouter router;
    Ledger ledger;
    for (int i = 0; i < 50; ++i)
        router.enqueue(make_task("T" + std::to_string(i), i % 5 == 0 ? 0.1 : 0.9));
    SyntheticExecutor executor(executor_config());
    std::vector<std::thread> threads;
    std::vector<WorkerReport> reports(4);
    for (int w = 0; w < 4; ++w)
        threads.emplace_back([&, w]() {
            auto config = worker_config();
            config.worker_id = "w" + std::to_string(w);
            reports[w] = run_worker(router, ledger, executor, config);
        });
    for (auto& t : threads) t.join();
    std::uint64_t completed = 0;
    for (const auto& r : reports) completed += r.tasks_completed;
    CHECK(completed == 50);
    CHECK(ledger.completed_count() == 50);
    CHECK(ledger.conflicting_completions() == 0);
    CHECK(router.empty());
}
