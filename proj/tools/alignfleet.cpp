#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "alignfleet/executor.hpp"
#include "alignfleet/perf.hpp"
#include "alignfleet/progress.hpp"
#include "alignfleet/queue.hpp"
#include "alignfleet/sim.hpp"
#include "alignfleet/worker.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace alignfleet;

namespace {

int log_level() {
    const char* env = std::getenv("ALIGNFLEET_LOG");
    if (!env) return 1;
    const std::string v = env;
    if (v == "quiet" || v == "0") return 0;
    if (v == "debug" || v == "2") return 2;
    return 1;
}

void log_info(const std::string& message) {
    if (log_level() >= 1) std::cerr << "[alignfleet] " << message << "\n";
}

struct RunConfig {
    SyntheticExecutorConfig executor;
    SubprocessExecutorConfig subprocess;
    EarlyStopPolicy policy;
    ResourceEnvelope envelope;
    std::uint32_t retry_limit = 3;
    double index_load_seconds = 0.0;
    double visibility_seconds = 3600.0;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig config;
    if (path.empty()) return config;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    in >> j;

    if (j.contains("executor")) {
        const auto& je = j["executor"];
        config.executor.threads = je.value("threads", 8);
        config.executor.base_throughput_bytes_per_thread_second =
            je.value("base_throughput_bytes_per_thread_second", 2.0 * 1024 * 1024);
        config.executor.prefetch_seconds_per_gib = je.value("prefetch_seconds_per_gib", 20.0);
        config.executor.convert_seconds_per_gib = je.value("convert_seconds_per_gib", 60.0);
        config.executor.upload_seconds_per_gib = je.value("upload_seconds_per_gib", 15.0);
        config.executor.sort_normalize_fraction_of_align =
            je.value("sort_normalize_fraction_of_align", 0.05);
        config.executor.default_mapping_rate = je.value("default_mapping_rate", 0.8);
        config.executor.noise_std = je.value("noise_std", 0.0);
        config.executor.reads_per_byte = je.value("reads_per_byte", 0.01);
        config.executor.failure_probability = je.value("failure_probability", 0.0);
        config.executor.oom_probability = je.value("oom_probability", 0.0);
        if (je.contains("scaling")) {
            const auto& js = je["scaling"];
            config.executor.scaling.parallel_fraction = js.value("parallel_fraction", 0.9873);
            config.executor.scaling.smt_penalty = js.value("smt_penalty", 0.55);
            config.executor.scaling.physical_cores = js.value("physical_cores", 0);
        }
        if (je.contains("tissue_mapping_rate"))
            for (const auto& [tissue, rate] : je["tissue_mapping_rate"].items())
                config.executor.tissue_mapping_rate[tissue] = rate.get<double>();
    }
    if (j.contains("subprocess")) {
        const auto& js = j["subprocess"];
        if (js.contains("stage_commands"))
            for (const auto& [stage, command] : js["stage_commands"].items())
                config.subprocess.stage_commands[stage] = command.get<std::string>();
        config.subprocess.workdir = js.value("workdir", ".");
        config.subprocess.index_dir = js.value("index_dir", "");
        config.subprocess.threads = js.value("threads", 8);
        config.subprocess.timeout_seconds = js.value("timeout_seconds", 24.0 * 3600);
        config.subprocess.grace_seconds = js.value("grace_seconds", 10.0);
    }
    if (j.contains("policy")) {
        const auto& jp = j["policy"];
        config.policy.threshold = jp.value("threshold", 0.30);
        config.policy.min_processed_fraction = jp.value("min_processed_fraction", 0.10);
        config.policy.poll_interval_seconds = jp.value("poll_interval_seconds", 30.0);
    }
    if (j.contains("envelope")) {
        const auto& je = j["envelope"];
        config.envelope.disk_capacity_gib = je.value("disk_capacity_gib", 550.0);
        config.envelope.ram_gib = je.value("ram_gib", 64.0);
        config.envelope.index_size_gib = je.value("index_size_gib", 29.5);
        config.envelope.fastq_expansion_default = je.value("fastq_expansion_default", 7.5);
        config.envelope.fastq_expansion_max = je.value("fastq_expansion_max", 17.0);
        config.envelope.sort_memory_default_gib = je.value("sort_memory_default_gib", 2.0);
        config.envelope.sort_memory_max_gib = je.value("sort_memory_max_gib", 20.5);
    }
    config.retry_limit = j.value("retry_limit", 3u);
    config.index_load_seconds = j.value("index_load_seconds", 0.0);
    config.visibility_seconds = j.value("visibility_seconds", 3600.0);
    return config;
}

int cmd_run(const std::string& manifest_path, const std::string& config_path,
            const std::string& out_dir, int workers, const std::string& executor_kind,
            std::uint64_t seed, double threshold, double min_fraction,
            std::uint64_t size_threshold_bytes) {
    if (!fs::exists(manifest_path)) {
        std::cerr << "error: manifest not found: " << manifest_path << "\n";
        return 2;
    }
    RunConfig config;
    try {
        config = load_run_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    if (threshold >= 0.0) config.policy.threshold = threshold;
    if (min_fraction > 0.0) config.policy.min_processed_fraction = min_fraction;
    config.executor.seed = seed;

    fs::create_directories(out_dir);
    auto manifest = load_manifest_csv(manifest_path);
    log_info("manifest: " + std::to_string(manifest.admitted.size()) + " admitted, " +
             std::to_string(manifest.rejected.size()) + " rejected");

    Ledger ledger((fs::path(out_dir) / "ledger.jsonl").string());
    QueueRouter router(size_threshold_bytes);
    std::uint64_t enqueued = 0;
    for (const auto& task : manifest.admitted) {
        if (ledger.already_processed(task.sra_id)) continue;
        router.enqueue(task);
        ++enqueued;
    }
    log_info("enqueued " + std::to_string(enqueued) + " tasks");

    std::vector<std::unique_ptr<StageExecutor>> executors;
    for (int w = 0; w < workers; ++w) {
        if (executor_kind == "subprocess")
            executors.push_back(std::make_unique<SubprocessExecutor>(config.subprocess));
        else
            executors.push_back(std::make_unique<SyntheticExecutor>(config.executor));
    }

    std::vector<WorkerReport> reports(workers);
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
        WorkerConfig wc;
        wc.worker_id = "worker-" + std::to_string(w);
        wc.policy = config.policy;
        wc.envelope = config.envelope;
        wc.retry_limit = config.retry_limit;
        wc.index_load_seconds = config.index_load_seconds;
        wc.visibility_seconds = config.visibility_seconds;
        threads.emplace_back([&, w, wc]() {
            reports[w] = run_worker(router, ledger, *executors[w], wc, nullptr);
        });
    }
    for (auto& t : threads) t.join();

    std::uint64_t completed = 0, failed = 0, early = 0, skipped = 0;
    for (int w = 0; w < workers; ++w) {
        completed += reports[w].tasks_completed;
        failed += reports[w].tasks_failed;
        early += reports[w].terminated_early;
        skipped += reports[w].skipped_already_processed;
        std::ofstream rep(fs::path(out_dir) / ("worker-" + std::to_string(w) + ".json"));
        rep << reports[w].to_json() << "\n";
    }

    json summary;
    summary["tasks_enqueued"] = enqueued;
    summary["tasks_completed"] = completed;
    summary["tasks_failed"] = failed;
    summary["terminated_early"] = early;
    summary["skipped_already_processed"] = skipped;
    summary["manifest_rejected"] = manifest.rejected.size();
    summary["ledger_completed_total"] = ledger.completed_count();
    std::ofstream out(fs::path(out_dir) / "summary.json");
    out << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";
    return failed > 0 ? 1 : 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 std::int64_t seed_override, double bucket_seconds) {
    sim::SimScenario scenario;
    try {
        scenario = sim::load_scenario_json(scenario_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    if (seed_override >= 0) {
        scenario.seed = static_cast<std::uint64_t>(seed_override);
        scenario.executor.seed = scenario.seed;
    }
    fs::create_directories(out_dir);
    auto [trace, summary] = sim::simulate(scenario);
    sim::write_trace_csv((fs::path(out_dir) / "trace.csv").string(), trace);
    sim::write_timeline_csv((fs::path(out_dir) / "timeline.csv").string(),
                            sim::emit_timeline(trace, bucket_seconds));
    std::ofstream out(fs::path(out_dir) / "summary.json");
    out << summary.to_json() << "\n";
    std::cout << summary.to_json() << "\n";
    return 0;
}

std::vector<TrajectorySpec> load_trajectories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory set: " + path);
    json j;
    in >> j;
    std::vector<TrajectorySpec> specs;
    for (const auto& row : j) {
        TrajectorySpec spec;
        spec.final_mapping_rate = row.value("final_mapping_rate", 0.9);
        spec.read_speed_reads_per_second = row.value("read_speed_reads_per_second", 1000.0);
        spec.total_reads = row.value("total_reads", 100000ull);
        spec.noise_std = row.value("noise_std", 0.0);
        spec.seed = row.value("seed", 0ull);
        spec.ramp_fraction = row.value("ramp_fraction", 0.0);
        specs.push_back(spec);
    }
    return specs;
}

std::vector<TrajectorySpec> random_trajectories(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> rate(0.0, 1.0);
    std::uniform_int_distribution<std::uint64_t> reads(10000, 1000000);
    std::vector<TrajectorySpec> specs;
    for (int i = 0; i < count; ++i) {
        TrajectorySpec spec;
        spec.final_mapping_rate = rate(rng);
        spec.total_reads = reads(rng);
        spec.read_speed_reads_per_second = 1000.0;
        spec.noise_std = 0.0;
        spec.seed = seed + i;
        specs.push_back(spec);
    }
    return specs;
}

struct SweepRow {
    double threshold = 0.0;
    double total_align_time = 0.0;
    std::uint64_t terminated_count = 0;
};

std::vector<SweepRow> sweep_thresholds(const std::vector<TrajectorySpec>& trajectories,
                                       const std::vector<double>& thresholds,
                                       double min_fraction, double poll_interval) {
    std::vector<SweepRow> rows(thresholds.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(thresholds.size()); ++i) {
        EarlyStopPolicy policy;
        policy.threshold = thresholds[i];
        policy.min_processed_fraction = min_fraction;
        policy.poll_interval_seconds = poll_interval;
        SweepRow row;
        row.threshold = thresholds[i];
        for (const auto& spec : trajectories) {
            const double duration =
                static_cast<double>(spec.total_reads) / spec.read_speed_reads_per_second;
            const auto samples = synth_progress(spec, poll_interval);
            const auto result = supervise(samples, policy, spec.total_reads);
            row.total_align_time += result.consumed_fraction * duration;
            if (result.decision.verdict == Verdict::Terminate) ++row.terminated_count;
        }
        rows[i] = row;
    }
    return rows;
}

int cmd_sweep(const std::string& trajectories_path, int random_count, std::uint64_t seed,
              const std::vector<double>& thresholds, double min_fraction,
              double poll_interval, const std::string& out_path) {
    std::vector<TrajectorySpec> trajectories;
    try {
        if (!trajectories_path.empty())
            trajectories = load_trajectories(trajectories_path);
        else
            trajectories = random_trajectories(random_count, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    if (trajectories.empty() || thresholds.empty()) {
        std::cerr << "error: empty trajectory or threshold set\n";
        return 2;
    }
    const auto rows = sweep_thresholds(trajectories, thresholds, min_fraction, poll_interval);
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        out = &file;
    }
    *out << "threshold,total_align_time,terminated_count\n";
    for (const auto& row : rows)
        *out << row.threshold << ',' << row.total_align_time << ',' << row.terminated_count
             << '\n';
    return 0;
}

int cmd_analyze_instances(const std::string& pricing_path) {
    std::vector<PricingRow> pricing;
    try {
        pricing = load_pricing_csv(pricing_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<std::pair<InstanceType, double>> rows;
    for (const auto& row : pricing)
        if (row.star_hours > 0.0) rows.emplace_back(row.instance, row.star_hours);
    if (rows.empty()) {
        std::cerr << "error: pricing CSV has no star_hours column/data\n";
        return 2;
    }
    const auto ranked = rank_instances(rows);
    std::printf("%-14s %5s %5s %9s %10s %8s %10s\n", "instance", "vcpus", "cores",
                "ram_gib", "price_h", "hours", "total_cost");
    for (const auto& r : ranked)
        std::printf("%-14s %5d %5d %9.1f %10.4f %8.2f %10.2f\n", r.instance.name.c_str(),
                    r.instance.vcpus, r.instance.physical_cores, r.instance.ram_gib,
                    r.instance.on_demand_price_per_hour, r.measured_total_hours,
                    r.total_cost);
    return 0;
}

int cmd_analyze_scaling(const std::string& points_path, double per_vcpu_price,
                        double fixed_price, double non_align_fraction, int max_threads,
                        const std::string& curve_out) {
    std::ifstream in(points_path);
    if (!in) {
        std::cerr << "error: cannot open points CSV: " << points_path << "\n";
        return 2;
    }
    std::string line;
    std::getline(in, line);  // header: threads,speedup or threads,efficiency
    const bool efficiency_input = line.find("efficiency") != std::string::npos;
    std::vector<CalibrationPoint> points;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            std::cerr << "error: malformed points row: " << line << "\n";
            return 2;
        }
        try {
            CalibrationPoint pt;
            pt.threads = std::stod(line.substr(0, comma));
            pt.speedup = std::stod(line.substr(comma + 1));
            if (efficiency_input) pt.speedup *= pt.threads;
            points.push_back(pt);
        } catch (const std::exception&) {
            std::cerr << "error: malformed points row: " << line << "\n";
            return 2;
        }
    }
    double p = 0.0;
    try {
        p = fit_parallel_fraction(points);
    } catch (const InsufficientData& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::printf("parallel_fraction: %.6f\n", p);

    ScalingModel model;
    model.parallel_fraction = p;
    model.smt_penalty = 1.0;
    if (!curve_out.empty()) {
        std::ofstream curve(curve_out);
        curve << "threads,speedup,efficiency\n";
        for (int t = 1; t <= max_threads; ++t) {
            const double s = model.speedup(t);
            curve << t << ',' << s << ',' << s / t << '\n';
        }
    }
    const auto rec =
        recommend_threads(model, per_vcpu_price, fixed_price, non_align_fraction, max_threads);
    std::printf("recommended_threads: %d (cost %.6f)\n", rec.threads, rec.cost);
    return 0;
}

int cmd_report_timeline(const std::string& trace_path, double bucket,
                        const std::string& out_path) {
    sim::FleetTrace trace;
    try {
        trace = sim::read_trace_csv(trace_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    const auto rows = sim::emit_timeline(trace, bucket);
    if (!out_path.empty()) {
        sim::write_timeline_csv(out_path, rows);
    } else {
        std::cout << "t,running_instances,cumulative_completed\n";
        for (const auto& row : rows)
            std::cout << row.t << ',' << row.running_instances << ','
                      << row.cumulative_completed << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"alignfleet: batch alignment pipeline engine and fleet simulator"};
    app.require_subcommand(1);

    // run
    std::string manifest_path, config_path, out_dir = "out", executor_kind = "synthetic";
    int workers = 1;
    std::uint64_t seed = 0, size_threshold_bytes = 0;
    double threshold = -1.0, min_fraction = 0.0;
    auto* run = app.add_subcommand("run", "run the pipeline against a manifest");
    run->add_option("--manifest", manifest_path, "task manifest CSV")->required();
    run->add_option("--config", config_path, "run config JSON");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--workers", workers, "worker thread count");
    run->add_option("--executor", executor_kind, "synthetic|subprocess");
    run->add_option("--seed", seed, "trajectory seed");
    run->add_option("--threshold", threshold, "early-stop mapping-rate threshold");
    run->add_option("--min-fraction", min_fraction, "minimum processed fraction");
    run->add_option("--size-threshold-bytes", size_threshold_bytes,
                    "double-queue routing threshold (0 = single queue)");

    // simulate
    std::string scenario_path, sim_out = "simout";
    std::int64_t sim_seed = -1;
    double sim_bucket = 60.0;
    auto* simulate = app.add_subcommand("simulate", "run a fleet simulation scenario");
    simulate->add_option("--scenario", scenario_path, "scenario JSON")->required();
    simulate->add_option("--out", sim_out, "output directory");
    simulate->add_option("--seed", sim_seed, "seed override");
    simulate->add_option("--bucket", sim_bucket, "timeline bucket seconds");

    // sweep-threshold
    std::string traj_path, sweep_out;
    int random_count = 100;
    std::uint64_t sweep_seed = 1;
    std::vector<double> thresholds;
    double sweep_min_fraction = 0.10, sweep_poll = 30.0;
    auto* sweep = app.add_subcommand("sweep-threshold",
                                     "total alignment time vs early-stop threshold");
    sweep->add_option("--trajectories", traj_path, "trajectory set JSON");
    sweep->add_option("--random", random_count, "random trajectory count when no file");
    sweep->add_option("--seed", sweep_seed, "random trajectory seed");
    sweep->add_option("--thresholds", thresholds, "threshold list")->required();
    sweep->add_option("--min-fraction", sweep_min_fraction, "minimum processed fraction");
    sweep->add_option("--poll-interval", sweep_poll, "sample poll interval seconds");
    sweep->add_option("--out", sweep_out, "output CSV (default stdout)");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "perf-model analyses");
    analyze->require_subcommand(1);
    std::string pricing_path;
    auto* instances = analyze->add_subcommand("instances", "instance cost ranking");
    instances->add_option("--pricing", pricing_path, "pricing CSV with star_hours")
        ->required();
    std::string points_path, curve_out;
    double per_vcpu_price = 0.076075, fixed_price = 0.0, non_align = 0.29;
    int max_threads = 16;
    auto* scaling = analyze->add_subcommand("scaling", "thread-scaling fit");
    scaling->add_option("--points", points_path, "CSV threads,speedup|efficiency")
        ->required();
    scaling->add_option("--per-vcpu-price", per_vcpu_price, "hourly price per vCPU");
    scaling->add_option("--fixed-price", fixed_price, "fixed hourly overhead price");
    scaling->add_option("--non-align-fraction", non_align, "non-align share of runtime");
    scaling->add_option("--max-threads", max_threads, "search bound");
    scaling->add_option("--curve-out", curve_out, "efficiency curve CSV");

    // report timeline
    auto* report = app.add_subcommand("report", "derived report data");
    report->require_subcommand(1);
    std::string trace_path, timeline_out;
    double report_bucket = 60.0;
    auto* timeline = report->add_subcommand("timeline", "timeline CSV from a trace");
    timeline->add_option("--trace", trace_path, "trace CSV")->required();
    timeline->add_option("--bucket", report_bucket, "bucket seconds");
    timeline->add_option("--out", timeline_out, "output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed())
            return cmd_run(manifest_path, config_path, out_dir, workers, executor_kind,
                           seed, threshold, min_fraction, size_threshold_bytes);
        if (simulate->parsed())
            return cmd_simulate(scenario_path, sim_out, sim_seed, sim_bucket);
        if (sweep->parsed())
            return cmd_sweep(traj_path, random_count, sweep_seed, thresholds,
                             sweep_min_fraction, sweep_poll, sweep_out);
        if (analyze->parsed()) {
            if (instances->parsed()) return cmd_analyze_instances(pricing_path);
            if (scaling->parsed())
                return cmd_analyze_scaling(points_path, per_vcpu_price, fixed_price,
                                           non_align, max_threads, curve_out);
        }
        if (report->parsed() && timeline->parsed())
            return cmd_report_timeline(trace_path, report_bucket, timeline_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
