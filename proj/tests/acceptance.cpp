// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Each check is self-contained and uses independent oracles where the
// checked quantity is derived rather than configured.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "alignfleet/executor.hpp"
#include "alignfleet/perf.hpp"
#include "alignfleet/progress.hpp"
#include "alignfleet/queue.hpp"
#include "alignfleet/sim.hpp"

namespace fs = std::filesystem;
using namespace alignfleet;

namespace {

const std::string kFixtures = ALIGNFLEET_FIXTURES_DIR;
const std::string kCli = ALIGNFLEET_CLI_PATH;

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    CliResult result;
    const std::string cmd = "ALIGNFLEET_LOG=quiet " + kCli + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return result;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe))
        result.output.append(buf, n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("alignfleet_accept_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// Brute-force restatement of the early-stop rule, independent of supervise().
double oracle_consumed_fraction(const std::vector<ProgressSample>& samples,
                                double threshold, double min_fraction,
                                std::uint64_t total_reads) {
    for (const auto& s : samples) {
        const double frac =
            static_cast<double>(s.reads_processed) / static_cast<double>(total_reads);
        const double rate =
            std::min(1.0, std::max(0.0, s.pct_unique_mapped + s.pct_multi_mapped));
        if (frac >= min_fraction && rate < threshold) return frac;
    }
    return 1.0;
}

// Event-trace restatement of waste: elapsed in-task time at each interruption
// plus replacement index-load time.
double trace_waste_oracle(const sim::FleetTrace& trace) {
    std::map<int, double> task_start, incarnation_start;
    std::map<int, bool> in_task, is_replacement;
    double waste = 0.0;
    for (const auto& ev : trace.events) {
        switch (ev.kind) {
            case sim::EventKind::WorkerStart:
                incarnation_start[ev.worker_id] = ev.timestamp;
                is_replacement[ev.worker_id] = ev.payload == "replacement";
                break;
            case sim::EventKind::IndexLoaded:
                if (is_replacement[ev.worker_id])
                    waste += ev.timestamp - incarnation_start[ev.worker_id];
                break;
            case sim::EventKind::TaskStart:
                task_start[ev.worker_id] = ev.timestamp;
                in_task[ev.worker_id] = true;
                break;
            case sim::EventKind::TaskComplete:
            case sim::EventKind::TaskFailed:
                in_task[ev.worker_id] = false;
                break;
            case sim::EventKind::Interrupted:
                if (in_task[ev.worker_id]) {
                    waste += ev.timestamp - task_start[ev.worker_id];
                    in_task[ev.worker_id] = false;
                }
                break;
            default:
                break;
        }
    }
    return waste;
}

sim::SimScenario small_scenario(int fleet, int tasks, std::uint64_t seed) {
    sim::SimScenario s;
    s.fleet_size = fleet;
    s.seed = seed;
    s.instance.name = "r7a.2xlarge";
    s.instance.vcpus = 8;
    s.instance.physical_cores = 8;
    s.instance.on_demand_price_per_hour = 0.6086;
    s.executor.scaling.parallel_fraction = 0.9873;
    s.executor.scaling.smt_penalty = 1.0;
    s.executor.noise_std = 0.0;
    s.start_stagger_max_seconds = 0.0;
    sim::SyntheticTasksSpec spec;
    spec.count = tasks;
    spec.size_bytes_min = 500'000'000;
    spec.size_bytes_max = 3'000'000'000;
    spec.rate_mix = {{0.85, 0.8}, {0.1, 0.2}};
    s.tasks = sim::generate_tasks(spec, seed);
    return s;
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail = "") {
    std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.empty() ? "" : " — ", detail.c_str());
    if (!pass) ++failures;
}

// 1. Instance cost table reproduction via both the library and the CLI.
void criterion_1() {
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    try {
        const auto pricing = load_pricing_csv(kFixtures + "/instances_table1.csv");
        std::vector<std::pair<InstanceType, double>> rows;
        for (const auto& row : pricing) rows.emplace_back(row.instance, row.star_hours);
        const auto ranked = rank_instances(rows);
        const std::map<std::string, double> expected = {{"r6a.2xlarge", 3.63},
                                                        {"r6i.2xlarge", 4.05},
                                                        {"r7a.2xlarge", 3.33},
                                                        {"r7i.2xlarge", 4.05}};
        ok = ranked.size() == 4 && ranked.front().instance.name == "r7a.2xlarge";
        for (const auto& r : ranked) {
            const auto it = expected.find(r.instance.name);
            if (it == expected.end() || std::abs(r.total_cost - it->second) > 0.01)
                ok = false;
        }
        const auto cli =
            run_cli("analyze instances --pricing " + kFixtures + "/instances_table1.csv");
        if (cli.exit_code != 0) ok = false;
        // First ranked data row is the cheapest instance.
        const auto header_end = cli.output.find('\n');
        const auto first_row = cli.output.substr(header_end + 1);
        if (first_row.find("r7a.2xlarge") != 0) ok = false;
        const double elapsed = seconds_since(start);
        if (elapsed >= 1.0) ok = false;
        char buf[128];
        std::snprintf(buf, sizeof(buf), "totals 3.33/3.63/4.05/4.05, %.3f s", elapsed);
        detail = buf;
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    report(1, "instance cost table reproduction", ok, detail);
}

// 2. Per-worker-initialization index transfer cost.
void criterion_2() {
    sim::CostInputs inputs;
    inputs.price_per_hour = 0.6086;
    inputs.spot_discount = 0.55;
    inputs.transfer_price_per_gb = 0.01;
    inputs.index_size_gib = 29.5;
    inputs.storage_price_gb_month = 0.08;
    inputs.disk_gib = 550.0;
    inputs.fleet_size = 1;
    const auto cost = sim::cost_of(inputs, 3600.0, 1, 3600.0, 1);
    const bool ok = std::abs(cost.transfer - 0.317) <= 0.02;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "transfer $%.4f per init", cost.transfer);
    report(2, "index transfer cost", ok, buf);
}

// 3. Constructed early-stop workloads against the analytic saving.
void criterion_3() {
    EarlyStopPolicy policy;
    policy.poll_interval_seconds = 0.1;
    const auto saving = [&policy](int n, int terminable, double low_rate,
                                  double high_rate, double threshold) {
        policy.threshold = threshold;
        double with_stop = 0.0, without = 0.0;
        bool oracle_ok = true;
        for (int i = 0; i < n; ++i) {
            TrajectorySpec spec;
            spec.final_mapping_rate = i < terminable ? low_rate : high_rate;
            spec.total_reads = 100'000;
            spec.read_speed_reads_per_second = 1000.0;  // 100 s per task
            spec.noise_std = 0.0;
            const auto samples = synth_progress(spec, policy.poll_interval_seconds);
            const auto result = supervise(samples, policy, spec.total_reads);
            const double oracle = oracle_consumed_fraction(
                samples, policy.threshold, policy.min_processed_fraction,
                spec.total_reads);
            if (std::abs(result.consumed_fraction - oracle) > 1e-12) oracle_ok = false;
            with_stop += result.consumed_fraction * 100.0;
            without += 100.0;
        }
        return std::pair<double, bool>{1.0 - with_stop / without, oracle_ok};
    };
    // 100 equal-duration tasks, 20 terminable at the 10% gate, threshold 0.30.
    const auto [saving_a, oracle_a] = saving(100, 20, 0.10, 0.90, 0.30);
    // Two thirds terminable at the 10% gate under threshold 0.80: 60% saving.
    const auto [saving_b, oracle_b] = saving(99, 66, 0.50, 0.90, 0.80);
    const bool ok = oracle_a && oracle_b && std::abs(saving_a - 0.18) <= 0.005 &&
                    std::abs(saving_b - 0.60) <= 0.01;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "savings %.2f%% and %.2f%%", saving_a * 100.0,
                  saving_b * 100.0);
    report(3, "early-stop analytic analogs", ok, buf);
}

// 4. Sweep totals are non-increasing in threshold; threshold 0 is exact.
void criterion_4() {
    bool ok = true;
    std::vector<double> thresholds;
    for (int i = 0; i <= 20; ++i) thresholds.push_back(i * 0.05);
    for (std::uint64_t seed = 0; seed < 100 && ok; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> rate(0.0, 1.0);
        std::uniform_int_distribution<std::uint64_t> reads(10'000, 200'000);
        std::vector<TrajectorySpec> set;
        for (int i = 0; i < 20; ++i) {
            TrajectorySpec spec;
            spec.final_mapping_rate = rate(rng);
            spec.total_reads = reads(rng);
            spec.read_speed_reads_per_second = 1000.0;
            spec.noise_std = (i % 2) ? 0.03 : 0.0;
            spec.seed = seed * 100 + i;
            set.push_back(spec);
        }
        double baseline = 0.0;
        for (const auto& spec : set)
            baseline += static_cast<double>(spec.total_reads) /
                        spec.read_speed_reads_per_second;
        double prev = baseline;
        for (const double threshold : thresholds) {
            EarlyStopPolicy policy;
            policy.threshold = threshold;
            policy.poll_interval_seconds = 5.0;
            double total = 0.0;
            for (const auto& spec : set) {
                const double duration = static_cast<double>(spec.total_reads) /
                                        spec.read_speed_reads_per_second;
                const auto samples = synth_progress(spec, policy.poll_interval_seconds);
                total += supervise(samples, policy, spec.total_reads).consumed_fraction *
                         duration;
            }
            if (threshold == 0.0 && total != baseline) ok = false;
            if (total > prev + 1e-9) ok = false;
            prev = total;
        }
    }
    report(4, "threshold sweep monotonicity over 100 seeded sets", ok);
}

// 5. Exactly-once delivery and waste accounting under interruptions.
void criterion_5() {
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 100 && ok; ++seed) {
        auto s = small_scenario(3, 15, seed);
        if (seed < 50) {
            s.interruption.poisson_rate_per_instance_hour = 1.5;
        } else {
            s.interruption.trace = {
                {static_cast<int>(seed % 3), 120.0 + 7.0 * static_cast<double>(seed)},
                {static_cast<int>((seed + 1) % 3),
                 400.0 + 11.0 * static_cast<double>(seed)}};
        }
        const auto [trace, summary] = sim::simulate(s);
        if (summary.files_completed + summary.files_failed != 15) ok = false;
        std::map<std::string, int> terminal;
        for (const auto& ev : trace.events) {
            if (ev.kind == sim::EventKind::TaskComplete) ++terminal[ev.payload];
            if (ev.kind == sim::EventKind::TaskFailed)
                ++terminal[ev.payload.substr(0, ev.payload.find(':'))];
        }
        for (const auto& task : s.tasks)
            if (terminal[task.sra_id] != 1) ok = false;
        if (terminal.size() != s.tasks.size()) ok = false;
        const double oracle = trace_waste_oracle(trace);
        if (oracle > 0.0) {
            if (std::abs(summary.wasted_seconds - oracle) > 1e-9 * oracle) ok = false;
        } else if (summary.wasted_seconds != 0.0) {
            ok = false;
        }
        if (!ok) detail = "seed " + std::to_string(seed);
    }
    const double elapsed = seconds_since(start);
    if (elapsed >= 60.0) {
        ok = false;
        detail = "too slow";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "100 schedules in %.1f s", elapsed);
    report(5, "exactly-once and waste oracle under interruptions", ok,
           detail.empty() ? buf : detail);
}

// 6. Shipped 1000-task spot scenario: waste and init-phase calibration.
void criterion_6() {
    bool ok = true;
    std::string detail;
    try {
        const auto slow =
            sim::load_scenario_json(kFixtures + "/scenarios/paper_spot_1000.json");
        const auto [trace_a, a] = sim::simulate(slow);
        const auto fast = sim::load_scenario_json(
            kFixtures + "/scenarios/paper_spot_1000_fast_init.json");
        const auto [trace_b, b] = sim::simulate(fast);
        if (a.wasted_fraction >= 0.01) ok = false;
        if (std::abs(a.init_index_loaded_seconds - 840.0) > 0.05 * 840.0) ok = false;
        if (std::abs(b.init_index_loaded_seconds - 498.0) > 0.05 * 498.0) ok = false;
        char buf[128];
        std::snprintf(buf, sizeof(buf), "waste %.3f%%, init %.0f s / %.0f s",
                      a.wasted_fraction * 100.0, a.init_index_loaded_seconds,
                      b.init_index_loaded_seconds);
        detail = buf;
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    report(6, "spot-experiment shape and init calibration", ok, detail);
}

// 7. Amdahl fit round-trip, efficiency-point inversion, strict decrease.
void criterion_7() {
    bool ok = true;
    for (const double p : {0.5, 0.9, 0.99, 0.9873}) {
        std::vector<CalibrationPoint> points;
        for (const double t : {2.0, 4.0, 8.0, 16.0})
            points.push_back({t, amdahl_speedup(p, t)});
        if (std::abs(fit_parallel_fraction(points) - p) > 1e-6) ok = false;
    }
    if (std::abs(invert_parallel_fraction(16.0, 0.84 * 16.0) - 0.9873) > 1e-3) ok = false;
    if (std::abs(invert_parallel_fraction(16.0, 0.72 * 16.0) - 0.9741) > 1e-3) ok = false;
    double prev = 2.0;
    for (int t = 1; t <= 32; ++t) {
        const double eff = amdahl_speedup(0.95, t) / t;
        if (eff >= prev) ok = false;
        prev = eff;
    }
    report(7, "thread-scaling model round-trip", ok);
}

// 8. Seeded simulation runs produce byte-identical trace files.
void criterion_8() {
    const auto dir_a = fresh_dir("det_a");
    const auto dir_b = fresh_dir("det_b");
    const std::string scenario = kFixtures + "/scenarios/paper_spot_1000.json";
    const auto a = run_cli("simulate --scenario " + scenario + " --seed 123 --out " +
                           dir_a.string());
    const auto b = run_cli("simulate --scenario " + scenario + " --seed 123 --out " +
                           dir_b.string());
    bool ok = a.exit_code == 0 && b.exit_code == 0;
    const auto trace_a = read_file(dir_a / "trace.csv");
    const auto trace_b = read_file(dir_b / "trace.csv");
    if (trace_a.empty() || trace_a != trace_b) ok = false;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu-byte traces identical", trace_a.size());
    report(8, "seeded determinism", ok, buf);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

// 9. Progress parser survives a mutation fuzz corpus.
void criterion_9() {
    std::vector<std::string> bases;
    for (const char* name : {"healthy.txt", "low_rate.txt", "zero.txt"}) {
        std::ifstream in(kFixtures + "/progress/" + name);
        std::string line;
        while (std::getline(in, line)) bases.push_back(line);
    }
    bool ok = !bases.empty();
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> byte(0, 255);
    int parsed_count = 0;
    for (int i = 0; i < 12'000; ++i) {
        std::string line = bases[rng() % bases.size()];
        const int mutations = 1 + static_cast<int>(rng() % 4);
        for (int m = 0; m < mutations; ++m) {
            switch (rng() % 4) {
                case 0:  // flip one byte
                    if (!line.empty())
                        line[rng() % line.size()] = static_cast<char>(byte(rng));
                    break;
                case 1:  // truncate
                    line.resize(line.empty() ? 0 : rng() % line.size());
                    break;
                case 2:  // insert bytes
                    line.insert(rng() % (line.size() + 1),
                                std::string(1 + rng() % 8, static_cast<char>(byte(rng))));
                    break;
                case 3:  // duplicate the line onto itself
                    line += ' ' + line.substr(0, rng() % (line.size() + 1));
                    break;
            }
        }
        if (parse_progress_line(line)) ++parsed_count;
    }
    // Reaching this point means no crash; the fixture line must still parse.
    const auto sample = parse_progress_line(
        "Mar 26 10:31:23  86.6  1443455  95.0  80.3%  94.5  0.5%  13.2%  0.0%  0.0%  "
        "5.3%  1.2%");
    if (!sample || sample->reads_processed != 1'443'455 ||
        std::abs(sample->pct_unique_mapped - 0.803) > 1e-9 ||
        std::abs(sample->pct_multi_mapped - 0.132) > 1e-9)
        ok = false;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "12000 mutations, %d still parseable", parsed_count);
    report(9, "parser robustness fuzz", ok, buf);
}

// 10. Rerunning over a completed ledger processes nothing and exits 0.
void criterion_10() {
    const auto dir = fresh_dir("rerun");
    const std::string cmd = "run --manifest " + kFixtures +
                            "/manifest_small.csv --workers 2 --out " + dir.string();
    const auto first = run_cli(cmd);
    const auto second = run_cli(cmd);
    bool ok = first.exit_code == 0 && second.exit_code == 0;
    std::string detail;
    try {
        const auto summary = nlohmann::json::parse(read_file(dir / "summary.json"));
        const auto completed = summary.at("tasks_completed").get<std::uint64_t>();
        const auto enqueued = summary.at("tasks_enqueued").get<std::uint64_t>();
        if (completed != 0 || enqueued != 0) ok = false;
        detail = "rerun enqueued " + std::to_string(enqueued) + ", completed " +
                 std::to_string(completed);
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    report(10, "ledger rerun idempotence", ok, detail);
    fs::remove_all(dir);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    else std::printf("all criteria passed\n");
    return failures ? 1 : 0;
}
