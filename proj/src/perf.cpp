#include "alignfleet/perf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace alignfleet {
namespace {

double effective_threads(double threads, int physical_cores, double smt_penalty) {
    if (physical_cores <= 0 || threads <= physical_cores) return threads;
    return physical_cores + (threads - physical_cores) * smt_penalty;
}

double sum_squared_error(double p, const std::vector<CalibrationPoint>& points) {
    double err = 0.0;
    for (const auto& pt : points) {
        const double s = amdahl_speedup(p, pt.threads);
        err += (s - pt.speedup) * (s - pt.speedup);
    }
    return err;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

}  // namespace

double amdahl_speedup(double parallel_fraction, double threads, int physical_cores,
                      double smt_penalty) {
    if (threads < 1.0) throw DomainError("thread count must be >= 1");
    if (parallel_fraction < 0.0 || parallel_fraction > 1.0)
        throw DomainError("parallel fraction must be in [0,1]");
    const double t = effective_threads(threads, physical_cores, smt_penalty);
    return 1.0 / ((1.0 - parallel_fraction) + parallel_fraction / t);
}

double ScalingModel::speedup(double threads) const {
    if (threads < 1.0) throw DomainError("thread count must be >= 1");
    if (calibration_points.size() >= 2) {
        auto pts = calibration_points;
        std::sort(pts.begin(), pts.end(),
                  [](const auto& a, const auto& b) { return a.threads < b.threads; });
        if (threads >= pts.front().threads && threads <= pts.back().threads) {
            for (std::size_t i = 1; i < pts.size(); ++i) {
                if (threads <= pts[i].threads) {
                    const auto& lo = pts[i - 1];
                    const auto& hi = pts[i];
                    const double w = (hi.threads == lo.threads)
                                         ? 0.0
                                         : (threads - lo.threads) / (hi.threads - lo.threads);
                    return lo.speedup + w * (hi.speedup - lo.speedup);
                }
            }
        }
    }
    return amdahl_speedup(parallel_fraction, threads, physical_cores, smt_penalty);
}

double invert_parallel_fraction(double threads, double speedup) {
    if (threads <= 1.0) throw DomainError("inversion requires threads > 1");
    if (speedup < 1.0) speedup = 1.0;
    // S = 1/((1-p) + p/t)  =>  p = t(S-1) / (S(t-1))
    return std::clamp(threads * (speedup - 1.0) / (speedup * (threads - 1.0)), 0.0, 1.0);
}

double fit_parallel_fraction(const std::vector<CalibrationPoint>& points) {
    std::vector<CalibrationPoint> usable;
    for (const auto& pt : points)
        if (pt.threads > 1.0) usable.push_back(pt);
    if (usable.empty())
        throw InsufficientData("need at least one calibration point with threads > 1");
    if (usable.size() == 1)
        return invert_parallel_fraction(usable[0].threads, usable[0].speedup);

    // Coarse grid then golden-section refinement.
    double best_p = 0.0;
    double best_err = std::numeric_limits<double>::infinity();
    constexpr int kGrid = 2000;
    for (int i = 0; i <= kGrid; ++i) {
        const double p = static_cast<double>(i) / kGrid;
        const double err = sum_squared_error(p, usable);
        if (err < best_err) {
            best_err = err;
            best_p = p;
        }
    }
    double lo = std::max(0.0, best_p - 1.0 / kGrid);
    double hi = std::min(1.0, best_p + 1.0 / kGrid);
    constexpr double kGolden = 0.6180339887498949;
    while (hi - lo > 1e-12) {
        const double a = hi - (hi - lo) * kGolden;
        const double b = lo + (hi - lo) * kGolden;
        if (sum_squared_error(a, usable) < sum_squared_error(b, usable))
            hi = b;
        else
            lo = a;
    }
    return 0.5 * (lo + hi);
}

double align_duration(const ScalingModel& model, double file_size_bytes, double threads,
                      double base_throughput_bytes_per_thread_second) {
    if (file_size_bytes <= 0.0 || base_throughput_bytes_per_thread_second <= 0.0)
        throw DomainError("size and throughput must be positive");
    return file_size_bytes /
           (base_throughput_bytes_per_thread_second * model.speedup(threads));
}

std::vector<RankedInstance> rank_instances(
    const std::vector<std::pair<InstanceType, double>>& rows) {
    std::vector<RankedInstance> ranked;
    ranked.reserve(rows.size());
    for (const auto& [instance, hours] : rows) {
        RankedInstance r;
        r.instance = instance;
        r.measured_total_hours = hours;
        r.total_cost = instance.on_demand_price_per_hour * hours;
        ranked.push_back(std::move(r));
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.total_cost != b.total_cost) return a.total_cost < b.total_cost;
        if (a.measured_total_hours != b.measured_total_hours)
            return a.measured_total_hours < b.measured_total_hours;
        return a.instance.name < b.instance.name;
    });
    return ranked;
}

ThreadRecommendation recommend_threads(const ScalingModel& model,
                                       double per_vcpu_price_per_hour,
                                       double fixed_overhead_price_per_hour,
                                       double non_align_fraction, int max_threads) {
    if (max_threads < 1) throw DomainError("max_threads must be >= 1");
    if (non_align_fraction < 0.0 || non_align_fraction >= 1.0)
        throw DomainError("non_align_fraction must be in [0,1)");
    const double align_share = 1.0 - non_align_fraction;
    ThreadRecommendation rec;
    rec.cost = std::numeric_limits<double>::infinity();
    for (int t = 1; t <= max_threads; ++t) {
        const double hourly = fixed_overhead_price_per_hour + per_vcpu_price_per_hour * t;
        const double time = align_share / model.speedup(t) + non_align_fraction;
        const double cost = hourly * time;
        rec.cost_curve.emplace_back(t, cost);
        if (cost < rec.cost - 1e-15) {
            rec.cost = cost;
            rec.threads = t;
        }
    }
    return rec;
}

std::vector<PricingRow> load_pricing_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pricing CSV: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty pricing CSV: " + path);
    const auto header = split_csv_line(line);
    auto column = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int c_name = column("name"), c_vcpus = column("vcpus"), c_cores = column("cores");
    const int c_ram = column("ram_gib"), c_price = column("price_per_hour");
    const int c_hours = column("star_hours");
    if (c_name < 0 || c_vcpus < 0 || c_cores < 0 || c_ram < 0 || c_price < 0)
        throw std::runtime_error("pricing CSV missing required columns: " + path);

    std::vector<PricingRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        const int needed = std::max({c_name, c_vcpus, c_cores, c_ram, c_price});
        if (static_cast<int>(fields.size()) <= needed)
            throw std::runtime_error("malformed pricing CSV row: " + line);
        PricingRow row;
        try {
            row.instance.name = fields[c_name];
            row.instance.vcpus = std::stoi(fields[c_vcpus]);
            row.instance.physical_cores = std::stoi(fields[c_cores]);
            row.instance.smt = row.instance.vcpus > row.instance.physical_cores;
            row.instance.ram_gib = std::stod(fields[c_ram]);
            row.instance.on_demand_price_per_hour = std::stod(fields[c_price]);
            if (c_hours >= 0 && static_cast<int>(fields.size()) > c_hours)
                row.star_hours = std::stod(fields[c_hours]);
        } catch (const std::exception&) {
            throw std::runtime_error("malformed pricing CSV row: " + line);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace alignfleet
