#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace alignfleet {

struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InstanceType {
    std::string name;
    int vcpus = 0;
    int physical_cores = 0;
    bool smt = false;
    double ram_gib = 0.0;
    double on_demand_price_per_hour = 0.0;
    double spot_discount_low = 0.50;
    double spot_discount_high = 0.60;
};

struct CalibrationPoint {
    double threads = 0.0;
    double speedup = 0.0;
};

// Amdahl-style thread scaling, with an efficiency penalty on SMT threads
// beyond the physical core count. Calibration points, when present, override
// the closed form between measured thread counts.
struct ScalingModel {
    double parallel_fraction = 0.99;
    double smt_penalty = 0.55;
    int physical_cores = 0;  // 0 = no SMT penalty applies
    std::vector<CalibrationPoint> calibration_points;

    double speedup(double threads) const;
};

// 1/((1-p) + p/t_eff); threads beyond `physical_cores` count with weight
// `smt_penalty`. physical_cores <= 0 disables the penalty.
double amdahl_speedup(double parallel_fraction, double threads,
                      int physical_cores = 0, double smt_penalty = 1.0);

// Exact inversion of the Amdahl form for one (threads, speedup) point.
double invert_parallel_fraction(double threads, double speedup);

// Least-squares fit of the parallel fraction over measured speedup points.
// Requires at least one point with threads > 1.
double fit_parallel_fraction(const std::vector<CalibrationPoint>& points);

double align_duration(const ScalingModel& model, double file_size_bytes,
                      double threads, double base_throughput_bytes_per_thread_second);

struct RankedInstance {
    InstanceType instance;
    double measured_total_hours = 0.0;
    double total_cost = 0.0;
};

// Cost = on-demand price x measured hours, sorted ascending by cost; ties
// break by hours then name.
std::vector<RankedInstance> rank_instances(
    const std::vector<std::pair<InstanceType, double>>& rows);

struct ThreadRecommendation {
    int threads = 1;
    double cost = 0.0;
    std::vector<std::pair<int, double>> cost_curve;
};

// Minimizes (fixed + per_vcpu*t) * (align_share/speedup(t) + other_share)
// over integer t in [1, max_threads]; smallest t wins ties.
ThreadRecommendation recommend_threads(const ScalingModel& model,
                                       double per_vcpu_price_per_hour,
                                       double fixed_overhead_price_per_hour,
                                       double non_align_fraction, int max_threads);

// Pricing CSV: name,vcpus,cores,ram_gib,price_per_hour[,star_hours]
struct PricingRow {
    InstanceType instance;
    double star_hours = 0.0;  // 0 when the column is absent
};
std::vector<PricingRow> load_pricing_csv(const std::string& path);

}  // namespace alignfleet
