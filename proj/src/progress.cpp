#include "alignfleet/progress.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <vector>

namespace alignfleet {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) tokens.push_back(line.substr(start, i - start));
    }
    return tokens;
}

std::optional<double> parse_number(std::string_view token) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

// Accepts "80.3%", "80.3" (magnitude > 1 means percent) and "0.803".
std::optional<double> parse_fraction(std::string_view token) {
    bool percent = false;
    if (!token.empty() && token.back() == '%') {
        percent = true;
        token.remove_suffix(1);
    }
    auto value = parse_number(token);
    if (!value || *value < 0.0) return std::nullopt;
    if (percent || *value > 1.0) *value /= 100.0;
    if (*value > 1.0) return std::nullopt;
    return value;
}

// "10:31:23" -> seconds of day. Returns 0 when the token has another shape;
// elapsed time is relative bookkeeping for the caller anyway.
double parse_clock_seconds(std::string_view token) {
    int h = 0, m = 0, s = 0;
    const char* p = token.data();
    const char* end = token.data() + token.size();
    auto r1 = std::from_chars(p, end, h);
    if (r1.ec != std::errc{} || r1.ptr == end || *r1.ptr != ':') return 0.0;
    auto r2 = std::from_chars(r1.ptr + 1, end, m);
    if (r2.ec != std::errc{} || r2.ptr == end || *r2.ptr != ':') return 0.0;
    auto r3 = std::from_chars(r2.ptr + 1, end, s);
    if (r3.ec != std::errc{} || r3.ptr != end) return 0.0;
    return h * 3600.0 + m * 60.0 + s;
}

}  // namespace

std::optional<ProgressSample> parse_progress_line(std::string_view line,
                                                  const ColumnMap& columns) {
    if (columns.reads_processed < 0 || columns.pct_unique < 0 || columns.pct_multi < 0)
        return std::nullopt;
    const auto tokens = split_ws(line);
    const int needed =
        std::max({columns.reads_processed, columns.pct_unique, columns.pct_multi});
    if (static_cast<int>(tokens.size()) <= needed) return std::nullopt;

    const auto reads = parse_number(tokens[columns.reads_processed]);
    if (!reads || *reads < 0.0 || *reads != std::floor(*reads)) return std::nullopt;
    const auto unique = parse_fraction(tokens[columns.pct_unique]);
    const auto multi = parse_fraction(tokens[columns.pct_multi]);
    if (!unique || !multi) return std::nullopt;
    if (*unique + *multi > 1.0 + 1e-9) return std::nullopt;

    ProgressSample sample;
    sample.reads_processed = static_cast<std::uint64_t>(*reads);
    sample.pct_unique_mapped = *unique;
    sample.pct_multi_mapped = *multi;
    if (tokens.size() >= 3) sample.elapsed_seconds = parse_clock_seconds(tokens[2]);
    return sample;
}

double mapping_rate(const ProgressSample& sample) {
    return std::clamp(sample.pct_unique_mapped + sample.pct_multi_mapped, 0.0, 1.0);
}

StopDecision evaluate(const EarlyStopPolicy& policy, const ProgressSample& sample,
                      std::optional<std::uint64_t> expected_total_reads) {
    StopDecision decision;
    decision.observed_rate = mapping_rate(sample);
    if (!expected_total_reads || *expected_total_reads == 0) {
        decision.verdict = Verdict::Indeterminate;
        decision.reason = "expected total reads unknown";
        return decision;
    }
    const double processed = static_cast<double>(sample.reads_processed) /
                             static_cast<double>(*expected_total_reads);
    decision.processed_fraction = processed;
    if (processed >= policy.min_processed_fraction &&
        *decision.observed_rate < policy.threshold) {
        decision.verdict = Verdict::Terminate;
        decision.reason = "mapping rate below threshold";
    } else {
        decision.verdict = Verdict::Continue;
        decision.reason = processed < policy.min_processed_fraction
                              ? "below minimum processed fraction"
                              : "mapping rate at or above threshold";
    }
    return decision;
}

SuperviseResult supervise(std::span<const ProgressSample> samples,
                          const EarlyStopPolicy& policy,
                          std::optional<std::uint64_t> expected_total_reads) {
    SuperviseResult result;
    if (samples.empty()) {
        result.decision.verdict = Verdict::Indeterminate;
        result.decision.reason = "no samples";
        return result;
    }
    for (const auto& sample : samples) {
        StopDecision decision = evaluate(policy, sample, expected_total_reads);
        result.decision = decision;
        if (decision.verdict == Verdict::Terminate) {
            result.consumed_fraction = *decision.processed_fraction;
            return result;
        }
    }
    result.consumed_fraction = 1.0;
    return result;
}

}  // namespace alignfleet
