#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace alignfleet {

// One parsed line of a STAR-style progress log. Percentages are stored as
// fractions in [0,1].
struct ProgressSample {
    double elapsed_seconds = 0.0;
    std::uint64_t reads_processed = 0;
    double pct_unique_mapped = 0.0;
    double pct_multi_mapped = 0.0;
};

struct EarlyStopPolicy {
    double threshold = 0.30;
    double min_processed_fraction = 0.10;
    double poll_interval_seconds = 30.0;

    bool valid() const {
        return threshold >= 0.0 && threshold <= 1.0 &&
               min_processed_fraction > 0.0 && min_processed_fraction <= 1.0 &&
               poll_interval_seconds > 0.0;
    }
};

enum class Verdict { Continue, Terminate, Indeterminate };

struct StopDecision {
    Verdict verdict = Verdict::Indeterminate;
    std::optional<double> observed_rate;
    std::optional<double> processed_fraction;
    std::string reason;
};

// 0-based token indices after splitting a line on runs of whitespace.
// Defaults match the STAR 2.7 Log.progress.out layout.
struct ColumnMap {
    int reads_processed = 4;
    int pct_unique = 6;
    int pct_multi = 9;
};

// Returns nullopt for header, blank, truncated, or otherwise malformed lines.
// Never throws regardless of input bytes.
std::optional<ProgressSample> parse_progress_line(std::string_view line,
                                                  const ColumnMap& columns = {});

// Intermediate mapping rate: unique + multi fractions, clamped to [0,1].
double mapping_rate(const ProgressSample& sample);

// Applies the early-stop rule to one sample. Never terminates when the
// expected total read count is unknown.
StopDecision evaluate(const EarlyStopPolicy& policy, const ProgressSample& sample,
                      std::optional<std::uint64_t> expected_total_reads);

struct SuperviseResult {
    StopDecision decision;
    double consumed_fraction = 1.0;
};

// Walks an ordered sample stream and returns the first Terminate decision
// together with the processed fraction at that moment. A stream that ends
// without termination consumed the full alignment (fraction 1.0).
SuperviseResult supervise(std::span<const ProgressSample> samples,
                          const EarlyStopPolicy& policy,
                          std::optional<std::uint64_t> expected_total_reads);

}  // namespace alignfleet
