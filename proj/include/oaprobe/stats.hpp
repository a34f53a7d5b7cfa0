#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oaprobe/hierarchy.hpp"
#include "oaprobe/metrics.hpp"

namespace oaprobe {

// Aligned per-subject correctness of two models on the same test set.
struct PairedOutcome {
    std::vector<int> correct_a;
    std::vector<int> correct_b;
};

struct McNemarResult {
    std::int64_t b = 0;  // A correct, B wrong
    std::int64_t c = 0;  // A wrong, B correct
    double p_value = 1.0;
};

// Exact binomial McNemar test on the discordant pairs:
// p = min(1, 2 * P(X <= min(b, c))) with X ~ Binomial(b + c, 1/2).
McNemarResult mcnemar_exact(const PairedOutcome& outcomes);

// P(X <= m) for X ~ Binomial(n, 1/2). Exact integer binomials up to n = 126.
double binomial_half_tail_le(int n, int m);

enum class BootstrapMetric { oa_auc, oa_acc, oa_f1, kl_macro_auc, kl_acc, kl_macro_f1 };

std::string to_string(BootstrapMetric m);

struct DiffResult {
    double mean_diff = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_value = 1.0;
    std::int64_t n_replicates_used = 0;
    std::int64_t n_discarded = 0;
};

inline constexpr int kDefaultBootstrapReplicates = 10000;

// Paired bootstrap over subjects: each replicate resamples the label subjects
// with replacement (generator derived from seed and replicate index only) and
// records metric(A) - metric(B). Mean, 95% percentile CI and a doubled
// empirical tail p-value (floored at 1/(B+1)) are reported. Replicates where
// the metric is undefined are redrawn up to 100 attempts. Results are
// bit-identical for any n_threads.
DiffResult paired_bootstrap(BootstrapMetric metric, const PredictionSet& preds_a,
                            const PredictionSet& preds_b, const std::vector<LabelRecord>& labels,
                            int n_replicates, std::uint64_t seed, int n_threads = 1);

// Linear-interpolation empirical quantile over a sorted copy of the values.
double empirical_quantile(std::vector<double> values, double q);

}  // namespace oaprobe
