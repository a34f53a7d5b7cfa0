#include "oaprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "oaprobe/rng.hpp"

namespace oaprobe {

McNemarResult mcnemar_exact(const PairedOutcome& outcomes) {
    if (outcomes.correct_a.size() != outcomes.correct_b.size()) {
        throw std::invalid_argument("mcnemar_exact: outcome length mismatch");
    }
    if (outcomes.correct_a.empty()) {
        throw std::invalid_argument("mcnemar_exact: empty outcomes");
    }
    McNemarResult res;
    for (std::size_t i = 0; i < outcomes.correct_a.size(); ++i) {
        const int a = outcomes.correct_a[i];
        const int b = outcomes.correct_b[i];
        if ((a != 0 && a != 1) || (b != 0 && b != 1)) {
            throw std::invalid_argument("mcnemar_exact: correctness values must be 0 or 1");
        }
        if (a == 1 && b == 0) res.b++;
        if (a == 0 && b == 1) res.c++;
    }
    const std::int64_t n = res.b + res.c;
    if (n == 0) {
        res.p_value = 1.0;
        return res;
    }
    const double tail = binomial_half_tail_le(static_cast<int>(n),
                                              static_cast<int>(std::min(res.b, res.c)));
    res.p_value = std::min(1.0, 2.0 * tail);
    return res;
}

double binomial_half_tail_le(int n, int m) {
    if (n < 0) throw std::invalid_argument("binomial_half_tail_le: n must be >= 0");
    if (m < 0) return 0.0;
    if (m >= n) return 1.0;
    if (n <= 126) {
        // Pascal row in 128-bit integers; C(126, 63) still fits.
        std::vector<unsigned __int128> row(static_cast<std::size_t>(n) + 1);
        row[0] = 1;
        for (int i = 1; i <= n; ++i) {
            row[static_cast<std::size_t>(i)] = 1;
            for (int j = i - 1; j >= 1; --j) {
                row[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j - 1)];
            }
        }
        unsigned __int128 sum = 0;
        for (int i = 0; i <= m; ++i) sum += row[static_cast<std::size_t>(i)];
        return std::ldexp(static_cast<double>(sum), -n);
    }
    // Log-space fallback for very large n.
    const double log2v = std::log(2.0);
    double log_tail = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= m; ++i) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                                std::lgamma(n - i + 1.0) - n * log2v;
        const double hi = std::max(log_tail, log_term);
        log_tail = hi + std::log1p(std::exp(std::min(log_tail, log_term) - hi));
        if (!std::isfinite(log_tail)) log_tail = log_term;
    }
    return std::exp(log_tail);
}

std::string to_string(BootstrapMetric m) {
    switch (m) {
        case BootstrapMetric::oa_auc: return "oa_auc";
        case BootstrapMetric::oa_acc: return "oa_acc";
        case BootstrapMetric::oa_f1: return "oa_f1";
        case BootstrapMetric::kl_macro_auc: return "kl_macro_auc";
        case BootstrapMetric::kl_acc: return "kl_acc";
        case BootstrapMetric::kl_macro_f1: return "kl_macro_f1";
    }
    throw std::logic_error("unknown BootstrapMetric");
}

namespace {

struct SubjectData {
    std::vector<double> p_oa_a, p_oa_b;
    std::vector<KlProbVector> p_kl_a, p_kl_b;
    std::vector<int> hard_oa_a, hard_oa_b;
    std::vector<int> hard_kl_a, hard_kl_b;
    std::vector<int> oa_truth;
    std::vector<int> kl_truth;
};

double metric_on_sample(BootstrapMetric metric, const SubjectData& d,
                        const std::vector<std::size_t>& idx, bool model_a) {
    const auto& p_oa = model_a ? d.p_oa_a : d.p_oa_b;
    const auto& p_kl = model_a ? d.p_kl_a : d.p_kl_b;
    const auto& hard_oa = model_a ? d.hard_oa_a : d.hard_oa_b;
    const auto& hard_kl = model_a ? d.hard_kl_a : d.hard_kl_b;

    switch (metric) {
        case BootstrapMetric::oa_auc: {
            std::vector<double> s(idx.size());
            std::vector<int> y(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                s[i] = p_oa[idx[i]];
                y[i] = d.oa_truth[idx[i]];
            }
            return roc_auc(s, y);
        }
        case BootstrapMetric::oa_acc:
        case BootstrapMetric::oa_f1: {
            std::vector<int> p(idx.size());
            std::vector<int> y(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                p[i] = hard_oa[idx[i]];
                y[i] = d.oa_truth[idx[i]];
            }
            return metric == BootstrapMetric::oa_acc ? accuracy(p, y) : binary_f1(p, y);
        }
        case BootstrapMetric::kl_macro_auc: {
            std::vector<KlProbVector> p;
            p.reserve(idx.size());
            std::vector<int> y(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                p.push_back(p_kl[idx[i]]);
                y[i] = d.kl_truth[idx[i]];
            }
            return macro_ovr_auc(p, y).macro;
        }
        case BootstrapMetric::kl_acc:
        case BootstrapMetric::kl_macro_f1: {
            std::vector<int> p(idx.size());
            std::vector<int> y(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                p[i] = hard_kl[idx[i]];
                y[i] = d.kl_truth[idx[i]];
            }
            return metric == BootstrapMetric::kl_acc ? accuracy(p, y) : macro_f1(p, y).macro;
        }
    }
    throw std::logic_error("unknown BootstrapMetric");
}

constexpr int kMaxRedraws = 100;

// One replicate: draw resamples from the replicate-local generator until the
// metric is defined for both models, up to the redraw cap.
bool run_replicate(BootstrapMetric metric, const SubjectData& d, std::size_t n,
                   std::uint64_t seed, std::int64_t replicate, double& diff_out,
                   std::int64_t& discarded_out) {
    Rng rng(replicate_seed(seed, static_cast<std::uint64_t>(replicate)));
    std::vector<std::size_t> idx(n);
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        for (std::size_t i = 0; i < n; ++i) {
            idx[i] = static_cast<std::size_t>(rng.next_below(n));
        }
        try {
            const double ma = metric_on_sample(metric, d, idx, true);
            const double mb = metric_on_sample(metric, d, idx, false);
            diff_out = ma - mb;
            return true;
        } catch (const std::invalid_argument&) {
            ++discarded_out;
        }
    }
    return false;
}

}  // namespace

double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("empirical_quantile: empty input");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

DiffResult paired_bootstrap(BootstrapMetric metric, const PredictionSet& preds_a,
                            const PredictionSet& preds_b, const std::vector<LabelRecord>& labels,
                            int n_replicates, std::uint64_t seed, int n_threads) {
    if (n_replicates < 100) {
        throw std::invalid_argument("paired_bootstrap: need at least 100 replicates");
    }
    if (n_threads < 1) throw std::invalid_argument("paired_bootstrap: n_threads must be >= 1");
    const PredictionSet a = align_predictions(preds_a, labels);
    const PredictionSet b = align_predictions(preds_b, labels);
    const bool needs_kl = metric == BootstrapMetric::kl_macro_auc ||
                          metric == BootstrapMetric::kl_acc ||
                          metric == BootstrapMetric::kl_macro_f1;
    if (needs_kl && (!a.p_kl || !b.p_kl)) {
        throw std::invalid_argument("paired_bootstrap: KL metric requires KL probabilities");
    }

    SubjectData d;
    const std::size_t n = labels.size();
    d.p_oa_a = a.p_oa;
    d.p_oa_b = b.p_oa;
    d.hard_oa_a = hard_oa_predictions(a.p_oa);
    d.hard_oa_b = hard_oa_predictions(b.p_oa);
    if (needs_kl) {
        d.p_kl_a = *a.p_kl;
        d.p_kl_b = *b.p_kl;
        d.hard_kl_a = hard_kl_predictions(*a.p_kl);
        d.hard_kl_b = hard_kl_predictions(*b.p_kl);
    }
    d.oa_truth.resize(n);
    d.kl_truth.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.oa_truth[i] = labels[i].oa.value();
        d.kl_truth[i] = labels[i].kl.value();
    }

    std::vector<double> diffs(static_cast<std::size_t>(n_replicates), 0.0);
    std::vector<char> ok(static_cast<std::size_t>(n_replicates), 0);
    std::vector<std::int64_t> discarded(static_cast<std::size_t>(n_replicates), 0);

    auto worker = [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t r = begin; r < end; ++r) {
            ok[static_cast<std::size_t>(r)] =
                run_replicate(metric, d, n, seed, r, diffs[static_cast<std::size_t>(r)],
                              discarded[static_cast<std::size_t>(r)])
                    ? 1
                    : 0;
        }
    };

    if (n_threads == 1) {
        worker(0, n_replicates);
    } else {
        std::vector<std::thread> pool;
        const std::int64_t chunk = (n_replicates + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const std::int64_t begin = t * chunk;
            const std::int64_t end = std::min<std::int64_t>(n_replicates, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(worker, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    // Aggregate in replicate order so the result is schedule-independent.
    std::vector<double> used;
    used.reserve(static_cast<std::size_t>(n_replicates));
    std::int64_t n_discarded = 0;
    for (std::int64_t r = 0; r < n_replicates; ++r) {
        n_discarded += discarded[static_cast<std::size_t>(r)];
        if (ok[static_cast<std::size_t>(r)]) used.push_back(diffs[static_cast<std::size_t>(r)]);
    }
    if (used.empty()) {
        throw std::runtime_error("paired_bootstrap: metric undefined on every replicate");
    }

    DiffResult res;
    res.n_replicates_used = static_cast<std::int64_t>(used.size());
    res.n_discarded = n_discarded;
    double sum = 0.0;
    std::int64_t n_le = 0, n_ge = 0;
    for (double v : used) {
        sum += v;
        if (v <= 0.0) ++n_le;
        if (v >= 0.0) ++n_ge;
    }
    res.mean_diff = sum / static_cast<double>(used.size());
    res.ci_low = empirical_quantile(used, 0.025);
    res.ci_high = empirical_quantile(used, 0.975);
    const double denom = static_cast<double>(used.size());
    const double tail = std::min(static_cast<double>(n_le), static_cast<double>(n_ge)) / denom;
    res.p_value = std::max(std::min(1.0, 2.0 * tail), 1.0 / (denom + 1.0));
    return res;
}

}  // namespace oaprobe
