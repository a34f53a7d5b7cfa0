#include "oaprobe/geometry.hpp"

#include "oaprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace oaprobe {

void EmbeddingMatrix::validate() const {
    if (n_rows < 2) throw std::invalid_argument("EmbeddingMatrix: need at least 2 rows");
    if (n_cols == 0) throw std::invalid_argument("EmbeddingMatrix: need at least 1 column");
    if (data.size() != n_rows * n_cols) {
        throw std::invalid_argument("EmbeddingMatrix: data size does not match dims");
    }
    if (subject_ids.size() != n_rows) {
        throw std::invalid_argument("EmbeddingMatrix: subject_ids size does not match rows");
    }
    for (double v : data) {
        if (!std::isfinite(v)) throw std::invalid_argument("EmbeddingMatrix: non-finite value");
    }
}

namespace detail {

std::vector<double> jacobi_eigen_symmetric(std::vector<double> a, std::size_t n,
                                           std::vector<double>& v) {
    v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    if (n == 1) return {a[0]};

    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        }
        double diag = 0.0;
        for (std::size_t p = 0; p < n; ++p) diag += a[p * n + p] * a[p * n + p];
        if (off <= 1e-30 * std::max(diag, 1e-300)) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p];
                    const double vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
    return eig;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    return rank;
}

}  // namespace detail

Pca1Result pca_first_component(const EmbeddingMatrix& emb) {
    emb.validate();
    const std::size_t n = emb.n_rows;
    const std::size_t d = emb.n_cols;

    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) mean[c] += emb.at(r, c);
    }
    for (double& m : mean) m /= static_cast<double>(n);

    std::vector<double> centered(n * d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) centered[r * d + c] = emb.at(r, c) - mean[c];
    }

    std::vector<double> cov(d * d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = centered[r * d + i];
            if (xi == 0.0) continue;
            for (std::size_t j = i; j < d; ++j) cov[i * d + j] += xi * centered[r * d + j];
        }
    }
    const double denom = static_cast<double>(n - 1);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
        trace += cov[i * d + i];
    }
    if (!(trace > 0.0)) throw std::invalid_argument("degenerate embedding: zero total variance");

    std::vector<double> vectors;
    const std::vector<double> eig = detail::jacobi_eigen_symmetric(cov, d, vectors);
    std::size_t best = 0;
    for (std::size_t i = 1; i < d; ++i) {
        if (eig[i] > eig[best]) best = i;
    }

    Pca1Result out;
    out.evr_pc1 = eig[best] / trace;
    out.loading.resize(d);
    for (std::size_t i = 0; i < d; ++i) out.loading[i] = vectors[i * d + best];

    // Sign rule: the largest-magnitude loading entry is positive.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i) {
        if (std::abs(out.loading[i]) > std::abs(out.loading[arg])) arg = i;
    }
    if (out.loading[arg] < 0.0) {
        for (double& x : out.loading) x = -x;
    }

    out.scores.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += centered[r * d + c] * out.loading[c];
        out.scores[r] = s;
    }
    return out;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 values");
    const auto distinct = [](const std::vector<double>& v) {
        for (double t : v) {
            if (t != v[0]) return true;
        }
        return false;
    };
    if (!distinct(x) || !distinct(y)) {
        throw std::invalid_argument("spearman: undefined correlation for constant sequence");
    }

    const std::vector<double> rx = detail::average_ranks(x);
    const std::vector<double> ry = detail::average_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return sxy / std::sqrt(sxx * syy);
}

double probe_auroc(const std::vector<double>& scores, const std::vector<int>& oa) {
    if (scores.size() != oa.size()) throw std::invalid_argument("probe_auroc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : oa) {
        if (y != 0 && y != 1) throw std::invalid_argument("probe_auroc: labels must be 0 or 1");
        n_pos += static_cast<std::size_t>(y);
    }
    if (n_pos == 0 || n_pos == n) {
        throw std::invalid_argument("probe_auroc: both OA classes must be present");
    }

    // Standardize for conditioning; the fitted AUC is invariant to affine
    // transforms of the input.
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(n);
    if (var == 0.0) return 0.5;  // zero-information probe
    const double sd = std::sqrt(var);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = (scores[i] - mean) / sd;

    const auto nll = [&](double w, double b) {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double l = w * x[i] + b;
            loss += std::max(l, 0.0) - l * oa[i] + std::log1p(std::exp(-std::abs(l)));
        }
        return loss;
    };

    double w = 0.0, b = 0.0;
    constexpr int kMaxIter = 100;
    constexpr double kGradTol = 1e-8;
    for (int iter = 0; iter < kMaxIter; ++iter) {
        double gw = 0.0, gb = 0.0, hww = 0.0, hwb = 0.0, hbb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double l = w * x[i] + b;
            const double p = l >= 0.0 ? 1.0 / (1.0 + std::exp(-l))
                                      : std::exp(l) / (1.0 + std::exp(l));
            const double r = p - oa[i];
            const double h = p * (1.0 - p);
            gw += r * x[i];
            gb += r;
            hww += h * x[i] * x[i];
            hwb += h * x[i];
            hbb += h;
        }
        if (std::sqrt(gw * gw + gb * gb) <= kGradTol) break;

        // Damped 2x2 Newton step with backtracking on the loss.
        const double damp = 1e-10;
        const double det = (hww + damp) * (hbb + damp) - hwb * hwb;
        double dw, db;
        if (det > 0.0 && std::isfinite(det)) {
            dw = -((hbb + damp) * gw - hwb * gb) / det;
            db = -(-hwb * gw + (hww + damp) * gb) / det;
        } else {
            dw = -gw;
            db = -gb;
        }
        const double base = nll(w, b);
        double step = 1.0;
        for (int bt = 0; bt < 60; ++bt) {
            if (nll(w + step * dw, b + step * db) <= base) break;
            step *= 0.5;
        }
        w += step * dw;
        b += step * db;
    }

    if (w == 0.0) return 0.5;
    // AUC of the fitted probabilities equals the AUC of the fitted logits
    // (strictly monotone link); logits avoid sigmoid saturation ties.
    std::vector<double> fitted(n);
    for (std::size_t i = 0; i < n; ++i) fitted[i] = w * x[i] + b;
    const double auc = roc_auc(fitted, oa);
    // The probe input is a PCA axis whose sign is arbitrary, so report the
    // orientation-free separability: on weakly associated data the MLE slope
    // sign follows the linear (not rank) correlation and the raw fitted AUC
    // can dip below one half.
    return std::max(auc, 1.0 - auc);
}

CentroidMonotonicity centroid_monotonicity(const EmbeddingMatrix& emb,
                                           const std::vector<KlGrade>& grades) {
    emb.validate();
    if (grades.size() != emb.n_rows) {
        throw std::invalid_argument("centroid_monotonicity: grades not aligned with embeddings");
    }
    const std::size_t d = emb.n_cols;
    std::map<int, std::pair<std::vector<double>, std::size_t>> groups;
    for (std::size_t r = 0; r < emb.n_rows; ++r) {
        auto& [sum, count] = groups[grades[r].value()];
        if (sum.empty()) sum.assign(d, 0.0);
        for (std::size_t c = 0; c < d; ++c) sum[c] += emb.at(r, c);
        ++count;
    }
    CentroidMonotonicity out;
    for (const auto& [g, _] : groups) out.grades_present.push_back(g);
    if (out.grades_present.size() < 3) {
        throw std::invalid_argument("centroid_monotonicity: fewer than 3 grades present");
    }

    std::vector<std::vector<double>> centroids;
    for (const auto& [g, acc] : groups) {
        std::vector<double> c(d);
        for (std::size_t i = 0; i < d; ++i) c[i] = acc.first[i] / static_cast<double>(acc.second);
        centroids.push_back(std::move(c));
    }
    for (std::size_t k = 0; k + 1 < centroids.size(); ++k) {
        double ss = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = centroids[k + 1][i] - centroids[k][i];
            ss += diff * diff;
        }
        out.adj_distances.push_back(std::sqrt(ss));
    }

    std::vector<double> pair_index(out.adj_distances.size());
    std::iota(pair_index.begin(), pair_index.end(), 0.0);
    out.rho_k_dadj = spearman(pair_index, out.adj_distances);
    return out;
}

SeverityAxisReport severity_axis_report(const EmbeddingMatrix& emb,
                                        const std::vector<LabelRecord>& labels) {
    emb.validate();
    if (labels.size() != emb.n_rows) {
        throw std::invalid_argument("severity_axis_report: subject count mismatch");
    }
    std::unordered_map<std::string, std::size_t> label_index;
    label_index.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) label_index[labels[i].subject_id] = i;

    std::vector<double> kl_values(emb.n_rows);
    std::vector<int> oa_values(emb.n_rows);
    std::vector<KlGrade> grades;
    grades.reserve(emb.n_rows);
    for (std::size_t r = 0; r < emb.n_rows; ++r) {
        auto it = label_index.find(emb.subject_ids[r]);
        if (it == label_index.end()) {
            throw std::invalid_argument("severity_axis_report: no label for subject " +
                                        emb.subject_ids[r]);
        }
        const LabelRecord& rec = labels[it->second];
        kl_values[r] = static_cast<double>(rec.kl.value());
        oa_values[r] = rec.oa.value();
        grades.push_back(rec.kl);
    }

    const Pca1Result pca = pca_first_component(emb);
    std::vector<double> oa_as_double(oa_values.begin(), oa_values.end());

    SeverityAxisReport rep;
    rep.evr_pc1 = pca.evr_pc1;
    rep.rho_pc1_kl = spearman(pca.scores, kl_values);
    rep.rho_pc1_oa = spearman(pca.scores, oa_as_double);
    rep.auroc_oa_probe = probe_auroc(pca.scores, oa_values);
    const CentroidMonotonicity mono = centroid_monotonicity(emb, grades);
    rep.adj_distances = mono.adj_distances;
    rep.rho_k_dadj = mono.rho_k_dadj;
    rep.classes_present = mono.grades_present;
    return rep;
}

}  // namespace oaprobe
