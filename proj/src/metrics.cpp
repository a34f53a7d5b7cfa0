#include "oaprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace oaprobe {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                                    " vs " + std::to_string(b) + ")");
    }
}

void require_binary(const std::vector<int>& v, const char* what) {
    for (int x : v) {
        if (x != 0 && x != 1) {
            throw std::invalid_argument(std::string(what) + ": labels must be 0 or 1");
        }
    }
}

}  // namespace

void PredictionSet::validate() const {
    require_same_size(subject_ids.size(), p_oa.size(), "PredictionSet");
    if (p_kl) require_same_size(subject_ids.size(), p_kl->size(), "PredictionSet KL block");
    if (subject_ids.empty()) throw std::invalid_argument("PredictionSet: empty");
    std::unordered_set<std::string> seen;
    seen.reserve(subject_ids.size());
    for (const auto& id : subject_ids) {
        if (!seen.insert(id).second) {
            throw std::invalid_argument("PredictionSet: duplicate subject_id: " + id);
        }
    }
    for (double p : p_oa) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw std::invalid_argument("PredictionSet: p_oa outside [0, 1]");
        }
    }
}

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t t = 0;
    for (int i = 0; i < n_classes; ++i) t += at(i, i);
    return t;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    require_same_size(scores.size(), labels.size(), "roc_auc");
    require_binary(labels, "roc_auc");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += static_cast<std::size_t>(y);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("roc_auc: undefined AUC (labels contain a single class)");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tied groups (1-based). Ranks are integers or exact
    // halves, so the rank sum below stays exact in double.
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] == 1) rank_sum_pos += rank[k];
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy(const std::vector<int>& pred_labels, const std::vector<int>& true_labels) {
    require_same_size(pred_labels.size(), true_labels.size(), "accuracy");
    if (pred_labels.empty()) throw std::invalid_argument("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t k = 0; k < pred_labels.size(); ++k) {
        if (pred_labels[k] == true_labels[k]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred_labels.size());
}

double binary_f1(const std::vector<int>& pred_labels, const std::vector<int>& true_labels) {
    require_same_size(pred_labels.size(), true_labels.size(), "binary_f1");
    require_binary(pred_labels, "binary_f1");
    require_binary(true_labels, "binary_f1");
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < pred_labels.size(); ++k) {
        if (pred_labels[k] == 1 && true_labels[k] == 1) ++tp;
        if (pred_labels[k] == 1 && true_labels[k] == 0) ++fp;
        if (pred_labels[k] == 0 && true_labels[k] == 1) ++fn;
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    if (denom == 0) return 0.0;
    return static_cast<double>(2 * tp) / static_cast<double>(denom);
}

MacroF1Result macro_f1(const std::vector<int>& pred_grades, const std::vector<int>& true_grades) {
    require_same_size(pred_grades.size(), true_grades.size(), "macro_f1");
    if (true_grades.empty()) throw std::invalid_argument("macro_f1: empty input");
    for (int g : true_grades) KlGrade check(g);
    for (int g : pred_grades) KlGrade check(g);

    MacroF1Result out;
    double sum = 0.0;
    int n_present = 0;
    for (int k = 0; k < 5; ++k) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        bool present = false;
        for (std::size_t i = 0; i < true_grades.size(); ++i) {
            if (true_grades[i] == k) present = true;
            if (pred_grades[i] == k && true_grades[i] == k) ++tp;
            if (pred_grades[i] == k && true_grades[i] != k) ++fp;
            if (pred_grades[i] != k && true_grades[i] == k) ++fn;
        }
        const std::int64_t denom = 2 * tp + fp + fn;
        out.per_class[static_cast<std::size_t>(k)] =
            denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
        if (present) {
            sum += out.per_class[static_cast<std::size_t>(k)];
            ++n_present;
        } else {
            out.skipped_classes.push_back(k);
        }
    }
    out.macro = sum / static_cast<double>(n_present);
    return out;
}

MacroAucResult macro_ovr_auc(const std::vector<KlProbVector>& p_kl,
                             const std::vector<int>& true_grades) {
    require_same_size(p_kl.size(), true_grades.size(), "macro_ovr_auc");
    if (true_grades.empty()) throw std::invalid_argument("macro_ovr_auc: empty input");
    for (int g : true_grades) KlGrade check(g);

    MacroAucResult out;
    double sum = 0.0;
    int n_used = 0;
    for (int k = 0; k < 5; ++k) {
        bool any_pos = false, any_neg = false;
        for (int g : true_grades) (g == k ? any_pos : any_neg) = true;
        if (!any_pos || !any_neg) {
            out.skipped_classes.push_back(k);
            continue;
        }
        std::vector<double> scores(p_kl.size());
        std::vector<int> labels(p_kl.size());
        for (std::size_t i = 0; i < p_kl.size(); ++i) {
            scores[i] = p_kl[i][k];
            labels[i] = true_grades[i] == k ? 1 : 0;
        }
        sum += roc_auc(scores, labels);
        ++n_used;
    }
    if (n_used == 0) {
        throw std::invalid_argument("macro_ovr_auc: no class with both presence and absence");
    }
    out.macro = sum / static_cast<double>(n_used);
    return out;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& pred_labels,
                                 const std::vector<int>& true_labels, int n_classes) {
    require_same_size(pred_labels.size(), true_labels.size(), "confusion_matrix");
    if (n_classes < 2) throw std::invalid_argument("confusion_matrix: n_classes must be >= 2");
    ConfusionMatrix cm;
    cm.n_classes = n_classes;
    cm.counts.assign(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0);
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        const int t = true_labels[i];
        const int p = pred_labels[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
            throw std::invalid_argument("confusion_matrix: label out of range at index " +
                                        std::to_string(i));
        }
        cm.counts[static_cast<std::size_t>(t * n_classes + p)]++;
    }
    return cm;
}

int argmax_grade(const KlProbVector& p) {
    int best = 0;
    for (int k = 1; k < 5; ++k) {
        if (p[k] > p[best]) best = k;
    }
    return best;
}

std::vector<int> hard_oa_predictions(const std::vector<double>& p_oa) {
    std::vector<int> out(p_oa.size());
    for (std::size_t i = 0; i < p_oa.size(); ++i) out[i] = p_oa[i] >= kOaDecisionThreshold ? 1 : 0;
    return out;
}

std::vector<int> hard_kl_predictions(const std::vector<KlProbVector>& p_kl) {
    std::vector<int> out(p_kl.size());
    for (std::size_t i = 0; i < p_kl.size(); ++i) out[i] = argmax_grade(p_kl[i]);
    return out;
}

PredictionSet align_predictions(const PredictionSet& preds,
                                const std::vector<LabelRecord>& labels) {
    preds.validate();
    if (preds.subject_ids.size() != labels.size()) {
        throw std::invalid_argument("predictions cover " + std::to_string(preds.subject_ids.size()) +
                                    " subjects but labels have " + std::to_string(labels.size()));
    }
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(preds.subject_ids.size());
    for (std::size_t i = 0; i < preds.subject_ids.size(); ++i) index[preds.subject_ids[i]] = i;

    PredictionSet out;
    out.subject_ids.reserve(labels.size());
    out.p_oa.reserve(labels.size());
    if (preds.p_kl) out.p_kl.emplace();
    for (const auto& rec : labels) {
        auto it = index.find(rec.subject_id);
        if (it == index.end()) {
            throw std::invalid_argument("no prediction for subject " + rec.subject_id);
        }
        out.subject_ids.push_back(rec.subject_id);
        out.p_oa.push_back(preds.p_oa[it->second]);
        if (preds.p_kl) out.p_kl->push_back((*preds.p_kl)[it->second]);
    }
    return out;
}

MetricReport evaluate_oa(const PredictionSet& preds, const std::vector<LabelRecord>& labels) {
    const PredictionSet aligned = align_predictions(preds, labels);
    std::vector<int> truth(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) truth[i] = labels[i].oa.value();
    const std::vector<int> hard = hard_oa_predictions(aligned.p_oa);

    MetricReport rep;
    rep.task = Task::oa;
    rep.auc = roc_auc(aligned.p_oa, truth);
    rep.acc = accuracy(hard, truth);
    rep.f1 = binary_f1(hard, truth);
    return rep;
}

MetricReport evaluate_kl(const PredictionSet& preds, const std::vector<LabelRecord>& labels) {
    const PredictionSet aligned = align_predictions(preds, labels);
    if (!aligned.p_kl) {
        throw std::invalid_argument("KL evaluation requires KL probabilities in the prediction set");
    }
    std::vector<int> truth(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) truth[i] = labels[i].kl.value();
    const std::vector<int> hard = hard_kl_predictions(*aligned.p_kl);

    MetricReport rep;
    rep.task = Task::kl;
    const MacroAucResult auc = macro_ovr_auc(*aligned.p_kl, truth);
    const MacroF1Result f1 = macro_f1(hard, truth);
    rep.auc = auc.macro;
    rep.acc = accuracy(hard, truth);
    rep.f1 = f1.macro;
    rep.per_class_f1 = f1.per_class;
    rep.skipped_classes = f1.skipped_classes;
    return rep;
}

}  // namespace oaprobe
