#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oaprobe/hierarchy.hpp"

namespace oaprobe {

// Per-subject model outputs: coarse OA probability and, when the model has
// a KL head, a 5-way KL distribution. Sequences are aligned by index.
struct PredictionSet {
    std::vector<std::string> subject_ids;
    std::vector<double> p_oa;
    std::optional<std::vector<KlProbVector>> p_kl;

    void validate() const;  // lengths, id uniqueness, probability ranges
    bool has_kl() const { return p_kl.has_value(); }
};

enum class Task { oa, kl };

struct MetricReport {
    Task task = Task::oa;
    double auc = 0.0;
    double acc = 0.0;
    double f1 = 0.0;                                   // binary F1 (OA) or macro-F1 (KL)
    std::optional<std::array<double, 5>> per_class_f1;  // KL only
    std::vector<int> skipped_classes;                   // grades absent from true labels
};

// Rows are true labels, columns predicted.
struct ConfusionMatrix {
    int n_classes = 0;
    std::vector<std::int64_t> counts;  // n_classes * n_classes, row-major

    std::int64_t at(int t, int p) const { return counts[static_cast<std::size_t>(t * n_classes + p)]; }
    std::int64_t total() const;
    std::int64_t trace() const;
};

// Rank-based (Mann-Whitney) ROC AUC; tied scores count 0.5 per pair.
// Requires at least one positive and one negative label.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

double accuracy(const std::vector<int>& pred_labels, const std::vector<int>& true_labels);

// 2TP / (2TP + FP + FN); 0 when the denominator vanishes.
double binary_f1(const std::vector<int>& pred_labels, const std::vector<int>& true_labels);

struct MacroF1Result {
    double macro = 0.0;
    std::array<double, 5> per_class{};
    std::vector<int> skipped_classes;
};

// One-vs-rest F1 per grade, averaged over grades present in the true labels.
MacroF1Result macro_f1(const std::vector<int>& pred_grades, const std::vector<int>& true_grades);

struct MacroAucResult {
    double macro = 0.0;
    std::vector<int> skipped_classes;
};

// One-vs-rest AUC per grade present in the true labels, unweighted mean.
MacroAucResult macro_ovr_auc(const std::vector<KlProbVector>& p_kl,
                             const std::vector<int>& true_grades);

ConfusionMatrix confusion_matrix(const std::vector<int>& pred_labels,
                                 const std::vector<int>& true_labels, int n_classes);

// Lowest index attaining the maximum probability.
int argmax_grade(const KlProbVector& p);

// Hard OA decision threshold used for Acc/F1/confusion.
inline constexpr double kOaDecisionThreshold = 0.5;

std::vector<int> hard_oa_predictions(const std::vector<double>& p_oa);
std::vector<int> hard_kl_predictions(const std::vector<KlProbVector>& p_kl);

// Reorders `preds` to match the subject order of `labels`. Errors if the two
// subject sets differ.
PredictionSet align_predictions(const PredictionSet& preds, const std::vector<LabelRecord>& labels);

// Full per-task reports on aligned predictions (preds must cover exactly the
// label subjects; alignment is performed internally).
MetricReport evaluate_oa(const PredictionSet& preds, const std::vector<LabelRecord>& labels);
MetricReport evaluate_kl(const PredictionSet& preds, const std::vector<LabelRecord>& labels);

}  // namespace oaprobe
