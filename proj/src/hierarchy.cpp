#include "oaprobe/hierarchy.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace oaprobe {

KlGrade::KlGrade(int value) : value_(value) {
    if (value < 0 || value > 4) {
        throw std::invalid_argument("KL grade must be in 0..4, got " + std::to_string(value));
    }
}

OaLabel::OaLabel(int value) : value_(value) {
    if (value != 0 && value != 1) {
        throw std::invalid_argument("OA label must be 0 or 1, got " + std::to_string(value));
    }
}

OaLabel derive_oa(KlGrade kl) { return OaLabel(kl.value() >= 2 ? 1 : 0); }

LabelRecord::LabelRecord(std::string subject_id_in, KlGrade kl_in)
    : subject_id(std::move(subject_id_in)), kl(kl_in), oa(derive_oa(kl_in)) {
    if (subject_id.empty()) {
        throw std::invalid_argument("subject_id must be nonempty");
    }
}

KlProbVector::KlProbVector(const std::array<double, 5>& p) : p_(p) {
    double sum = 0.0;
    for (double v : p_) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw std::invalid_argument("KL probability outside [0, 1]");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
        throw std::invalid_argument("KL probabilities must sum to 1 within 1e-6, got sum " +
                                    std::to_string(sum));
    }
    for (double& v : p_) v /= sum;
}

double oa_prob_from_kl(const KlProbVector& p) { return p[2] + p[3] + p[4]; }

CohortSummary summarize_cohort(const std::vector<LabelRecord>& records) {
    if (records.empty()) {
        throw std::invalid_argument("cohort summary requires at least one record");
    }
    std::unordered_set<std::string> seen;
    seen.reserve(records.size());
    CohortSummary out;
    for (const auto& rec : records) {
        if (!seen.insert(rec.subject_id).second) {
            throw std::invalid_argument("duplicate subject_id: " + rec.subject_id);
        }
        out.grade_counts[static_cast<std::size_t>(rec.kl.value())]++;
        if (rec.oa.value() == 1) {
            out.n_oa_positive++;
        } else {
            out.n_oa_negative++;
        }
    }
    return out;
}

}  // namespace oaprobe
