#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace oaprobe {

// Ordinal Kellgren-Lawrence grade, 0..4.
class KlGrade {
  public:
    explicit KlGrade(int value);
    int value() const { return value_; }
    friend bool operator==(KlGrade a, KlGrade b) { return a.value_ == b.value_; }

  private:
    int value_;
};

// Binary osteoarthritis presence indicator.
class OaLabel {
  public:
    explicit OaLabel(int value);
    int value() const { return value_; }
    friend bool operator==(OaLabel a, OaLabel b) { return a.value_ == b.value_; }

  private:
    int value_;
};

// OA follows from the grade: positive iff grade >= 2.
OaLabel derive_oa(KlGrade kl);

// Subject with its coarse/fine label pair. The OA label is always the
// derived one, so the hierarchy holds by construction.
struct LabelRecord {
    std::string subject_id;
    KlGrade kl;
    OaLabel oa;

    LabelRecord(std::string subject_id, KlGrade kl);
};

// Probability vector over the 5 KL grades. Entries are validated to [0, 1]
// and the sum to 1 within 1e-6, then renormalized by the exact sum.
class KlProbVector {
  public:
    explicit KlProbVector(const std::array<double, 5>& p);
    double operator[](int k) const { return p_[static_cast<std::size_t>(k)]; }
    const std::array<double, 5>& values() const { return p_; }

    static constexpr double kSimplexTolerance = 1e-6;

  private:
    std::array<double, 5> p_;
};

// Coarse OA probability implied by a KL distribution: p2 + p3 + p4.
double oa_prob_from_kl(const KlProbVector& p);

struct CohortSummary {
    std::array<std::int64_t, 5> grade_counts{};
    std::int64_t n_oa_negative = 0;
    std::int64_t n_oa_positive = 0;
    std::int64_t total() const { return n_oa_negative + n_oa_positive; }
};

// Per-grade and OA-branch counts. Rejects duplicate subject ids.
CohortSummary summarize_cohort(const std::vector<LabelRecord>& records);

}  // namespace oaprobe
