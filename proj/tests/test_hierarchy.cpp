#include <doctest.h>

#include <array>
#include <stdexcept>

#include "oaprobe/hierarchy.hpp"

using namespace oaprobe;

TEST_CASE("kl grade validates its range") {
    for (int g = 0; g <= 4; ++g) {
        CHECK(KlGrade(g).value() == g);
    }
    CHECK_THROWS_AS(KlGrade(-1), std::invalid_argument);
    CHECK_THROWS_AS(KlGrade(5), std::invalid_argument);
}

TEST_CASE("oa label validates its range") {
    CHECK(OaLabel(0).value() == 0);
    CHECK(OaLabel(1).value() == 1);
    CHECK_THROWS_AS(OaLabel(2), std::invalid_argument);
    CHECK_THROWS_AS(OaLabel(-1), std::invalid_argument);
}

TEST_CASE("oa derivation thresholds at grade 2") {
    CHECK(derive_oa(KlGrade(0)).value() == 0);
    CHECK(derive_oa(KlGrade(1)).value() == 0);
    CHECK(derive_oa(KlGrade(2)).value() == 1);
    CHECK(derive_oa(KlGrade(3)).value() == 1);
    CHECK(derive_oa(KlGrade(4)).value() == 1);
}

TEST_CASE("label record derives oa and rejects empty ids") {
    const LabelRecord r("knee42", KlGrade(3));
    CHECK(r.subject_id == "knee42");
    CHECK(r.kl.value() == 3);
    CHECK(r.oa.value() == 1);
    CHECK_THROWS_AS(LabelRecord("", KlGrade(0)), std::invalid_argument);
}

TEST_CASE("kl probability vector enforces the simplex") {
    CHECK_NOTHROW(KlProbVector({0.2, 0.2, 0.2, 0.2, 0.2}));
    CHECK_NOTHROW(KlProbVector({1.0, 0.0, 0.0, 0.0, 0.0}));
    // within tolerance: accepted and renormalized
    const KlProbVector p({0.2, 0.2, 0.2, 0.2, 0.2 + 5e-7});
    double sum = 0.0;
    for (int k = 0; k < 5; ++k) sum += p[k];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(KlProbVector({0.5, 0.5, 0.5, 0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(KlProbVector({0.9, 0.0, 0.0, 0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(KlProbVector({-0.1, 0.4, 0.3, 0.2, 0.2}), std::invalid_argument);
    CHECK_THROWS_AS(KlProbVector({1.1, -0.1, 0.0, 0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("kl-implied oa probability is the upper-grade mass") {
    CHECK(oa_prob_from_kl(KlProbVector({0.2, 0.2, 0.2, 0.2, 0.2})) ==
          doctest::Approx(0.6).epsilon(1e-12));
    CHECK(oa_prob_from_kl(KlProbVector({1.0, 0.0, 0.0, 0.0, 0.0})) == 0.0);
    CHECK(oa_prob_from_kl(KlProbVector({0.0, 0.0, 0.0, 0.0, 1.0})) == 1.0);
    CHECK(oa_prob_from_kl(KlProbVector({0.1, 0.2, 0.3, 0.25, 0.15})) ==
          doctest::Approx(0.7).epsilon(1e-12));
}

namespace {

std::vector<LabelRecord> cohort_from_counts(const std::array<int, 5>& counts) {
    std::vector<LabelRecord> out;
    int serial = 0;
    for (int g = 0; g <= 4; ++g) {
        for (int i = 0; i < counts[static_cast<std::size_t>(g)]; ++i) {
            out.emplace_back("s" + std::to_string(++serial), KlGrade(g));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("cohort summary reproduces the training-split branch counts") {
    const auto records = cohort_from_counts({82, 46, 86, 111, 58});
    const CohortSummary s = summarize_cohort(records);
    CHECK(s.grade_counts == std::array<std::int64_t, 5>{82, 46, 86, 111, 58});
    CHECK(s.n_oa_negative == 128);
    CHECK(s.n_oa_positive == 255);
    CHECK(s.total() == 383);
}

TEST_CASE("cohort summary reproduces the test-split branch counts") {
    const auto records = cohort_from_counts({21, 12, 22, 28, 15});
    const CohortSummary s = summarize_cohort(records);
    CHECK(s.n_oa_negative == 33);
    CHECK(s.n_oa_positive == 65);
    CHECK(s.total() == 98);
}

TEST_CASE("cohort summary rejects duplicates and empty cohorts") {
    std::vector<LabelRecord> records;
    records.emplace_back("a", KlGrade(0));
    records.emplace_back("a", KlGrade(3));
    CHECK_THROWS_WITH_AS(summarize_cohort(records),
                         doctest::Contains("a"), std::invalid_argument);
    CHECK_THROWS_AS(summarize_cohort({}), std::invalid_argument);
}
