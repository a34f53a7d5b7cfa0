#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "oaprobe/geometry.hpp"
#include "oaprobe/metrics.hpp"
#include "oaprobe/rng.hpp"

using namespace oaprobe;

namespace {

EmbeddingMatrix make_embedding(std::size_t n, std::size_t d,
                               std::vector<double> data) {
    EmbeddingMatrix emb;
    emb.n_rows = n;
    emb.n_cols = d;
    emb.data = std::move(data);
    for (std::size_t i = 0; i < n; ++i) {
        emb.subject_ids.push_back("s" + std::to_string(i));
    }
    emb.validate();
    return emb;
}

}  // namespace

TEST_CASE("pca on collinear points") {
    // All points on the line y = x: one component carries all variance.
    const auto emb = make_embedding(4, 2, {0, 0, 1, 1, 2, 2, -1, -1});
    const Pca1Result r = pca_first_component(emb);
    CHECK(r.evr_pc1 == doctest::Approx(1.0).epsilon(1e-12));
    const double s = 1.0 / std::sqrt(2.0);
    CHECK(r.loading[0] == doctest::Approx(s).epsilon(1e-9));
    CHECK(r.loading[1] == doctest::Approx(s).epsilon(1e-9));
    REQUIRE(r.scores.size() == 4);
    CHECK(r.scores[0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(r.scores[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(r.scores[2] == doctest::Approx(3.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(r.scores[3] == doctest::Approx(-3.0 / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("pca single-axis case is exact") {
    const auto emb = make_embedding(2, 2, {0, 0, 2, 0});
    const Pca1Result r = pca_first_component(emb);
    CHECK(r.evr_pc1 == 1.0);
    CHECK(r.loading[0] == 1.0);
    CHECK(r.loading[1] == 0.0);
    CHECK(r.scores[0] == -1.0);
    CHECK(r.scores[1] == 1.0);
}

TEST_CASE("pca matches a power-iteration oracle") {
    const std::size_t n = 30, d = 8;
    Rng rng(2024);
    std::vector<double> data(n * d);
    // anisotropic data so the top eigenvalue is well separated
    for (std::size_t i = 0; i < n; ++i) {
        const double t = rng.next_normal();
        for (std::size_t j = 0; j < d; ++j) {
            data[i * d + j] = t * (j == 0 ? 3.0 : 0.3) + 0.5 * rng.next_normal();
        }
    }
    const auto emb = make_embedding(n, d, data);

    // oracle: explicit covariance + power iteration
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += emb.at(i, j) / double(n);
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                cov[a * d + b] += (emb.at(i, a) - mean[a]) * (emb.at(i, b) - mean[b]) /
                                  double(n - 1);
    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) trace += cov[a * d + a];
    std::vector<double> v(d, 1.0), w(d);
    for (int it = 0; it < 5000; ++it) {
        for (std::size_t a = 0; a < d; ++a) {
            w[a] = 0.0;
            for (std::size_t b = 0; b < d; ++b) w[a] += cov[a * d + b] * v[b];
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / norm;
    }
    double lambda = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        double cv = 0.0;
        for (std::size_t b = 0; b < d; ++b) cv += cov[a * d + b] * v[b];
        lambda += v[a] * cv;
    }

    const Pca1Result r = pca_first_component(emb);
    CHECK(r.evr_pc1 == doctest::Approx(lambda / trace).epsilon(1e-9));
    double dot = 0.0;
    for (std::size_t a = 0; a < d; ++a) dot += r.loading[a] * v[a];
    CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pca rejects zero-variance embeddings") {
    const auto emb = make_embedding(3, 2, {1, 2, 1, 2, 1, 2});
    CHECK_THROWS_WITH_AS(pca_first_component(emb),
                         doctest::Contains("zero total variance"),
                         std::invalid_argument);
}

TEST_CASE("pca explained variance is rotation invariant") {
    Rng rng(77);
    std::vector<double> data(20 * 2);
    for (auto& x : data) x = rng.next_normal();
    for (std::size_t i = 0; i < 20; ++i) data[i * 2] *= 2.5;  // stretch axis 0
    const auto emb = make_embedding(20, 2, data);
    const double theta = 0.3;
    std::vector<double> rotated(20 * 2);
    for (std::size_t i = 0; i < 20; ++i) {
        const double x = emb.at(i, 0), y = emb.at(i, 1);
        rotated[i * 2] = std::cos(theta) * x - std::sin(theta) * y;
        rotated[i * 2 + 1] = std::sin(theta) * x + std::cos(theta) * y;
    }
    const auto emb2 = make_embedding(20, 2, rotated);
    const Pca1Result a = pca_first_component(emb);
    const Pca1Result b = pca_first_component(emb2);
    CHECK(a.evr_pc1 == doctest::Approx(b.evr_pc1).epsilon(1e-9));
    // scores agree up to a global sign
    const double sign = (a.scores[0] * b.scores[0] >= 0.0) ? 1.0 : -1.0;
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(a.scores[i] == doctest::Approx(sign * b.scores[i]).epsilon(1e-8));
    }
}

TEST_CASE("embedding matrix validation") {
    EmbeddingMatrix emb;
    emb.n_rows = 1;
    emb.n_cols = 2;
    emb.data = {1.0, 2.0};
    emb.subject_ids = {"a"};
    CHECK_THROWS_AS(emb.validate(), std::invalid_argument);
    emb.n_rows = 2;
    CHECK_THROWS_AS(emb.validate(), std::invalid_argument);  // data size mismatch
    emb.data = {1.0, 2.0, 3.0, std::nan("")};
    emb.subject_ids = {"a", "b"};
    CHECK_THROWS_AS(emb.validate(), std::invalid_argument);
}

TEST_CASE("spearman hand values") {
    CHECK(spearman({1, 2, 3, 4, 5}, {1, 3, 2, 5, 4}) ==
          doctest::Approx(0.8).epsilon(1e-12));
    CHECK(spearman({1, 2, 3, 4, 5}, {5, 4, 3, 2, 1}) ==
          doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(spearman({1, 2, 3}, {10, 20, 300}) == doctest::Approx(1.0).epsilon(1e-12));
    // ties get average ranks: y-ranks are 1, 2.5, 2.5, 4
    CHECK(spearman({1, 2, 3, 4}, {1, 2, 2, 3}) ==
          doctest::Approx(3.0 / std::sqrt(10.0)).epsilon(1e-12));
}

TEST_CASE("spearman rejects degenerate input") {
    CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(spearman({1}, {2}), std::invalid_argument);
}

TEST_CASE("spearman only depends on ranks") {
    Rng rng(11);
    std::vector<double> x(15), y(15), x_mono(15);
    for (std::size_t i = 0; i < 15; ++i) {
        x[i] = rng.next_normal();
        y[i] = rng.next_normal();
        x_mono[i] = std::exp(0.5 * x[i]) + 3.0;  // strictly increasing transform
    }
    CHECK(spearman(x, y) == doctest::Approx(spearman(x_mono, y)).epsilon(1e-12));
}

TEST_CASE("probe auroc equals the rank auc folded above one half") {
    Rng rng(314);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(20);
        std::vector<int> y(20);
        int n_pos = 0;
        for (std::size_t i = 0; i < 20; ++i) {
            s[i] = rng.next_normal();
            y[i] = rng.next_below(2) ? 1 : 0;
            n_pos += y[i];
        }
        if (n_pos == 0) y[0] = 1;
        if (n_pos == 20) y[0] = 0;
        const double auc = roc_auc(s, y);
        const double expect = std::max(auc, 1.0 - auc);
        CHECK(probe_auroc(s, y) == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("probe auroc is symmetric under score negation") {
    const std::vector<double> s = {0.3, -1.2, 0.7, 2.4, -0.5, 1.1, 0.05, -2.0};
    const std::vector<int> y = {0, 0, 1, 1, 0, 1, 1, 0};
    std::vector<double> neg(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) neg[i] = -s[i];
    CHECK(probe_auroc(s, y) == probe_auroc(neg, y));
}

TEST_CASE("probe auroc degenerate cases") {
    CHECK(probe_auroc({1.0, 1.0, 1.0, 1.0}, {0, 1, 0, 1}) == 0.5);
    CHECK(probe_auroc({-2, -1, 1, 2}, {0, 0, 1, 1}) == 1.0);
    CHECK(probe_auroc({-2, -1, 1, 2}, {1, 1, 0, 0}) == 1.0);
    CHECK_THROWS_AS(probe_auroc({1, 2, 3}, {1, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(probe_auroc({1, 2}, {0, 2}), std::invalid_argument);
}

TEST_CASE("centroid distances and monotonicity") {
    // one subject per grade, positions 0,1,3,6,10 -> gaps 1,2,3,4
    const auto emb = make_embedding(5, 1, {0, 1, 3, 6, 10});
    std::vector<KlGrade> grades = {KlGrade(0), KlGrade(1), KlGrade(2), KlGrade(3),
                                   KlGrade(4)};
    const CentroidMonotonicity m = centroid_monotonicity(emb, grades);
    REQUIRE(m.adj_distances.size() == 4);
    CHECK(m.adj_distances[0] == 1.0);
    CHECK(m.adj_distances[1] == 2.0);
    CHECK(m.adj_distances[2] == 3.0);
    CHECK(m.adj_distances[3] == 4.0);
    CHECK(m.rho_k_dadj == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.grades_present == std::vector<int>{0, 1, 2, 3, 4});

    // shrinking gaps flip the sign
    const auto emb2 = make_embedding(5, 1, {0, 4, 7, 9, 10});
    const CentroidMonotonicity m2 = centroid_monotonicity(emb2, grades);
    CHECK(m2.rho_k_dadj == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("centroid monotonicity averages within grades and skips absent ones") {
    // grades 0,2,4 present; grade 2 centroid is the mean of two subjects
    const auto emb = make_embedding(4, 2, {0, 0, 2, 0, 4, 2, 10, 0});
    std::vector<KlGrade> grades = {KlGrade(0), KlGrade(2), KlGrade(2), KlGrade(4)};
    const CentroidMonotonicity m = centroid_monotonicity(emb, grades);
    CHECK(m.grades_present == std::vector<int>{0, 2, 4});
    REQUIRE(m.adj_distances.size() == 2);
    // centroid(2) = (3, 1): d(0->2) = sqrt(10), d(2->4) = sqrt(50)
    CHECK(m.adj_distances[0] == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));
    CHECK(m.adj_distances[1] == doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
}

TEST_CASE("centroid monotonicity needs three grades") {
    const auto emb = make_embedding(4, 1, {0, 1, 2, 3});
    std::vector<KlGrade> grades = {KlGrade(0), KlGrade(0), KlGrade(3), KlGrade(3)};
    CHECK_THROWS_WITH_AS(centroid_monotonicity(emb, grades),
                         doctest::Contains("fewer than 3 grades"),
                         std::invalid_argument);
}

TEST_CASE("severity axis report end to end") {
    // Dimension 0 encodes severity at positions 0,1,3,6,10; dimension 1 is inert.
    const double pos[5] = {0, 1, 3, 6, 10};
    EmbeddingMatrix emb;
    emb.n_rows = 10;
    emb.n_cols = 2;
    std::vector<LabelRecord> labels;
    for (int g = 0; g < 5; ++g) {
        for (int rep = 0; rep < 2; ++rep) {
            const std::string id = "s" + std::to_string(g) + "_" + std::to_string(rep);
            emb.subject_ids.push_back(id);
            emb.data.push_back(pos[g]);
            emb.data.push_back(0.0);
        }
    }
    for (int g = 4; g >= 0; --g) {  // reversed order: exercises id alignment
        for (int rep = 1; rep >= 0; --rep) {
            labels.emplace_back("s" + std::to_string(g) + "_" + std::to_string(rep),
                                KlGrade(g));
        }
    }
    const SeverityAxisReport rep = severity_axis_report(emb, labels);
    CHECK(rep.evr_pc1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.rho_pc1_kl == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.rho_pc1_oa == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));
    CHECK(rep.auroc_oa_probe == 1.0);
    REQUIRE(rep.adj_distances.size() == 4);
    CHECK(rep.adj_distances[0] == 1.0);
    CHECK(rep.adj_distances[3] == 4.0);
    CHECK(rep.rho_k_dadj == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.classes_present == std::vector<int>{0, 1, 2, 3, 4});

    labels.pop_back();
    CHECK_THROWS_AS(severity_axis_report(emb, labels), std::invalid_argument);
}
