#pragma once

#include <string>
#include <vector>

#include "oaprobe/hierarchy.hpp"

namespace oaprobe {

// N x D feature matrix with aligned subject ids, row-major storage.
struct EmbeddingMatrix {
    std::vector<std::string> subject_ids;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> data;

    double at(std::size_t r, std::size_t c) const { return data[r * n_cols + c]; }
    void validate() const;
};

struct Pca1Result {
    double evr_pc1 = 0.0;
    std::vector<double> scores;   // N projections on the first component
    std::vector<double> loading;  // D, unit norm, largest-magnitude entry positive
};

// First principal component of the mean-centered data (sample covariance,
// N-1 denominator). evr_pc1 = lambda_1 / trace(cov).
Pca1Result pca_first_component(const EmbeddingMatrix& emb);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// AUROC of a 1-D affine logistic model fit on (scores -> oa) by damped
// Newton iteration. Fit and evaluation use the same subjects.
double probe_auroc(const std::vector<double>& scores, const std::vector<int>& oa);

struct CentroidMonotonicity {
    std::vector<double> adj_distances;  // one per consecutive pair of present grades
    double rho_k_dadj = 0.0;
    std::vector<int> grades_present;
};

// Euclidean distances between consecutive present-grade centroids in the full
// latent space, and the Spearman correlation of (pair index, distance).
CentroidMonotonicity centroid_monotonicity(const EmbeddingMatrix& emb,
                                           const std::vector<KlGrade>& grades);

struct SeverityAxisReport {
    double evr_pc1 = 0.0;
    double rho_pc1_kl = 0.0;
    double rho_pc1_oa = 0.0;
    double auroc_oa_probe = 0.0;
    std::vector<double> adj_distances;
    double rho_k_dadj = 0.0;
    std::vector<int> classes_present;
};

// Composes PCA, Spearman correlations against KL/OA labels, the 1-D OA probe
// and centroid monotonicity. Embeddings and labels are aligned by subject id.
SeverityAxisReport severity_axis_report(const EmbeddingMatrix& emb,
                                        const std::vector<LabelRecord>& labels);

namespace detail {
// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major, n x n).
// Returns eigenvalues; eigenvectors_out columns hold the matching vectors.
std::vector<double> jacobi_eigen_symmetric(std::vector<double> matrix, std::size_t n,
                                           std::vector<double>& eigenvectors_out);
std::vector<double> average_ranks(const std::vector<double>& values);
}  // namespace detail

}  // namespace oaprobe
