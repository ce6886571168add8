#pragma once

#include "zits/tensor_ops.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace zits {

/**
 * Generator settings. sigma_* are variances; uniform noise uses width
 * sqrt(12 sigma) so that its variance equals sigma.
 */
struct SimConfig {
    int n_loci = 20;
    int n_cells = 250;
    int block_rank = 5; ///< L
    int n_clusters = 1; ///< R
    double mu_alpha = 0.5;
    double sigma_alpha = 0.125;
    double mu_beta = 5.0;
    double sigma_beta = 1.25;
    double mu_xi = 1.0;
    double sigma_xi = 0.25;
    /// Rescale each column of alpha to unit Euclidean norm after adding noise.
    bool normalize_alpha = true;
    std::uint64_t seed = 1;

    /// Fills sigma_* = mu_* / 4.
    void set_default_variances();
    /// Throws std::invalid_argument on non-positive scales or infeasible sizes.
    void validate() const;
    std::string to_text() const;
    static SimConfig from_text(const std::string& text);
};

struct SimTruth {
    Matrix alpha; ///< N x L
    Matrix beta;  ///< K x L, block-constant rows
    Matrix xi;    ///< K x L
    Matrix beta_bar; ///< R x L
    Matrix xi_bar;   ///< R x L
    DenseTensor3 lambda;
    DenseTensor3 p;
    DenseTensor3 latent; ///< C~ before masking
    DenseTensor3 mask;   ///< B, 1 = kept
    std::vector<int> labels;
};

struct SimResult {
    CountTensor data;
    SimTruth truth;
};

SimResult simulate(const SimConfig& cfg);

double rel_error(const DenseTensor3& estimate, const DenseTensor3& truth);

struct DetectionMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
    bool precision_undefined = false;
    bool recall_undefined = false;
};

/**
 * Confusion counts over the observed-zero cells i <= j: positive = false zero.
 * `flags` and `false_zero_truth` are N x N x K 0/1 tensors; `observed_zero` marks
 * which cells are scanned.
 */
DetectionMetrics detection_metrics(const DenseTensor3& flags, const DenseTensor3& false_zero_truth,
                                   const DenseTensor3& observed_zero);

/// Same metrics from parallel 0/1 vectors already restricted to observed zeros.
DetectionMetrics detection_metrics(const std::vector<int>& flags, const std::vector<int>& truth);

/// Centered rows projected on the leading right singular vectors.
Matrix pca_project(const Matrix& rows, int n_components = 20);

struct KMeansResult {
    std::vector<int> labels;
    double sse = 0.0;
};

/// Lloyd iterations from k-means++ seeds, best SSE of `restarts` runs.
KMeansResult kmeans(const Matrix& rows, int n_clusters, std::uint64_t seed, int restarts = 10);

double ari(const std::vector<int>& a, const std::vector<int>& b);

/// Observed-zero cells whose latent count was positive (C = 0, C~ > 0).
DenseTensor3 false_zero_truth(const SimTruth& truth, const CountTensor& data);

/// Cells as rows of upper-triangle features, K x N(N+1)/2.
Matrix cell_features(const DenseTensor3& t);

/// ARI of k-means (after PCA) on the rows of `rows` against `labels`.
double cluster_ari(const Matrix& rows, const std::vector<int>& labels, int n_clusters,
                   std::uint64_t seed, int n_components = 20);

} // namespace zits
