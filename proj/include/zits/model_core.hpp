#pragma once

#include "zits/basis.hpp"
#include "zits/tensor_ops.hpp"

namespace zits {

/**
 * Smoothed doubly low-rank parameterization: alpha = H Gamma (N x D),
 * eta = I x1 alpha x2 alpha x3 w_beta, theta = I x1 alpha x2 alpha x3 w_xi.
 *
 * When cells are block-structured, D = n_clusters * block_rank.
 */
struct ModelParams {
    Matrix gamma;
    BasisMatrix basis;
    Matrix w_beta;
    Matrix w_xi;
    int n_clusters = 1;
    int block_rank = 0;

    Index n_loci() const { return basis.h.rows(); }
    Index n_cells() const { return w_beta.rows(); }
    Index n_basis() const { return gamma.rows(); }
    Index rank() const { return gamma.cols(); }
    Matrix alpha() const { return basis.h * gamma; }

    /// Throws DimensionError on inconsistent shapes, NumericError on non-finite entries.
    void validate() const;
};

struct LinkTensors {
    DenseTensor3 eta;
    DenseTensor3 theta;
};

struct LambdaP {
    DenseTensor3 lambda;
    DenseTensor3 p;
};

/// Which likelihood an objective uses.
enum class Likelihood { zip, poisson, binary };

struct LikelihoodOptions {
    /// Cells with |i - j| < exclude_diag_band are dropped from every sum.
    int exclude_diag_band = 0;
};

// Scalar building blocks.
double softplus(double x);
double logistic(double x);

/// Upper threshold of the identity region of the eta soft clamp (log 50 - 1).
inline constexpr double kEtaKnee = 2.912023005428146;

/// Identity below kEtaKnee, kEtaKnee + tanh(eta - kEtaKnee) above; never exceeds log 50.
double soft_clamp_eta(double eta);
double soft_clamp_slope(double eta);

/// Per-entry losses (before normalization) and their link derivatives.
double zip_entry_loss(double eta, double theta, double c);
void zip_entry_grad(double eta, double theta, double c, double& d_eta, double& d_theta);
double poisson_entry_loss(double eta, double c);
double poisson_entry_grad(double eta, double c);
double binary_entry_loss(double theta, double c);
double binary_entry_grad(double theta, double c);

/// 2 / (N (N + 1) K), the per-entry averaging factor over i <= j and k.
double nll_normalizer(Index n_loci, Index n_cells);

LinkTensors build_links(const ModelParams& m);

/// lambda = exp(soft_clamp_eta(eta)), p = 1 / (1 + exp(theta)) computed stably.
LambdaP lambda_p_of(const LinkTensors& links);

/// Averaged ZIP negative log-likelihood, up to the additive sum of log C! terms.
double nll(const ModelParams& m, const CountTensor& data, const LikelihoodOptions& opts = {});

/// Same objective evaluated directly on link tensors; only entries with i <= j are read.
double nll_links(const LinkTensors& links, const CountTensor& data,
                 const LikelihoodOptions& opts = {});

struct LinkGradients {
    DenseTensor3 eta;
    DenseTensor3 theta;
};

/// Link gradients of nll, mirrored so both tensors are symmetric in (i, j).
LinkGradients grad_links(const ModelParams& m, const CountTensor& data,
                         const LikelihoodOptions& opts = {});
LinkGradients grad_links_of(const LinkTensors& links, const CountTensor& data,
                            const LikelihoodOptions& opts = {});

enum class WBlock { beta, xi };

/// dL/dW = 1/2 Diag(G x1 alpha^T x2 alpha^T)^T + 1/2 Diag(G)^T (alpha * alpha).
Matrix grad_w(const ModelParams& m, const DenseTensor3& grad_link, WBlock which);

/**
 * dL/dalpha = Diag~(G_eta x1 I x2 alpha^T x3 beta^T) + (Diag(G_eta) beta) * alpha + the
 * same terms with (G_theta, xi). Either gradient may be empty (0 x 0 x 0) to skip it.
 */
Matrix grad_alpha(const ModelParams& m, const DenseTensor3& grad_eta,
                  const DenseTensor3& grad_theta);

/// dL/dGamma = H^T dL/dalpha, assembled through the Diag~ route with H^T in mode 1.
Matrix grad_gamma(const ModelParams& m, const DenseTensor3& grad_eta,
                  const DenseTensor3& grad_theta);

/// Poisson variant: per-entry exp(eta) - C eta, averaged like nll.
double nll_poisson(const ModelParams& m, const CountTensor& data,
                   const LikelihoodOptions& opts = {});
double nll_poisson_links(const DenseTensor3& eta, const DenseTensor3& data,
                         const LikelihoodOptions& opts = {});
DenseTensor3 grad_poisson(const ModelParams& m, const CountTensor& data,
                          const LikelihoodOptions& opts = {});
DenseTensor3 grad_poisson_links(const DenseTensor3& eta, const DenseTensor3& data,
                                const LikelihoodOptions& opts = {});

/**
 * Pair-major data: row r of `values` holds cell counts of the r-th locus pair
 * (i <= j, ordered as in pair_products); `weight` is 0 for excluded pairs.
 */
struct PairData {
    Index n_loci = 0;
    Index n_cells = 0;
    Matrix values;
    Vector weight;
    double norm = 0.0;
};

PairData make_pair_data(const CountTensor& data, const LikelihoodOptions& opts = {});
PairData make_pair_data(const DenseTensor3& data, const LikelihoodOptions& opts = {});

/// Pair row index of (i, j), any order.
Index pair_index(Index n_loci, Index i, Index j);

/// M x K matrix of the i <= j entries of an N x N x K tensor.
Matrix tensor_to_pairs(const DenseTensor3& t);

/// Symmetric N x N x K tensor from pair-major values.
DenseTensor3 pairs_to_tensor(const Matrix& pairs, Index n_loci);

/**
 * Objective and gradients on pair-major links (M x K each). Gradients are
 * written when the pointers are non-null. Links not used by `kind` may be empty.
 * Throws NumericError naming (i, j, k) on a non-finite entry.
 */
double evaluate_pairs(Likelihood kind, const PairData& data, const Matrix& eta,
                      const Matrix& theta, Matrix* g_eta, Matrix* g_theta);

/// dL/dalpha from a pair-major link gradient and its cell factor.
Matrix pair_grad_alpha(const Matrix& alpha, const Matrix& g_link, const Matrix& w);

} // namespace zits
