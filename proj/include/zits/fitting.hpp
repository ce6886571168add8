#pragma once

#include "zits/basis.hpp"
#include "zits/init_schemes.hpp"
#include "zits/model_core.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace zits {

struct FitConfig {
    int max_iters = 500;
    double rel_tol = 1e-4;
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    double initial_step = 1.0;
    // trial steps grow by 1/backtrack after a success, up to this cap
    double max_step = 4.0;
    double beta_max = 50.0;
    double xi_max = 50.0;
    bool box = true;
    /// Precondition each block step with a Gauss-Newton curvature matrix.
    bool precondition = true;
    int max_backtracks = 60;
    std::uint64_t seed = 1;
    int exclude_diag_band = 0;
    Likelihood likelihood = Likelihood::zip;

    void validate() const;
};

struct FitReport {
    std::vector<double> nll_trace;                ///< entry 0 is the initial value
    std::vector<std::array<double, 3>> rel_change; ///< (Gamma, beta, xi) per iteration
    int iterations = 0;
    bool converged = false;
    bool stalled = false;
    double step_gamma = 0.0;
    double step_beta = 0.0;
    double step_xi = 0.0;
};

struct FitResult {
    ModelParams params;
    FitReport report;
};

/// Rescale Gamma columns to unit norm, multiplying the cell factors by the squared norm.
void normalize_gauge(ModelParams& m);

/**
 * Rescale each column so that ||Gamma_d||^2 equals max(|w_beta_d|, |w_xi_d|).
 * The fitter works in this gauge; box bounds still refer to the unit-Gamma parameters.
 */
void balance_gauge(ModelParams& m);

/**
 * Cyclic Gamma -> w_beta -> w_xi descent with projected Armijo backtracking.
 * The w block not used by cfg.likelihood is left untouched.
 */
FitResult fit(const CountTensor& data, const ModelParams& init, const FitConfig& cfg);

struct ClusterSolution {
    Matrix z;        ///< K x R one-hot
    Matrix beta_bar; ///< R x L
    Matrix xi_bar;   ///< R x L
    double objective = 0.0;
    std::vector<int> labels;
};

/// Objective J for a given partition and block means; `blocked` selects the D = R L target.
double cluster_objective(const Matrix& w_beta, const Matrix& w_xi, const std::vector<int>& labels,
                         const Matrix& beta_bar, const Matrix& xi_bar, bool blocked);

/**
 * Minimize J(Z, beta_bar, xi_bar) = ||w_beta - (Z kr Z beta_bar)||^2 + (same for xi) by
 * alternating means and reassignment from 10 seeded restarts. Requires D = R L.
 */
ClusterSolution extract_clusters(const Matrix& w_beta, const Matrix& w_xi, int n_clusters,
                                 int block_rank, std::uint64_t seed, int restarts = 10);

/// Same minimization when all clusters share the D columns: target row k is Z_k (beta_bar).
ClusterSolution extract_clusters_shared(const Matrix& w_beta, const Matrix& w_xi, int n_clusters,
                                        std::uint64_t seed, int restarts = 10);

/// shared: D = L columns used by every cluster. blocked: D = R L with per-cluster blocks.
enum class Layout { shared, blocked };

Layout parse_layout(const std::string& name);
std::string to_string(Layout layout);

struct PipelineConfig {
    int n_clusters = 1; ///< R
    int block_rank = 5; ///< L
    int n_basis = 0;    ///< Q; 0 means Q = N
    BasisKind basis = BasisKind::identity;
    InitScheme scheme = InitScheme::eigenb;
    Layout layout = Layout::shared;
    FitConfig fit;
};

struct PipelineResult {
    ModelParams init;
    ModelParams params;
    ClusterSolution clusters;
    FitReport report;
};

/// Model parameters from init factors: Gamma = H^T alpha, cell rows lifted from b0, x0.
ModelParams params_from_init(const BasisMatrix& basis, const InitFactors& f, int n_cells);

PipelineResult fit_pipeline(const CountTensor& data, const PipelineConfig& cfg);

} // namespace zits
