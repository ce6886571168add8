#pragma once

#include "zits/tensor_ops.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace zits {

inline constexpr double kLambdaFloor = 1e-3;
inline constexpr double kPFloor = 1e-3;

/// Per-pair method-of-moments starting values (N x N, symmetric).
struct MomentInit {
    Matrix lambda0;
    Matrix p0;
    Matrix eta0;
    Matrix theta0;
    int clamp_count = 0;
};

/**
 * Sample mean m and variance v (1/K normalization) of each pair over the given
 * cells (all cells when `cells` is empty), inverted to
 * lambda0 = (v + m^2)/m - 1 and p0 = (v - m)/(v + m^2 - m), then clamped.
 */
MomentInit moments_init(const CountTensor& data, std::span<const int> cells = {});

enum class InitScheme { random, cp, cpavg, eigenb, eigenx, eigenbx };

/// Throws std::invalid_argument listing the six valid names.
InitScheme parse_init_scheme(const std::string& name);
std::string to_string(InitScheme scheme);

struct InitFactors {
    Matrix alpha; ///< N x D
    Vector b0;    ///< D
    Vector x0;    ///< D
    bool cp_converged = true;
};

InitFactors init_scheme(InitScheme kind, const MomentInit& mi, int rank, std::uint64_t seed);

/// argmin_w ||m0 - alpha diag(w) alpha^T||_F via the Gram system G[d,e] = (a_d^T a_e)^2.
Vector diag_weight_regression(const Matrix& m0, const Matrix& alpha);

/// Eigenpairs of a symmetric matrix, leading `rank` by |eigenvalue| descending.
void leading_eigen(const Matrix& sym, int rank, Matrix& vectors, Vector& values);

struct CpResult {
    Matrix a1, a2; ///< N x D, unit-norm columns, signs aligned
    Matrix c;      ///< 2 x D slice weights
    int sweeps = 0;
    bool converged = false;
};

/// Rank-D CP-ALS of the N x N x 2 stack (x0, x1).
CpResult cp_two_slice(const Matrix& x0, const Matrix& x1, int rank, std::uint64_t seed,
                      int max_sweeps = 200, double tol = 1e-8);

struct MultiClusterInit {
    std::vector<InitFactors> per_cluster;
    std::vector<int> labels; ///< initial cell partition
};

/// Initial partition by k-means on PCA features of the cells, then per-cluster init.
MultiClusterInit multi_cluster_init(const CountTensor& data, int rank, int n_clusters,
                                    InitScheme scheme, std::uint64_t seed);

/// K x (N(N+1)/2) matrix whose row k is the upper triangle of cell k's slice.
Matrix cell_features(const CountTensor& data);

} // namespace zits
