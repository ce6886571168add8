#pragma once

#include "zits/tensor_ops.hpp"

#include <string>

namespace zits {

/// identity gives H = I_N (Q must equal N), i.e. no smoothing.
enum class BasisKind { cubic_bspline, fourier, identity };

BasisKind parse_basis_kind(const std::string& name);
std::string to_string(BasisKind kind);

/// N x Q matrix with orthonormal columns, evaluated on the grid i/N, i = 1..N.
struct BasisMatrix {
    Matrix h;
    BasisKind kind = BasisKind::identity;
    int n_loci = 0;
    int n_basis = 0;
};

/**
 * Raw basis on the grid, orthonormalized by Householder QR with each column's
 * largest-magnitude entry made positive. Spline bases use uniform interior
 * knots on [1/N, 1] and degree min(3, Q-1).
 */
BasisMatrix build_basis(int n_loci, int n_basis, BasisKind kind);

/// Raw (not orthonormalized) clamped B-spline design matrix, exposed for tests.
Matrix bspline_design(int n_loci, int n_basis);

/// Orthonormalize the columns of `raw`; throws NumericError if rank deficient.
Matrix orthonormalize_columns(const Matrix& raw);

} // namespace zits
