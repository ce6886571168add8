#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace zits {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * Dense 3-way tensor with dims (d1, d2, d3).
 *
 * Storage is row-major inside each frontal slice and the third index is the
 * slowest axis, so slice k occupies values()[k*d1*d2, (k+1)*d1*d2).
 */
class DenseTensor3 {
  public:
    DenseTensor3() = default;
    DenseTensor3(Index d1, Index d2, Index d3, double fill = 0.0);
    DenseTensor3(Index d1, Index d2, Index d3, std::vector<double> values);

    Index d1() const { return d1_; }
    Index d2() const { return d2_; }
    Index d3() const { return d3_; }
    /// mode is 1, 2 or 3.
    Index dim(int mode) const;
    Index size() const { return static_cast<Index>(values_.size()); }

    double operator()(Index i, Index j, Index k) const { return values_[offset(i, j, k)]; }
    double& operator()(Index i, Index j, Index k) { return values_[offset(i, j, k)]; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    Eigen::Map<const RowMatrix> slice(Index k) const {
        return {values_.data() + k * d1_ * d2_, d1_, d2_};
    }
    Eigen::Map<RowMatrix> slice(Index k) { return {values_.data() + k * d1_ * d2_, d1_, d2_}; }

    bool same_shape(const DenseTensor3& other) const {
        return d1_ == other.d1_ && d2_ == other.d2_ && d3_ == other.d3_;
    }
    double frobenius_norm() const;

  private:
    std::size_t offset(Index i, Index j, Index k) const {
        return static_cast<std::size_t>((k * d1_ + i) * d2_ + j);
    }

    Index d1_ = 0, d2_ = 0, d3_ = 0;
    std::vector<double> values_;
};

struct CountEntry {
    int i = 0;
    int j = 0;
    int k = 0;
    std::int64_t c = 0;
};

/**
 * Sparse N x N x K count tensor, symmetric in the first two modes.
 *
 * Only the upper triangle i <= j is stored; absent triples read as zero.
 * Entries are kept sorted by (k, i, j).
 */
class CountTensor {
  public:
    CountTensor() = default;
    CountTensor(int n_loci, int n_cells, std::vector<CountEntry> entries,
                bool include_diagonal = true);

    int n_loci() const { return n_loci_; }
    int n_cells() const { return n_cells_; }
    bool include_diagonal() const { return include_diagonal_; }
    std::span<const CountEntry> entries() const { return entries_; }
    std::size_t nnz() const { return entries_.size(); }

    /// Count at (i, j, k) for any ordering of i and j.
    std::int64_t at(int i, int j, int k) const;

    /// Full symmetric dense realization.
    DenseTensor3 to_dense() const;

    /// Calls f(i, j, k, c) for every upper-triangle cell, zeros included.
    template <class F> void for_each_upper(F&& f) const {
        std::size_t pos = 0;
        for (int k = 0; k < n_cells_; ++k) {
            for (int i = 0; i < n_loci_; ++i) {
                for (int j = i; j < n_loci_; ++j) {
                    std::int64_t c = 0;
                    if (pos < entries_.size() && entries_[pos].k == k && entries_[pos].i == i &&
                        entries_[pos].j == j) {
                        c = entries_[pos].c;
                        ++pos;
                    }
                    f(i, j, k, c);
                }
            }
        }
    }

  private:
    int n_loci_ = 0;
    int n_cells_ = 0;
    bool include_diagonal_ = true;
    std::vector<CountEntry> entries_;
};

/// t x_mode a, where a has as many columns as t has entries along `mode`.
DenseTensor3 mode_product(const DenseTensor3& t, const Matrix& a, int mode);

/// I x1 alpha x2 alpha x3 w for the D x D x D identity tensor I.
DenseTensor3 cp3_sym(const Matrix& alpha, const Matrix& w);

/// Row-wise Kronecker product: row k is a_k (x) b_k.
Matrix khatri_rao_rows(const Matrix& a, const Matrix& b);

/// out(i, k) = t(i, i, k); requires d1 == d2.
Matrix diag_frontal(const DenseTensor3& t);

/// out(q, l) = t(q, l, l); requires d2 == d3.
Matrix diag_horizontal(const DenseTensor3& t);

/// Number of unordered locus pairs i <= j.
inline Index pair_count(Index n) { return n * (n + 1) / 2; }

/**
 * Upper-triangle pair products: row (i, j) with i <= j holds alpha_i * alpha_j
 * elementwise. Rows are ordered i-major (0,0), (0,1), ..., (0,N-1), (1,1), ...
 */
Matrix pair_products(const Matrix& alpha);

} // namespace zits
