#include "zits/tensor_ops.hpp"

#include "zits/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace zits {

namespace {

std::string shape_str(Index a, Index b, Index c) {
    std::ostringstream os;
    os << a << "x" << b << "x" << c;
    return os.str();
}

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

bool is_exact_identity(const Matrix& a) {
    if (a.rows() != a.cols()) return false;
    for (Index c = 0; c < a.cols(); ++c)
        for (Index r = 0; r < a.rows(); ++r)
            if (a(r, c) != (r == c ? 1.0 : 0.0)) return false;
    return true;
}

} // namespace

DenseTensor3::DenseTensor3(Index d1, Index d2, Index d3, double fill)
    : d1_(d1), d2_(d2), d3_(d3) {
    if (d1 < 0 || d2 < 0 || d3 < 0) throw DimensionError("negative tensor dimension");
    values_.assign(static_cast<std::size_t>(d1 * d2 * d3), fill);
}

DenseTensor3::DenseTensor3(Index d1, Index d2, Index d3, std::vector<double> values)
    : d1_(d1), d2_(d2), d3_(d3), values_(std::move(values)) {
    if (d1 < 0 || d2 < 0 || d3 < 0) throw DimensionError("negative tensor dimension");
    if (static_cast<Index>(values_.size()) != d1 * d2 * d3)
        throw DimensionError("value array of length " + std::to_string(values_.size()) +
                             " does not fit shape " + shape_str(d1, d2, d3));
    for (double v : values_)
        if (!std::isfinite(v)) throw NumericError("non-finite tensor value");
}

Index DenseTensor3::dim(int mode) const {
    switch (mode) {
    case 1: return d1_;
    case 2: return d2_;
    case 3: return d3_;
    default: throw DimensionError("mode must be 1, 2 or 3");
    }
}

double DenseTensor3::frobenius_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
}

CountTensor::CountTensor(int n_loci, int n_cells, std::vector<CountEntry> entries,
                         bool include_diagonal)
    : n_loci_(n_loci), n_cells_(n_cells), include_diagonal_(include_diagonal),
      entries_(std::move(entries)) {
    if (n_loci < 1 || n_cells < 1) throw DataError("tensor dims must be positive");
    for (const auto& e : entries_) {
        if (e.i < 0 || e.j < e.i || e.j >= n_loci || e.k < 0 || e.k >= n_cells)
            throw DataError("entry (" + std::to_string(e.i) + "," + std::to_string(e.j) + "," +
                            std::to_string(e.k) + ") outside 0 <= i <= j < N, 0 <= k < K");
        if (e.c < 1) throw DataError("stored counts must be >= 1");
        if (!include_diagonal && e.i == e.j)
            throw DataError("diagonal entry stored while diagonal is excluded");
    }
    auto key = [](const CountEntry& e) { return std::tie(e.k, e.i, e.j); };
    std::sort(entries_.begin(), entries_.end(),
              [&](const CountEntry& a, const CountEntry& b) { return key(a) < key(b); });
    for (std::size_t n = 1; n < entries_.size(); ++n)
        if (key(entries_[n - 1]) == key(entries_[n]))
            throw DataError("duplicate entry (" + std::to_string(entries_[n].i) + "," +
                            std::to_string(entries_[n].j) + "," + std::to_string(entries_[n].k) +
                            ")");
}

std::int64_t CountTensor::at(int i, int j, int k) const {
    if (i > j) std::swap(i, j);
    CountEntry probe{i, j, k, 0};
    auto it = std::lower_bound(entries_.begin(), entries_.end(), probe,
                               [](const CountEntry& a, const CountEntry& b) {
                                   return std::tie(a.k, a.i, a.j) < std::tie(b.k, b.i, b.j);
                               });
    if (it != entries_.end() && it->i == i && it->j == j && it->k == k) return it->c;
    return 0;
}

DenseTensor3 CountTensor::to_dense() const {
    DenseTensor3 out(n_loci_, n_loci_, n_cells_);
    for (const auto& e : entries_) {
        out(e.i, e.j, e.k) = static_cast<double>(e.c);
        out(e.j, e.i, e.k) = static_cast<double>(e.c);
    }
    return out;
}

DenseTensor3 mode_product(const DenseTensor3& t, const Matrix& a, int mode) {
    if (mode < 1 || mode > 3) throw DimensionError("mode must be 1, 2 or 3");
    if (a.cols() != t.dim(mode))
        throw DimensionError("mode-" + std::to_string(mode) + " product of tensor " +
                             shape_str(t.d1(), t.d2(), t.d3()) + " with matrix " + shape_str(a));
    if (is_exact_identity(a)) return t;

    const Index d1 = t.d1(), d2 = t.d2(), d3 = t.d3();
    if (mode == 1) {
        DenseTensor3 out(a.rows(), d2, d3);
        for (Index k = 0; k < d3; ++k) out.slice(k) = a * t.slice(k);
        return out;
    }
    if (mode == 2) {
        DenseTensor3 out(d1, a.rows(), d3);
        for (Index k = 0; k < d3; ++k) out.slice(k) = t.slice(k) * a.transpose();
        return out;
    }
    DenseTensor3 out(d1, d2, a.rows());
    const Index plane = d1 * d2;
    Eigen::Map<const Matrix> tin(t.values().data(), plane, d3);
    Eigen::Map<Matrix> tout(out.values().data(), plane, a.rows());
    tout.noalias() = tin * a.transpose();
    return out;
}

DenseTensor3 cp3_sym(const Matrix& alpha, const Matrix& w) {
    if (alpha.cols() != w.cols())
        throw DimensionError("cp3_sym rank mismatch: alpha " + shape_str(alpha) + ", w " +
                             shape_str(w));
    const Index n = alpha.rows(), kk = w.rows(), d = alpha.cols();
    DenseTensor3 out(n, n, kk);
    for (Index k = 0; k < kk; ++k) {
        for (Index i = 0; i < n; ++i) {
            for (Index j = i; j < n; ++j) {
                double s = 0.0;
                for (Index c = 0; c < d; ++c) s += alpha(i, c) * alpha(j, c) * w(k, c);
                out(i, j, k) = s;
                out(j, i, k) = s;
            }
        }
    }
    return out;
}

Matrix khatri_rao_rows(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw DimensionError("khatri_rao_rows row mismatch: " + shape_str(a) + " vs " +
                             shape_str(b));
    Matrix out(a.rows(), a.cols() * b.cols());
    for (Index k = 0; k < a.rows(); ++k)
        for (Index r = 0; r < a.cols(); ++r)
            for (Index l = 0; l < b.cols(); ++l) out(k, r * b.cols() + l) = a(k, r) * b(k, l);
    return out;
}

Matrix diag_frontal(const DenseTensor3& t) {
    if (t.d1() != t.d2())
        throw DimensionError("diag_frontal needs d1 == d2, got " +
                             shape_str(t.d1(), t.d2(), t.d3()));
    Matrix out(t.d1(), t.d3());
    for (Index k = 0; k < t.d3(); ++k)
        for (Index i = 0; i < t.d1(); ++i) out(i, k) = t(i, i, k);
    return out;
}

Matrix diag_horizontal(const DenseTensor3& t) {
    if (t.d2() != t.d3())
        throw DimensionError("diag_horizontal needs d2 == d3, got " +
                             shape_str(t.d1(), t.d2(), t.d3()));
    Matrix out(t.d1(), t.d2());
    for (Index q = 0; q < t.d1(); ++q)
        for (Index l = 0; l < t.d2(); ++l) out(q, l) = t(q, l, l);
    return out;
}

Matrix pair_products(const Matrix& alpha) {
    const Index n = alpha.rows();
    Matrix out(pair_count(n), alpha.cols());
    Index row = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i; j < n; ++j, ++row) out.row(row) = alpha.row(i).cwiseProduct(alpha.row(j));
    return out;
}

} // namespace zits
