#include "zits/basis.hpp"

#include "zits/errors.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace zits {

BasisKind parse_basis_kind(const std::string& name) {
    if (name == "cubic_bspline" || name == "bspline") return BasisKind::cubic_bspline;
    if (name == "fourier") return BasisKind::fourier;
    if (name == "identity" || name == "none") return BasisKind::identity;
    throw std::invalid_argument("unknown basis kind '" + name +
                                "' (expected cubic_bspline, fourier or identity)");
}

std::string to_string(BasisKind kind) {
    switch (kind) {
    case BasisKind::cubic_bspline: return "cubic_bspline";
    case BasisKind::fourier: return "fourier";
    case BasisKind::identity: return "identity";
    }
    return "unknown";
}

Matrix bspline_design(int n_loci, int n_basis) {
    const int q = n_basis;
    const int degree = std::min(3, q - 1);
    const int order = degree + 1;
    const double a = 1.0 / n_loci, b = 1.0;

    // Clamped knot vector: `order` copies of each end, q - order uniform interior knots.
    std::vector<double> knots;
    const int interior = q - order;
    for (int r = 0; r < order; ++r) knots.push_back(a);
    for (int r = 1; r <= interior; ++r) knots.push_back(a + (b - a) * r / (interior + 1));
    for (int r = 0; r < order; ++r) knots.push_back(b);

    Matrix out = Matrix::Zero(n_loci, q);
    for (int i = 0; i < n_loci; ++i) {
        const double x = static_cast<double>(i + 1) / n_loci;
        // Degree-0 functions; the right end belongs to the last non-empty span.
        const int nk = static_cast<int>(knots.size());
        std::vector<double> basis(nk - 1, 0.0);
        int span = -1;
        for (int s = 0; s < nk - 1; ++s)
            if (knots[s] < knots[s + 1] && x >= knots[s] && x < knots[s + 1]) span = s;
        if (span < 0) {
            for (int s = nk - 2; s >= 0; --s)
                if (knots[s] < knots[s + 1]) {
                    span = s;
                    break;
                }
        }
        if (span < 0) {
            // Degenerate domain (N == 1): only the constant function exists.
            out(i, 0) = 1.0;
            continue;
        }
        basis[span] = 1.0;
        for (int d = 1; d <= degree; ++d) {
            for (int s = 0; s < nk - 1 - d; ++s) {
                double v = 0.0;
                double den1 = knots[s + d] - knots[s];
                double den2 = knots[s + d + 1] - knots[s + 1];
                if (den1 > 0.0) v += (x - knots[s]) / den1 * basis[s];
                if (den2 > 0.0) v += (knots[s + d + 1] - x) / den2 * basis[s + 1];
                basis[s] = v;
            }
        }
        for (int c = 0; c < q; ++c) out(i, c) = basis[c];
    }
    return out;
}

Matrix orthonormalize_columns(const Matrix& raw) {
    Eigen::HouseholderQR<Matrix> qr(raw);
    const Index q = raw.cols();
    Matrix r = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
    double scale = r.diagonal().cwiseAbs().maxCoeff();
    for (Index d = 0; d < q; ++d)
        if (!(std::abs(r(d, d)) > 1e-10 * std::max(scale, 1e-300)))
            throw NumericError("basis columns are linearly dependent (column " +
                               std::to_string(d) + ")");
    Matrix h = qr.householderQ() * Matrix::Identity(raw.rows(), q);
    for (Index d = 0; d < q; ++d) {
        double mx = h.col(d).cwiseAbs().maxCoeff();
        Index pick = 0;
        for (Index i = 0; i < h.rows(); ++i)
            if (std::abs(h(i, d)) >= mx * (1.0 - 1e-12)) {
                pick = i;
                break;
            }
        if (h(pick, d) < 0.0) h.col(d) = -h.col(d);
    }
    return h;
}

BasisMatrix build_basis(int n_loci, int n_basis, BasisKind kind) {
    if (n_loci < 1) throw DimensionError("basis needs at least one locus");
    if (n_basis < 1 || n_basis > n_loci)
        throw DimensionError("basis size Q = " + std::to_string(n_basis) +
                             " must satisfy 1 <= Q <= N = " + std::to_string(n_loci));
    BasisMatrix out;
    out.kind = kind;
    out.n_loci = n_loci;
    out.n_basis = n_basis;
    switch (kind) {
    case BasisKind::identity:
        if (n_basis != n_loci) throw DimensionError("identity basis requires Q == N");
        out.h = Matrix::Identity(n_loci, n_loci);
        break;
    case BasisKind::cubic_bspline:
        out.h = orthonormalize_columns(bspline_design(n_loci, n_basis));
        break;
    case BasisKind::fourier: {
        Matrix raw(n_loci, n_basis);
        for (int i = 0; i < n_loci; ++i) {
            const double t = static_cast<double>(i + 1) / n_loci;
            raw(i, 0) = 1.0;
            for (int c = 1; c < n_basis; ++c) {
                const int freq = (c + 1) / 2;
                const double arg = 2.0 * std::numbers::pi * freq * t;
                raw(i, c) = (c % 2 == 1) ? std::cos(arg) : std::sin(arg);
            }
        }
        out.h = orthonormalize_columns(raw);
        break;
    }
    }
    return out;
}

} // namespace zits
