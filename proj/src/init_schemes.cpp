#include "zits/init_schemes.hpp"

#include "zits/errors.hpp"
#include "zits/rng.hpp"
#include "zits/sim_eval.hpp"
#include "zits/zip_dist.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zits {

namespace {

void fix_column_signs(Matrix& v) {
    for (Index d = 0; d < v.cols(); ++d) {
        Index pick = 0;
        double mx = v.col(d).cwiseAbs().maxCoeff();
        for (Index i = 0; i < v.rows(); ++i)
            if (std::abs(v(i, d)) >= mx * (1.0 - 1e-12)) {
                pick = i;
                break;
            }
        if (v(pick, d) < 0.0) v.col(d) = -v.col(d);
    }
}

Matrix pinv_solve_rows(const Matrix& rhs, const Matrix& gram) {
    // rhs * gram^+ for symmetric gram
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gram);
    return cod.solve(rhs.transpose()).transpose();
}

} // namespace

MomentInit moments_init(const CountTensor& data, std::span<const int> cells) {
    const int n = data.n_loci();
    std::vector<int> all;
    if (cells.empty()) {
        all.resize(data.n_cells());
        std::iota(all.begin(), all.end(), 0);
        cells = all;
    }
    std::vector<char> in_set(data.n_cells(), 0);
    for (int k : cells) {
        if (k < 0 || k >= data.n_cells()) throw DimensionError("cell index out of range");
        in_set[k] = 1;
    }
    const double kk = static_cast<double>(cells.size());

    Matrix sum = Matrix::Zero(n, n), sumsq = Matrix::Zero(n, n);
    for (const auto& e : data.entries()) {
        if (!in_set[e.k]) continue;
        double c = static_cast<double>(e.c);
        sum(e.i, e.j) += c;
        sumsq(e.i, e.j) += c * c;
    }

    MomentInit mi;
    mi.lambda0.resize(n, n);
    mi.p0.resize(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double m = sum(i, j) / kk;
            double v = std::max(sumsq(i, j) / kk - m * m, 0.0);
            double lam, p;
            bool clamped = false;
            if (m <= 0.0) {
                lam = kLambdaFloor;
                p = 1.0 - kPFloor;
                clamped = true;
            } else {
                lam = (v + m * m) / m - 1.0;
                double den = v + m * m - m;
                p = den != 0.0 ? (v - m) / den : std::numeric_limits<double>::quiet_NaN();
                if (!std::isfinite(lam) || lam < kLambdaFloor) {
                    lam = kLambdaFloor;
                    clamped = true;
                } else if (lam > kMaxLambda) {
                    lam = kMaxLambda;
                    clamped = true;
                }
                if (!std::isfinite(p)) {
                    p = 1.0 - kPFloor;
                    clamped = true;
                } else if (p < kPFloor) {
                    p = kPFloor;
                    clamped = true;
                } else if (p > 1.0 - kPFloor) {
                    p = 1.0 - kPFloor;
                    clamped = true;
                }
            }
            if (clamped) ++mi.clamp_count;
            mi.lambda0(i, j) = mi.lambda0(j, i) = lam;
            mi.p0(i, j) = mi.p0(j, i) = p;
        }
    }
    mi.eta0 = mi.lambda0.array().log().matrix();
    mi.theta0 = ((1.0 - mi.p0.array()) / mi.p0.array()).log().matrix();
    return mi;
}

InitScheme parse_init_scheme(const std::string& name) {
    if (name == "random") return InitScheme::random;
    if (name == "cp") return InitScheme::cp;
    if (name == "cpavg") return InitScheme::cpavg;
    if (name == "eigenb") return InitScheme::eigenb;
    if (name == "eigenx") return InitScheme::eigenx;
    if (name == "eigenbx") return InitScheme::eigenbx;
    throw std::invalid_argument("unknown init scheme '" + name +
                                "' (valid: random, cp, cpavg, eigenb, eigenx, eigenbx)");
}

std::string to_string(InitScheme scheme) {
    switch (scheme) {
    case InitScheme::random: return "random";
    case InitScheme::cp: return "cp";
    case InitScheme::cpavg: return "cpavg";
    case InitScheme::eigenb: return "eigenb";
    case InitScheme::eigenx: return "eigenx";
    case InitScheme::eigenbx: return "eigenbx";
    }
    return "unknown";
}

Vector diag_weight_regression(const Matrix& m0, const Matrix& alpha) {
    if (m0.rows() != alpha.rows() || m0.cols() != alpha.rows())
        throw DimensionError("diag_weight_regression: matrix and alpha row counts differ");
    Matrix g = (alpha.transpose() * alpha).array().square().matrix();
    Vector rhs = (alpha.transpose() * m0 * alpha).diagonal();
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(g);
    return cod.solve(rhs);
}

void leading_eigen(const Matrix& sym, int rank, Matrix& vectors, Vector& values) {
    if (rank > sym.rows()) throw DimensionError("rank exceeds matrix size");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()));
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    std::vector<Index> order(sym.rows());
    std::iota(order.begin(), order.end(), 0);
    const Vector& ev = es.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return std::abs(ev(a)) > std::abs(ev(b));
    });
    vectors.resize(sym.rows(), rank);
    values.resize(rank);
    for (int d = 0; d < rank; ++d) {
        vectors.col(d) = es.eigenvectors().col(order[d]);
        values(d) = ev(order[d]);
    }
    fix_column_signs(vectors);
}

CpResult cp_two_slice(const Matrix& x0, const Matrix& x1, int rank, std::uint64_t seed,
                      int max_sweeps, double tol) {
    const Index n = x0.rows();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    CpResult res;
    res.a1.resize(n, rank);
    res.a2.resize(n, rank);
    res.c.resize(2, rank);
    for (Index i = 0; i < n; ++i)
        for (int d = 0; d < rank; ++d) res.a1(i, d) = gauss(rng);
    for (Index i = 0; i < n; ++i)
        for (int d = 0; d < rank; ++d) res.a2(i, d) = gauss(rng);
    res.c.setOnes();

    const Matrix* slices[2] = {&x0, &x1};
    const double xnorm = std::sqrt(x0.squaredNorm() + x1.squaredNorm());
    double prev_fit = -1.0;
    auto residual = [&](const Matrix& a1, const Matrix& a2, const Matrix& c) {
        double s = 0.0;
        for (int k = 0; k < 2; ++k)
            s += (*slices[k] - a1 * c.row(k).asDiagonal() * a2.transpose()).squaredNorm();
        return std::sqrt(s);
    };

    Matrix best_a1 = res.a1, best_a2 = res.a2, best_c = res.c;
    double best_res = std::numeric_limits<double>::infinity();
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        Matrix ctc = res.c.transpose() * res.c;
        Matrix num = Matrix::Zero(n, rank);
        for (int k = 0; k < 2; ++k) num += *slices[k] * res.a2 * res.c.row(k).asDiagonal();
        res.a1 = pinv_solve_rows(num, (res.a2.transpose() * res.a2).cwiseProduct(ctc));

        num.setZero();
        for (int k = 0; k < 2; ++k)
            num += slices[k]->transpose() * res.a1 * res.c.row(k).asDiagonal();
        res.a2 = pinv_solve_rows(num, (res.a1.transpose() * res.a1).cwiseProduct(ctc));

        Matrix rhs(2, rank);
        for (int k = 0; k < 2; ++k)
            rhs.row(k) = (res.a1.transpose() * *slices[k] * res.a2).diagonal().transpose();
        res.c = pinv_solve_rows(
            rhs, (res.a1.transpose() * res.a1).cwiseProduct(res.a2.transpose() * res.a2));

        double r = residual(res.a1, res.a2, res.c);
        if (r < best_res) {
            best_res = r;
            best_a1 = res.a1;
            best_a2 = res.a2;
            best_c = res.c;
        }
        double fit = xnorm > 0.0 ? 1.0 - r / xnorm : 1.0;
        res.sweeps = sweep;
        if (prev_fit >= 0.0 && std::abs(fit - prev_fit) < tol) {
            res.converged = true;
            break;
        }
        prev_fit = fit;
    }
    res.a1 = best_a1;
    res.a2 = best_a2;
    res.c = best_c;

    for (int d = 0; d < rank; ++d) {
        double n1 = res.a1.col(d).norm(), n2 = res.a2.col(d).norm();
        if (n1 > 0.0) res.a1.col(d) /= n1;
        if (n2 > 0.0) res.a2.col(d) /= n2;
        res.c.col(d) *= n1 * n2;
        if (res.a1.col(d).dot(res.a2.col(d)) < 0.0) {
            res.a2.col(d) = -res.a2.col(d);
            res.c.col(d) = -res.c.col(d);
        }
    }
    return res;
}

InitFactors init_scheme(InitScheme kind, const MomentInit& mi, int rank, std::uint64_t seed) {
    const Index n = mi.eta0.rows();
    if (rank < 1 || rank > n)
        throw DimensionError("init rank D = " + std::to_string(rank) + " must satisfy 1 <= D <= N");
    InitFactors out;
    switch (kind) {
    case InitScheme::random: {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        out.alpha.resize(n, rank);
        for (Index i = 0; i < n; ++i)
            for (int d = 0; d < rank; ++d) out.alpha(i, d) = u(rng);
        out.b0.resize(rank);
        out.x0.resize(rank);
        for (int d = 0; d < rank; ++d) out.b0(d) = u(rng);
        for (int d = 0; d < rank; ++d) out.x0(d) = u(rng);
        break;
    }
    case InitScheme::cp:
    case InitScheme::cpavg: {
        CpResult cp = cp_two_slice(mi.eta0, mi.theta0, rank, seed);
        out.alpha = kind == InitScheme::cp ? cp.a1 : Matrix(0.5 * (cp.a1 + cp.a2));
        out.b0 = cp.c.row(0).transpose();
        out.x0 = cp.c.row(1).transpose();
        out.cp_converged = cp.converged;
        break;
    }
    case InitScheme::eigenb:
        leading_eigen(mi.eta0, rank, out.alpha, out.b0);
        out.x0 = diag_weight_regression(mi.theta0, out.alpha);
        break;
    case InitScheme::eigenx:
        leading_eigen(mi.theta0, rank, out.alpha, out.x0);
        out.b0 = diag_weight_regression(mi.eta0, out.alpha);
        break;
    case InitScheme::eigenbx: {
        Matrix ab, ax;
        Vector vb, vx;
        leading_eigen(mi.eta0, rank, ab, vb);
        leading_eigen(mi.theta0, rank, ax, vx);
        Matrix cat(n, 2 * rank);
        cat << ab, ax;
        Eigen::JacobiSVD<Matrix> svd(cat, Eigen::ComputeThinU);
        out.alpha = svd.matrixU().leftCols(rank);
        fix_column_signs(out.alpha);
        out.b0 = diag_weight_regression(mi.eta0, out.alpha);
        out.x0 = diag_weight_regression(mi.theta0, out.alpha);
        break;
    }
    }
    return out;
}

Matrix cell_features(const CountTensor& data) {
    const Index n = data.n_loci();
    Matrix f = Matrix::Zero(data.n_cells(), pair_count(n));
    for (const auto& e : data.entries()) {
        Index r = e.i * n - static_cast<Index>(e.i) * (e.i - 1) / 2 + (e.j - e.i);
        f(e.k, r) = static_cast<double>(e.c);
    }
    return f;
}

MultiClusterInit multi_cluster_init(const CountTensor& data, int rank, int n_clusters,
                                    InitScheme scheme, std::uint64_t seed) {
    if (n_clusters < 1) throw std::invalid_argument("number of clusters must be >= 1");
    if (data.n_cells() < n_clusters)
        throw DimensionError("cannot split " + std::to_string(data.n_cells()) + " cells into " +
                             std::to_string(n_clusters) + " clusters");
    MultiClusterInit out;
    if (n_clusters == 1) {
        out.labels.assign(data.n_cells(), 0);
        out.per_cluster.push_back(init_scheme(scheme, moments_init(data), rank, seed));
        return out;
    }

    Matrix feats = pca_project(cell_features(data), 20);
    bool ok = false;
    for (int attempt = 0; attempt < 6 && !ok; ++attempt) {
        out.labels = kmeans(feats, n_clusters, stream_seed(seed, 0x6b6d, attempt)).labels;
        std::vector<int> sizes(n_clusters, 0);
        for (int l : out.labels) ++sizes[l];
        ok = std::all_of(sizes.begin(), sizes.end(), [](int s) { return s > 0; });
    }
    if (!ok) throw NumericError("k-means left an empty cluster after 5 re-seeds");

    for (int r = 0; r < n_clusters; ++r) {
        std::vector<int> cells;
        for (int k = 0; k < data.n_cells(); ++k)
            if (out.labels[k] == r) cells.push_back(k);
        std::uint64_t s = r == 0 ? seed : stream_seed(seed, 0x636c, r);
        out.per_cluster.push_back(init_scheme(scheme, moments_init(data, cells), rank, s));
    }
    return out;
}

} // namespace zits
