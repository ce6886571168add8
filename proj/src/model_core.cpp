#include "zits/model_core.hpp"

#include "zits/errors.hpp"

#include <cmath>
#include <string>

namespace zits {

namespace {

std::string cell_str(Index i, Index j, Index k) {
    return "(" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) + ")";
}

void pair_coords(Index n, Index r, Index& i, Index& j) {
    Index row = r;
    for (i = 0; i < n; ++i) {
        if (row < n - i) {
            j = i + row;
            return;
        }
        row -= n - i;
    }
    j = -1;
}

void check_same(const DenseTensor3& a, Index n, Index k, const char* what) {
    if (a.d1() != n || a.d2() != n || a.d3() != k)
        throw DimensionError(std::string(what) + " tensor does not match data dims");
}

} // namespace

void ModelParams::validate() const {
    const Index n = basis.h.rows(), q = basis.h.cols();
    if (gamma.rows() != q)
        throw DimensionError("gamma has " + std::to_string(gamma.rows()) +
                             " rows but the basis has " + std::to_string(q) + " columns");
    if (w_beta.cols() != gamma.cols() || w_xi.cols() != gamma.cols())
        throw DimensionError("cell factors must have D = " + std::to_string(gamma.cols()) +
                             " columns");
    if (w_beta.rows() != w_xi.rows()) throw DimensionError("w_beta and w_xi row counts differ");
    if (n < 1) throw DimensionError("empty basis");
    if (block_rank > 0 && n_clusters * block_rank != gamma.cols())
        throw DimensionError("block meta R * L does not equal D");
    if (!gamma.allFinite() || !w_beta.allFinite() || !w_xi.allFinite())
        throw NumericError("model parameters contain non-finite values");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double soft_clamp_eta(double eta) {
    return eta <= kEtaKnee ? eta : kEtaKnee + std::tanh(eta - kEtaKnee);
}

double soft_clamp_slope(double eta) {
    if (eta <= kEtaKnee) return 1.0;
    double t = std::tanh(eta - kEtaKnee);
    return 1.0 - t * t;
}

double zip_entry_loss(double eta, double theta, double c) {
    double e = soft_clamp_eta(eta);
    double lam = std::exp(e);
    if (c != 0.0) return softplus(-theta) + lam - c * e;
    return softplus(-theta) + lam - softplus(lam - theta);
}

void zip_entry_grad(double eta, double theta, double c, double& d_eta, double& d_theta) {
    double e = soft_clamp_eta(eta);
    double lam = std::exp(e);
    double keep = logistic(-theta); // 1 / (1 + e^theta)
    if (c != 0.0) {
        d_eta = (lam - c) * soft_clamp_slope(eta);
        d_theta = -keep;
    } else {
        double s = logistic(lam - theta); // 1 / (1 + e^(theta - lam))
        d_eta = (lam - lam * s) * soft_clamp_slope(eta);
        d_theta = s - keep;
    }
}

double poisson_entry_loss(double eta, double c) {
    double e = soft_clamp_eta(eta);
    return std::exp(e) - c * e;
}

double poisson_entry_grad(double eta, double c) {
    return (std::exp(soft_clamp_eta(eta)) - c) * soft_clamp_slope(eta);
}

double binary_entry_loss(double theta, double c) { return -c * theta + softplus(theta); }

double binary_entry_grad(double theta, double c) { return logistic(theta) - c; }

double nll_normalizer(Index n_loci, Index n_cells) {
    return 2.0 / (static_cast<double>(n_loci) * static_cast<double>(n_loci + 1) *
                  static_cast<double>(n_cells));
}

LinkTensors build_links(const ModelParams& m) {
    m.validate();
    Matrix a = m.alpha();
    return {cp3_sym(a, m.w_beta), cp3_sym(a, m.w_xi)};
}

LambdaP lambda_p_of(const LinkTensors& links) {
    LambdaP out{DenseTensor3(links.eta.d1(), links.eta.d2(), links.eta.d3()),
                DenseTensor3(links.theta.d1(), links.theta.d2(), links.theta.d3())};
    auto e = links.eta.values();
    auto l = out.lambda.values();
    for (std::size_t n = 0; n < e.size(); ++n) l[n] = std::exp(soft_clamp_eta(e[n]));
    auto t = links.theta.values();
    auto p = out.p.values();
    for (std::size_t n = 0; n < t.size(); ++n) p[n] = logistic(-t[n]);
    return out;
}

Index pair_index(Index n_loci, Index i, Index j) {
    if (i > j) std::swap(i, j);
    return i * n_loci - i * (i - 1) / 2 + (j - i);
}

Matrix tensor_to_pairs(const DenseTensor3& t) {
    if (t.d1() != t.d2()) throw DimensionError("pair view needs d1 == d2");
    const Index n = t.d1();
    Matrix out(pair_count(n), t.d3());
    for (Index k = 0; k < t.d3(); ++k) {
        Index r = 0;
        for (Index i = 0; i < n; ++i)
            for (Index j = i; j < n; ++j, ++r) out(r, k) = t(i, j, k);
    }
    return out;
}

DenseTensor3 pairs_to_tensor(const Matrix& pairs, Index n_loci) {
    if (pairs.rows() != pair_count(n_loci)) throw DimensionError("pair row count mismatch");
    DenseTensor3 out(n_loci, n_loci, pairs.cols());
    for (Index k = 0; k < pairs.cols(); ++k) {
        Index r = 0;
        for (Index i = 0; i < n_loci; ++i)
            for (Index j = i; j < n_loci; ++j, ++r) {
                out(i, j, k) = pairs(r, k);
                out(j, i, k) = pairs(r, k);
            }
    }
    return out;
}

namespace {

PairData empty_pair_data(Index n, Index k, const LikelihoodOptions& opts) {
    PairData pd;
    pd.n_loci = n;
    pd.n_cells = k;
    pd.values = Matrix::Zero(pair_count(n), k);
    pd.weight = Vector::Ones(pair_count(n));
    Index r = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i; j < n; ++j, ++r)
            if (j - i < opts.exclude_diag_band) pd.weight(r) = 0.0;
    pd.norm = nll_normalizer(n, k);
    return pd;
}

} // namespace

PairData make_pair_data(const CountTensor& data, const LikelihoodOptions& opts) {
    PairData pd = empty_pair_data(data.n_loci(), data.n_cells(), opts);
    for (const auto& e : data.entries())
        pd.values(pair_index(pd.n_loci, e.i, e.j), e.k) = static_cast<double>(e.c);
    return pd;
}

PairData make_pair_data(const DenseTensor3& data, const LikelihoodOptions& opts) {
    PairData pd = empty_pair_data(data.d1(), data.d3(), opts);
    pd.values = tensor_to_pairs(data);
    return pd;
}

double evaluate_pairs(Likelihood kind, const PairData& data, const Matrix& eta,
                      const Matrix& theta, Matrix* g_eta, Matrix* g_theta) {
    const Index m = data.values.rows(), kk = data.values.cols();
    const bool use_eta = kind != Likelihood::binary;
    const bool use_theta = kind != Likelihood::poisson;
    if (use_eta && (eta.rows() != m || eta.cols() != kk))
        throw DimensionError("eta pairs do not match data");
    if (use_theta && (theta.rows() != m || theta.cols() != kk))
        throw DimensionError("theta pairs do not match data");
    if (g_eta) g_eta->setZero(m, kk);
    if (g_theta) g_theta->setZero(m, kk);

    double total = 0.0;
    for (Index k = 0; k < kk; ++k) {
        for (Index r = 0; r < m; ++r) {
            if (data.weight(r) == 0.0) continue;
            const double c = data.values(r, k);
            double loss = 0.0, de = 0.0, dt = 0.0;
            switch (kind) {
            case Likelihood::zip:
                loss = zip_entry_loss(eta(r, k), theta(r, k), c);
                if (g_eta || g_theta) zip_entry_grad(eta(r, k), theta(r, k), c, de, dt);
                break;
            case Likelihood::poisson:
                loss = poisson_entry_loss(eta(r, k), c);
                if (g_eta) de = poisson_entry_grad(eta(r, k), c);
                break;
            case Likelihood::binary:
                loss = binary_entry_loss(theta(r, k), c);
                if (g_theta) dt = binary_entry_grad(theta(r, k), c);
                break;
            }
            if (!std::isfinite(loss) || !std::isfinite(de) || !std::isfinite(dt)) {
                Index i = 0, j = 0;
                pair_coords(data.n_loci, r, i, j);
                throw NumericError("non-finite likelihood term at cell " + cell_str(i, j, k));
            }
            total += loss;
            if (g_eta) (*g_eta)(r, k) = data.norm * de;
            if (g_theta) (*g_theta)(r, k) = data.norm * dt;
        }
    }
    return data.norm * total;
}

Matrix pair_grad_alpha(const Matrix& alpha, const Matrix& g_link, const Matrix& w) {
    const Index n = alpha.rows(), d = alpha.cols();
    Matrix s = g_link * w;
    Matrix out = Matrix::Zero(n, d);
    for (Index c = 0; c < d; ++c) {
        Index r = 0;
        for (Index i = 0; i < n; ++i) {
            out(i, c) += 2.0 * s(r, c) * alpha(i, c);
            ++r;
            for (Index j = i + 1; j < n; ++j, ++r) {
                out(i, c) += s(r, c) * alpha(j, c);
                out(j, c) += s(r, c) * alpha(i, c);
            }
        }
    }
    return out;
}

double nll_links(const LinkTensors& links, const CountTensor& data,
                 const LikelihoodOptions& opts) {
    check_same(links.eta, data.n_loci(), data.n_cells(), "eta");
    check_same(links.theta, data.n_loci(), data.n_cells(), "theta");
    PairData pd = make_pair_data(data, opts);
    return evaluate_pairs(Likelihood::zip, pd, tensor_to_pairs(links.eta),
                          tensor_to_pairs(links.theta), nullptr, nullptr);
}

double nll(const ModelParams& m, const CountTensor& data, const LikelihoodOptions& opts) {
    return nll_links(build_links(m), data, opts);
}

LinkGradients grad_links_of(const LinkTensors& links, const CountTensor& data,
                            const LikelihoodOptions& opts) {
    check_same(links.eta, data.n_loci(), data.n_cells(), "eta");
    check_same(links.theta, data.n_loci(), data.n_cells(), "theta");
    PairData pd = make_pair_data(data, opts);
    Matrix ge, gt;
    evaluate_pairs(Likelihood::zip, pd, tensor_to_pairs(links.eta), tensor_to_pairs(links.theta),
                   &ge, &gt);
    return {pairs_to_tensor(ge, pd.n_loci), pairs_to_tensor(gt, pd.n_loci)};
}

LinkGradients grad_links(const ModelParams& m, const CountTensor& data,
                         const LikelihoodOptions& opts) {
    return grad_links_of(build_links(m), data, opts);
}

Matrix grad_w(const ModelParams& m, const DenseTensor3& grad_link, WBlock which) {
    (void)which; // the formula is the same for both cell factors
    Matrix a = m.alpha();
    check_same(grad_link, a.rows(), m.n_cells(), "link gradient");
    Matrix at = a.transpose();
    DenseTensor3 t = mode_product(mode_product(grad_link, at, 1), at, 2);
    Matrix first = diag_frontal(t).transpose();
    Matrix second = diag_frontal(grad_link).transpose() * a.cwiseProduct(a);
    return 0.5 * first + 0.5 * second;
}

namespace {

// Diag~(G x1 left x2 alpha^T x3 w^T) + left (Diag(G) w * alpha), for left = I or H^T.
Matrix alpha_side_term(const Matrix& a, const DenseTensor3& g, const Matrix& w,
                       const Matrix* left) {
    Matrix at = a.transpose();
    DenseTensor3 t = mode_product(mode_product(g, at, 2), w.transpose(), 3);
    if (left) t = mode_product(t, *left, 1);
    Matrix corr = (diag_frontal(g) * w).cwiseProduct(a);
    Matrix out = diag_horizontal(t);
    out += left ? Matrix(*left * corr) : corr;
    return out;
}

} // namespace

Matrix grad_alpha(const ModelParams& m, const DenseTensor3& grad_eta,
                  const DenseTensor3& grad_theta) {
    Matrix a = m.alpha();
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    if (grad_eta.size() > 0) {
        check_same(grad_eta, a.rows(), m.n_cells(), "eta gradient");
        out += alpha_side_term(a, grad_eta, m.w_beta, nullptr);
    }
    if (grad_theta.size() > 0) {
        check_same(grad_theta, a.rows(), m.n_cells(), "theta gradient");
        out += alpha_side_term(a, grad_theta, m.w_xi, nullptr);
    }
    return out;
}

Matrix grad_gamma(const ModelParams& m, const DenseTensor3& grad_eta,
                  const DenseTensor3& grad_theta) {
    Matrix a = m.alpha();
    Matrix ht = m.basis.h.transpose();
    Matrix out = Matrix::Zero(m.n_basis(), m.rank());
    if (grad_eta.size() > 0) {
        check_same(grad_eta, a.rows(), m.n_cells(), "eta gradient");
        out += alpha_side_term(a, grad_eta, m.w_beta, &ht);
    }
    if (grad_theta.size() > 0) {
        check_same(grad_theta, a.rows(), m.n_cells(), "theta gradient");
        out += alpha_side_term(a, grad_theta, m.w_xi, &ht);
    }
    return out;
}

double nll_poisson_links(const DenseTensor3& eta, const DenseTensor3& data,
                         const LikelihoodOptions& opts) {
    check_same(eta, data.d1(), data.d3(), "eta");
    PairData pd = make_pair_data(data, opts);
    return evaluate_pairs(Likelihood::poisson, pd, tensor_to_pairs(eta), Matrix(), nullptr,
                          nullptr);
}

DenseTensor3 grad_poisson_links(const DenseTensor3& eta, const DenseTensor3& data,
                                const LikelihoodOptions& opts) {
    check_same(eta, data.d1(), data.d3(), "eta");
    PairData pd = make_pair_data(data, opts);
    Matrix ge;
    evaluate_pairs(Likelihood::poisson, pd, tensor_to_pairs(eta), Matrix(), &ge, nullptr);
    return pairs_to_tensor(ge, pd.n_loci);
}

double nll_poisson(const ModelParams& m, const CountTensor& data, const LikelihoodOptions& opts) {
    return nll_poisson_links(build_links(m).eta, data.to_dense(), opts);
}

DenseTensor3 grad_poisson(const ModelParams& m, const CountTensor& data,
                          const LikelihoodOptions& opts) {
    return grad_poisson_links(build_links(m).eta, data.to_dense(), opts);
}

} // namespace zits
