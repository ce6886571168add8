#include "zits/fitting.hpp"

#include "zits/errors.hpp"
#include "zits/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace zits {

void FitConfig::validate() const {
    if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw std::invalid_argument("rel_tol must lie in (0, 1)");
    if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) throw std::invalid_argument("armijo c1 must lie in (0, 1)");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw std::invalid_argument("backtrack must lie in (0, 1)");
    if (!(initial_step > 0.0)) throw std::invalid_argument("initial step must be positive");
    if (!(max_step >= initial_step)) throw std::invalid_argument("max step must be at least the initial step");
    if (!(beta_max > 0.0 && xi_max > 0.0)) throw std::invalid_argument("box bounds must be positive");
    if (exclude_diag_band < 0) throw std::invalid_argument("diagonal band must be >= 0");
}

void normalize_gauge(ModelParams& m) {
    for (Index d = 0; d < m.gamma.cols(); ++d) {
        double s = m.gamma.col(d).norm();
        if (s == 0.0 || !std::isfinite(s)) continue;
        m.gamma.col(d) /= s;
        m.w_beta.col(d) *= s * s;
        m.w_xi.col(d) *= s * s;
    }
}

void balance_gauge(ModelParams& m) {
    for (Index d = 0; d < m.gamma.cols(); ++d) {
        double a = m.gamma.col(d).squaredNorm();
        double w = std::max(m.w_beta.col(d).lpNorm<Eigen::Infinity>(),
                            m.w_xi.col(d).lpNorm<Eigen::Infinity>());
        if (!(a > 0.0) || !(w > 0.0) || !std::isfinite(a) || !std::isfinite(w)) continue;
        double s = std::pow(w / a, 0.25);
        m.gamma.col(d) *= s;
        m.w_beta.col(d) /= s * s;
        m.w_xi.col(d) /= s * s;
    }
}

namespace {

double rel_change(const Matrix& prev, const Matrix& next) {
    double num = (next - prev).norm();
    double den = prev.norm();
    return den > 0.0 ? num / den : num;
}

// Pair-major evaluation state for one fit.
class PairModel {
  public:
    PairModel(const PairData& data, Likelihood kind, const Matrix& h)
        : data_(data), kind_(kind), h_(h) {}

    bool uses_eta() const { return kind_ != Likelihood::binary; }
    bool uses_theta() const { return kind_ != Likelihood::poisson; }

    void set_gamma(const Matrix& gamma) {
        alpha_ = h_ * gamma;
        pairs_ = pair_products(alpha_);
    }
    void set_wb(const Matrix& wb) {
        if (uses_eta()) eta_.noalias() = pairs_ * wb.transpose();
    }
    void set_wx(const Matrix& wx) {
        if (uses_theta()) theta_.noalias() = pairs_ * wx.transpose();
    }

    double value() const { return evaluate_pairs(kind_, data_, eta_, theta_, nullptr, nullptr); }
    double value_grad(Matrix& ge, Matrix& gt) const {
        return evaluate_pairs(kind_, data_, eta_, theta_, uses_eta() ? &ge : nullptr,
                              uses_theta() ? &gt : nullptr);
    }

    // Per-entry second derivatives in eta / theta, clipped at zero, weighted and normalized.
    Matrix curvature_eta() const {
        Matrix c(eta_.rows(), eta_.cols());
        for (Index k = 0; k < c.cols(); ++k)
            for (Index r = 0; r < c.rows(); ++r) {
                double e = eta_(r, k), slope = soft_clamp_slope(e);
                double lam = std::exp(soft_clamp_eta(e));
                double h = lam;
                if (kind_ == Likelihood::zip && data_.values(r, k) == 0.0) {
                    double s = logistic(lam - theta_(r, k));
                    h = lam * (1.0 - s) - lam * lam * s * (1.0 - s);
                }
                c(r, k) = std::max(h, 0.0) * slope * slope;
            }
        return weighted(c);
    }
    Matrix curvature_theta() const {
        Matrix c(theta_.rows(), theta_.cols());
        for (Index k = 0; k < c.cols(); ++k)
            for (Index r = 0; r < c.rows(); ++r) {
                double q = logistic(theta_(r, k));
                double h = q * (1.0 - q);
                if (kind_ == Likelihood::zip && data_.values(r, k) == 0.0) {
                    double s = logistic(std::exp(soft_clamp_eta(eta_(r, k))) - theta_(r, k));
                    h -= s * (1.0 - s);
                }
                c(r, k) = std::max(h, 0.0);
            }
        return weighted(c);
    }

    const Matrix& alpha() const { return alpha_; }
    const Matrix& pairs() const { return pairs_; }

  private:
    Matrix weighted(Matrix c) const {
        for (Index r = 0; r < c.rows(); ++r) c.row(r) *= data_.weight(r) * data_.norm;
        return c;
    }

    const PairData& data_;
    Likelihood kind_;
    const Matrix& h_;
    Matrix alpha_, pairs_, eta_, theta_;
};

// Solve (A + damping) x = b for a symmetric positive semidefinite A.
Vector damped_solve(const Matrix& a, const Vector& b) {
    Matrix reg = a;
    double scale = a.diagonal().cwiseAbs().maxCoeff();
    reg.diagonal().array() += std::max(scale * 1e-8, 1e-300);
    Eigen::LDLT<Matrix> ldlt(reg);
    Vector x = ldlt.solve(b);
    if (ldlt.info() != Eigen::Success || !x.allFinite()) return b;
    return x;
}

// Per-row Gauss-Newton direction for a cell factor: row k solves (P^T diag(c_k) P) d = g_k.
Matrix cell_direction(const Matrix& pairs, const Matrix& curv, const Matrix& grad) {
    Matrix dir(grad.rows(), grad.cols());
    for (Index k = 0; k < grad.rows(); ++k) {
        Matrix hk = pairs.transpose() * curv.col(k).asDiagonal() * pairs;
        dir.row(k) = damped_solve(hk, grad.row(k).transpose()).transpose();
    }
    return dir;
}

// Gauss-Newton matrix of the loss in vec(alpha) (index n * D + d) for one link.
void add_alpha_gauss_newton(const Matrix& alpha, const Matrix& curv, const Matrix& w,
                            Matrix& out) {
    const Index n = alpha.rows(), d = alpha.cols();
    Index r = 0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i; j < n; ++j, ++r) {
            Matrix s = w.transpose() * curv.row(r).transpose().asDiagonal() * w;
            if (i == j) {
                Vector ai = alpha.row(i).transpose();
                out.block(i * d, i * d, d, d) += 4.0 * ai.asDiagonal() * s * ai.asDiagonal();
                continue;
            }
            Vector ai = alpha.row(i).transpose(), aj = alpha.row(j).transpose();
            out.block(i * d, i * d, d, d) += aj.asDiagonal() * s * aj.asDiagonal();
            out.block(j * d, j * d, d, d) += ai.asDiagonal() * s * ai.asDiagonal();
            Matrix cross = aj.asDiagonal() * s * ai.asDiagonal();
            out.block(i * d, j * d, d, d) += cross;
            out.block(j * d, i * d, d, d) += cross.transpose();
        }
    }
}

// Gauss-Newton direction for Gamma, mapping the alpha-level matrix through alpha = H Gamma.
Matrix gamma_direction(const Matrix& h, const Matrix& gn_alpha, const Matrix& grad) {
    const Index n = h.rows(), q = h.cols(), d = grad.cols();
    Matrix gn;
    if (q == n && h.isIdentity(0.0)) {
        gn = gn_alpha;
    } else {
        Matrix t = Matrix::Zero(n * d, q * d);
        for (Index i = 0; i < n; ++i)
            for (Index c = 0; c < q; ++c)
                for (Index e = 0; e < d; ++e) t(i * d + e, c * d + e) = h(i, c);
        gn = t.transpose() * gn_alpha * t;
    }
    Vector g(q * d);
    for (Index c = 0; c < q; ++c)
        for (Index e = 0; e < d; ++e) g(c * d + e) = grad(c, e);
    Vector x = damped_solve(gn, g);
    Matrix dir(q, d);
    for (Index c = 0; c < q; ++c)
        for (Index e = 0; e < d; ++e) dir(c, e) = x(c * d + e);
    return dir;
}

struct LineSearchOutcome {
    bool accepted = false;
    double step = 0.0;
    double value = 0.0;
};

} // namespace

FitResult fit(const CountTensor& data, const ModelParams& init, const FitConfig& cfg) {
    cfg.validate();
    init.validate();
    if (init.n_loci() != data.n_loci() || init.n_cells() != data.n_cells())
        throw DimensionError("initial parameters do not match the data dimensions");

    LikelihoodOptions opts;
    opts.exclude_diag_band = cfg.exclude_diag_band;
    const PairData pd = make_pair_data(data, opts);

    FitResult out;
    out.params = init;
    ModelParams& m = out.params;
    if (cfg.box) { // start from the projection onto the box
        normalize_gauge(m);
        m.w_beta = m.w_beta.cwiseMax(-cfg.beta_max).cwiseMin(cfg.beta_max);
        m.w_xi = m.w_xi.cwiseMax(-cfg.xi_max).cwiseMin(cfg.xi_max);
    }
    balance_gauge(m);
    const Matrix& h = m.basis.h;
    PairModel model(pd, cfg.likelihood, h);
    model.set_gamma(m.gamma);
    model.set_wb(m.w_beta);
    model.set_wx(m.w_xi);

    FitReport& rep = out.report;
    double f = model.value();
    if (!std::isfinite(f)) throw NumericError("non-finite objective at the initial point");
    rep.nll_trace.push_back(f);

    const bool do_beta = model.uses_eta();
    const bool do_xi = model.uses_theta();
    // first trial is exactly initial_step
    const double s0 = cfg.initial_step * cfg.backtrack;
    double last_step[3] = {s0, s0, s0};
    Matrix ge, gt;

    // Box on the unit-Gamma parameters, expressed per column in the working gauge.
    auto column_bounds = [&](const Matrix& g, double bound) {
        Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(0);
        if (!cfg.box) return b;
        b.resize(g.cols());
        for (Index d = 0; d < g.cols(); ++d) {
            double a = g.col(d).squaredNorm();
            b(d) = a > 0.0 ? bound / a : bound;
        }
        return b;
    };
    auto clip = [](const Matrix& w, const Eigen::RowVectorXd& b) {
        if (b.size() == 0) return w;
        Matrix out = w;
        for (Index d = 0; d < w.cols(); ++d) out.col(d) = w.col(d).cwiseMax(-b(d)).cwiseMin(b(d));
        return out;
    };

    auto search = [&](Matrix& x, const Matrix& grad, const Matrix& dir, double f0,
                      const Eigen::RowVectorXd& bound, int block, auto&& apply) {
        LineSearchOutcome res;
        double t = std::min(cfg.max_step, last_step[block] / cfg.backtrack);
        for (int bt = 0; bt <= cfg.max_backtracks; ++bt, t *= cfg.backtrack) {
            Matrix trial = x - t * dir;
            if (bound.size() > 0) trial = clip(trial, bound);
            double decrease = (grad.array() * (trial - x).array()).sum();
            if (!(decrease < 0.0)) break; // projected direction is not a descent direction
            apply(trial);
            double ft;
            try {
                ft = model.value();
            } catch (const NumericError&) {
                continue;
            }
            if (ft <= f0 + cfg.armijo_c1 * decrease) {
                res.accepted = true;
                res.step = t;
                res.value = ft;
                x = std::move(trial);
                return res;
            }
        }
        apply(x); // restore
        return res;
    };

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        std::array<double, 3> change{0.0, 0.0, 0.0};
        int accepted_blocks = 0;
        const Matrix gamma0 = m.gamma, beta0 = m.w_beta, xi0 = m.w_xi;

        { // Gamma
            model.value_grad(ge, gt);
            const Index nd = m.n_loci() * m.rank();
            Matrix g_alpha = Matrix::Zero(m.n_loci(), m.rank());
            Matrix gn = cfg.precondition ? Matrix::Zero(nd, nd) : Matrix();
            if (do_beta) {
                g_alpha += pair_grad_alpha(model.alpha(), ge, m.w_beta);
                if (cfg.precondition)
                    add_alpha_gauss_newton(model.alpha(), model.curvature_eta(), m.w_beta, gn);
            }
            if (do_xi) {
                g_alpha += pair_grad_alpha(model.alpha(), gt, m.w_xi);
                if (cfg.precondition)
                    add_alpha_gauss_newton(model.alpha(), model.curvature_theta(), m.w_xi, gn);
            }
            Matrix grad = h.transpose() * g_alpha;
            Matrix dir = cfg.precondition ? gamma_direction(h, gn, grad) : grad;
            Matrix prev = m.gamma;
            // cell factors that a shrinking column would push out of the box are clipped along with it
            auto res = search(m.gamma, grad, dir, f, Eigen::RowVectorXd(), 0, [&](const Matrix& g) {
                model.set_gamma(g);
                model.set_wb(clip(m.w_beta, column_bounds(g, cfg.beta_max)));
                model.set_wx(clip(m.w_xi, column_bounds(g, cfg.xi_max)));
            });
            if (res.accepted) {
                m.w_beta = clip(m.w_beta, column_bounds(m.gamma, cfg.beta_max));
                m.w_xi = clip(m.w_xi, column_bounds(m.gamma, cfg.xi_max));
                f = res.value;
                last_step[0] = res.step;
                ++accepted_blocks;
            }
            change[0] = rel_change(prev, m.gamma);
        }
        if (do_beta) {
            model.value_grad(ge, gt);
            Matrix grad = ge.transpose() * model.pairs();
            Matrix dir = cfg.precondition
                             ? cell_direction(model.pairs(), model.curvature_eta(), grad)
                             : grad;
            Matrix prev = m.w_beta;
            auto res = search(m.w_beta, grad, dir, f, column_bounds(m.gamma, cfg.beta_max), 1,
                              [&](const Matrix& w) { model.set_wb(w); });
            if (res.accepted) {
                f = res.value;
                last_step[1] = res.step;
                ++accepted_blocks;
            }
            change[1] = rel_change(prev, m.w_beta);
        }
        if (do_xi) {
            model.value_grad(ge, gt);
            Matrix grad = gt.transpose() * model.pairs();
            Matrix dir = cfg.precondition
                             ? cell_direction(model.pairs(), model.curvature_theta(), grad)
                             : grad;
            Matrix prev = m.w_xi;
            auto res = search(m.w_xi, grad, dir, f, column_bounds(m.gamma, cfg.xi_max), 2,
                              [&](const Matrix& w) { model.set_wx(w); });
            if (res.accepted) {
                f = res.value;
                last_step[2] = res.step;
                ++accepted_blocks;
            }
            change[2] = rel_change(prev, m.w_xi);
        }

        // Re-fix the column scale so the blocks do not drift along the flat gauge direction.
        balance_gauge(m);
        model.set_gamma(m.gamma);
        model.set_wb(m.w_beta);
        model.set_wx(m.w_xi);
        f = model.value();
        change = {rel_change(gamma0, m.gamma), rel_change(beta0, m.w_beta),
                  rel_change(xi0, m.w_xi)};

        rep.iterations = iter;
        rep.nll_trace.push_back(f);
        rep.rel_change.push_back(change);
        if (accepted_blocks == 0) {
            rep.stalled = true;
            rep.converged = true;
            break;
        }
        if (std::max({change[0], change[1], change[2]}) < cfg.rel_tol) {
            rep.converged = true;
            break;
        }
    }
    if (cfg.max_iters == 0) rep.converged = false;
    rep.step_gamma = last_step[0];
    rep.step_beta = last_step[1];
    rep.step_xi = last_step[2];
    normalize_gauge(m);
    return out;
}

double cluster_objective(const Matrix& w_beta, const Matrix& w_xi, const std::vector<int>& labels,
                         const Matrix& beta_bar, const Matrix& xi_bar, bool blocked) {
    const Index l = beta_bar.cols();
    double j = 0.0;
    for (Index k = 0; k < w_beta.rows(); ++k) {
        const int r = labels[k];
        if (blocked) {
            j += w_beta.row(k).squaredNorm() + w_xi.row(k).squaredNorm();
            j -= w_beta.row(k).segment(r * l, l).squaredNorm() +
                 w_xi.row(k).segment(r * l, l).squaredNorm();
            j += (w_beta.row(k).segment(r * l, l) - beta_bar.row(r)).squaredNorm() +
                 (w_xi.row(k).segment(r * l, l) - xi_bar.row(r)).squaredNorm();
        } else {
            j += (w_beta.row(k) - beta_bar.row(r)).squaredNorm() +
                 (w_xi.row(k) - xi_bar.row(r)).squaredNorm();
        }
    }
    return std::max(j, 0.0);
}

namespace {

ClusterSolution alternate_clusters(const Matrix& w_beta, const Matrix& w_xi, int n_clusters,
                                   int block_rank, bool blocked, std::uint64_t seed,
                                   int restarts) {
    const Index kk = w_beta.rows();
    if (w_xi.rows() != kk || w_xi.cols() != w_beta.cols())
        throw DimensionError("w_beta and w_xi shapes differ");
    if (n_clusters < 1 || n_clusters > kk)
        throw DimensionError("cluster count must satisfy 1 <= R <= K");
    const int l = block_rank;
    if (blocked && w_beta.cols() != static_cast<Index>(n_clusters) * l)
        throw DimensionError("blocked extraction requires D = R * L");

    Matrix rows(kk, 2 * w_beta.cols());
    rows << w_beta, w_xi;

    auto block_means = [&](const std::vector<int>& labels, Matrix& bb, Matrix& xb) {
        bb = Matrix::Zero(n_clusters, l);
        xb = Matrix::Zero(n_clusters, l);
        std::vector<int> count(n_clusters, 0);
        for (Index k = 0; k < kk; ++k) {
            int r = labels[k];
            Index off = blocked ? r * l : 0;
            bb.row(r) += w_beta.row(k).segment(off, l);
            xb.row(r) += w_xi.row(k).segment(off, l);
            ++count[r];
        }
        for (int r = 0; r < n_clusters; ++r) {
            if (count[r] == 0) return false;
            bb.row(r) /= count[r];
            xb.row(r) /= count[r];
        }
        return true;
    };

    ClusterSolution best;
    best.objective = std::numeric_limits<double>::infinity();
    int done = 0;
    for (int attempt = 0; done < restarts && attempt < 10 * restarts; ++attempt) {
        auto rng = make_rng(seed, 0x4a6f626a, attempt);
        // k-means++ seeding over rows, then nearest-seed assignment.
        std::vector<Index> seeds;
        std::vector<double> d2(kk, std::numeric_limits<double>::infinity());
        seeds.push_back(std::uniform_int_distribution<Index>(0, kk - 1)(rng));
        for (int c = 1; c < n_clusters; ++c) {
            double total = 0.0;
            for (Index k = 0; k < kk; ++k) {
                d2[k] = std::min(d2[k], (rows.row(k) - rows.row(seeds.back())).squaredNorm());
                total += d2[k];
            }
            Index pick = 0;
            if (total > 0.0) {
                double u = std::uniform_real_distribution<double>(0.0, total)(rng), acc = 0.0;
                pick = kk - 1;
                for (Index k = 0; k < kk; ++k) {
                    acc += d2[k];
                    if (d2[k] > 0.0 && acc >= u) {
                        pick = k;
                        break;
                    }
                }
            } else {
                pick = std::uniform_int_distribution<Index>(0, kk - 1)(rng);
            }
            seeds.push_back(pick);
        }
        // Initial means from the seed rows. In the blocked layout each seed is matched to a
        // block greedily by block energy, so relabeling the blocks relabels the result.
        Matrix bb(n_clusters, l), xb(n_clusters, l);
        if (blocked) {
            std::vector<bool> seed_used(n_clusters, false), block_used(n_clusters, false);
            for (int step = 0; step < n_clusters; ++step) {
                int bs = -1, bc = -1;
                double be = -1.0;
                for (int a = 0; a < n_clusters; ++a) {
                    if (seed_used[a]) continue;
                    for (int c = 0; c < n_clusters; ++c) {
                        if (block_used[c]) continue;
                        double e = w_beta.row(seeds[a]).segment(c * l, l).squaredNorm() +
                                   w_xi.row(seeds[a]).segment(c * l, l).squaredNorm();
                        if (e > be) {
                            be = e;
                            bs = a;
                            bc = c;
                        }
                    }
                }
                seed_used[bs] = block_used[bc] = true;
                bb.row(bc) = w_beta.row(seeds[bs]).segment(bc * l, l);
                xb.row(bc) = w_xi.row(seeds[bs]).segment(bc * l, l);
            }
        } else {
            for (int c = 0; c < n_clusters; ++c) {
                bb.row(c) = w_beta.row(seeds[c]);
                xb.row(c) = w_xi.row(seeds[c]);
            }
        }

        auto cost = [&](Index k, int r) {
            if (!blocked)
                return (w_beta.row(k) - bb.row(r)).squaredNorm() + (w_xi.row(k) - xb.row(r)).squaredNorm();
            Index off = r * l;
            return w_beta.row(k).squaredNorm() + w_xi.row(k).squaredNorm() -
                   w_beta.row(k).segment(off, l).squaredNorm() -
                   w_xi.row(k).segment(off, l).squaredNorm() +
                   (w_beta.row(k).segment(off, l) - bb.row(r)).squaredNorm() +
                   (w_xi.row(k).segment(off, l) - xb.row(r)).squaredNorm();
        };
        auto assign = [&](std::vector<int>& out) {
            for (Index k = 0; k < kk; ++k) {
                int arg = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (int r = 0; r < n_clusters; ++r) {
                    double d = cost(k, r);
                    if (d < bd) {
                        bd = d;
                        arg = r;
                    }
                }
                out[k] = arg;
            }
        };

        std::vector<int> labels(kk);
        assign(labels);
        if (!block_means(labels, bb, xb)) continue;
        double j = cluster_objective(w_beta, w_xi, labels, bb, xb, blocked);
        for (int sweep = 0; sweep < 500; ++sweep) {
            std::vector<int> next(kk);
            assign(next);
            if (next == labels) break;
            Matrix nb, nx;
            // a sweep that would empty a cluster ends this restart at its last valid partition
            if (!block_means(next, nb, nx)) break;
            double nj = cluster_objective(w_beta, w_xi, next, nb, nx, blocked);
            if (nj > j) break;
            labels = std::move(next);
            bb = std::move(nb);
            xb = std::move(nx);
            bool stalled = nj == j;
            j = nj;
            if (stalled) break;
        }

        // Single-cell moves (exact change in J with the means updated) polish the Lloyd result.
        std::vector<int> count(n_clusters, 0);
        for (int r : labels) ++count[r];
        auto part = [&](Index k, int r) -> Eigen::RowVectorXd {
            Index off = blocked ? r * l : 0;
            Eigen::RowVectorXd v(2 * l);
            v << w_beta.row(k).segment(off, l), w_xi.row(k).segment(off, l);
            return v;
        };
        for (int pass = 0; pass < 100; ++pass) {
            bool moved = false;
            for (Index k = 0; k < kk; ++k) {
                const int a = labels[k];
                if (count[a] < 2) continue;
                Eigen::RowVectorXd ma(2 * l);
                ma << bb.row(a), xb.row(a);
                Eigen::RowVectorXd xa = part(k, a);
                double leave = count[a] / (count[a] - 1.0) * (xa - ma).squaredNorm() - xa.squaredNorm();
                int target = a;
                double gain = 0.0;
                for (int r = 0; r < n_clusters; ++r) {
                    if (r == a) continue;
                    Eigen::RowVectorXd mr(2 * l);
                    mr << bb.row(r), xb.row(r);
                    Eigen::RowVectorXd xr = part(k, r);
                    double join = count[r] / (count[r] + 1.0) * (xr - mr).squaredNorm() - xr.squaredNorm();
                    double delta = join - leave;
                    if (delta < gain - 1e-12 * (1.0 + j)) {
                        gain = delta;
                        target = r;
                    }
                }
                if (target == a) continue;
                labels[k] = target;
                --count[a];
                ++count[target];
                block_means(labels, bb, xb);
                j = cluster_objective(w_beta, w_xi, labels, bb, xb, blocked);
                moved = true;
            }
            if (!moved) break;
        }
        ++done;
        if (j < best.objective) {
            best.objective = j;
            best.labels = labels;
            best.beta_bar = bb;
            best.xi_bar = xb;
        }
    }
    if (best.labels.empty()) throw NumericError("cluster extraction kept producing empty clusters");
    best.z = Matrix::Zero(kk, n_clusters);
    for (Index k = 0; k < kk; ++k) best.z(k, best.labels[k]) = 1.0;
    return best;
}

} // namespace

ClusterSolution extract_clusters(const Matrix& w_beta, const Matrix& w_xi, int n_clusters,
                                 int block_rank, std::uint64_t seed, int restarts) {
    return alternate_clusters(w_beta, w_xi, n_clusters, block_rank, true, seed, restarts);
}

ClusterSolution extract_clusters_shared(const Matrix& w_beta, const Matrix& w_xi, int n_clusters,
                                        std::uint64_t seed, int restarts) {
    return alternate_clusters(w_beta, w_xi, n_clusters, static_cast<int>(w_beta.cols()), false,
                              seed, restarts);
}

Layout parse_layout(const std::string& name) {
    if (name == "shared") return Layout::shared;
    if (name == "blocked") return Layout::blocked;
    throw std::invalid_argument("unknown layout '" + name + "' (expected shared or blocked)");
}

std::string to_string(Layout layout) { return layout == Layout::shared ? "shared" : "blocked"; }

ModelParams params_from_init(const BasisMatrix& basis, const InitFactors& f, int n_cells) {
    ModelParams m;
    m.basis = basis;
    m.gamma = basis.h.transpose() * f.alpha;
    m.w_beta = Vector::Ones(n_cells) * f.b0.transpose();
    m.w_xi = Vector::Ones(n_cells) * f.x0.transpose();
    m.n_clusters = 1;
    m.block_rank = static_cast<int>(f.alpha.cols());
    return m;
}

PipelineResult fit_pipeline(const CountTensor& data, const PipelineConfig& cfg) {
    const int n = data.n_loci(), kk = data.n_cells();
    const int rr = cfg.n_clusters, l = cfg.block_rank;
    if (rr < 1 || l < 1) throw std::invalid_argument("R and L must be positive");
    const int q = cfg.n_basis > 0 ? cfg.n_basis : n;
    BasisKind kind = cfg.basis;
    if (kind == BasisKind::identity && q != n) kind = BasisKind::cubic_bspline;
    BasisMatrix basis = build_basis(n, q, kind);

    PipelineResult out;
    const std::uint64_t seed = cfg.fit.seed;
    if (cfg.layout == Layout::shared || rr == 1) {
        if (l > q) throw DimensionError("rank L exceeds the basis size Q");
        InitFactors f = init_scheme(cfg.scheme, moments_init(data), l, seed);
        out.init = params_from_init(basis, f, kk);
    } else {
        const int d = rr * l;
        if (d > q) throw DimensionError("rank R * L exceeds the basis size Q");
        MultiClusterInit mc = multi_cluster_init(data, l, rr, cfg.scheme, seed);
        Matrix alpha(n, d);
        Matrix wb = Matrix::Zero(kk, d), wx = Matrix::Zero(kk, d);
        for (int r = 0; r < rr; ++r) alpha.middleCols(r * l, l) = mc.per_cluster[r].alpha;
        for (int k = 0; k < kk; ++k) {
            int r = mc.labels[k];
            wb.row(k).segment(r * l, l) = mc.per_cluster[r].b0.transpose();
            wx.row(k).segment(r * l, l) = mc.per_cluster[r].x0.transpose();
        }
        out.init.basis = basis;
        out.init.gamma = basis.h.transpose() * alpha;
        out.init.w_beta = wb;
        out.init.w_xi = wx;
        out.init.n_clusters = rr;
        out.init.block_rank = l;
    }

    FitResult fr = fit(data, out.init, cfg.fit);
    out.params = std::move(fr.params);
    out.report = std::move(fr.report);

    const std::uint64_t cseed = stream_seed(seed, 0x636c7573, 0);
    if (cfg.layout == Layout::blocked && rr > 1)
        out.clusters = extract_clusters(out.params.w_beta, out.params.w_xi, rr, l, cseed);
    else
        out.clusters = extract_clusters_shared(out.params.w_beta, out.params.w_xi, rr, cseed);
    return out;
}

} // namespace zits
