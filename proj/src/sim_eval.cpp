#include "zits/sim_eval.hpp"

#include "zits/errors.hpp"
#include "zits/model_core.hpp"
#include "zits/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace zits {

namespace {

enum Stream : std::uint64_t { kAlpha = 1, kBetaBar = 2, kXiBar = 3, kCounts = 4 };

int block_of(int idx, int n, int blocks) {
    int size = n / blocks;
    return std::min(idx / size, blocks - 1);
}

double width_for(double variance) { return std::sqrt(12.0 * variance); }

double choose2(double x) { return x * (x - 1.0) / 2.0; }

} // namespace

void SimConfig::set_default_variances() {
    sigma_alpha = mu_alpha / 4.0;
    sigma_beta = mu_beta / 4.0;
    sigma_xi = mu_xi / 4.0;
}

void SimConfig::validate() const {
    if (n_loci < 1 || n_cells < 1) throw std::invalid_argument("N and K must be positive");
    if (block_rank < 1 || block_rank > n_loci)
        throw std::invalid_argument("L must satisfy 1 <= L <= N");
    if (n_clusters < 1 || n_clusters > n_cells)
        throw std::invalid_argument("R must satisfy 1 <= R <= K");
    for (double v : {mu_alpha, sigma_alpha, mu_beta, sigma_beta, mu_xi, sigma_xi})
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("scale parameters must be positive and finite");
}

std::string SimConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "N = " << n_loci << "\n"
       << "K = " << n_cells << "\n"
       << "L = " << block_rank << "\n"
       << "R = " << n_clusters << "\n"
       << "mu_alpha = " << mu_alpha << "\n"
       << "sigma_alpha = " << sigma_alpha << "\n"
       << "mu_beta = " << mu_beta << "\n"
       << "sigma_beta = " << sigma_beta << "\n"
       << "mu_xi = " << mu_xi << "\n"
       << "sigma_xi = " << sigma_xi << "\n"
       << "normalize_alpha = " << (normalize_alpha ? 1 : 0) << "\n"
       << "seed = " << seed << "\n";
    return os.str();
}

SimConfig SimConfig::from_text(const std::string& text) {
    SimConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("bad config line: " + line);
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        try {
            if (key == "N") cfg.n_loci = std::stoi(val);
            else if (key == "K") cfg.n_cells = std::stoi(val);
            else if (key == "L") cfg.block_rank = std::stoi(val);
            else if (key == "R") cfg.n_clusters = std::stoi(val);
            else if (key == "mu_alpha") cfg.mu_alpha = std::stod(val);
            else if (key == "sigma_alpha") cfg.sigma_alpha = std::stod(val);
            else if (key == "mu_beta") cfg.mu_beta = std::stod(val);
            else if (key == "sigma_beta") cfg.sigma_beta = std::stod(val);
            else if (key == "mu_xi") cfg.mu_xi = std::stod(val);
            else if (key == "sigma_xi") cfg.sigma_xi = std::stod(val);
            else if (key == "normalize_alpha") cfg.normalize_alpha = std::stoi(val) != 0;
            else if (key == "seed") cfg.seed = std::stoull(val);
            else throw DataError("unknown config key: " + key);
        } catch (const std::logic_error&) {
            throw DataError("bad value for " + key + ": " + val);
        }
    }
    return cfg;
}

SimResult simulate(const SimConfig& cfg) {
    cfg.validate();
    const int n = cfg.n_loci, kk = cfg.n_cells, l = cfg.block_rank, rr = cfg.n_clusters;
    SimTruth t;

    Matrix center = Matrix::Constant(l, l, cfg.mu_alpha / l);
    center.diagonal().setConstant(cfg.mu_alpha);
    const double wa = width_for(cfg.sigma_alpha);
    t.alpha.resize(n, l);
    for (int i = 0; i < n; ++i) {
        auto rng = make_rng(cfg.seed, kAlpha, i);
        std::uniform_real_distribution<double> u(0.0, wa);
        int seg = block_of(i, n, l);
        for (int c = 0; c < l; ++c) t.alpha(i, c) = center(seg, c) + u(rng);
    }
    if (cfg.normalize_alpha)
        for (int c = 0; c < l; ++c) t.alpha.col(c) /= t.alpha.col(c).norm();

    t.beta_bar.resize(rr, l);
    t.xi_bar.resize(rr, l);
    for (int r = 0; r < rr; ++r) {
        auto rb = make_rng(cfg.seed, kBetaBar, r);
        auto rx = make_rng(cfg.seed, kXiBar, r);
        std::uniform_real_distribution<double> ub(cfg.mu_beta, cfg.mu_beta + width_for(cfg.sigma_beta));
        std::uniform_real_distribution<double> ux(cfg.mu_xi, cfg.mu_xi + width_for(cfg.sigma_xi));
        for (int c = 0; c < l; ++c) t.beta_bar(r, c) = ub(rb);
        for (int c = 0; c < l; ++c) t.xi_bar(r, c) = ux(rx);
    }
    t.labels.resize(kk);
    t.beta.resize(kk, l);
    t.xi.resize(kk, l);
    for (int k = 0; k < kk; ++k) {
        t.labels[k] = block_of(k, kk, rr);
        t.beta.row(k) = t.beta_bar.row(t.labels[k]);
        t.xi.row(k) = t.xi_bar.row(t.labels[k]);
    }

    DenseTensor3 eta = cp3_sym(t.alpha, t.beta);
    DenseTensor3 theta = cp3_sym(t.alpha, t.xi);
    t.lambda = DenseTensor3(n, n, kk);
    t.p = DenseTensor3(n, n, kk);
    t.latent = DenseTensor3(n, n, kk);
    t.mask = DenseTensor3(n, n, kk);
    std::vector<CountEntry> entries;
    for (int k = 0; k < kk; ++k) {
        auto rng = make_rng(cfg.seed, kCounts, k);
        for (int i = 0; i < n; ++i) {
            for (int j = i; j < n; ++j) {
                double lam = std::exp(eta(i, j, k));
                double p = logistic(-theta(i, j, k));
                std::bernoulli_distribution keep(1.0 - p);
                std::poisson_distribution<std::int64_t> pois(lam);
                bool b = keep(rng);
                std::int64_t latent = pois(rng);
                for (auto [a, c] : {std::pair{i, j}, std::pair{j, i}}) {
                    t.lambda(a, c, k) = lam;
                    t.p(a, c, k) = p;
                    t.latent(a, c, k) = static_cast<double>(latent);
                    t.mask(a, c, k) = b ? 1.0 : 0.0;
                }
                if (b && latent > 0) entries.push_back({i, j, k, latent});
            }
        }
    }
    return {CountTensor(n, kk, std::move(entries)), std::move(t)};
}

double rel_error(const DenseTensor3& estimate, const DenseTensor3& truth) {
    if (!estimate.same_shape(truth)) throw DimensionError("rel_error shape mismatch");
    double num = 0.0, den = 0.0;
    auto e = estimate.values();
    auto t = truth.values();
    for (std::size_t n = 0; n < t.size(); ++n) {
        num += (e[n] - t[n]) * (e[n] - t[n]);
        den += t[n] * t[n];
    }
    if (den == 0.0) throw NumericError("rel_error: truth has zero norm");
    return std::sqrt(num / den);
}

namespace {

DetectionMetrics finish_metrics(long tp, long fp, long fn, long tn) {
    DetectionMetrics m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.tn = tn;
    long total = tp + fp + fn + tn;
    m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 1.0;
    if (tp + fp == 0) {
        m.precision = 1.0;
        m.precision_undefined = true;
    } else {
        m.precision = static_cast<double>(tp) / (tp + fp);
    }
    if (tp + fn == 0) {
        m.recall = 1.0;
        m.recall_undefined = true;
    } else {
        m.recall = static_cast<double>(tp) / (tp + fn);
    }
    return m;
}

} // namespace

DetectionMetrics detection_metrics(const DenseTensor3& flags, const DenseTensor3& truth,
                                   const DenseTensor3& observed_zero) {
    if (!flags.same_shape(truth) || !flags.same_shape(observed_zero))
        throw DimensionError("detection_metrics shape mismatch");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (Index k = 0; k < flags.d3(); ++k)
        for (Index i = 0; i < flags.d1(); ++i)
            for (Index j = i; j < flags.d2(); ++j) {
                if (observed_zero(i, j, k) == 0.0) continue;
                bool f = flags(i, j, k) != 0.0, y = truth(i, j, k) != 0.0;
                if (f && y) ++tp;
                else if (f) ++fp;
                else if (y) ++fn;
                else ++tn;
            }
    return finish_metrics(tp, fp, fn, tn);
}

DetectionMetrics detection_metrics(const std::vector<int>& flags, const std::vector<int>& truth) {
    if (flags.size() != truth.size()) throw DimensionError("detection_metrics length mismatch");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t n = 0; n < flags.size(); ++n) {
        bool f = flags[n] != 0, y = truth[n] != 0;
        if (f && y) ++tp;
        else if (f) ++fp;
        else if (y) ++fn;
        else ++tn;
    }
    return finish_metrics(tp, fp, fn, tn);
}

Matrix pca_project(const Matrix& rows, int n_components) {
    if (rows.rows() < 2) throw DimensionError("pca_project needs at least two rows");
    Matrix centered = rows.rowwise() - rows.colwise().mean();
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    double tol = sv.size() > 0 ? sv(0) * 1e-10 * std::max(rows.rows(), rows.cols()) : 0.0;
    int rank = 0;
    for (Index d = 0; d < sv.size(); ++d)
        if (sv(d) > tol) ++rank;
    int keep = std::max(1, std::min(n_components, rank));
    Matrix v = svd.matrixV().leftCols(keep);
    for (int d = 0; d < keep; ++d) {
        Index pick = 0;
        double mx = v.col(d).cwiseAbs().maxCoeff();
        for (Index i = 0; i < v.rows(); ++i)
            if (std::abs(v(i, d)) >= mx * (1.0 - 1e-12)) {
                pick = i;
                break;
            }
        if (v(pick, d) < 0.0) v.col(d) = -v.col(d);
    }
    return centered * v;
}

KMeansResult kmeans(const Matrix& rows, int n_clusters, std::uint64_t seed, int restarts) {
    const Index m = rows.rows();
    if (n_clusters < 1 || n_clusters > m)
        throw DimensionError("k-means needs 1 <= R <= number of rows");
    KMeansResult best;
    best.sse = std::numeric_limits<double>::infinity();

    for (int rep = 0; rep < restarts; ++rep) {
        auto rng = make_rng(seed, 0x6b6d65616e73ULL, rep);
        Matrix centers(n_clusters, rows.cols());
        std::vector<double> d2(m, std::numeric_limits<double>::infinity());
        std::vector<char> chosen(m, 0);
        Index first = std::uniform_int_distribution<Index>(0, m - 1)(rng);
        centers.row(0) = rows.row(first);
        chosen[first] = 1;
        for (int c = 1; c < n_clusters; ++c) {
            double total = 0.0;
            for (Index i = 0; i < m; ++i) {
                d2[i] = std::min(d2[i], (rows.row(i) - centers.row(c - 1)).squaredNorm());
                total += d2[i];
            }
            Index pick = -1;
            if (total > 0.0) {
                double u = std::uniform_real_distribution<double>(0.0, total)(rng);
                double acc = 0.0;
                for (Index i = 0; i < m; ++i) {
                    acc += d2[i];
                    if (d2[i] > 0.0 && acc >= u) {
                        pick = i;
                        break;
                    }
                }
                if (pick < 0)
                    for (Index i = m - 1; i >= 0; --i)
                        if (d2[i] > 0.0) {
                            pick = i;
                            break;
                        }
            } else {
                std::vector<Index> free;
                for (Index i = 0; i < m; ++i)
                    if (!chosen[i]) free.push_back(i);
                pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
            }
            centers.row(c) = rows.row(pick);
            chosen[pick] = 1;
        }

        std::vector<int> labels(m, -1);
        double sse = 0.0;
        for (int iter = 0; iter < 300; ++iter) {
            bool changed = false;
            sse = 0.0;
            for (Index i = 0; i < m; ++i) {
                int arg = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (int c = 0; c < n_clusters; ++c) {
                    double d = (rows.row(i) - centers.row(c)).squaredNorm();
                    if (d < bd) {
                        bd = d;
                        arg = c;
                    }
                }
                if (labels[i] != arg) changed = true;
                labels[i] = arg;
                sse += bd;
            }
            if (!changed && iter > 0) break;
            Matrix sums = Matrix::Zero(n_clusters, rows.cols());
            std::vector<int> counts(n_clusters, 0);
            for (Index i = 0; i < m; ++i) {
                sums.row(labels[i]) += rows.row(i);
                ++counts[labels[i]];
            }
            for (int c = 0; c < n_clusters; ++c) {
                if (counts[c] > 0) {
                    centers.row(c) = sums.row(c) / counts[c];
                    continue;
                }
                // Empty cluster: move it to the point farthest from its center.
                Index far = 0;
                double fd = -1.0;
                for (Index i = 0; i < m; ++i) {
                    double d = (rows.row(i) - centers.row(labels[i])).squaredNorm();
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                centers.row(c) = rows.row(far);
            }
        }
        if (sse < best.sse) {
            best.sse = sse;
            best.labels = labels;
        }
    }
    return best;
}

double ari(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw DimensionError("ari: label vectors differ in length");
    const double n = static_cast<double>(a.size());
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ca[a[i]] += 1.0;
        cb[b[i]] += 1.0;
    }
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [key, v] : joint) index += choose2(v);
    for (const auto& [key, v] : ca) sa += choose2(v);
    for (const auto& [key, v] : cb) sb += choose2(v);
    double total = choose2(n);
    double expected = total > 0.0 ? sa * sb / total : 0.0;
    double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

DenseTensor3 false_zero_truth(const SimTruth& truth, const CountTensor& data) {
    DenseTensor3 out(data.n_loci(), data.n_loci(), data.n_cells());
    for (int k = 0; k < data.n_cells(); ++k)
        for (int i = 0; i < data.n_loci(); ++i)
            for (int j = 0; j < data.n_loci(); ++j)
                if (truth.latent(i, j, k) > 0.0 && data.at(i, j, k) == 0) out(i, j, k) = 1.0;
    return out;
}

Matrix cell_features(const DenseTensor3& t) { return tensor_to_pairs(t).transpose(); }

double cluster_ari(const Matrix& rows, const std::vector<int>& labels, int n_clusters,
                   std::uint64_t seed, int n_components) {
    Matrix feats = pca_project(rows, n_components);
    return ari(kmeans(feats, n_clusters, seed).labels, labels);
}

} // namespace zits
