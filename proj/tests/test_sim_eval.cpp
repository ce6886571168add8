#include "oracles.hpp"
#include "zits/errors.hpp"
#include "zits/sim_eval.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <algorithm>

using namespace zits;

namespace {

SimConfig paper_config(std::uint64_t seed) {
    SimConfig c;
    c.n_loci = 20;
    c.n_cells = 250;
    c.block_rank = 5;
    c.n_clusters = 1;
    c.mu_alpha = 0.5;
    c.mu_beta = 5.0;
    c.mu_xi = 1.0;
    c.seed = seed;
    c.set_default_variances();
    return c;
}

double zero_fraction(const SimResult& s) {
    long nz = 0;
    s.data.for_each_upper([&](int, int, int, std::int64_t c) { nz += c != 0; });
    double total = pair_count(s.data.n_loci()) * double(s.data.n_cells());
    return 1.0 - nz / total;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST(SimConfig, ValidationAndText) {
    SimConfig c = paper_config(3);
    EXPECT_NO_THROW(c.validate());
    SimConfig back = SimConfig::from_text(c.to_text());
    EXPECT_EQ(back.to_text(), c.to_text());
    c.sigma_beta = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = paper_config(3);
    c.block_rank = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = paper_config(3);
    c.n_clusters = 251;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_THROW(SimConfig::from_text("N 20\n"), DataError);
}

TEST(Simulate, Reproducible) {
    SimResult a = simulate(paper_config(4)), b = simulate(paper_config(4));
    ASSERT_EQ(a.data.nnz(), b.data.nnz());
    for (std::size_t n = 0; n < a.data.nnz(); ++n) {
        EXPECT_EQ(a.data.entries()[n].c, b.data.entries()[n].c);
        EXPECT_EQ(a.data.entries()[n].i, b.data.entries()[n].i);
    }
    EXPECT_TRUE(same_bits(a.truth.lambda.values(), b.truth.lambda.values()));
    EXPECT_TRUE(same_bits(a.truth.p.values(), b.truth.p.values()));
}

TEST(Simulate, AlphaDrawsDoNotDependOnK) {
    SimConfig c = paper_config(5);
    SimResult a = simulate(c);
    c.n_cells = 40;
    SimResult b = simulate(c);
    EXPECT_EQ(a.truth.alpha, b.truth.alpha);
}

TEST(Simulate, MaskConsistency) {
    SimResult s = simulate(paper_config(6));
    const int n = 20;
    for (int k = 0; k < 250; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double expect = s.truth.mask(i, j, k) * s.truth.latent(i, j, k);
                EXPECT_EQ(double(s.data.at(i, j, k)), expect);
            }
    // false zeros are observed zeros with a positive latent count
    DenseTensor3 fz = false_zero_truth(s.truth, s.data);
    for (int k = 0; k < 5; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j)
                EXPECT_EQ(fz(i, j, k) == 1.0, s.data.at(i, j, k) == 0 && s.truth.latent(i, j, k) > 0);
}

TEST(Simulate, StructureOfTruth) {
    SimConfig c = paper_config(7);
    c.n_clusters = 2;
    c.n_cells = 10;
    SimResult s = simulate(c);
    for (int k = 0; k < 10; ++k) {
        EXPECT_EQ(s.truth.labels[k], k < 5 ? 0 : 1);
        EXPECT_EQ(Matrix(s.truth.beta.row(k)), Matrix(s.truth.beta_bar.row(s.truth.labels[k])));
    }
    // entries of the cluster means lie in [mu, mu + width], width^2 / 12 = sigma
    double wb = std::sqrt(12.0 * c.sigma_beta);
    EXPECT_GE(s.truth.beta_bar.minCoeff(), c.mu_beta);
    EXPECT_LE(s.truth.beta_bar.maxCoeff(), c.mu_beta + wb);
    for (Index d = 0; d < 5; ++d) EXPECT_NEAR(s.truth.alpha.col(d).norm(), 1.0, 1e-14);
    // links follow the CP form
    EXPECT_NEAR(std::log(s.truth.lambda(2, 7, 3)), oracle::cp_entry(s.truth.alpha, s.truth.beta, 2, 7, 3), 1e-12);
    double th = oracle::cp_entry(s.truth.alpha, s.truth.xi, 2, 7, 3);
    EXPECT_NEAR(s.truth.p(2, 7, 3), 1.0 / (1.0 + std::exp(th)), 1e-15);
}

TEST(Simulate, TinyNoiseSingleSegmentIsFlat) {
    SimConfig c = paper_config(8);
    c.block_rank = 1;
    c.sigma_alpha = 1e-14;
    c.n_cells = 3;
    SimResult s = simulate(c);
    for (int k = 0; k < 3; ++k) {
        double ref = s.truth.lambda(0, 0, k);
        for (int i = 0; i < 20; ++i)
            for (int j = 0; j < 20; ++j) EXPECT_NEAR(s.truth.lambda(i, j, k), ref, 1e-5 * ref);
    }
}

TEST(Simulate, ZeroProbabilityPerCell) {
    SimResult s = simulate(paper_config(9));
    const int n = 20, m = pair_count(n);
    int outside = 0;
    for (int k = 0; k < 250; ++k) {
        double expect = 0.0, var = 0.0;
        int zeros = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double q = s.truth.p(i, j, k) + (1 - s.truth.p(i, j, k)) * std::exp(-s.truth.lambda(i, j, k));
                expect += q;
                var += q * (1 - q);
                zeros += s.data.at(i, j, k) == 0;
            }
        if (std::abs(zeros - expect) > 3.0 * std::sqrt(var)) ++outside;
        (void)m;
    }
    // a 3 sigma band misses about 0.3% of cells
    EXPECT_LE(outside, 5);
}

TEST(Simulate, PaperConfigIsHighlySparse) {
    // Expected to exceed one half. With theta >= 0 the mask probability is at most 1/2, and the
    // measured fraction sits near 0.43, so this check records a known gap.
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) total += zero_fraction(simulate(paper_config(seed)));
    EXPECT_GT(total / 5.0, 0.5);
}

TEST(RelError, Cases) {
    std::mt19937_64 rng(1);
    DenseTensor3 t = oracle::random_tensor(3, 3, 2, rng);
    EXPECT_EQ(rel_error(t, t), 0.0);
    EXPECT_NEAR(rel_error(DenseTensor3(3, 3, 2), t), 1.0, 1e-15);
    DenseTensor3 two = t;
    for (double& v : two.values()) v *= 2.0;
    EXPECT_NEAR(rel_error(two, t), 1.0, 1e-15);
    EXPECT_THROW(rel_error(t, DenseTensor3(3, 3, 2)), NumericError);
    EXPECT_THROW(rel_error(t, DenseTensor3(3, 3, 1)), DimensionError);
}

TEST(Metrics, HandCases) {
    DetectionMetrics a = detection_metrics(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 1, 0});
    EXPECT_EQ(a.accuracy, 0.5);
    EXPECT_EQ(a.precision, 0.5);
    EXPECT_EQ(a.recall, 0.5);
    DetectionMetrics perfect = detection_metrics(std::vector<int>{1, 0, 1}, std::vector<int>{1, 0, 1});
    EXPECT_EQ(perfect.accuracy, 1.0);
    EXPECT_EQ(perfect.precision, 1.0);
    EXPECT_EQ(perfect.recall, 1.0);
    DetectionMetrics none = detection_metrics(std::vector<int>{0, 0, 0}, std::vector<int>{1, 0, 1});
    EXPECT_EQ(none.recall, 0.0);
    EXPECT_TRUE(none.precision_undefined);
    EXPECT_EQ(none.precision, 1.0);
    DetectionMetrics nopos = detection_metrics(std::vector<int>{0, 1}, std::vector<int>{0, 0});
    EXPECT_TRUE(nopos.recall_undefined);
    EXPECT_EQ(nopos.recall, 1.0);
}

TEST(Metrics, AccuracyIdentityOnRandomMasks) {
    std::mt19937_64 rng(12);
    std::bernoulli_distribution coin(0.4);
    DenseTensor3 f(4, 4, 3), y(4, 4, 3), z(4, 4, 3);
    for (Index k = 0; k < 3; ++k)
        for (Index i = 0; i < 4; ++i)
            for (Index j = i; j < 4; ++j) {
                f(i, j, k) = f(j, i, k) = coin(rng);
                y(i, j, k) = y(j, i, k) = coin(rng);
                z(i, j, k) = z(j, i, k) = coin(rng) || coin(rng);
            }
    DetectionMetrics m = detection_metrics(f, y, z);
    long tp = 0, tn = 0, all = 0;
    for (Index k = 0; k < 3; ++k)
        for (Index i = 0; i < 4; ++i)
            for (Index j = i; j < 4; ++j)
                if (z(i, j, k) != 0.0) {
                    ++all;
                    tp += f(i, j, k) && y(i, j, k);
                    tn += !f(i, j, k) && !y(i, j, k);
                }
    EXPECT_EQ(m.tp + m.tn + m.fp + m.fn, all);
    EXPECT_EQ(m.tp, tp);
    EXPECT_EQ(m.tn, tn);
    EXPECT_NEAR(m.accuracy, double(tp + tn) / all, 1e-15);
}

TEST(Pca, MatchesCovarianceEigenvectors) {
    std::mt19937_64 rng(13);
    Matrix x = oracle::random_matrix(10, 7, rng);
    Matrix proj = pca_project(x, 20);
    ASSERT_EQ(proj.cols(), 7);
    Matrix c = x.rowwise() - x.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Matrix> es(c.transpose() * c);
    for (Index d = 0; d < 7; ++d) {
        Vector v = es.eigenvectors().col(6 - d);
        Vector ref = c * v;
        double s = ref.dot(proj.col(d)) >= 0 ? 1.0 : -1.0;
        EXPECT_LE((proj.col(d) - s * ref).cwiseAbs().maxCoeff(), 1e-8) << d;
    }
}

TEST(Pca, RankOneAndIsometry) {
    Matrix x(5, 3);
    for (Index i = 0; i < 5; ++i) x.row(i) << i, 2.0 * i, -1.0 * i;
    Matrix p = pca_project(x, 20);
    EXPECT_EQ(p.cols(), 1);
    std::mt19937_64 rng(14);
    Matrix y = oracle::random_matrix(6, 4, rng);
    Matrix q = pca_project(y, 20);
    for (Index a = 0; a < 6; ++a)
        for (Index b = 0; b < 6; ++b)
            EXPECT_NEAR((q.row(a) - q.row(b)).norm(), (y.row(a) - y.row(b)).norm(), 1e-10);
}

TEST(KMeans, SeparatedBlobs) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, 1.0);
        Matrix x(60, 3);
        std::vector<int> truth(60);
        for (int i = 0; i < 60; ++i) {
            truth[i] = i % 2;
            for (int d = 0; d < 3; ++d) x(i, d) = g(rng) + (i % 2 ? 25.0 : 0.0);
        }
        EXPECT_EQ(ari(kmeans(x, 2, seed).labels, truth), 1.0);
    }
}

TEST(KMeans, DegenerateCases) {
    std::mt19937_64 rng(15);
    Matrix x = oracle::random_matrix(6, 2, rng);
    KMeansResult r = kmeans(x, 6, 1);
    EXPECT_NEAR(r.sse, 0.0, 1e-24);
    std::vector<int> sorted = r.labels;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::unique(sorted.begin(), sorted.end()) - sorted.begin(), 6);
    Matrix dup(6, 2);
    dup << 0, 0, 0, 0, 5, 5, 5, 5, 9, 1, 9, 1;
    KMeansResult d = kmeans(dup, 3, 2);
    EXPECT_EQ(d.labels[0], d.labels[1]);
    EXPECT_EQ(d.labels[2], d.labels[3]);
    EXPECT_EQ(d.labels[4], d.labels[5]);
    EXPECT_THROW(kmeans(dup, 7, 1), DimensionError);
    // deterministic
    EXPECT_EQ(kmeans(x, 2, 9).labels, kmeans(x, 2, 9).labels);
}

TEST(Ari, Cases) {
    std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1};
    EXPECT_EQ(ari(a, a), 1.0);
    EXPECT_NEAR(ari(a, b), oracle::ari_pairs(a, b), 1e-15);
    EXPECT_NEAR(ari(a, b), -0.5, 1e-15);
    EXPECT_EQ(ari(std::vector<int>{3, 3, 3, 3}, b), 0.0);
    EXPECT_THROW(ari(a, std::vector<int>{0, 1}), DimensionError);
}

TEST(Ari, SymmetricAndPermutationInvariant) {
    std::mt19937_64 rng(16);
    std::uniform_int_distribution<int> u(0, 3);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<int> a(30), b(30), pa(30);
        for (int i = 0; i < 30; ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
            pa[i] = (a[i] * 3 + 1) % 4;
        }
        EXPECT_NEAR(ari(a, b), ari(b, a), 1e-14);
        EXPECT_NEAR(ari(a, b), ari(pa, b), 1e-14);
        EXPECT_NEAR(ari(a, b), oracle::ari_pairs(a, b), 1e-12);
    }
}

TEST(Features, UpperTriangleRows) {
    DenseTensor3 t(3, 3, 2);
    t(0, 2, 1) = t(2, 0, 1) = 7.0;
    Matrix f = cell_features(t);
    ASSERT_EQ(f.rows(), 2);
    ASSERT_EQ(f.cols(), 6);
    EXPECT_EQ(f(1, 2), 7.0);
    EXPECT_EQ(f.row(0).cwiseAbs().sum(), 0.0);
}
