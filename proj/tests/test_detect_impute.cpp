#include "oracles.hpp"
#include "zits/detect_impute.hpp"
#include "zits/errors.hpp"
#include "zits/fitting.hpp"
#include "zits/sim_eval.hpp"
#include "zits/zip_dist.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

using namespace zits;

namespace {

CountTensor sparse_data() {
    // 3 loci, 2 cells; six upper cells per slice, three of them nonzero overall
    return CountTensor(3, 2, {{0, 0, 0, 4}, {1, 2, 0, 1}, {0, 1, 1, 2}});
}

} // namespace

TEST(Detect, NoInflationMeansNoFlags) {
    CountTensor data = sparse_data();
    DenseTensor3 lam(3, 3, 2, 2.0), p(3, 3, 2, 0.0);
    DetectionResult r = detect_from(data, lam, p);
    EXPECT_TRUE(r.flags.empty());
    EXPECT_EQ(r.zeros_scanned, 12 - 3);
    EXPECT_EQ(r.flagged, 0);
}

TEST(Detect, HighInflationFlagsEveryZero) {
    CountTensor data = sparse_data();
    DenseTensor3 lam(3, 3, 2, 1.0), p(3, 3, 2, 0.9);
    DetectionResult r = detect_from(data, lam, p, true);
    EXPECT_EQ(r.flagged, r.zeros_scanned);
    EXPECT_EQ(r.flags.size(), 9u);
    for (const auto& f : r.flags) {
        EXPECT_LE(f.i, f.j);
        EXPECT_EQ(data.at(f.i, f.j, f.k), 0);
    }
    EXPECT_TRUE(std::is_sorted(r.flags.begin(), r.flags.end(), [](const CellIndex& a, const CellIndex& b) {
        return std::tie(a.k, a.i, a.j) < std::tie(b.k, b.i, b.j);
    }));
    // posterior only on zero cells, in [0, 1)
    EXPECT_EQ(r.posterior(0, 0, 0), 0.0);
    double expect = 0.9 * (1 - std::exp(-1.0)) / (0.9 * (1 - std::exp(-1.0)) + std::exp(-1.0));
    EXPECT_NEAR(r.posterior(2, 2, 1), expect, 1e-15);
    EXPECT_EQ(r.posterior(0, 2, 1), r.posterior(2, 0, 1));
}

TEST(Detect, AchievesBayesRiskOnEnumeratedCells) {
    // every zero cell: the rule's conditional risk equals the smaller of the two decisions' risks
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> up(0.0, 0.99), ul(0.05, 6.0);
    const int n = 3, kk = 4;
    DenseTensor3 lam(n, n, kk), p(n, n, kk);
    for (int k = 0; k < kk; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                lam(i, j, k) = lam(j, i, k) = ul(rng);
                p(i, j, k) = p(j, i, k) = up(rng);
            }
    CountTensor zeros(n, kk, {});
    DetectionResult r = detect_from(zeros, lam, p);
    DenseTensor3 flagged = flags_to_tensor(r.flags, n, kk);
    for (int k = 0; k < kk; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double f = p(i, j, k) * (1 - std::exp(-lam(i, j, k))), t = std::exp(-lam(i, j, k));
                double risk_flag = t / (f + t), risk_keep = f / (f + t);
                double rule = flagged(i, j, k) == 1.0 ? risk_flag : risk_keep;
                EXPECT_NEAR(rule, std::min(risk_flag, risk_keep), 1e-15);
            }
}

TEST(Detect, MonotoneInP) {
    CountTensor data(1, 1, {});
    DenseTensor3 lam(1, 1, 1, 1.3);
    bool was = false;
    for (int s = 0; s <= 100; ++s) {
        DenseTensor3 p(1, 1, 1, s / 100.0 * 0.999);
        bool now = detect_from(data, lam, p).flagged == 1;
        EXPECT_TRUE(!was || now);
        was = now;
    }
    EXPECT_TRUE(was);
}

TEST(Detect, DimensionMismatch) {
    EXPECT_THROW(detect_from(sparse_data(), DenseTensor3(3, 3, 1), DenseTensor3(3, 3, 1)), DimensionError);
}

TEST(Impute, HandValues) {
    DenseTensor3 data(2, 2, 1);
    LambdaP lp{DenseTensor3(2, 2, 1, 2.5), DenseTensor3(2, 2, 1, 0.2)};
    std::vector<CellIndex> flags{{0, 1, 0}};
    DenseTensor3 a = impute(data, lp, flags, ImputeMode::intensity);
    DenseTensor3 b = impute(data, lp, flags, ImputeMode::expected);
    EXPECT_EQ(a(0, 1, 0), 2.5);
    EXPECT_EQ(a(1, 0, 0), 2.5);
    EXPECT_NEAR(b(0, 1, 0), 2.0, 1e-15);
    EXPECT_EQ(b(0, 0, 0), 0.0);
}

TEST(Impute, EmptyFlagsIdentityAndIdempotence) {
    DenseTensor3 data(3, 3, 2);
    data(0, 1, 0) = data(1, 0, 0) = 3.0;
    std::mt19937_64 rng(1);
    LambdaP lp{DenseTensor3(3, 3, 2, 1.7), DenseTensor3(3, 3, 2, 0.4)};
    DenseTensor3 same = impute(data, lp, {}, ImputeMode::expected);
    for (Index x = 0; x < data.size(); ++x) EXPECT_EQ(same.values()[x], data.values()[x]);
    std::vector<CellIndex> flags{{0, 0, 0}, {1, 2, 1}};
    DenseTensor3 once = impute(data, lp, flags, ImputeMode::expected);
    DenseTensor3 twice = impute(once, lp, flags, ImputeMode::expected);
    for (Index x = 0; x < once.size(); ++x) EXPECT_EQ(once.values()[x], twice.values()[x]);
}

TEST(Impute, RejectsFlagOnNonzeroCell) {
    DenseTensor3 data(2, 2, 1);
    data(0, 1, 0) = data(1, 0, 0) = 3.0;
    LambdaP lp{DenseTensor3(2, 2, 1, 1.0), DenseTensor3(2, 2, 1, 0.5)};
    EXPECT_THROW(impute(data, lp, {{0, 1, 0}}, ImputeMode::intensity), DataError);
    EXPECT_THROW(impute(data, lp, {{0, 2, 0}}, ImputeMode::intensity), DataError);
}

TEST(Impute, ModeNames) {
    EXPECT_EQ(parse_impute_mode("expected"), ImputeMode::expected);
    EXPECT_EQ(to_string(ImputeMode::intensity), "intensity");
    EXPECT_THROW(parse_impute_mode("mean"), std::invalid_argument);
}

TEST(Expected, MatchesEntrywiseOracle) {
    std::mt19937_64 rng(8);
    ModelParams m;
    m.basis = build_basis(5, 3, BasisKind::fourier);
    m.gamma = oracle::random_matrix(3, 2, rng);
    m.w_beta = oracle::random_matrix(4, 2, rng);
    m.w_xi = oracle::random_matrix(4, 2, rng);
    DenseTensor3 e = expected_tensor(m);
    Matrix a = m.alpha();
    for (Index k = 0; k < 4; ++k)
        for (Index i = 0; i < 5; ++i)
            for (Index j = 0; j < 5; ++j) {
                double eta = oracle::cp_entry(a, m.w_beta, i, j, k), th = oracle::cp_entry(a, m.w_xi, i, j, k);
                double p = 1.0 / (1.0 + std::exp(th));
                EXPECT_NEAR(e(i, j, k), (1 - p) * std::exp(eta), 1e-12);
            }
}

TEST(Expected, Limits) {
    LambdaP lp{DenseTensor3(2, 2, 1, 3.0), DenseTensor3(2, 2, 1, 0.0)};
    EXPECT_EQ(expected_tensor(lp)(1, 1, 0), 3.0);
    lp.p = DenseTensor3(2, 2, 1, 1.0 - 1e-9);
    EXPECT_NEAR(expected_tensor(lp)(0, 1, 0), 3e-9, 1e-15);
}

TEST(Detect, SimulatedAccuracy) {
    SimConfig sc;
    sc.n_loci = 20;
    sc.n_cells = 250;
    sc.block_rank = 5;
    sc.seed = 2;
    sc.set_default_variances();
    SimResult sim = simulate(sc);
    PipelineConfig pc;
    pc.block_rank = 5;
    PipelineResult res = fit_pipeline(sim.data, pc);
    DetectionResult det = detect(sim.data, res.params);
    DenseTensor3 obs0(20, 20, 250);
    sim.data.for_each_upper([&](int i, int j, int k, std::int64_t c) {
        if (c == 0) obs0(i, j, k) = obs0(j, i, k) = 1.0;
    });
    DetectionMetrics dm = detection_metrics(flags_to_tensor(det.flags, 20, 250), false_zero_truth(sim.truth, sim.data), obs0);
    EXPECT_GE(dm.accuracy, 0.85);
}
