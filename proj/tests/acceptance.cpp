// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion numbers to run a subset.
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "zits/detect_impute.hpp"
#include "zits/fitting.hpp"
#include "zits/io.hpp"
#include "zits/sim_eval.hpp"
#include "zits/zip_dist.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifndef ZITS_BINARY
#error "ZITS_BINARY must point at the command-line tool"
#endif

using namespace zits;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
    return out;
}

SimConfig sim_config(int n, int k, int r, std::uint64_t seed) {
    SimConfig c;
    c.n_loci = n;
    c.n_cells = k;
    c.block_rank = 5;
    c.n_clusters = r;
    c.mu_alpha = 0.5;
    c.mu_beta = 5.0;
    c.mu_xi = 1.0;
    c.seed = seed;
    c.set_default_variances();
    return c;
}

// 1 ------------------------------------------------------------------------

Outcome gradient_suite() {
    double worst = 0.0;
    std::string where;
    int checked = 0;
    double raw = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        gradcheck::Worst w = gradcheck::check_instance(gradcheck::random_instance(seed));
        checked += w.checked;
        raw = std::max(raw, w.raw);
        if (w.rel > worst) {
            worst = w.rel;
            where = "seed " + std::to_string(seed) + " " + w.where;
        }
    }
    return {worst <= 1e-5, std::to_string(checked) + " coordinates, worst floored rel err " + fmt("%.2e", worst) +
                               (where.empty() ? "" : " at " + where) + ", worst unfloored rel err " + fmt("%.2e", raw)};
}

// 2 ------------------------------------------------------------------------

Outcome distribution_oracles() {
    Outcome o;
    double min_mass = 1.0;
    for (double p : {0.0, 0.1, 0.5, 0.9, 0.999})
        for (double lam : log_grid(1e-3, kMaxLambda, 25)) {
            ZipParams z(p, lam);
            double s = 0.0;
            for (std::int64_t c = 0; c <= series_cutoff(lam); ++c) s += zip_pmf(z, c);
            min_mass = std::min(min_mass, s);
        }
    o.pass &= min_mass >= 1.0 - 1e-12;

    std::mt19937_64 rng(20240611);
    const int draws = 1000000;
    double worst_z = 0.0;
    for (double p : {0.1, 0.5, 0.9})
        for (double lam : {0.5, 2.0, 8.0}) {
            ZipParams z(p, lam);
            // central moments by series for the Monte Carlo standard errors
            double m1 = 0.0;
            for (int c = 0; c <= oracle::cutoff(lam); ++c) m1 += c * oracle::zip_pmf_direct(p, lam, c);
            double m2 = 0.0, m4 = 0.0;
            for (int c = 0; c <= oracle::cutoff(lam); ++c) {
                double d = c - m1, w = oracle::zip_pmf_direct(p, lam, c);
                m2 += d * d * w;
                m4 += d * d * d * d * w;
            }
            double s = 0.0, s2 = 0.0;
            for (int n = 0; n < draws; ++n) {
                double c = static_cast<double>(zip_sample(z, rng));
                s += c;
                s2 += c * c;
            }
            double mean = s / draws, var = (s2 - draws * mean * mean) / (draws - 1);
            MeanVar mv = zip_mean_var(z);
            double z_mean = std::abs(mean - mv.mean) / std::sqrt(m2 / draws);
            double z_var = std::abs(var - mv.variance) / std::sqrt((m4 - m2 * m2) / draws);
            worst_z = std::max({worst_z, z_mean, z_var});
        }
    o.pass &= worst_z <= 3.0;

    double worst_psi = 0.0;
    for (double p : {0.0, 0.2, 0.5, 0.8})
        for (double lam : {0.3, 1.0, 3.0, 10.0}) {
            double closed = orlicz_psi1_zip(ZipParams(p, lam));
            double root = oracle::bisect([&](double t) { return oracle::zip_mgf_abs(p, lam, t) - 2.0; },
                                         0.5 * closed, 2.0 * closed);
            worst_psi = std::max(worst_psi, std::abs(closed - root));
        }
    o.pass &= worst_psi <= 1e-8;
    o.detail = "min mass " + fmt("%.15f", min_mass) + ", worst moment |z| " + fmt("%.2f", worst_z) +
               ", worst psi1 gap " + fmt("%.1e", worst_psi);
    return o;
}

// 3 ------------------------------------------------------------------------

double g_fn(double t) { return t / (1.0 - std::exp(-t)); }
double trunc_kl(double x, double y) {
    return g_fn(x) * std::log(x / y) + std::log(std::expm1(y)) - std::log(std::expm1(x));
}

Outcome inequality_sweeps() {
    const double slack = 1e-9;
    std::map<std::string, double> viol; // largest violation per check
    auto note = [&](const std::string& name, double excess) { viol[name] = std::max(viol[name], excess); };

    for (double a : log_grid(1e-3, 40.0, 80))
        for (double b : log_grid(1e-3, 40.0, 80)) {
            double d = std::sqrt(a) - std::sqrt(b);
            note("E.1", d * d - kl_poisson(a, b));
        }
    for (double x : log_grid(0.05, 20.0, 80))
        for (double y : log_grid(0.05, 20.0, 80)) {
            double d = std::sqrt(g_fn(x)) - std::sqrt(g_fn(y));
            note("E.2", d * d - trunc_kl(x, y));
            note("E.3", std::abs(x - y) - 2.0 * std::abs(g_fn(x) - g_fn(y)));
        }
    for (double kappa : {1.0, 2.0, 5.0, 10.0, 20.0, 40.0})
        for (double x : log_grid(0.05, kappa, 50))
            for (double y : log_grid(0.05, kappa, 50))
                note("E.4", (x - y) * (x - y) - 16.0 * (kappa + 1.0) * trunc_kl(x, y));
    for (double s : {0.02, 0.1, 0.3})
        for (double big_s : {0.5, 0.9, 0.98})
            for (double lmax : {2.0, 10.0, 40.0}) {
                double cp = (1.0 - s + big_s) / (4.0 * big_s * (1.0 - s));
                double cl = (1.0 - big_s) / (16.0 * (lmax + 1.0));
                for (int a = 0; a <= 10; ++a)
                    for (int b = 0; b <= 10; ++b)
                        for (double la : log_grid(0.05, lmax, 8))
                            for (double lb : log_grid(0.05, lmax, 8)) {
                                double pa = s + (big_s - s) * a / 10.0, pb = s + (big_s - s) * b / 10.0;
                                double kl = kl_hurdle(HurdleParams(pa, la), HurdleParams(pb, lb));
                                note("E.6", cp * (pa - pb) * (pa - pb) + cl * (la - lb) * (la - lb) - kl);
                            }
            }
    for (double s : {0.05, 0.2})
        for (double lmin : {0.2, 1.0})
            for (double lmax : {4.0, 20.0}) {
                double e = 1.0 - std::exp(-lmin);
                double inner = std::min(1.0 / (1.0 - s + s * std::exp(-lmin)), s * e / (16.0 * (lmax + 1.0)));
                double factor = 4.0 / (e * e) / inner;
                for (int a = 0; a <= 10; ++a)
                    for (int b = 0; b <= 10; ++b)
                        for (double la : log_grid(lmin, lmax, 8))
                            for (double lb : log_grid(lmin, lmax, 8)) {
                                double pa = (1.0 - s) * a / 10.0, pb = (1.0 - s) * b / 10.0;
                                double kl = kl_zip(ZipParams(pa, la), ZipParams(pb, lb));
                                note("E.7", (pa - pb) * (pa - pb) + (la - lb) * (la - lb) - factor * kl);
                            }
            }
    for (int a = 1; a < 20; ++a)
        for (int b = 1; b < 20; ++b)
            for (double la : log_grid(0.05, 30.0, 12))
                for (double lb : log_grid(0.05, 30.0, 12)) {
                    double pa = a / 20.0, pb = b / 20.0;
                    ZipParams za(pa, la), zb(pb, lb);
                    double kl = kl_zip(za, zb);
                    note("KL split", kl - kl_bernoulli(pa, pb) - (1.0 - pa) * kl_poisson(la, lb));
                    note("Hellinger", hellinger_sq_zip(za, zb) - kl);
                }
    for (int a = 0; a < 10; ++a)
        for (double lam : log_grid(0.05, 30.0, 20))
            for (int f = 1; f < 20; ++f)
                for (double sign : {-1.0, 1.0}) {
                    double t = sign * (f / 20.0) / std::max(1.0, lam);
                    MgfCheck c = mgf_bound_check(ZipParams(a / 10.0, lam), t);
                    note("MGF", c.lhs - c.rhs);
                }

    // Bernstein tail with heterogeneous weights and parameters
    const int n = 200, reps = 100000;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> ua(0.5, 1.5), up(0.0, 0.8), ul(0.5, 4.0);
    std::vector<double> a(n), p(n), lam(n), mu(n);
    std::vector<ZipParams> zs;
    for (int i = 0; i < n; ++i) {
        a[i] = ua(rng);
        p[i] = up(rng);
        lam[i] = ul(rng);
        mu[i] = (1.0 - p[i]) * lam[i];
        zs.emplace_back(p[i], lam[i]);
    }
    const std::vector<double> ms{0.1, 0.2, 0.3, 0.5};
    std::vector<int> hits(ms.size(), 0);
    for (int r = 0; r < reps; ++r) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += a[i] * (static_cast<double>(zip_sample(zs[i], rng)) - mu[i]);
        s /= n;
        for (std::size_t m = 0; m < ms.size(); ++m) hits[m] += s >= ms[m];
    }
    for (std::size_t m = 0; m < ms.size(); ++m)
        note("Bernstein", hits[m] / double(reps) - bernstein_tail_bound(a, p, lam, ms[m]) - slack);

    Outcome o;
    std::ostringstream os;
    for (const auto& [name, v] : viol) {
        bool ok = v <= slack;
        o.pass &= ok;
        if (!ok) os << name << " violated by " << fmt("%.2e", v) << "; ";
    }
    o.detail = o.pass ? std::to_string(viol.size()) + " families hold" : os.str();
    return o;
}

// 4 ------------------------------------------------------------------------

Outcome bayes_grid() {
    int mismatches = 0, cells = 0;
    double worst = 0.0;
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 50; ++j) {
            double p = i / 50.0, lam = 0.2 * (j + 1);
            ZipParams z(p, lam);
            double masked = p * -std::expm1(-lam), kept = std::exp(-lam);
            double risk_flag = kept / (masked + kept), risk_keep = masked / (masked + kept);
            // ties go to the true-zero decision
            ZeroDecision brute = risk_flag < risk_keep ? ZeroDecision::false_zero : ZeroDecision::true_zero;
            ++cells;
            mismatches += bayes_false_zero(z) != brute;
            for (ZeroDecision d : {ZeroDecision::true_zero, ZeroDecision::false_zero}) {
                double r = d == ZeroDecision::false_zero ? risk_flag : risk_keep;
                worst = std::max(worst, std::abs(excess_risk(z, d) - (r - std::min(risk_flag, risk_keep))));
            }
        }
    return {mismatches == 0 && worst <= 1e-15,
            std::to_string(cells) + " cells, " + std::to_string(mismatches) + " decision mismatches, worst excess-risk gap " +
                fmt("%.1e", worst)};
}

// 5 ------------------------------------------------------------------------

struct Errors {
    double re_p, re_lambda;
};

Errors fit_errors(const SimResult& sim, const ModelParams& m) {
    LambdaP lp = lambda_p_of(build_links(m));
    return {rel_error(lp.p, sim.truth.p), rel_error(lp.lambda, sim.truth.lambda)};
}

double detection_accuracy(const SimResult& sim, const ModelParams& m) {
    const int n = sim.data.n_loci(), k = sim.data.n_cells();
    DetectionResult det = detect(sim.data, m);
    DenseTensor3 obs0(n, n, k);
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j)
                if (sim.data.at(i, j, c) == 0) obs0(i, j, c) = obs0(j, i, c) = 1.0;
    return detection_metrics(flags_to_tensor(det.flags, n, k), false_zero_truth(sim.truth, sim.data), obs0).accuracy;
}

Outcome sparse_reproduction() {
    std::vector<double> acc, rp_e, rl_e, rp_r, rl_r;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SimResult sim = simulate(sim_config(20, 250, 1, seed));
        PipelineConfig pc;
        pc.fit.seed = seed;
        PipelineResult eig = fit_pipeline(sim.data, pc);
        acc.push_back(detection_accuracy(sim, eig.params));
        Errors ee = fit_errors(sim, eig.params);
        rp_e.push_back(ee.re_p);
        rl_e.push_back(ee.re_lambda);
        pc.scheme = InitScheme::random;
        Errors er = fit_errors(sim, fit_pipeline(sim.data, pc).params);
        rp_r.push_back(er.re_p);
        rl_r.push_back(er.re_lambda);
    }
    double a = median(acc), pe = median(rp_e), le = median(rl_e), pr = median(rp_r), lr = median(rl_r);
    Outcome o;
    o.pass = a >= 0.85 && pe <= 1.1 * pr && le <= 1.1 * lr;
    o.detail = "median accuracy " + fmt("%.3f", a) + "; re(P) eigenb " + fmt("%.3f", pe) + " vs random " + fmt("%.3f", pr) +
               "; re(Lambda) eigenb " + fmt("%.3f", le) + " vs random " + fmt("%.3f", lr);
    return o;
}

// 6 ------------------------------------------------------------------------

Outcome k_scaling() {
    const std::vector<int> ks{25, 50, 100, 250};
    std::vector<double> mp, ml;
    for (int k : ks) {
        std::vector<double> rp, rl;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            SimResult sim = simulate(sim_config(20, k, 1, seed));
            PipelineConfig pc;
            pc.fit.seed = seed;
            Errors e = fit_errors(sim, fit_pipeline(sim.data, pc).params);
            rp.push_back(e.re_p);
            rl.push_back(e.re_lambda);
        }
        mp.push_back(median(rp));
        ml.push_back(median(rl));
    }
    Outcome o;
    std::ostringstream os;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        os << "K=" << ks[i] << " re(P) " << fmt("%.3f", mp[i]) << " re(Lambda) " << fmt("%.3f", ml[i]) << "; ";
        if (i > 0) o.pass &= mp[i] < mp[i - 1] && ml[i] < ml[i - 1];
    }
    o.detail = os.str();
    return o;
}

// 7 ------------------------------------------------------------------------

Outcome separability() {
    std::vector<double> raw, imp, beta, xi;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SimResult sim = simulate(sim_config(60, 240, 2, seed));
        PipelineConfig pc;
        pc.n_clusters = 2;
        pc.fit.seed = seed;
        PipelineResult res = fit_pipeline(sim.data, pc);
        DetectionResult det = detect(sim.data, res.params);
        DenseTensor3 imputed = impute(sim.data, res.params, det.flags, ImputeMode::expected);
        raw.push_back(cluster_ari(cell_features(sim.data.to_dense()), sim.truth.labels, 2, 7));
        imp.push_back(cluster_ari(cell_features(imputed), sim.truth.labels, 2, 7));
        beta.push_back(ari(kmeans(res.params.w_beta, 2, 7).labels, sim.truth.labels));
        xi.push_back(ari(kmeans(res.params.w_xi, 2, 7).labels, sim.truth.labels));
    }
    double r = median(raw), i = median(imp), b = median(beta), x = median(xi);
    return {i >= r && b >= x, "median ARI raw " + fmt("%.4f", r) + " imputed " + fmt("%.4f", i) + " beta " +
                                  fmt("%.4f", b) + " xi " + fmt("%.4f", x)};
}

// 8 ------------------------------------------------------------------------

int run_cli(const std::string& args) {
    std::string cmd = std::string("\"") + ZITS_BINARY + "\" " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<fs::path> manifest_outputs(const fs::path& manifest) {
    std::vector<fs::path> out;
    std::istringstream in(file_bytes(manifest));
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("output = ", 0) == 0) out.emplace_back(line.substr(9));
    return out;
}

Outcome cli_determinism() {
    fs::path root = fs::temp_directory_path() / "zits_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    auto at = [&](const std::string& rel) { return (root / rel).string(); };
    const std::string s = at("sim"), f = at("fit"), d = at("det"), i = at("imp"), e = at("eval");
    const std::vector<std::pair<std::string, std::string>> steps{
        {s, "simulate --N 16 --K 40 --L 3 --R 2 --mu-xi 1 --seed 11 --out " + s},
        {f, "fit --data " + s + "/tensor.txt --Lhat 3 --R 2 --seed 11 --out " + f},
        {d, "detect --data " + s + "/tensor.txt --params " + f + "/params.txt --posterior --out " + d},
        {i, "impute --data " + s + "/tensor.txt --params " + f + "/params.txt --flags " + d + "/flags.txt --out " + i},
        {e, "eval --data " + s + "/tensor.txt --params " + f + "/params.txt --truth " + s + " --flags " + d +
                "/flags.txt --imputed " + i + "/imputed.txt --out " + e},
        {at("pipe"), "pipeline --N 12 --K 30 --L 3 --R 2 --Lhat 3 --reps 2 --max-iters 40 --seed 3 --out " + at("pipe")},
        {at("dist"), "dist --p 0.1 0.5 --lambda 1 4 --out " + at("dist")},
        {at("bin"), "fit --data " + s + "/tensor.txt --model binary --binarize --Lhat 2 --max-iters 30 --out " + at("bin")},
    };
    Outcome o;
    int files = 0;
    for (const auto& [dir, args] : steps) {
        if (run_cli(args) != 0) {
            o.pass = false;
            o.detail += "command failed: " + args + "; ";
            continue;
        }
        fs::path manifest = fs::path(dir) / "manifest.txt";
        fs::path again = fs::path(dir + "_rerun");
        if (run_cli("rerun --manifest " + manifest.string() + " --out " + again.string()) != 0) {
            o.pass = false;
            o.detail += "rerun failed: " + manifest.string() + "; ";
            continue;
        }
        std::vector<fs::path> outs = manifest_outputs(manifest);
        if (outs.empty()) {
            o.pass = false;
            o.detail += "no outputs listed in " + manifest.string() + "; ";
        }
        for (const fs::path& p : outs) {
            fs::path rel = fs::relative(p, dir);
            ++files;
            if (file_bytes(p) != file_bytes(again / rel)) {
                o.pass = false;
                o.detail += "differs: " + rel.string() + "; ";
            }
        }
    }
    if (o.pass) o.detail = std::to_string(files) + " output files byte-identical across " +
                           std::to_string(steps.size()) + " reruns";
    fs::remove_all(root);
    return o;
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},
        {"distribution oracles", distribution_oracles},
        {"inequality sweeps", inequality_sweeps},
        {"Bayes classifier grid", bayes_grid},
        {"sparse simulation reproduction", sparse_reproduction},
        {"K scaling of relative errors", k_scaling},
        {"cluster separability", separability},
        {"CLI rerun determinism", cli_determinism},
    };
    std::vector<int> chosen;
    for (int a = 1; a < argc; ++a) chosen.push_back(std::atoi(argv[a]));
    if (chosen.empty())
        for (int c = 1; c <= int(criteria.size()); ++c) chosen.push_back(c);

    int failed = 0;
    for (int c : chosen) {
        if (c < 1 || c > int(criteria.size())) {
            std::cerr << "unknown criterion " << c << "\n";
            return 2;
        }
        const auto& [name, fn] = criteria[c - 1];
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::cout << "criterion " << c << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << " (" << fmt("%.1f", secs)
                  << " s) " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
