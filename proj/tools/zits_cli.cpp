#include "zits/basis.hpp"
#include "zits/binary_model.hpp"
#include "zits/detect_impute.hpp"
#include "zits/errors.hpp"
#include "zits/fitting.hpp"
#include "zits/init_schemes.hpp"
#include "zits/io.hpp"
#include "zits/sim_eval.hpp"
#include "zits/zip_dist.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#ifndef ZITS_VERSION
#define ZITS_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace zits;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

/// Resolved settings, inputs and outputs of one invocation.
struct Manifest {
    std::string subcommand;
    std::vector<std::string> args;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    void set(const std::string& key, const std::string& value) { config.emplace_back(key, value); }
    void set(const std::string& key, double value) { set(key, format_double(value)); }
    void set(const std::string& key, long long value) { set(key, std::to_string(value)); }
    void set(const std::string& key, int value) { set(key, std::to_string(value)); }
    void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
    void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

    std::string text(double wall_seconds) const {
        std::ostringstream os;
        os << "# zits-manifest v1\n";
        os << "subcommand = " << subcommand << "\n";
        os << "version = " << ZITS_VERSION << "\n";
        for (const auto& a : args) os << "arg = " << a << "\n";
        for (const auto& [k, v] : config) os << "config." << k << " = " << v << "\n";
        for (const auto& p : inputs) os << "input = " << p << "\n";
        for (const auto& p : outputs) os << "output = " << p << "\n";
        os << "wall_time_s = " << format_double(wall_seconds) << "\n";
        return os.str();
    }
};

std::string path_in(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir);
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix labels_column(const std::vector<int>& labels) {
    Matrix m(static_cast<Index>(labels.size()), 1);
    for (std::size_t k = 0; k < labels.size(); ++k) m(static_cast<Index>(k), 0) = labels[k];
    return m;
}

std::vector<int> labels_from(const Matrix& m) {
    std::vector<int> out(static_cast<std::size_t>(m.rows()));
    for (Index k = 0; k < m.rows(); ++k) out[static_cast<std::size_t>(k)] = static_cast<int>(m(k, 0));
    return out;
}

// ---------------------------------------------------------------------------
// option groups

struct SimOptions {
    int n = 20, k = 250, l = 5, r = 1;
    double mu_alpha = 0.5, mu_beta = 5.0, mu_xi = 1.0;
    std::optional<double> sigma_alpha, sigma_beta, sigma_xi;
    bool raw_alpha = false;

    void add(CLI::App* app) {
        app->add_option("--N", n, "number of loci")->capture_default_str();
        app->add_option("--K", k, "number of cells")->capture_default_str();
        app->add_option("--L", l, "block rank")->capture_default_str();
        app->add_option("--R", r, "number of cell clusters")->capture_default_str();
        app->add_option("--mu-alpha", mu_alpha)->capture_default_str();
        app->add_option("--mu-beta", mu_beta)->capture_default_str();
        app->add_option("--mu-xi", mu_xi)->capture_default_str();
        app->add_option("--sigma-alpha", sigma_alpha, "variance; default mu/4");
        app->add_option("--sigma-beta", sigma_beta, "variance; default mu/4");
        app->add_option("--sigma-xi", sigma_xi, "variance; default mu/4");
        app->add_flag("--raw-alpha", raw_alpha, "skip unit-norm scaling of alpha columns");
    }

    SimConfig config(std::uint64_t seed) const {
        SimConfig c;
        c.n_loci = n;
        c.n_cells = k;
        c.block_rank = l;
        c.n_clusters = r;
        c.mu_alpha = mu_alpha;
        c.mu_beta = mu_beta;
        c.mu_xi = mu_xi;
        c.set_default_variances();
        if (sigma_alpha) c.sigma_alpha = *sigma_alpha;
        if (sigma_beta) c.sigma_beta = *sigma_beta;
        if (sigma_xi) c.sigma_xi = *sigma_xi;
        c.normalize_alpha = !raw_alpha;
        c.seed = seed;
        c.validate();
        return c;
    }
};

void record(Manifest& m, const SimConfig& c) {
    std::istringstream is(c.to_text());
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find(" = ");
        if (eq != std::string::npos) m.set("sim." + line.substr(0, eq), line.substr(eq + 3));
    }
}

struct FitOptions {
    std::string model = "zip";
    std::string init = "eigenb";
    std::string basis = "identity";
    std::string layout = "shared";
    int lhat = 5;
    int r = 1;
    int q = 0;
    int band = 0;
    int max_iters = 500;
    double rel_tol = 1e-4;
    bool binarize = false;
    bool no_precondition = false;

    void add(CLI::App* app, bool with_r) {
        app->add_option("--model", model, "zip | poisson | binary")->capture_default_str();
        app->add_option("--init", init, "random | cp | cpavg | eigenb | eigenx | eigenbx")
            ->capture_default_str();
        app->add_option("--Lhat", lhat, "fitted rank per cluster")->capture_default_str();
        if (with_r) app->add_option("--R", r, "number of cell clusters")->capture_default_str();
        app->add_option("--Q", q, "basis size; 0 means Q = N")->capture_default_str();
        app->add_option("--basis", basis, "identity | cubic_bspline | fourier")->capture_default_str();
        app->add_option("--layout", layout, "shared | blocked")->capture_default_str();
        app->add_flag("--binarize", binarize, "map positive counts to 1 (binary model)");
        app->add_option("--exclude-diag-band", band, "drop pairs with j - i below this")
            ->capture_default_str();
        app->add_option("--max-iters", max_iters)->capture_default_str();
        app->add_option("--rel-tol", rel_tol)->capture_default_str();
        app->add_flag("--no-precondition", no_precondition, "plain gradient steps");
    }

    Likelihood likelihood() const {
        if (model == "zip") return Likelihood::zip;
        if (model == "poisson") return Likelihood::poisson;
        if (model == "binary") return Likelihood::binary;
        throw std::invalid_argument("unknown model '" + model + "' (valid: zip, poisson, binary)");
    }

    PipelineConfig config(int n_clusters, std::uint64_t seed) const {
        PipelineConfig pc;
        pc.n_clusters = n_clusters;
        pc.block_rank = lhat;
        pc.n_basis = q;
        pc.basis = parse_basis_kind(basis);
        pc.scheme = parse_init_scheme(init);
        pc.layout = parse_layout(layout);
        pc.fit.max_iters = max_iters;
        pc.fit.rel_tol = rel_tol;
        pc.fit.exclude_diag_band = band;
        pc.fit.precondition = !no_precondition;
        pc.fit.likelihood = likelihood();
        pc.fit.seed = seed;
        if (lhat < 1) throw std::invalid_argument("--Lhat must be positive");
        if (n_clusters < 1) throw std::invalid_argument("--R must be positive");
        if (q < 0) throw std::invalid_argument("--Q must be non-negative");
        if (binarize && pc.fit.likelihood != Likelihood::binary)
            throw std::invalid_argument("--binarize requires --model binary");
        pc.fit.validate();
        return pc;
    }
};

void record(Manifest& m, const PipelineConfig& pc, const FitOptions& fo) {
    m.set("fit.model", fo.model);
    m.set("fit.init", to_string(pc.scheme));
    m.set("fit.Lhat", pc.block_rank);
    m.set("fit.R", pc.n_clusters);
    m.set("fit.Q", pc.n_basis);
    m.set("fit.basis", to_string(pc.basis));
    m.set("fit.layout", to_string(pc.layout));
    m.set("fit.binarize", fo.binarize);
    m.set("fit.exclude_diag_band", pc.fit.exclude_diag_band);
    m.set("fit.max_iters", pc.fit.max_iters);
    m.set("fit.rel_tol", pc.fit.rel_tol);
    m.set("fit.armijo_c1", pc.fit.armijo_c1);
    m.set("fit.backtrack", pc.fit.backtrack);
    m.set("fit.initial_step", pc.fit.initial_step);
    m.set("fit.max_step", pc.fit.max_step);
    m.set("fit.beta_max", pc.fit.beta_max);
    m.set("fit.xi_max", pc.fit.xi_max);
    m.set("fit.precondition", pc.fit.precondition);
}

CountTensor load_counts(const std::string& path, bool ingest, Manifest& m) {
    m.inputs.push_back(path);
    return read_count_tensor(path, ingest);
}

ModelParams load_params(const std::string& path, const CountTensor& data, Manifest& m) {
    m.inputs.push_back(path);
    ModelParams p = params_from_bundle(read_bundle(path));
    if (p.n_loci() != data.n_loci() || p.n_cells() != data.n_cells())
        throw DimensionError(path + ": parameter dims " + std::to_string(p.n_loci()) + " x " +
                             std::to_string(p.n_cells()) + " do not match the tensor " +
                             std::to_string(data.n_loci()) + " x " + std::to_string(data.n_cells()));
    return p;
}

void check_dims(const CountTensor& data, int n, int k) {
    if (n > 0 && n != data.n_loci())
        throw DimensionError("--N " + std::to_string(n) + " does not match the file header N = " +
                             std::to_string(data.n_loci()));
    if (k > 0 && k != data.n_cells())
        throw DimensionError("--K " + std::to_string(k) + " does not match the file header K = " +
                             std::to_string(data.n_cells()));
}

// ---------------------------------------------------------------------------
// building blocks shared by the subcommands

void write_simulation(const std::string& out, const SimResult& sim, const SimConfig& c, Manifest& m) {
    ensure_dir(out);
    const int n = c.n_loci;
    ModelParams truth;
    truth.basis = build_basis(n, n, BasisKind::identity);
    truth.gamma = sim.truth.alpha;
    truth.w_beta = sim.truth.beta;
    truth.w_xi = sim.truth.xi;
    MatrixBundle b = params_to_bundle(truth);
    b.emplace_back("beta_bar", sim.truth.beta_bar);
    b.emplace_back("xi_bar", sim.truth.xi_bar);
    b.emplace_back("labels", labels_column(sim.truth.labels));
    const std::vector<std::pair<std::string, std::function<void(const std::string&)>>> files = {
        {"tensor.txt", [&](const std::string& p) { write_count_tensor(p, sim.data); }},
        {"truth.txt", [&](const std::string& p) { write_bundle(p, b); }},
        {"truth_lambda.txt", [&](const std::string& p) { write_real_tensor(p, sim.truth.lambda); }},
        {"truth_p.txt", [&](const std::string& p) { write_real_tensor(p, sim.truth.p); }},
        {"truth_latent.txt", [&](const std::string& p) { write_real_tensor(p, sim.truth.latent); }},
        {"config.txt", [&](const std::string& p) { write_text(p, c.to_text()); }},
    };
    for (const auto& [name, w] : files) {
        w(path_in(out, name));
        m.outputs.push_back(path_in(out, name));
    }
}

PipelineResult run_fit(const CountTensor& raw, const PipelineConfig& pc, bool binarize) {
    if (pc.fit.likelihood != Likelihood::binary) return fit_pipeline(raw, pc);
    binary_pair_data(raw, binarize); // rejects counts above 1 unless binarizing
    return fit_pipeline(binarize ? binarize_counts(raw) : raw, pc);
}

void write_fit(const std::string& out, const PipelineResult& res, Manifest& m) {
    ensure_dir(out);
    write_bundle(path_in(out, "params.txt"), params_to_bundle(res.params));
    write_bundle(path_in(out, "init_params.txt"), params_to_bundle(res.init));
    MatrixBundle cb;
    cb.emplace_back("z", res.clusters.z);
    cb.emplace_back("beta_bar", res.clusters.beta_bar);
    cb.emplace_back("xi_bar", res.clusters.xi_bar);
    cb.emplace_back("labels", labels_column(res.clusters.labels));
    cb.emplace_back("objective", Matrix::Constant(1, 1, res.clusters.objective));
    write_bundle(path_in(out, "clusters.txt"), cb);

    const FitReport& r = res.report;
    std::ostringstream csv;
    csv << "iteration,nll,rel_change_gamma,rel_change_beta,rel_change_xi\n";
    csv << 0 << "," << format_double(r.nll_trace.at(0)) << ",,,\n";
    for (std::size_t t = 0; t < r.rel_change.size(); ++t) {
        csv << t + 1 << "," << format_double(r.nll_trace.at(t + 1));
        for (double v : r.rel_change[t]) csv << "," << format_double(v);
        csv << "\n";
    }
    write_text(path_in(out, "report.csv"), csv.str());

    std::ostringstream txt;
    txt << "iterations = " << r.iterations << "\n";
    txt << "converged = " << (r.converged ? "true" : "false") << "\n";
    txt << "stalled = " << (r.stalled ? "true" : "false") << "\n";
    txt << "nll_initial = " << format_double(r.nll_trace.front()) << "\n";
    txt << "nll_final = " << format_double(r.nll_trace.back()) << "\n";
    txt << "step_gamma = " << format_double(r.step_gamma) << "\n";
    txt << "step_beta = " << format_double(r.step_beta) << "\n";
    txt << "step_xi = " << format_double(r.step_xi) << "\n";
    txt << "cluster_objective = " << format_double(res.clusters.objective) << "\n";
    write_text(path_in(out, "report.txt"), txt.str());
    for (const char* f : {"params.txt", "init_params.txt", "clusters.txt", "report.csv", "report.txt"})
        m.outputs.push_back(path_in(out, f));
}

std::string detect_summary(const DetectionResult& det) {
    double sum = 0.0, mx = 0.0;
    long above = 0;
    const DenseTensor3& post = det.posterior;
    const long zeros = det.zeros_scanned; // nonzero cells hold posterior 0
    if (post.size() > 0) {
        for (Index k = 0; k < post.d3(); ++k)
            for (Index i = 0; i < post.d1(); ++i)
                for (Index j = i; j < post.d2(); ++j) {
                    double v = post(i, j, k);
                    sum += v;
                    mx = std::max(mx, v);
                    if (v > 0.5) ++above;
                }
    }
    std::ostringstream os;
    os << "zeros_scanned = " << det.zeros_scanned << "\n";
    os << "flagged = " << det.flagged << "\n";
    os << "flagged_fraction = "
       << format_double(det.zeros_scanned ? double(det.flagged) / double(det.zeros_scanned) : 0.0) << "\n";
    os << "posterior_mean = " << format_double(zeros ? sum / double(zeros) : 0.0) << "\n";
    os << "posterior_max = " << format_double(mx) << "\n";
    os << "posterior_above_half = " << above << "\n";
    return os.str();
}

struct EvalInputs {
    const CountTensor* data = nullptr;
    const ModelParams* params = nullptr;
    const std::vector<CellIndex>* flags = nullptr;
    const DenseTensor3* imputed = nullptr;
    const ClusterSolution* clusters = nullptr;
    DenseTensor3 truth_lambda, truth_p, truth_latent;
    std::vector<int> labels;
    int n_clusters = 1;
    std::uint64_t seed = 1;
};

using Metrics = std::vector<std::pair<std::string, double>>;

Metrics evaluate(const EvalInputs& in) {
    const CountTensor& data = *in.data;
    LambdaP lp = lambda_p_of(build_links(*in.params));
    Metrics m;
    m.emplace_back("rel_error_lambda", rel_error(lp.lambda, in.truth_lambda));
    m.emplace_back("rel_error_p", rel_error(lp.p, in.truth_p));

    SimTruth t;
    t.latent = in.truth_latent;
    DenseTensor3 truth_fz = false_zero_truth(t, data);
    const int n = data.n_loci(), kk = data.n_cells();
    DenseTensor3 observed_zero(n, n, kk, 1.0);
    data.for_each_upper([&](int i, int j, int k, std::int64_t c) {
        if (c == 0) return;
        observed_zero(i, j, k) = 0.0;
        observed_zero(j, i, k) = 0.0;
    });
    DetectionMetrics dm = detection_metrics(flags_to_tensor(*in.flags, n, kk), truth_fz, observed_zero);
    m.emplace_back("accuracy", dm.accuracy);
    m.emplace_back("precision", dm.precision);
    m.emplace_back("recall", dm.recall);
    m.emplace_back("tp", double(dm.tp));
    m.emplace_back("fp", double(dm.fp));
    m.emplace_back("fn", double(dm.fn));
    m.emplace_back("tn", double(dm.tn));

    const int r = in.n_clusters;
    m.emplace_back("ari_raw", cluster_ari(cell_features(data.to_dense()), in.labels, r, in.seed));
    m.emplace_back("ari_imputed", cluster_ari(cell_features(*in.imputed), in.labels, r, in.seed));
    m.emplace_back("ari_beta", ari(kmeans(in.params->w_beta, r, in.seed).labels, in.labels));
    m.emplace_back("ari_xi", ari(kmeans(in.params->w_xi, r, in.seed).labels, in.labels));
    if (in.clusters) m.emplace_back("ari_clusters", ari(in.clusters->labels, in.labels));
    return m;
}

std::string metrics_text(const Metrics& m) {
    std::ostringstream os;
    for (const auto& [k, v] : m) os << k << " = " << format_double(v) << "\n";
    return os.str();
}

struct Truth {
    DenseTensor3 lambda, p, latent;
    std::vector<int> labels;
};

Truth load_truth(const std::string& dir, Manifest& m) {
    Truth t;
    for (const char* f : {"truth.txt", "truth_lambda.txt", "truth_p.txt", "truth_latent.txt"}) {
        std::string p = path_in(dir, f);
        if (!fs::exists(p)) throw DataError("eval needs truth files; missing " + p);
        m.inputs.push_back(p);
    }
    t.lambda = read_real_tensor(path_in(dir, "truth_lambda.txt"));
    t.p = read_real_tensor(path_in(dir, "truth_p.txt"));
    t.latent = read_real_tensor(path_in(dir, "truth_latent.txt"));
    t.labels = labels_from(bundle_get(read_bundle(path_in(dir, "truth.txt")), "labels"));
    return t;
}

int label_count(const std::vector<int>& labels) {
    int mx = 0;
    for (int v : labels) mx = std::max(mx, v);
    return mx + 1;
}

// ---------------------------------------------------------------------------
// dispatcher

class Cli {
public:
    explicit Cli(std::vector<std::string> args) : args_(std::move(args)) {}

    int run() {
        CLI::App app{"zero-inflated tensor factorization toolkit", "zits"};
        app.require_subcommand(1);
        app.set_version_flag("--version", ZITS_VERSION);

        auto* sim = app.add_subcommand("simulate", "generate a synthetic count tensor with ground truth");
        sim->add_option("--seed", seed_)->capture_default_str();
        sim->add_option("--out", out_, "output directory")->required();
        sim_.add(sim);
        sim->callback([&] { cmd_simulate(); });

        auto* fit = app.add_subcommand("fit", "fit a model to a count tensor");
        fit->add_option("--data", data_, "count tensor file")->required();
        fit->add_option("--out", out_, "output directory")->required();
        fit->add_option("--seed", seed_)->capture_default_str();
        fit->add_flag("--ingest-1based", ingest_, "read a 1-based triplet dump");
        fit->add_option("--N", check_n_, "expected number of loci");
        fit->add_option("--K", check_k_, "expected number of cells");
        fit_.add(fit, true);
        fit->callback([&] { cmd_fit(); });

        auto* det = app.add_subcommand("detect", "flag false zeros with the Bayes rule");
        det->add_option("--data", data_)->required();
        det->add_option("--params", params_)->required();
        det->add_option("--out", out_)->required();
        det->add_flag("--ingest-1based", ingest_);
        det->add_flag("--posterior", write_posterior_, "also write the posterior tensor");
        det->callback([&] { cmd_detect(); });

        auto* imp = app.add_subcommand("impute", "replace flagged zeros by fitted values");
        imp->add_option("--data", data_)->required();
        imp->add_option("--params", params_)->required();
        imp->add_option("--flags", flags_, "flag file; detection is rerun when omitted");
        imp->add_option("--mode", mode_, "intensity | expected")->capture_default_str();
        imp->add_option("--out", out_)->required();
        imp->add_flag("--ingest-1based", ingest_);
        imp->callback([&] { cmd_impute(); });

        auto* ev = app.add_subcommand("eval", "score a fit against simulation truth");
        ev->add_option("--data", data_)->required();
        ev->add_option("--params", params_)->required();
        ev->add_option("--truth", truth_, "directory written by simulate")->required();
        ev->add_option("--flags", flags_);
        ev->add_option("--imputed", imputed_);
        ev->add_option("--clusters", clusters_);
        ev->add_option("--R", eval_r_, "clusters for k-means; default from the truth labels");
        ev->add_option("--seed", seed_)->capture_default_str();
        ev->add_option("--out", out_)->required();
        ev->callback([&] { cmd_eval(); });

        auto* pipe = app.add_subcommand("pipeline", "simulate, fit, detect, impute and evaluate");
        pipe->add_option("--seed", seed_, "seed of the first replicate")->capture_default_str();
        pipe->add_option("--reps", reps_)->capture_default_str()->check(CLI::PositiveNumber);
        pipe->add_option("--out", out_)->required();
        pipe->add_option("--mode", mode_, "impute mode")->capture_default_str();
        sim_.add(pipe);
        fit_.add(pipe, false);
        pipe->callback([&] { cmd_pipeline(); });

        auto* dist = app.add_subcommand("dist", "ZIP distribution table");
        dist->add_option("--p", dist_p_, "zero-inflation probabilities")->expected(1, -1);
        dist->add_option("--lambda", dist_lambda_, "Poisson rates")->expected(1, -1);
        dist->add_option("--cmax", cmax_, "largest count tabulated")->capture_default_str();
        dist->add_option("--out", out_)->required();
        dist->callback([&] { cmd_dist(); });

        auto* rerun = app.add_subcommand("rerun", "replay a manifest");
        rerun->add_option("--manifest", manifest_path_)->required();
        rerun->add_option("--out", out_, "override the output directory");
        rerun->callback([&] { rerun_mode_ = true; });

        try {
            std::vector<std::string> rev(args_.rbegin(), args_.rend());
            app.parse(rev);
        } catch (const CLI::ParseError& e) {
            int code = app.exit(e);
            return code == 0 ? kOk : kUsage;
        }
        if (!run_command_ && !rerun_mode_) return kUsage;

        try {
            if (rerun_mode_) return cmd_rerun();
            const auto t0 = std::chrono::steady_clock::now();
            man_.args = args_;
            run_command_();
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_text(path_in(out_, "manifest.txt"), man_.text(secs));
            return kOk;
        } catch (const NumericError& e) {
            std::cerr << "numeric failure: " << e.what() << "\n";
            return kNumeric;
        } catch (const DataError& e) {
            std::cerr << "data error: " << e.what() << "\n";
            return kData;
        } catch (const DimensionError& e) {
            std::cerr << "dimension error: " << e.what() << "\n";
            return kData;
        } catch (const std::invalid_argument& e) {
            std::cerr << "usage error: " << e.what() << "\n";
            return kUsage;
        } catch (const std::domain_error& e) {
            std::cerr << "usage error: " << e.what() << "\n";
            return kUsage;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kData;
        }
    }

private:
    std::vector<std::string> args_;
    Manifest man_;
    std::function<void()> run_command_;
    bool rerun_mode_ = false;

    std::uint64_t seed_ = 1;
    std::string out_, data_, params_, flags_, imputed_, clusters_, truth_, manifest_path_;
    std::string mode_ = "expected";
    bool ingest_ = false, write_posterior_ = false;
    int check_n_ = 0, check_k_ = 0, eval_r_ = 0, reps_ = 1, cmax_ = 10;
    std::vector<double> dist_p_{0.1, 0.5, 0.9}, dist_lambda_{0.5, 2.0, 8.0};
    SimOptions sim_;
    FitOptions fit_;

    void cmd_simulate() {
        run_command_ = [this] {
            man_.subcommand = "simulate";
            SimConfig c = sim_.config(seed_);
            man_.set("seed", seed_);
            record(man_, c);
            write_simulation(out_, simulate(c), c, man_);
        };
    }

    void cmd_fit() {
        run_command_ = [this] {
            man_.subcommand = "fit";
            PipelineConfig pc = fit_.config(fit_.r, seed_);
            man_.set("seed", seed_);
            man_.set("ingest_1based", ingest_);
            record(man_, pc, fit_);
            CountTensor data = load_counts(data_, ingest_, man_);
            check_dims(data, check_n_, check_k_);
            write_fit(out_, run_fit(data, pc, fit_.binarize), man_);
        };
    }

    void cmd_detect() {
        run_command_ = [this] {
            man_.subcommand = "detect";
            man_.set("ingest_1based", ingest_);
            CountTensor data = load_counts(data_, ingest_, man_);
            ModelParams p = load_params(params_, data, man_);
            ensure_dir(out_);
            DetectionResult det = detect(data, p, true);
            write_flags(path_in(out_, "flags.txt"), det.flags, data.n_loci(), data.n_cells());
            write_text(path_in(out_, "detect_summary.txt"), detect_summary(det));
            man_.outputs.push_back(path_in(out_, "flags.txt"));
            man_.outputs.push_back(path_in(out_, "detect_summary.txt"));
            if (write_posterior_) {
                write_real_tensor(path_in(out_, "posterior.txt"), det.posterior);
                man_.outputs.push_back(path_in(out_, "posterior.txt"));
            }
        };
    }

    std::vector<CellIndex> flags_for(const CountTensor& data, const ModelParams& p) {
        if (flags_.empty()) return detect(data, p).flags;
        man_.inputs.push_back(flags_);
        return read_flags(flags_, data.n_loci(), data.n_cells());
    }

    void cmd_impute() {
        run_command_ = [this] {
            man_.subcommand = "impute";
            ImputeMode mode = parse_impute_mode(mode_);
            man_.set("mode", to_string(mode));
            man_.set("ingest_1based", ingest_);
            CountTensor data = load_counts(data_, ingest_, man_);
            ModelParams p = load_params(params_, data, man_);
            auto flags = flags_for(data, p);
            ensure_dir(out_);
            write_real_tensor(path_in(out_, "imputed.txt"), impute(data, p, flags, mode));
            man_.outputs.push_back(path_in(out_, "imputed.txt"));
        };
    }

    void cmd_eval() {
        run_command_ = [this] {
            man_.subcommand = "eval";
            man_.set("seed", seed_);
            CountTensor data = load_counts(data_, false, man_);
            ModelParams p = load_params(params_, data, man_);
            Truth t = load_truth(truth_, man_);
            auto flags = flags_for(data, p);
            DenseTensor3 imputed;
            if (imputed_.empty()) {
                imputed = impute(data, p, flags, ImputeMode::expected);
            } else {
                man_.inputs.push_back(imputed_);
                imputed = read_real_tensor(imputed_);
            }
            ClusterSolution cs;
            const ClusterSolution* csp = nullptr;
            if (!clusters_.empty()) {
                man_.inputs.push_back(clusters_);
                cs.labels = labels_from(bundle_get(read_bundle(clusters_), "labels"));
                if (static_cast<int>(cs.labels.size()) != data.n_cells())
                    throw DimensionError("cluster labels do not match the number of cells");
                csp = &cs;
            }
            EvalInputs in;
            in.data = &data;
            in.params = &p;
            in.flags = &flags;
            in.imputed = &imputed;
            in.clusters = csp;
            in.truth_lambda = std::move(t.lambda);
            in.truth_p = std::move(t.p);
            in.truth_latent = std::move(t.latent);
            in.labels = std::move(t.labels);
            in.n_clusters = eval_r_ > 0 ? eval_r_ : label_count(in.labels);
            in.seed = seed_;
            man_.set("R", in.n_clusters);
            ensure_dir(out_);
            write_text(path_in(out_, "metrics.txt"), metrics_text(evaluate(in)));
            man_.outputs.push_back(path_in(out_, "metrics.txt"));
        };
    }

    void cmd_pipeline() {
        run_command_ = [this] {
            man_.subcommand = "pipeline";
            man_.set("seed", seed_);
            man_.set("reps", reps_);
            ImputeMode mode = parse_impute_mode(mode_);
            man_.set("mode", to_string(mode));
            record(man_, sim_.config(seed_));
            PipelineConfig pc0 = fit_.config(sim_.r, seed_);
            record(man_, pc0, fit_);
            ensure_dir(out_);

            std::vector<Metrics> all;
            for (int rep = 0; rep < reps_; ++rep) {
                const std::uint64_t s = seed_ + static_cast<std::uint64_t>(rep);
                char name[32];
                std::snprintf(name, sizeof name, "rep_%03d", rep);
                const std::string dir = path_in(out_, name);
                SimConfig sc = sim_.config(s);
                SimResult sim = simulate(sc);
                write_simulation(dir, sim, sc, man_);
                PipelineConfig pc = fit_.config(sim_.r, s);
                PipelineResult res = run_fit(sim.data, pc, fit_.binarize);
                write_fit(dir, res, man_);
                DetectionResult det = detect(sim.data, res.params, true);
                write_flags(path_in(dir, "flags.txt"), det.flags, sc.n_loci, sc.n_cells);
                write_text(path_in(dir, "detect_summary.txt"), detect_summary(det));
                DenseTensor3 imputed = impute(sim.data, res.params, det.flags, mode);
                write_real_tensor(path_in(dir, "imputed.txt"), imputed);
                EvalInputs in;
                in.data = &sim.data;
                in.params = &res.params;
                in.flags = &det.flags;
                in.imputed = &imputed;
                in.clusters = &res.clusters;
                in.truth_lambda = sim.truth.lambda;
                in.truth_p = sim.truth.p;
                in.truth_latent = sim.truth.latent;
                in.labels = sim.truth.labels;
                in.n_clusters = sc.n_clusters;
                in.seed = s;
                Metrics m = evaluate(in);
                m.insert(m.begin(), {"converged", res.report.converged ? 1.0 : 0.0});
                m.insert(m.begin(), {"iterations", double(res.report.iterations)});
                write_text(path_in(dir, "metrics.txt"), metrics_text(m));
                for (const char* f : {"flags.txt", "detect_summary.txt", "imputed.txt", "metrics.txt"})
                    man_.outputs.push_back(path_in(dir, f));
                all.push_back(std::move(m));
            }

            std::ostringstream csv;
            csv << "rep,seed";
            for (const auto& [k, v] : all.front()) csv << "," << k;
            csv << "\n";
            for (std::size_t rep = 0; rep < all.size(); ++rep) {
                csv << rep << "," << seed_ + rep;
                for (const auto& [k, v] : all[rep]) csv << "," << format_double(v);
                csv << "\n";
            }
            write_text(path_in(out_, "summary.csv"), csv.str());
            Metrics med;
            for (std::size_t c = 0; c < all.front().size(); ++c) {
                std::vector<double> col;
                for (const auto& m : all) col.push_back(m[c].second);
                med.emplace_back("median_" + all.front()[c].first, median(col));
            }
            write_text(path_in(out_, "metrics.txt"), metrics_text(med));
            man_.outputs.push_back(path_in(out_, "summary.csv"));
            man_.outputs.push_back(path_in(out_, "metrics.txt"));
        };
    }

    void cmd_dist() {
        run_command_ = [this] {
            man_.subcommand = "dist";
            if (cmax_ < 0) throw std::invalid_argument("--cmax must be non-negative");
            man_.set("cmax", cmax_);
            std::ostringstream csv;
            csv << "p,lambda,mean,variance,psi1,hurdle_pi0,bayes_false_zero,posterior_false_zero,"
                   "excess_risk_keep_zero";
            for (int c = 0; c <= cmax_; ++c) csv << ",pmf_" << c;
            csv << "\n";
            for (double p : dist_p_) {
                for (double lam : dist_lambda_) {
                    ZipParams z(p, lam);
                    MeanVar mv = zip_mean_var(z);
                    HurdleParams h = zip_to_hurdle(z);
                    csv << format_double(p) << "," << format_double(lam) << "," << format_double(mv.mean)
                        << "," << format_double(mv.variance) << "," << format_double(orlicz_psi1_zip(z))
                        << "," << format_double(h.pi0) << ","
                        << (bayes_false_zero(z) == ZeroDecision::false_zero ? 1 : 0) << ","
                        << format_double(posterior_false_zero(z)) << "," << format_double(excess_risk(z, ZeroDecision::true_zero));
                    for (int c = 0; c <= cmax_; ++c) csv << "," << format_double(zip_pmf(z, c));
                    csv << "\n";
                }
            }
            ensure_dir(out_);
            write_text(path_in(out_, "dist.csv"), csv.str());
            man_.outputs.push_back(path_in(out_, "dist.csv"));
        };
    }

    int cmd_rerun() {
        std::string text = read_text(manifest_path_);
        std::istringstream is(text);
        std::string line;
        std::vector<std::string> args;
        bool header = false;
        while (std::getline(is, line)) {
            if (line.rfind("# zits-manifest v1", 0) == 0) header = true;
            if (line.rfind("arg = ", 0) == 0) args.push_back(line.substr(6));
        }
        if (!header || args.empty()) throw DataError(manifest_path_ + ": not a zits manifest");
        if (args.front() == "rerun") throw DataError(manifest_path_ + ": manifest of a rerun");
        if (!out_.empty()) {
            auto it = std::find(args.begin(), args.end(), "--out");
            if (it == args.end() || it + 1 == args.end()) throw DataError("manifest has no --out");
            *(it + 1) = out_;
        }
        return Cli(args).run();
    }
};

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return Cli(std::move(args)).run();
}
