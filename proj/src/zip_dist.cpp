#include "zits/zip_dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace zits {

namespace {

std::string fmt(double x) { return std::to_string(x); }

double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Bernoulli KL on the closed interval, with 0 log 0 = 0.
double kl_bern_raw(double p, double q) {
    double s = 0.0;
    if (p > 0.0) s += p * std::log(p / q);
    if (p < 1.0) s += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
    return std::max(s, 0.0);
}

} // namespace

ZipParams::ZipParams(double p_, double lambda_) : p(p_), lambda(lambda_) {
    if (!(p >= 0.0 && p <= kMaxP))
        throw InvalidParameter("ZIP p must lie in [0, 1-1e-9], got " + fmt(p));
    if (!(lambda >= kMinLambda && lambda <= kMaxLambda))
        throw InvalidParameter("ZIP lambda must lie in [1e-9, 50], got " + fmt(lambda));
}

HurdleParams::HurdleParams(double pi0_, double lambda_) : pi0(pi0_), lambda(lambda_) {
    if (!(pi0 > 0.0 && pi0 < 1.0))
        throw InvalidParameter("hurdle pi0 must lie in (0, 1), got " + fmt(pi0));
    if (!(lambda >= kMinLambda && lambda <= kMaxLambda))
        throw InvalidParameter("hurdle lambda must lie in [1e-9, 50], got " + fmt(lambda));
}

std::int64_t series_cutoff(double lambda_max) {
    return static_cast<std::int64_t>(std::ceil(lambda_max + 40.0 * std::sqrt(lambda_max) + 40.0));
}

double zip_log_pmf(const ZipParams& z, std::int64_t c) {
    if (c < 0) return -std::numeric_limits<double>::infinity();
    if (c == 0) {
        double log_p = z.p > 0.0 ? std::log(z.p) : -std::numeric_limits<double>::infinity();
        return log_sum_exp(log_p, std::log1p(-z.p) - z.lambda);
    }
    double cd = static_cast<double>(c);
    return std::log1p(-z.p) + cd * std::log(z.lambda) - z.lambda - std::lgamma(cd + 1.0);
}

double zip_pmf(const ZipParams& z, std::int64_t c) { return std::exp(zip_log_pmf(z, c)); }

std::int64_t zip_sample(const ZipParams& z, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - z.p);
    std::poisson_distribution<std::int64_t> pois(z.lambda);
    bool b = keep(rng);
    std::int64_t c = pois(rng);
    return b ? c : 0;
}

MeanVar zip_mean_var(const ZipParams& z) {
    return {(1.0 - z.p) * z.lambda, z.lambda * (1.0 - z.p) * (z.p * z.lambda + 1.0)};
}

HurdleParams zip_to_hurdle(const ZipParams& z) {
    return {z.p + (1.0 - z.p) * std::exp(-z.lambda), z.lambda};
}

ZipParams hurdle_to_zip(const HurdleParams& h) {
    double e = std::exp(-h.lambda);
    if (h.pi0 < e)
        throw NonRepresentable("hurdle zero mass " + fmt(h.pi0) + " is below exp(-lambda) = " +
                               fmt(e));
    double p = (h.pi0 - e) / (-std::expm1(-h.lambda));
    return {std::clamp(p, 0.0, kMaxP), h.lambda};
}

double kl_bernoulli(double p, double q) {
    if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0))
        throw InvalidParameter("kl_bernoulli needs p, q in (0, 1), got " + fmt(p) + ", " + fmt(q));
    return kl_bern_raw(p, q);
}

double kl_poisson(double lambda, double lambda_tilde) {
    if (!(lambda > 0.0 && lambda_tilde > 0.0))
        throw InvalidParameter("kl_poisson needs positive intensities");
    return std::max(lambda_tilde - lambda + lambda * std::log(lambda / lambda_tilde), 0.0);
}

double kl_hurdle(const HurdleParams& a, const HurdleParams& b) {
    double g = a.lambda / (-std::expm1(-a.lambda));
    double pos = g * std::log(a.lambda / b.lambda) + std::log(std::expm1(b.lambda)) -
                 std::log(std::expm1(a.lambda));
    return std::max(kl_bern_raw(a.pi0, b.pi0) + (1.0 - a.pi0) * pos, 0.0);
}

double kl_zip(const ZipParams& a, const ZipParams& b) {
    std::int64_t cmax = series_cutoff(std::max(a.lambda, b.lambda));
    double s = 0.0;
    for (std::int64_t c = 0; c <= cmax; ++c) {
        double la = zip_log_pmf(a, c);
        double pa = std::exp(la);
        if (pa == 0.0) continue;
        s += pa * (la - zip_log_pmf(b, c));
    }
    return std::max(s, 0.0);
}

double hellinger_sq_zip(const ZipParams& a, const ZipParams& b) {
    double pi_a = a.p + (1.0 - a.p) * std::exp(-a.lambda);
    double pi_b = b.p + (1.0 - b.p) * std::exp(-b.lambda);
    double dl = std::sqrt(a.lambda) - std::sqrt(b.lambda);
    double keep = std::sqrt((1.0 - a.p) * (1.0 - b.p));
    double h = 2.0 - 2.0 * keep * std::exp(-0.5 * dl * dl) +
               2.0 * keep * std::exp(-0.5 * (a.lambda + b.lambda)) - 2.0 * std::sqrt(pi_a * pi_b);
    return std::clamp(h, 0.0, 2.0);
}

double orlicz_psi1_zip(const ZipParams& z) {
    return 1.0 / std::log1p(std::log((2.0 - z.p) / (1.0 - z.p)) / z.lambda);
}

double orlicz_psi1_poisson(double lambda) {
    if (!(lambda > 0.0)) throw InvalidParameter("Poisson intensity must be positive");
    return 1.0 / std::log1p(std::log(2.0) / lambda);
}

MgfCheck mgf_bound_check(const ZipParams& z, double t) {
    double scale = std::max(1.0, z.lambda);
    if (!(std::abs(t) < 1.0 / scale))
        throw InvalidParameter("t must satisfy |t| < 1/max(1, lambda), got " + fmt(t));
    if (t == 0.0) return {0.0, 0.0};
    double mu = (1.0 - z.p) * z.lambda;
    std::int64_t cmax = series_cutoff(z.lambda * std::exp(std::abs(t)));
    double acc = -std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c <= cmax; ++c)
        acc = log_sum_exp(acc, zip_log_pmf(z, c) + t * (static_cast<double>(c) - mu));
    double rhs = z.lambda * (1.0 + z.p * (1.0 - z.p) * z.lambda) * t * t / (1.0 - scale * std::abs(t));
    return {acc, rhs};
}

double bernstein_tail_bound(std::span<const double> a, std::span<const double> p,
                            std::span<const double> lambda, double m) {
    if (a.size() != p.size() || a.size() != lambda.size() || a.empty())
        throw DimensionError("bernstein_tail_bound needs equal non-empty vectors");
    if (!(m > 0.0)) throw InvalidParameter("deviation M must be positive");
    double n = static_cast<double>(a.size());
    double var = 0.0, a_inf = 0.0, al_inf = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        var += a[i] * a[i] * lambda[i] * (1.0 + p[i] * (1.0 - p[i]) * lambda[i]);
        a_inf = std::max(a_inf, std::abs(a[i]));
        al_inf = std::max(al_inf, std::abs(a[i] * lambda[i]));
    }
    return std::exp(-n * n * m * m / (2.0 * (var + n * m * std::max(a_inf, al_inf))));
}

bool is_false_zero(double p, double lambda) { return p > 1.0 / std::expm1(lambda); }

double false_zero_posterior(double p, double lambda) {
    double masked = p * (-std::expm1(-lambda));
    return masked / (masked + std::exp(-lambda));
}

ZeroDecision bayes_false_zero(const ZipParams& z) {
    return is_false_zero(z.p, z.lambda) ? ZeroDecision::false_zero : ZeroDecision::true_zero;
}

double posterior_false_zero(const ZipParams& z) { return false_zero_posterior(z.p, z.lambda); }

double excess_risk(const ZipParams& z, ZeroDecision decision) {
    if (decision == bayes_false_zero(z)) return 0.0;
    double masked = z.p * (-std::expm1(-z.lambda));
    double e = std::exp(-z.lambda);
    return std::abs(masked - e) / (masked + e);
}

} // namespace zits
