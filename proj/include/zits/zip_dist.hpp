#pragma once

#include "zits/errors.hpp"

#include <cstdint>
#include <random>
#include <span>

namespace zits {

/// Parameter outside the supported distribution range.
class InvalidParameter : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A hurdle law whose zero mass is below the Poisson zero mass.
class NonRepresentable : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

inline constexpr double kMaxP = 1.0 - 1e-9;
inline constexpr double kMinLambda = 1e-9;
inline constexpr double kMaxLambda = 50.0;

/// Zero-inflated Poisson: point mass at 0 with weight p mixed with Poisson(lambda).
struct ZipParams {
    double p;
    double lambda;

    /// Throws InvalidParameter unless 0 <= p <= 1-1e-9 and 1e-9 <= lambda <= 50.
    ZipParams(double p, double lambda);
};

/// Hurdle Poisson: zero mass pi0, positives from a zero-truncated Poisson(lambda).
struct HurdleParams {
    double pi0;
    double lambda;

    HurdleParams(double pi0, double lambda);
};

struct MeanVar {
    double mean;
    double variance;
};

struct MgfCheck {
    double lhs;
    double rhs;
};

enum class ZeroDecision { true_zero, false_zero };

/// Truncation point c* = ceil(lambda_max + 40 sqrt(lambda_max) + 40) for pmf series.
std::int64_t series_cutoff(double lambda_max);

double zip_log_pmf(const ZipParams& z, std::int64_t c);
double zip_pmf(const ZipParams& z, std::int64_t c);

/// Draws B ~ Bernoulli(1-p) and a Poisson(lambda) count and returns their product.
std::int64_t zip_sample(const ZipParams& z, std::mt19937_64& rng);

MeanVar zip_mean_var(const ZipParams& z);

HurdleParams zip_to_hurdle(const ZipParams& z);
ZipParams hurdle_to_zip(const HurdleParams& h);

double kl_bernoulli(double p, double q);
double kl_poisson(double lambda, double lambda_tilde);

/// Closed form for hurdle laws.
double kl_hurdle(const HurdleParams& a, const HurdleParams& b);

/// Truncated series sum_c P_a(c) log(P_a(c) / P_b(c)).
double kl_zip(const ZipParams& a, const ZipParams& b);

/// Closed-form squared Hellinger distance sum_c (sqrt P_a(c) - sqrt P_b(c))^2.
double hellinger_sq_zip(const ZipParams& a, const ZipParams& b);

double orlicz_psi1_zip(const ZipParams& z);
double orlicz_psi1_poisson(double lambda);

/**
 * lhs = log E exp(t (C - (1-p) lambda)) by series, rhs = the sub-exponential
 * bound lambda [1 + p(1-p) lambda] t^2 / (1 - max(1, lambda)|t|).
 * Requires |t| < 1 / max(1, lambda).
 */
MgfCheck mgf_bound_check(const ZipParams& z, double t);

/**
 * Upper bound on P((1/n) sum a_i [C_i - (1-p_i) lambda_i] >= M) for
 * independent C_i ~ ZIP(p_i, lambda_i).
 */
double bernstein_tail_bound(std::span<const double> a, std::span<const double> p,
                            std::span<const double> lambda, double m);

/// Raw-value forms used on fitted tensors, where p may approach 1.
bool is_false_zero(double p, double lambda);
double false_zero_posterior(double p, double lambda);

ZeroDecision bayes_false_zero(const ZipParams& z);
double posterior_false_zero(const ZipParams& z);
double excess_risk(const ZipParams& z, ZeroDecision decision);

} // namespace zits
