#pragma once

#include "zits/fitting.hpp"
#include "zits/model_core.hpp"

namespace zits {

/// Bernoulli model: Theta = I x1 alpha x2 alpha x3 w_xi with alpha = H Gamma, q = logistic(Theta).
struct BinaryParams {
    Matrix gamma;
    BasisMatrix basis;
    Matrix w_xi;

    Matrix alpha() const { return basis.h * gamma; }
    /// View as ModelParams with a zero w_beta.
    ModelParams as_model() const;
    static BinaryParams from_model(const ModelParams& m);
};

/// 0/1 pair-major data; counts above 1 throw DataError unless `binarize`.
PairData binary_pair_data(const CountTensor& data, bool binarize,
                          const LikelihoodOptions& opts = {});

/// Averaged -sum C theta + log(1 + e^theta) over i <= j and k.
double nll_binary(const BinaryParams& bp, const CountTensor& data, bool binarize = false,
                  const LikelihoodOptions& opts = {});
double nll_binary_links(const DenseTensor3& theta, const DenseTensor3& data,
                        const LikelihoodOptions& opts = {});

/// Mirrored link gradient logistic(Theta) - C (normalized).
DenseTensor3 grad_binary_links(const DenseTensor3& theta, const DenseTensor3& data,
                               const LikelihoodOptions& opts = {});

struct BinaryGradient {
    Matrix d_gamma; ///< Q x D
    Matrix d_xi;    ///< K x D
};

BinaryGradient grad_binary(const BinaryParams& bp, const CountTensor& data, bool binarize = false,
                           const LikelihoodOptions& opts = {});
BinaryGradient grad_binary(const BinaryParams& bp, const DenseTensor3& data,
                           const LikelihoodOptions& opts = {});

/// Copy of `data` with every positive count replaced by 1.
CountTensor binarize_counts(const CountTensor& data);

struct BinaryFitResult {
    BinaryParams params;
    FitReport report;
};

/// Runs the shared fitter with the w_beta block skipped.
BinaryFitResult fit_binary(const CountTensor& data, const BinaryParams& init, FitConfig cfg,
                           bool binarize = false);

} // namespace zits
