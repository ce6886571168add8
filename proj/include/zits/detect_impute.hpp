#pragma once

#include "zits/model_core.hpp"

#include <string>
#include <vector>

namespace zits {

struct CellIndex {
    int i = 0;
    int j = 0;
    int k = 0;
    auto operator<=>(const CellIndex&) const = default;
};

struct DetectionResult {
    std::vector<CellIndex> flags; ///< i <= j, sorted by (k, i, j)
    DenseTensor3 posterior;       ///< P(false zero | C = 0) on zero cells; empty unless requested
    long zeros_scanned = 0;
    long flagged = 0;
};

/// Bayes rule p > 1/(e^lambda - 1) applied to every observed zero with i <= j.
DetectionResult detect(const CountTensor& data, const ModelParams& fitted,
                       bool with_posterior = false);

/// Same rule from explicit lambda and p tensors.
DetectionResult detect_from(const CountTensor& data, const DenseTensor3& lambda,
                            const DenseTensor3& p, bool with_posterior = false);

enum class ImputeMode { intensity, expected };

ImputeMode parse_impute_mode(const std::string& name);
std::string to_string(ImputeMode mode);

/**
 * Flagged cells receive lambda (intensity) or lambda (1 - p) (expected); the
 * rest keep their values. A flagged cell must be zero or already hold its
 * imputed value, otherwise DataError.
 */
DenseTensor3 impute(const DenseTensor3& data, const LambdaP& fitted,
                    const std::vector<CellIndex>& flags, ImputeMode mode);
DenseTensor3 impute(const CountTensor& data, const ModelParams& fitted,
                    const std::vector<CellIndex>& flags, ImputeMode mode = ImputeMode::expected);

/// (1 - p) * lambda entrywise.
DenseTensor3 expected_tensor(const ModelParams& fitted);
DenseTensor3 expected_tensor(const LambdaP& lp);

/// 0/1 tensor (symmetric) with ones at the flagged cells.
DenseTensor3 flags_to_tensor(const std::vector<CellIndex>& flags, int n_loci, int n_cells);

} // namespace zits
