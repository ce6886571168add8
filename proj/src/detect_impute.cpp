#include "zits/detect_impute.hpp"

#include "zits/errors.hpp"
#include "zits/zip_dist.hpp"

#include <stdexcept>

namespace zits {

DetectionResult detect_from(const CountTensor& data, const DenseTensor3& lambda,
                            const DenseTensor3& p, bool with_posterior) {
    const int n = data.n_loci(), kk = data.n_cells();
    if (lambda.d1() != n || lambda.d2() != n || lambda.d3() != kk || !lambda.same_shape(p))
        throw DimensionError("fitted tensors do not match the data dimensions");
    DetectionResult out;
    if (with_posterior) out.posterior = DenseTensor3(n, n, kk);
    data.for_each_upper([&](int i, int j, int k, std::int64_t c) {
        if (c != 0) return;
        ++out.zeros_scanned;
        double lam = lambda(i, j, k), pp = p(i, j, k);
        if (with_posterior) {
            double post = false_zero_posterior(pp, lam);
            out.posterior(i, j, k) = post;
            out.posterior(j, i, k) = post;
        }
        if (is_false_zero(pp, lam)) {
            out.flags.push_back({i, j, k});
            ++out.flagged;
        }
    });
    return out;
}

DetectionResult detect(const CountTensor& data, const ModelParams& fitted, bool with_posterior) {
    LambdaP lp = lambda_p_of(build_links(fitted));
    return detect_from(data, lp.lambda, lp.p, with_posterior);
}

ImputeMode parse_impute_mode(const std::string& name) {
    if (name == "intensity") return ImputeMode::intensity;
    if (name == "expected") return ImputeMode::expected;
    throw std::invalid_argument("unknown impute mode '" + name + "' (expected intensity or expected)");
}

std::string to_string(ImputeMode mode) {
    return mode == ImputeMode::intensity ? "intensity" : "expected";
}

DenseTensor3 impute(const DenseTensor3& data, const LambdaP& fitted,
                    const std::vector<CellIndex>& flags, ImputeMode mode) {
    if (!data.same_shape(fitted.lambda) || !data.same_shape(fitted.p))
        throw DimensionError("fitted tensors do not match the data dimensions");
    DenseTensor3 out = data;
    for (const auto& f : flags) {
        if (f.i < 0 || f.j < 0 || f.k < 0 || f.i >= data.d1() || f.j >= data.d2() ||
            f.k >= data.d3())
            throw DataError("flag outside the tensor");
        double lam = fitted.lambda(f.i, f.j, f.k);
        double v = mode == ImputeMode::intensity ? lam : lam * (1.0 - fitted.p(f.i, f.j, f.k));
        double cur = data(f.i, f.j, f.k);
        if (cur != 0.0 && cur != v)
            throw DataError("flag at (" + std::to_string(f.i) + "," + std::to_string(f.j) + "," +
                            std::to_string(f.k) + ") is not an observed zero");
        out(f.i, f.j, f.k) = v;
        out(f.j, f.i, f.k) = v;
    }
    return out;
}

DenseTensor3 impute(const CountTensor& data, const ModelParams& fitted,
                    const std::vector<CellIndex>& flags, ImputeMode mode) {
    return impute(data.to_dense(), lambda_p_of(build_links(fitted)), flags, mode);
}

DenseTensor3 expected_tensor(const LambdaP& lp) {
    DenseTensor3 out = lp.lambda;
    auto o = out.values();
    auto p = lp.p.values();
    for (std::size_t n = 0; n < o.size(); ++n) o[n] *= 1.0 - p[n];
    return out;
}

DenseTensor3 expected_tensor(const ModelParams& fitted) {
    return expected_tensor(lambda_p_of(build_links(fitted)));
}

DenseTensor3 flags_to_tensor(const std::vector<CellIndex>& flags, int n_loci, int n_cells) {
    DenseTensor3 out(n_loci, n_loci, n_cells);
    for (const auto& f : flags) {
        out(f.i, f.j, f.k) = 1.0;
        out(f.j, f.i, f.k) = 1.0;
    }
    return out;
}

} // namespace zits
