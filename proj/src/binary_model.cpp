#include "zits/binary_model.hpp"

#include "zits/errors.hpp"

namespace zits {

ModelParams BinaryParams::as_model() const {
    ModelParams m;
    m.gamma = gamma;
    m.basis = basis;
    m.w_xi = w_xi;
    m.w_beta = Matrix::Zero(w_xi.rows(), w_xi.cols());
    return m;
}

BinaryParams BinaryParams::from_model(const ModelParams& m) {
    return {m.gamma, m.basis, m.w_xi};
}

CountTensor binarize_counts(const CountTensor& data) {
    std::vector<CountEntry> e(data.entries().begin(), data.entries().end());
    for (auto& x : e) x.c = 1;
    return CountTensor(data.n_loci(), data.n_cells(), std::move(e), data.include_diagonal());
}

PairData binary_pair_data(const CountTensor& data, bool binarize, const LikelihoodOptions& opts) {
    for (const auto& e : data.entries())
        if (e.c > 1 && !binarize)
            throw DataError("non-binary count " + std::to_string(e.c) + " at (" +
                            std::to_string(e.i) + "," + std::to_string(e.j) + "," +
                            std::to_string(e.k) + "); use the binarize option");
    PairData pd = make_pair_data(data, opts);
    pd.values = pd.values.cwiseMin(1.0);
    return pd;
}

double nll_binary(const BinaryParams& bp, const CountTensor& data, bool binarize,
                  const LikelihoodOptions& opts) {
    PairData pd = binary_pair_data(data, binarize, opts);
    Matrix theta = pair_products(bp.alpha()) * bp.w_xi.transpose();
    return evaluate_pairs(Likelihood::binary, pd, Matrix(), theta, nullptr, nullptr);
}

double nll_binary_links(const DenseTensor3& theta, const DenseTensor3& data,
                        const LikelihoodOptions& opts) {
    if (!theta.same_shape(data)) throw DimensionError("theta does not match data");
    PairData pd = make_pair_data(data, opts);
    return evaluate_pairs(Likelihood::binary, pd, Matrix(), tensor_to_pairs(theta), nullptr,
                          nullptr);
}

DenseTensor3 grad_binary_links(const DenseTensor3& theta, const DenseTensor3& data,
                               const LikelihoodOptions& opts) {
    if (!theta.same_shape(data)) throw DimensionError("theta does not match data");
    PairData pd = make_pair_data(data, opts);
    Matrix g;
    evaluate_pairs(Likelihood::binary, pd, Matrix(), tensor_to_pairs(theta), nullptr, &g);
    return pairs_to_tensor(g, pd.n_loci);
}

BinaryGradient grad_binary(const BinaryParams& bp, const DenseTensor3& data,
                           const LikelihoodOptions& opts) {
    ModelParams m = bp.as_model();
    DenseTensor3 theta = cp3_sym(bp.alpha(), bp.w_xi);
    DenseTensor3 g = grad_binary_links(theta, data, opts);
    return {grad_gamma(m, DenseTensor3(), g), grad_w(m, g, WBlock::xi)};
}

BinaryGradient grad_binary(const BinaryParams& bp, const CountTensor& data, bool binarize,
                           const LikelihoodOptions& opts) {
    PairData pd = binary_pair_data(data, binarize, opts);
    return grad_binary(bp, pairs_to_tensor(pd.values, pd.n_loci), opts);
}

BinaryFitResult fit_binary(const CountTensor& data, const BinaryParams& init, FitConfig cfg,
                           bool binarize) {
    binary_pair_data(data, binarize); // validates the labels
    cfg.likelihood = Likelihood::binary;
    FitResult fr = fit(binarize ? binarize_counts(data) : data, init.as_model(), cfg);
    return {BinaryParams::from_model(fr.params), std::move(fr.report)};
}

} // namespace zits
