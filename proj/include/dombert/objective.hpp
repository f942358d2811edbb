#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dombert/masking.hpp"
#include "dombert/model.hpp"

namespace dombert {

struct LossBreakdown {
    double mlm = 0.0;
    double cls = 0.0;
    double delta = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

/// total = λ·mlm + (1−λ)·cls + Δ, the regularizer unweighted.
LossBreakdown total_loss(double mlm, double cls, double delta, double lambda);

/// Mean over rows of −log softmax(row)[target]; 0 for no rows.
template <typename T>
T loss_mlm(const Mat<T>& logits, std::span<const TokenId> targets);

/// Mean cross-entropy over the batch. Throws InputError on a bad label.
template <typename T>
T loss_cls(const Mat<T>& logits, std::span<const std::size_t> labels);

/// Δ = ‖cos(D, Dᵀ) − I‖²_F / N², N = number of rows. Throws NumericError on
/// a zero-norm row.
template <typename T>
T regularizer(const Mat<T>& domain_emb);

/// Adds scale·∂Δ/∂D into `grad` and returns Δ.
template <typename T>
T regularizer_backward(const Mat<T>& domain_emb, Mat<T>& grad, T scale = T(1));

/// Denominators of the two mean losses over a full accumulation window, so
/// that k micro-batches produce the gradient of one combined batch.
struct LossNorm {
    std::size_t mlm_targets = 0;
    std::size_t examples = 0;
};

/// Unnormalized loss sums of one micro-batch.
struct LossSums {
    double mlm = 0.0;
    double cls = 0.0;
};

template <typename T>
struct HeadOutputs {
    ForwardCache<T> cache;
    MlmHeadCache<T> mlm;
    DomainHeadCache<T> domain;
};

template <typename T>
HeadOutputs<T> forward(const MaskedBatch& batch, const Parameters<T>& params,
                       const ModelConfig& config, std::uint64_t dropout_seed = 0);

template <typename T>
LossSums loss_sums(const MaskedBatch& batch, const HeadOutputs<T>& out);

/// Reverse-mode pass for λ·L_MLM + (1−λ)·L_CLS of one micro-batch, both
/// normalized by `norm`. Accumulates into `grads`. The regularizer is not
/// included; see regularizer_backward.
template <typename T>
void backward(const MaskedBatch& batch, const HeadOutputs<T>& out, const Parameters<T>& params,
              double lambda, const LossNorm& norm, Parameters<T>& grads);

/// Loss of one accumulation window of micro-batches. When `grads` is
/// non-null it is overwritten with the gradient of the total. Micro-batch i
/// uses dropout seed `dropout_seed + i`.
template <typename T>
LossBreakdown evaluate_window(std::span<const MaskedBatch> micro_batches,
                              const Parameters<T>& params, const ModelConfig& config,
                              double lambda, std::uint64_t dropout_seed, Parameters<T>* grads);

}  // namespace dombert
