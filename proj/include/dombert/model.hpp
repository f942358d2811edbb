#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dombert/corpus.hpp"
#include "dombert/linalg.hpp"
#include "dombert/masking.hpp"
#include "dombert/rng.hpp"

namespace dombert {

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t max_len = 128;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t ff = 256;
    std::size_t domain_dim = 64;  // m
    std::size_t n_domains = 1;    // n + 1
    double dropout = 0.1;
    bool dropout_enabled = false;

    void validate() const;  // throws ConfigError
};

/// Disabling turns every dropout site into the identity.
inline void set_dropout(ModelConfig& config, bool enabled) { config.dropout_enabled = enabled; }

/// Encoder weights use the (in x out) layout: y = x * W + b.
template <typename T>
struct LayerParams {
    Mat<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Mat<T> ln1_gain, ln1_bias;
    Mat<T> w1, b1, w2, b2;
    Mat<T> ln2_gain, ln2_bias;
};

template <typename T>
struct Parameters {
    Mat<T> tok_emb;  // V x d_h, shared with the MLM output projection
    Mat<T> pos_emb;  // L_max x d_h
    Mat<T> emb_ln_gain, emb_ln_bias;
    std::vector<LayerParams<T>> layers;
    Mat<T> mlm_dense, mlm_dense_bias;  // d_h x d_h
    Mat<T> mlm_ln_gain, mlm_ln_bias;
    Mat<T> mlm_bias;   // 1 x V
    Mat<T> cls_proj;   // W: m x d_h
    Mat<T> cls_bias;   // b: 1 x m
    Mat<T> domain_emb; // D: (n+1) x m, row i is d_i

    /// Same shapes as `config` prescribes, all zeros.
    static Parameters zeros(const ModelConfig& config);

    /// Calls f(name, array) for every array in a fixed order. Names are the
    /// checkpoint array names.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    void set_zero();
    std::size_t parameter_count() const;

    template <typename U>
    Parameters<U> cast() const;

  private:
    template <typename Self, typename F>
    static void visit_impl(Self& p, F& f) {
        f(std::string("tok_emb"), p.tok_emb);
        f(std::string("pos_emb"), p.pos_emb);
        f(std::string("emb_ln.gain"), p.emb_ln_gain);
        f(std::string("emb_ln.bias"), p.emb_ln_bias);
        for (std::size_t i = 0; i < p.layers.size(); ++i) {
            auto& l = p.layers[i];
            const std::string pre = "layer" + std::to_string(i) + ".";
            f(pre + "attn.wq", l.wq);
            f(pre + "attn.bq", l.bq);
            f(pre + "attn.wk", l.wk);
            f(pre + "attn.bk", l.bk);
            f(pre + "attn.wv", l.wv);
            f(pre + "attn.bv", l.bv);
            f(pre + "attn.wo", l.wo);
            f(pre + "attn.bo", l.bo);
            f(pre + "ln1.gain", l.ln1_gain);
            f(pre + "ln1.bias", l.ln1_bias);
            f(pre + "ffn.w1", l.w1);
            f(pre + "ffn.b1", l.b1);
            f(pre + "ffn.w2", l.w2);
            f(pre + "ffn.b2", l.b2);
            f(pre + "ln2.gain", l.ln2_gain);
            f(pre + "ln2.bias", l.ln2_bias);
        }
        f(std::string("mlm.dense"), p.mlm_dense);
        f(std::string("mlm.dense_bias"), p.mlm_dense_bias);
        f(std::string("mlm.ln.gain"), p.mlm_ln_gain);
        f(std::string("mlm.ln.bias"), p.mlm_ln_bias);
        f(std::string("mlm.bias"), p.mlm_bias);
        f(std::string("cls.proj"), p.cls_proj);
        f(std::string("cls.bias"), p.cls_bias);
        f(std::string("domain_emb"), p.domain_emb);
    }
};

/// Weights ~ N(0, 0.02^2), biases 0, layer-norm gain 1 / bias 0. D is left
/// unnormalized.
template <typename T>
Parameters<T> init_params(const ModelConfig& config, Rng& rng);

template <typename T>
struct LayerNormCache {
    Mat<T> xhat;
    std::vector<T> rstd;
};

template <typename T>
struct LayerCache {
    Mat<T> input;
    Mat<T> q, k, v;
    std::vector<Mat<T>> attn;  // per head, L x L
    Mat<T> context;
    Mat<T> attn_drop;  // empty when dropout is off
    LayerNormCache<T> ln1;
    Mat<T> h1;
    Mat<T> ff_pre, ff_act;
    Mat<T> ff_drop;
    LayerNormCache<T> ln2;
};

template <typename T>
struct ExampleCache {
    std::vector<TokenId> ids;
    std::size_t valid_len = 0;
    LayerNormCache<T> emb_ln;
    Mat<T> emb_drop;
    std::vector<LayerCache<T>> layers;
    Mat<T> hidden;  // L x d_h final states
};

template <typename T>
struct ForwardCache {
    std::vector<ExampleCache<T>> examples;
    Mat<T> cls_hidden;  // B x d_h, row b = hidden state at position 0
};

struct EncoderInput {
    std::vector<TokenId> ids;
    std::size_t valid_len = 0;
};

/// Post-norm transformer encoding. Keys at positions >= valid_len are
/// excluded from attention. Examples are processed independently.
template <typename T>
ForwardCache<T> encode(const std::vector<EncoderInput>& batch, const Parameters<T>& params,
                       const ModelConfig& config, std::uint64_t dropout_seed = 0);

template <typename T>
ForwardCache<T> encode(const MaskedBatch& batch, const Parameters<T>& params,
                       const ModelConfig& config, std::uint64_t dropout_seed = 0);

template <typename T>
struct DomainHeadCache {
    Mat<T> projected;  // B x m : W h + b
    Mat<T> logits;     // B x (n+1)
};

/// l̂ = D (W h_cls + b), no nonlinearity in between.
template <typename T>
DomainHeadCache<T> domain_logits(const Mat<T>& cls_hidden, const Parameters<T>& params);

/// Counts multiply-adds spent on the vocabulary projection (2 flops each).
struct OpCounter {
    std::uint64_t vocab_projection_flops = 0;
};

template <typename T>
struct MlmHeadCache {
    std::vector<std::pair<std::size_t, std::size_t>> index;  // (example, position) per row
    Mat<T> gathered;
    Mat<T> pre, act;
    LayerNormCache<T> ln;
    Mat<T> transformed;
    Mat<T> logits;  // rows x V
};

/// Early apply of labels: the output transform and vocabulary projection run
/// only on the hidden states of target positions. Rows follow batch order,
/// then position order.
template <typename T>
MlmHeadCache<T> mlm_logits_eal(const ForwardCache<T>& cache, const MaskedBatch& batch,
                               const Parameters<T>& params, OpCounter* counter = nullptr);

/// Baseline that projects every position. Result is (B * L_max) x V with
/// row b * L_max + p for position p of example b.
template <typename T>
Mat<T> mlm_logits_full(const ForwardCache<T>& cache, const Parameters<T>& params,
                       OpCounter* counter = nullptr);

}  // namespace dombert
