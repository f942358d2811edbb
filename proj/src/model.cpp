#include "dombert/model.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "dombert/error.hpp"
#include "nn_ops.hpp"

namespace dombert {

void ModelConfig::validate() const {
    if (vocab_size < special::kCount) throw ConfigError("vocab_size must cover reserved tokens");
    if (max_len < 1 || hidden < 1 || layers < 1 || heads < 1 || ff < 1 || domain_dim < 1 ||
        n_domains < 1) {
        throw ConfigError("model sizes must all be >= 1");
    }
    if (hidden % heads != 0) throw ConfigError("hidden size must be divisible by head count");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

template <typename T>
Parameters<T> Parameters<T>::zeros(const ModelConfig& c) {
    const auto d = static_cast<Eigen::Index>(c.hidden);
    const auto V = static_cast<Eigen::Index>(c.vocab_size);
    const auto L = static_cast<Eigen::Index>(c.max_len);
    const auto ff = static_cast<Eigen::Index>(c.ff);
    const auto m = static_cast<Eigen::Index>(c.domain_dim);
    const auto nd = static_cast<Eigen::Index>(c.n_domains);
    Parameters p;
    p.tok_emb = Mat<T>::Zero(V, d);
    p.pos_emb = Mat<T>::Zero(L, d);
    p.emb_ln_gain = Mat<T>::Zero(1, d);
    p.emb_ln_bias = Mat<T>::Zero(1, d);
    p.layers.resize(c.layers);
    for (auto& l : p.layers) {
        for (Mat<T>* w : {&l.wq, &l.wk, &l.wv, &l.wo}) *w = Mat<T>::Zero(d, d);
        for (Mat<T>* b : {&l.bq, &l.bk, &l.bv, &l.bo, &l.ln1_gain, &l.ln1_bias, &l.b2,
                          &l.ln2_gain, &l.ln2_bias}) {
            *b = Mat<T>::Zero(1, d);
        }
        l.w1 = Mat<T>::Zero(d, ff);
        l.b1 = Mat<T>::Zero(1, ff);
        l.w2 = Mat<T>::Zero(ff, d);
    }
    p.mlm_dense = Mat<T>::Zero(d, d);
    p.mlm_dense_bias = Mat<T>::Zero(1, d);
    p.mlm_ln_gain = Mat<T>::Zero(1, d);
    p.mlm_ln_bias = Mat<T>::Zero(1, d);
    p.mlm_bias = Mat<T>::Zero(1, V);
    p.cls_proj = Mat<T>::Zero(m, d);
    p.cls_bias = Mat<T>::Zero(1, m);
    p.domain_emb = Mat<T>::Zero(nd, m);
    return p;
}

template <typename T>
void Parameters<T>::set_zero() {
    visit([](const std::string&, Mat<T>& a) { a.setZero(); });
}

template <typename T>
std::size_t Parameters<T>::parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Mat<T>& a) { n += static_cast<std::size_t>(a.size()); });
    return n;
}

template <typename T>
template <typename U>
Parameters<U> Parameters<T>::cast() const {
    Parameters<U> out;
    out.layers.resize(layers.size());
    std::vector<const Mat<T>*> src;
    visit([&](const std::string&, const Mat<T>& a) { src.push_back(&a); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Mat<U>& a) { a = src[i++]->template cast<U>(); });
    return out;
}

namespace {

bool is_gain(const std::string& name) {
    return name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
}

bool is_weight(const std::string& name) {
    static const char* kWeights[] = {"tok_emb", "pos_emb", "attn.wq", "attn.wk", "attn.wv",
                                     "attn.wo", "ffn.w1",  "ffn.w2",  "mlm.dense", "cls.proj",
                                     "domain_emb"};
    for (const char* w : kWeights) {
        const std::string s(w);
        if (name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0 &&
            (name.size() == s.size() || name[name.size() - s.size() - 1] == '.')) {
            return true;
        }
    }
    return false;
}

template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Mat<T> mask(rows, cols);
    const T scale = T(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = rng.uniform() < p ? T(0) : scale;
    }
    return mask;
}

template <typename T>
ExampleCache<T> encode_one(const EncoderInput& in, const Parameters<T>& params,
                           const ModelConfig& config, Rng* drop_rng) {
    const auto L = static_cast<Eigen::Index>(in.ids.size());
    const auto d = static_cast<Eigen::Index>(config.hidden);
    const auto heads = static_cast<Eigen::Index>(config.heads);
    const auto dk = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    const auto valid = static_cast<Eigen::Index>(in.valid_len);
    const double p = config.dropout;

    ExampleCache<T> c;
    c.ids = in.ids;
    c.valid_len = in.valid_len;

    Mat<T> x(L, d);
    for (Eigen::Index i = 0; i < L; ++i) {
        x.row(i) = params.tok_emb.row(in.ids[static_cast<std::size_t>(i)]) + params.pos_emb.row(i);
    }
    Mat<T> h = nn::layer_norm(x, params.emb_ln_gain, params.emb_ln_bias, c.emb_ln);
    if (drop_rng) {
        c.emb_drop = dropout_mask<T>(L, d, p, *drop_rng);
        h = h.cwiseProduct(c.emb_drop);
    }

    c.layers.resize(params.layers.size());
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& w = params.layers[li];
        auto& lc = c.layers[li];
        lc.input = h;
        lc.q = (h * w.wq).rowwise() + w.bq.row(0);
        lc.k = (h * w.wk).rowwise() + w.bk.row(0);
        lc.v = (h * w.wv).rowwise() + w.bv.row(0);
        lc.context.resize(L, d);
        lc.attn.resize(static_cast<std::size_t>(heads));
        for (Eigen::Index hd = 0; hd < heads; ++hd) {
            auto q = lc.q.middleCols(hd * dk, dk);
            auto k = lc.k.middleCols(hd * dk, dk);
            Mat<T> s = (q * k.transpose()) * scale;
            if (valid < L) {
                s.rightCols(L - valid).setConstant(-std::numeric_limits<T>::infinity());
            }
            nn::softmax_rows(s);
            lc.context.middleCols(hd * dk, dk) = s * lc.v.middleCols(hd * dk, dk);
            lc.attn[static_cast<std::size_t>(hd)] = std::move(s);
        }
        Mat<T> o = (lc.context * w.wo).rowwise() + w.bo.row(0);
        if (drop_rng) {
            lc.attn_drop = dropout_mask<T>(L, d, p, *drop_rng);
            o = o.cwiseProduct(lc.attn_drop);
        }
        lc.h1 = nn::layer_norm<T>(h + o, w.ln1_gain, w.ln1_bias, lc.ln1);
        lc.ff_pre = (lc.h1 * w.w1).rowwise() + w.b1.row(0);
        lc.ff_act = nn::gelu(lc.ff_pre);
        Mat<T> g = (lc.ff_act * w.w2).rowwise() + w.b2.row(0);
        if (drop_rng) {
            lc.ff_drop = dropout_mask<T>(L, d, p, *drop_rng);
            g = g.cwiseProduct(lc.ff_drop);
        }
        h = nn::layer_norm<T>(lc.h1 + g, w.ln2_gain, w.ln2_bias, lc.ln2);
    }
    c.hidden = std::move(h);
    return c;
}

// Dense d_h -> d_h, GELU, layer norm, then the tied projection plus bias.
template <typename T>
void mlm_transform(MlmHeadCache<T>& head, const Parameters<T>& params, OpCounter* counter) {
    head.pre = (head.gathered * params.mlm_dense).rowwise() + params.mlm_dense_bias.row(0);
    head.act = nn::gelu(head.pre);
    head.transformed = nn::layer_norm(head.act, params.mlm_ln_gain, params.mlm_ln_bias, head.ln);
    const auto rows = head.gathered.rows();
    const auto V = params.tok_emb.rows();
    if (rows == 0) {
        head.logits.resize(0, V);
        return;
    }
    head.logits.noalias() = head.transformed * params.tok_emb.transpose();
    head.logits.rowwise() += params.mlm_bias.row(0);
    if (counter) {
        counter->vocab_projection_flops += 2ULL * static_cast<std::uint64_t>(rows) *
                                           static_cast<std::uint64_t>(V) *
                                           static_cast<std::uint64_t>(params.tok_emb.cols());
    }
}

}  // namespace

template <typename T>
Parameters<T> init_params(const ModelConfig& config, Rng& rng) {
    config.validate();
    auto p = Parameters<T>::zeros(config);
    p.visit([&](const std::string& name, Mat<T>& a) {
        if (is_gain(name)) {
            a.setOnes();
        } else if (is_weight(name)) {
            for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<T>(0.02 * rng.normal());
        }
    });
    return p;
}

template <typename T>
ForwardCache<T> encode(const std::vector<EncoderInput>& batch, const Parameters<T>& params,
                       const ModelConfig& config, std::uint64_t dropout_seed) {
    ForwardCache<T> cache;
    cache.examples.reserve(batch.size());
    cache.cls_hidden.resize(static_cast<Eigen::Index>(batch.size()),
                            static_cast<Eigen::Index>(config.hidden));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& in = batch[b];
        if (in.ids.empty() || in.ids.size() > config.max_len) {
            throw InputError("encode: sequence length must be in [1, L_max]");
        }
        if (in.valid_len < 1 || in.valid_len > in.ids.size()) {
            throw InputError("encode: valid_len out of range");
        }
        for (TokenId id : in.ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
                throw InputError("encode: token id " + std::to_string(id) + " out of range");
            }
        }
        std::optional<Rng> rng;
        if (config.dropout_enabled && config.dropout > 0.0) {
            rng.emplace(derive_seed(dropout_seed, Stream::kDropout, b));
        }
        cache.examples.push_back(encode_one(in, params, config, rng ? &*rng : nullptr));
        cache.cls_hidden.row(static_cast<Eigen::Index>(b)) = cache.examples.back().hidden.row(0);
    }
    return cache;
}

template <typename T>
ForwardCache<T> encode(const MaskedBatch& batch, const Parameters<T>& params,
                       const ModelConfig& config, std::uint64_t dropout_seed) {
    std::vector<EncoderInput> inputs;
    inputs.reserve(batch.size());
    for (const auto& ex : batch.examples) inputs.push_back({ex.input_ids, ex.valid_len});
    return encode(inputs, params, config, dropout_seed);
}

template <typename T>
DomainHeadCache<T> domain_logits(const Mat<T>& cls_hidden, const Parameters<T>& params) {
    DomainHeadCache<T> head;
    head.projected = (cls_hidden * params.cls_proj.transpose()).rowwise() + params.cls_bias.row(0);
    head.logits = head.projected * params.domain_emb.transpose();
    return head;
}

template <typename T>
MlmHeadCache<T> mlm_logits_eal(const ForwardCache<T>& cache, const MaskedBatch& batch,
                               const Parameters<T>& params, OpCounter* counter) {
    MlmHeadCache<T> head;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (const auto& t : batch.examples[b].targets) head.index.emplace_back(b, t.position);
    }
    head.gathered.resize(static_cast<Eigen::Index>(head.index.size()), params.tok_emb.cols());
    for (std::size_t r = 0; r < head.index.size(); ++r) {
        const auto [b, pos] = head.index[r];
        head.gathered.row(static_cast<Eigen::Index>(r)) =
            cache.examples[b].hidden.row(static_cast<Eigen::Index>(pos));
    }
    mlm_transform(head, params, counter);
    return head;
}

template <typename T>
Mat<T> mlm_logits_full(const ForwardCache<T>& cache, const Parameters<T>& params,
                       OpCounter* counter) {
    MlmHeadCache<T> head;
    Eigen::Index rows = 0;
    for (const auto& ex : cache.examples) rows += ex.hidden.rows();
    head.gathered.resize(rows, params.tok_emb.cols());
    Eigen::Index r = 0;
    for (const auto& ex : cache.examples) {
        head.gathered.middleRows(r, ex.hidden.rows()) = ex.hidden;
        r += ex.hidden.rows();
    }
    mlm_transform(head, params, counter);
    return std::move(head.logits);
}

#define DOMBERT_INSTANTIATE(T)                                                               \
    template struct Parameters<T>;                                                           \
    template Parameters<T> init_params<T>(const ModelConfig&, Rng&);                         \
    template ForwardCache<T> encode<T>(const std::vector<EncoderInput>&, const Parameters<T>&, \
                                       const ModelConfig&, std::uint64_t);                   \
    template ForwardCache<T> encode<T>(const MaskedBatch&, const Parameters<T>&,             \
                                       const ModelConfig&, std::uint64_t);                   \
    template DomainHeadCache<T> domain_logits<T>(const Mat<T>&, const Parameters<T>&);       \
    template MlmHeadCache<T> mlm_logits_eal<T>(const ForwardCache<T>&, const MaskedBatch&,   \
                                               const Parameters<T>&, OpCounter*);            \
    template Mat<T> mlm_logits_full<T>(const ForwardCache<T>&, const Parameters<T>&, OpCounter*);

DOMBERT_INSTANTIATE(float)
DOMBERT_INSTANTIATE(double)
#undef DOMBERT_INSTANTIATE

template Parameters<double> Parameters<float>::cast<double>() const;
template Parameters<float> Parameters<double>::cast<float>() const;

}  // namespace dombert
