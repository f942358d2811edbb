#include "dombert/objective.hpp"

#include <cmath>

#include "dombert/error.hpp"
#include "nn_ops.hpp"

namespace dombert {

LossBreakdown total_loss(double mlm, double cls, double delta, double lambda) {
    LossBreakdown out;
    out.mlm = mlm;
    out.cls = cls;
    out.delta = delta;
    out.lambda = lambda;
    out.total = lambda * mlm + (1.0 - lambda) * cls + delta;
    return out;
}

template <typename T>
T loss_mlm(const Mat<T>& logits, std::span<const TokenId> targets) {
    if (logits.rows() != static_cast<Eigen::Index>(targets.size())) {
        throw InputError("loss_mlm: one target per logit row required");
    }
    if (targets.empty()) return T(0);
    T sum = 0;
    for (std::size_t r = 0; r < targets.size(); ++r) {
        if (targets[r] < 0 || targets[r] >= logits.cols()) {
            throw InputError("loss_mlm: target id out of range");
        }
        sum += nn::cross_entropy_row(logits, static_cast<Eigen::Index>(r), targets[r]);
    }
    return sum / static_cast<T>(targets.size());
}

template <typename T>
T loss_cls(const Mat<T>& logits, std::span<const std::size_t> labels) {
    if (logits.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw InputError("loss_cls: one label per example required");
    }
    if (labels.empty()) return T(0);
    T sum = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= static_cast<std::size_t>(logits.cols())) {
            throw InputError("loss_cls: domain label " + std::to_string(labels[r]) +
                             " out of range");
        }
        sum += nn::cross_entropy_row(logits, static_cast<Eigen::Index>(r),
                                     static_cast<Eigen::Index>(labels[r]));
    }
    return sum / static_cast<T>(labels.size());
}

namespace {

template <typename T>
Mat<T> unit_rows(const Mat<T>& d, std::vector<T>& norms) {
    norms.resize(static_cast<std::size_t>(d.rows()));
    Mat<T> u(d.rows(), d.cols());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const T n = d.row(i).norm();
        if (!(n > T(0))) {
            throw NumericError("domain embedding row " + std::to_string(i) + " has zero norm");
        }
        norms[static_cast<std::size_t>(i)] = n;
        u.row(i) = d.row(i) / n;
    }
    return u;
}

// Off-diagonal cosine matrix; the diagonal of C - I is exactly zero.
template <typename T>
Mat<T> offdiag_cosines(const Mat<T>& u) {
    Mat<T> c = u * u.transpose();
    c.diagonal().setZero();
    return c;
}

}  // namespace

template <typename T>
T regularizer(const Mat<T>& domain_emb) {
    std::vector<T> norms;
    const Mat<T> c = offdiag_cosines(unit_rows(domain_emb, norms));
    const T n = static_cast<T>(domain_emb.rows());
    return c.squaredNorm() / (n * n);
}

template <typename T>
T regularizer_backward(const Mat<T>& domain_emb, Mat<T>& grad, T scale) {
    std::vector<T> norms;
    const Mat<T> u = unit_rows(domain_emb, norms);
    const Mat<T> c = offdiag_cosines(u);
    const T n = static_cast<T>(domain_emb.rows());
    // dΔ/dU = (4 / N²) C U, then project out the radial part of each row.
    const Mat<T> du = (T(4) * scale / (n * n)) * (c * u);
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const T radial = u.row(i).dot(du.row(i));
        grad.row(i) += (du.row(i) - radial * u.row(i)) / norms[static_cast<std::size_t>(i)];
    }
    return c.squaredNorm() / (n * n);
}

template <typename T>
HeadOutputs<T> forward(const MaskedBatch& batch, const Parameters<T>& params,
                       const ModelConfig& config, std::uint64_t dropout_seed) {
    HeadOutputs<T> out;
    out.cache = encode(batch, params, config, dropout_seed);
    out.mlm = mlm_logits_eal(out.cache, batch, params);
    out.domain = domain_logits(out.cache.cls_hidden, params);
    return out;
}

template <typename T>
LossSums loss_sums(const MaskedBatch& batch, const HeadOutputs<T>& out) {
    LossSums sums;
    std::size_t row = 0;
    for (const auto& ex : batch.examples) {
        for (const auto& t : ex.targets) {
            sums.mlm += static_cast<double>(
                nn::cross_entropy_row(out.mlm.logits, static_cast<Eigen::Index>(row++), t.original));
        }
    }
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto label = batch.examples[b].domain;
        if (label >= static_cast<std::size_t>(out.domain.logits.cols())) {
            throw InputError("domain label " + std::to_string(label) + " out of range");
        }
        sums.cls += static_cast<double>(nn::cross_entropy_row(
            out.domain.logits, static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(label)));
    }
    return sums;
}

namespace {

// Softmax minus one-hot, scaled: gradient of scale * CE w.r.t. logits.
template <typename T>
Mat<T> ce_grad(const Mat<T>& logits, const std::vector<Eigen::Index>& labels, T scale) {
    Mat<T> g = logits;
    nn::softmax_rows(g);
    for (std::size_t r = 0; r < labels.size(); ++r) g(static_cast<Eigen::Index>(r), labels[r]) -= T(1);
    g *= scale;
    return g;
}

template <typename T>
void linear_backward(const Mat<T>& input, const Mat<T>& dout, const Mat<T>& weight, Mat<T>& dweight,
                     Mat<T>& dbias, Mat<T>& dinput) {
    dweight.noalias() += input.transpose() * dout;
    dbias.row(0) += dout.colwise().sum();
    dinput.noalias() += dout * weight.transpose();
}

template <typename T>
void encoder_backward(const ExampleCache<T>& c, Mat<T> dh, const Parameters<T>& params,
                      Parameters<T>& grads) {
    const auto L = c.hidden.rows();
    const auto d = c.hidden.cols();
    const auto heads = static_cast<Eigen::Index>(c.layers.empty() ? 1 : c.layers[0].attn.size());
    const auto dk = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));

    for (std::size_t li = c.layers.size(); li-- > 0;) {
        const auto& w = params.layers[li];
        auto& gw = grads.layers[li];
        const auto& lc = c.layers[li];

        Mat<T> dr2 = nn::layer_norm_backward(dh, lc.ln2, w.ln2_gain, gw.ln2_gain, gw.ln2_bias);
        Mat<T> dh1 = dr2;
        Mat<T> dg = std::move(dr2);
        if (lc.ff_drop.size()) dg = dg.cwiseProduct(lc.ff_drop);
        Mat<T> dact = Mat<T>::Zero(L, lc.ff_act.cols());
        linear_backward(lc.ff_act, dg, w.w2, gw.w2, gw.b2, dact);
        const Mat<T> dpre = nn::gelu_backward(dact, lc.ff_pre);
        linear_backward(lc.h1, dpre, w.w1, gw.w1, gw.b1, dh1);

        Mat<T> dr1 = nn::layer_norm_backward(dh1, lc.ln1, w.ln1_gain, gw.ln1_gain, gw.ln1_bias);
        Mat<T> dinput = dr1;
        Mat<T> dout = std::move(dr1);
        if (lc.attn_drop.size()) dout = dout.cwiseProduct(lc.attn_drop);
        Mat<T> dctx = Mat<T>::Zero(L, d);
        linear_backward(lc.context, dout, w.wo, gw.wo, gw.bo, dctx);

        Mat<T> dq(L, d), dk_all(L, d), dv(L, d);
        for (Eigen::Index hd = 0; hd < heads; ++hd) {
            const auto& a = lc.attn[static_cast<std::size_t>(hd)];
            const auto dc = dctx.middleCols(hd * dk, dk);
            const Mat<T> da = dc * lc.v.middleCols(hd * dk, dk).transpose();
            dv.middleCols(hd * dk, dk) = a.transpose() * dc;
            Mat<T> ds = a.cwiseProduct(da);
            const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = ds.rowwise().sum();
            ds -= a.cwiseProduct(rowdot.replicate(1, L));
            ds *= scale;
            dq.middleCols(hd * dk, dk) = ds * lc.k.middleCols(hd * dk, dk);
            dk_all.middleCols(hd * dk, dk) = ds.transpose() * lc.q.middleCols(hd * dk, dk);
        }
        linear_backward(lc.input, dq, w.wq, gw.wq, gw.bq, dinput);
        linear_backward(lc.input, dk_all, w.wk, gw.wk, gw.bk, dinput);
        linear_backward(lc.input, dv, w.wv, gw.wv, gw.bv, dinput);
        dh = std::move(dinput);
    }

    if (c.emb_drop.size()) dh = dh.cwiseProduct(c.emb_drop);
    const Mat<T> dx =
        nn::layer_norm_backward(dh, c.emb_ln, params.emb_ln_gain, grads.emb_ln_gain, grads.emb_ln_bias);
    for (Eigen::Index i = 0; i < L; ++i) {
        grads.tok_emb.row(c.ids[static_cast<std::size_t>(i)]) += dx.row(i);
        grads.pos_emb.row(i) += dx.row(i);
    }
}

}  // namespace

template <typename T>
void backward(const MaskedBatch& batch, const HeadOutputs<T>& out, const Parameters<T>& params,
              double lambda, const LossNorm& norm, Parameters<T>& grads) {
    const auto& cache = out.cache;
    const auto d = params.tok_emb.cols();
    std::vector<Mat<T>> dhidden;
    dhidden.reserve(batch.size());
    for (const auto& ex : cache.examples) dhidden.push_back(Mat<T>::Zero(ex.hidden.rows(), d));

    // Masked-LM head, target rows only.
    const auto& head = out.mlm;
    if (head.gathered.rows() > 0 && norm.mlm_targets > 0) {
        std::vector<Eigen::Index> labels;
        labels.reserve(head.index.size());
        for (const auto& ex : batch.examples) {
            for (const auto& t : ex.targets) labels.push_back(t.original);
        }
        const Mat<T> dlogits =
            ce_grad(head.logits, labels, static_cast<T>(lambda / static_cast<double>(norm.mlm_targets)));
        grads.tok_emb.noalias() += dlogits.transpose() * head.transformed;
        grads.mlm_bias.row(0) += dlogits.colwise().sum();
        const Mat<T> dtrans = dlogits * params.tok_emb;
        const Mat<T> dact =
            nn::layer_norm_backward(dtrans, head.ln, params.mlm_ln_gain, grads.mlm_ln_gain, grads.mlm_ln_bias);
        const Mat<T> dpre = nn::gelu_backward(dact, head.pre);
        Mat<T> dgathered = Mat<T>::Zero(head.gathered.rows(), d);
        linear_backward(head.gathered, dpre, params.mlm_dense, grads.mlm_dense, grads.mlm_dense_bias,
                        dgathered);
        for (std::size_t r = 0; r < head.index.size(); ++r) {
            const auto [b, pos] = head.index[r];
            dhidden[b].row(static_cast<Eigen::Index>(pos)) += dgathered.row(static_cast<Eigen::Index>(r));
        }
    }

    // Domain classification head.
    if (batch.size() > 0 && norm.examples > 0) {
        std::vector<Eigen::Index> labels;
        for (const auto& ex : batch.examples) labels.push_back(static_cast<Eigen::Index>(ex.domain));
        const Mat<T> dlogits = ce_grad(out.domain.logits, labels,
                                       static_cast<T>((1.0 - lambda) / static_cast<double>(norm.examples)));
        grads.domain_emb.noalias() += dlogits.transpose() * out.domain.projected;
        const Mat<T> dproj = dlogits * params.domain_emb;
        grads.cls_proj.noalias() += dproj.transpose() * cache.cls_hidden;
        grads.cls_bias.row(0) += dproj.colwise().sum();
        const Mat<T> dcls = dproj * params.cls_proj;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            dhidden[b].row(0) += dcls.row(static_cast<Eigen::Index>(b));
        }
    }

    for (std::size_t b = 0; b < batch.size(); ++b) {
        encoder_backward(cache.examples[b], std::move(dhidden[b]), params, grads);
    }
}

template <typename T>
LossBreakdown evaluate_window(std::span<const MaskedBatch> micro_batches,
                              const Parameters<T>& params, const ModelConfig& config,
                              double lambda, std::uint64_t dropout_seed, Parameters<T>* grads) {
    LossNorm norm;
    for (const auto& mb : micro_batches) {
        norm.mlm_targets += mb.target_count();
        norm.examples += mb.size();
    }
    if (grads) {
        if (grads->layers.size() != params.layers.size()) *grads = Parameters<T>::zeros(config);
        grads->set_zero();
    }
    double mlm_sum = 0.0;
    double cls_sum = 0.0;
    for (std::size_t i = 0; i < micro_batches.size(); ++i) {
        const auto out = forward(micro_batches[i], params, config, dropout_seed + i);
        const auto sums = loss_sums(micro_batches[i], out);
        mlm_sum += sums.mlm;
        cls_sum += sums.cls;
        if (grads) backward(micro_batches[i], out, params, lambda, norm, *grads);
    }
    const double delta = grads ? static_cast<double>(regularizer_backward(params.domain_emb, grads->domain_emb))
                               : static_cast<double>(regularizer(params.domain_emb));
    const double mlm = norm.mlm_targets ? mlm_sum / static_cast<double>(norm.mlm_targets) : 0.0;
    const double cls = norm.examples ? cls_sum / static_cast<double>(norm.examples) : 0.0;
    return total_loss(mlm, cls, delta, lambda);
}

#define DOMBERT_INSTANTIATE(T)                                                                   \
    template T loss_mlm<T>(const Mat<T>&, std::span<const TokenId>);                             \
    template T loss_cls<T>(const Mat<T>&, std::span<const std::size_t>);                         \
    template T regularizer<T>(const Mat<T>&);                                                    \
    template T regularizer_backward<T>(const Mat<T>&, Mat<T>&, T);                               \
    template HeadOutputs<T> forward<T>(const MaskedBatch&, const Parameters<T>&, const ModelConfig&, \
                                       std::uint64_t);                                           \
    template LossSums loss_sums<T>(const MaskedBatch&, const HeadOutputs<T>&);                   \
    template void backward<T>(const MaskedBatch&, const HeadOutputs<T>&, const Parameters<T>&,   \
                              double, const LossNorm&, Parameters<T>&);                          \
    template LossBreakdown evaluate_window<T>(std::span<const MaskedBatch>, const Parameters<T>&, \
                                              const ModelConfig&, double, std::uint64_t,         \
                                              Parameters<T>*);

DOMBERT_INSTANTIATE(float)
DOMBERT_INSTANTIATE(double)
#undef DOMBERT_INSTANTIATE

}  // namespace dombert
