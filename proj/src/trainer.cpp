#include "dombert/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <unordered_map>

#include "dombert/error.hpp"

namespace dombert {

template <typename T>
AdamaxState<T> AdamaxState<T>::zeros(const ModelConfig& config) {
    AdamaxState s;
    s.first_moment = Parameters<T>::zeros(config);
    s.inf_norm = Parameters<T>::zeros(config);
    return s;
}

template <typename T>
void adamax_step(Parameters<T>& params, const Parameters<T>& grads, AdamaxState<T>& state,
                 double lr) {
    grads.visit([](const std::string& name, const Mat<T>& g) {
        if (!g.allFinite()) throw NumericError("non-finite gradient in array '" + name + "'");
    });
    std::vector<Mat<T>*> theta, m, u;
    std::vector<const Mat<T>*> g;
    params.visit([&](const std::string&, Mat<T>& a) { theta.push_back(&a); });
    state.first_moment.visit([&](const std::string&, Mat<T>& a) { m.push_back(&a); });
    state.inf_norm.visit([&](const std::string&, Mat<T>& a) { u.push_back(&a); });
    grads.visit([&](const std::string&, const Mat<T>& a) { g.push_back(&a); });
    if (theta.size() != g.size() || m.size() != g.size() || u.size() != g.size()) {
        throw InputError("adamax_step: parameter layout mismatch");
    }

    ++state.step;
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    const T eps = static_cast<T>(state.eps);
    const T step_size =
        static_cast<T>(lr / (1.0 - std::pow(state.beta1, static_cast<double>(state.step))));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        auto& mi = *m[i];
        auto& ui = *u[i];
        const auto& gi = *g[i];
        if (gi.rows() != theta[i]->rows() || gi.cols() != theta[i]->cols()) {
            throw InputError("adamax_step: shape mismatch");
        }
        mi = b1 * mi + (T(1) - b1) * gi;
        ui = (b2 * ui).cwiseMax(gi.cwiseAbs());
        theta[i]->array() -= step_size * mi.array() / (ui.array() + eps);
    }
}

template struct AdamaxState<float>;
template struct AdamaxState<double>;
template void adamax_step<float>(Parameters<float>&, const Parameters<float>&, AdamaxState<float>&,
                                 double);
template void adamax_step<double>(Parameters<double>&, const Parameters<double>&,
                                  AdamaxState<double>&, double);

void TrainConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (micro_batch < 1 || accum_steps < 1) {
        throw ConfigError("micro-batch size and accumulation steps must be >= 1");
    }
    masking.validate();
}

std::string format_step(const StepRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%llu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f",
                  static_cast<unsigned long long>(r.step), r.epoch, r.loss.total, r.loss.mlm,
                  r.loss.cls, r.loss.delta, r.p_target);
    return buf;
}

void write_manifest(std::ostream& os, const Manifest& manifest) {
    for (const auto& [k, v] : manifest) os << "# " << k << '=' << v << '\n';
}

ModelConfig model_config_for(const PackedCorpus& corpus, std::size_t domain_dim) {
    ModelConfig m;
    m.vocab_size = corpus.vocab_size;
    m.max_len = corpus.max_len;
    m.n_domains = corpus.table.size();
    m.domain_dim = domain_dim;
    return m;
}

namespace {

std::uint64_t total_for(const PackedCorpus& corpus, const TrainConfig& config) {
    const auto& counts = corpus.table.counts;
    const std::size_t t = corpus.table.target;
    if (t >= counts.size() || counts[t] == 0) {
        throw ConfigError("target domain has no packed examples");
    }
    return static_cast<std::uint64_t>(config.epochs) * counts[t];
}

}  // namespace

Trainer::Trainer(const PackedCorpus& corpus, ModelConfig model, TrainConfig config)
    : corpus_(&corpus),
      model_(model),
      config_(config),
      sampler_(corpus.by_domain(), corpus.table.target, config.tau,
               derive_seed(config.seed, Stream::kSampler)) {
    config_.validate();
    set_dropout(model_, config_.dropout_enabled);
    model_.validate();
    if (model_.vocab_size != corpus.vocab_size || model_.max_len != corpus.max_len ||
        model_.n_domains != corpus.table.size()) {
        throw ConfigError("model configuration does not match the packed corpus");
    }
    total_examples_ = total_for(corpus, config_);
    Rng init_rng(derive_seed(config_.seed, Stream::kInit));
    params_ = init_params<float>(model_, init_rng);
    grads_ = Parameters<float>::zeros(model_);
    optimizer_ = AdamaxState<float>::zeros(model_);
    refresh();
}

Trainer Trainer::resume(const PackedCorpus& corpus, const Checkpoint& ckpt, TrainConfig config) {
    Trainer tr(corpus, ckpt.model, config);
    if (ckpt.domain_names != corpus.table.names || ckpt.target != corpus.table.target) {
        throw CheckpointError("checkpoint domains do not match the packed corpus");
    }
    if (!ckpt.optimizer) throw CheckpointError("checkpoint has no optimizer state");
    std::unordered_map<std::string, std::string> kv(ckpt.extra.begin(), ckpt.extra.end());
    auto get = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw CheckpointError("checkpoint lacks " + key);
        return std::stoull(it->second);
    };
    tr.params_ = ckpt.params;
    tr.optimizer_ = *ckpt.optimizer;
    tr.step_ = get("train.step");
    tr.examples_seen_ = get("train.examples_seen");
    tr.sampler_.load_state(ckpt.extra);
    tr.refresh();
    return tr;
}

void Trainer::refresh() {
    if (config_.sampling == SamplingMode::kTargetOnly) {
        std::vector<double> p(sampler_.domain_count(), 0.0);
        p[sampler_.target()] = 1.0;
        sampler_.set_probabilities(std::move(p));
    } else {
        sampler_.refresh_probabilities(params_.domain_emb.cast<double>());
    }
}

const StepRecord& Trainer::step() {
    if (done()) throw ConfigError("training already finished");
    const auto& corpus = *corpus_;
    const std::uint64_t window =
        std::min<std::uint64_t>(config_.effective_batch(), total_examples_ - examples_seen_);

    std::vector<MaskedBatch> micro;
    std::uint64_t assigned = 0;
    while (assigned < window) {
        const auto size = std::min<std::uint64_t>(config_.micro_batch, window - assigned);
        const auto ids = sampler_.sample_batch(size);
        std::vector<const PackedExample*> examples;
        examples.reserve(ids.size());
        for (auto id : ids) examples.push_back(&corpus.examples[id]);
        micro.push_back(mask_examples(examples, config_.masking, model_.vocab_size, config_.seed,
                                      examples_seen_ + assigned));
        assigned += size;
    }

    StepRecord rec;
    rec.loss = evaluate_window<float>(micro, params_, model_, config_.lambda,
                                      derive_seed(config_.seed, Stream::kDropout, step_), &grads_);
    rec.cls_head_grad_norm = std::sqrt(static_cast<double>(grads_.cls_proj.squaredNorm()) +
                                       static_cast<double>(grads_.cls_bias.squaredNorm()));
    adamax_step(params_, grads_, optimizer_, config_.lr);

    const std::size_t count_t = corpus.table.counts[corpus.table.target];
    const auto epoch_before = examples_seen_ / count_t;
    examples_seen_ += window;
    ++step_;
    if (config_.refresh == RefreshCadence::kPerStep || examples_seen_ / count_t != epoch_before) {
        refresh();
    }

    rec.step = step_;
    rec.epoch = static_cast<double>(examples_seen_) / static_cast<double>(count_t);
    const auto& p = sampler_.probabilities();
    const std::size_t t = sampler_.target();
    rec.p_target = p[t];
    rec.target_is_max = std::all_of(p.begin(), p.end(), [&](double v) { return v <= p[t]; });
    records_.push_back(rec);
    return records_.back();
}

void Trainer::run(const StepHook& hook) {
    while (!done()) {
        const auto& rec = step();
        if (hook) hook(*this, rec);
    }
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ck;
    ck.model = model_;
    ck.domain_names = corpus_->table.names;
    ck.target = corpus_->table.target;
    ck.params = params_;
    ck.optimizer = optimizer_;
    auto& kv = ck.extra;
    kv.emplace_back("train.step", std::to_string(step_));
    kv.emplace_back("train.examples_seen", std::to_string(examples_seen_));
    kv.emplace_back("train.seed", std::to_string(config_.seed));
    for (auto& entry : sampler_.save_state()) kv.push_back(std::move(entry));
    return ck;
}

std::vector<RankedDomain> Trainer::top_domains(std::size_t k) const {
    const std::size_t sources = corpus_->table.size() - 1;
    return report_top_domains(params_.domain_emb.cast<double>(), corpus_->table.target,
                              corpus_->table.names, std::min(k, sources));
}

TrainResult train(const TrainConfig& config, const PackedCorpus& corpus, const ModelConfig& model) {
    Trainer trainer(corpus, model, config);
    trainer.run();
    return {trainer.params(), trainer.records()};
}

}  // namespace dombert
