#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dombert/corpus.hpp"
#include "dombert/masking.hpp"
#include "dombert/model.hpp"
#include "dombert/objective.hpp"
#include "dombert/sampler.hpp"

namespace dombert {

template <typename T>
struct AdamaxState {
    Parameters<T> first_moment;
    Parameters<T> inf_norm;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamaxState zeros(const ModelConfig& config);
};

/// m ← β1·m + (1−β1)·g;  u ← max(β2·u, |g|);  θ ← θ − lr/(1−β1^t) · m/(u+ε).
/// Throws NumericError naming the array if any gradient entry is not finite;
/// nothing is updated in that case.
template <typename T>
void adamax_step(Parameters<T>& params, const Parameters<T>& grads, AdamaxState<T>& state,
                 double lr);

enum class RefreshCadence { kPerStep, kPerEpoch };

enum class SamplingMode {
    kDomainOriented,  // categorical over all domains from D
    kTargetOnly,      // baseline: P is one-hot at the target
};

struct TrainConfig {
    double lambda = 0.9;
    double tau = 0.13;
    double lr = 5e-5;
    std::size_t micro_batch = 8;
    std::size_t accum_steps = 4;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    std::size_t checkpoint_interval = 0;  // optimizer steps; 0 disables
    std::size_t report_top = 20;           // clamped to the number of source domains
    bool dropout_enabled = false;
    MaskingPolicy masking;
    RefreshCadence refresh = RefreshCadence::kPerStep;
    SamplingMode sampling = SamplingMode::kDomainOriented;

    std::size_t effective_batch() const { return micro_batch * accum_steps; }
    void validate() const;  // throws ConfigError
};

struct StepRecord {
    std::uint64_t step = 0;
    double epoch = 0.0;  // examples processed / counts[t]
    LossBreakdown loss;
    double p_target = 0.0;
    bool target_is_max = true;
    double cls_head_grad_norm = 0.0;  // ‖∂L/∂W‖ and ‖∂L/∂b‖ combined
};

/// `step epoch L_total L_MLM L_CLS Delta P_target`, TAB-separated, 6 decimals.
std::string format_step(const StepRecord& r);

/// Key=value lines emitted at the top of every run log, prefixed by "# ".
using Manifest = std::vector<std::pair<std::string, std::string>>;
void write_manifest(std::ostream& os, const Manifest& manifest);

struct Checkpoint {
    ModelConfig model;
    std::vector<std::string> domain_names;
    std::size_t target = 0;
    std::vector<std::pair<std::string, std::string>> extra;  // trainer and sampler state
    Parameters<float> params;
    std::optional<AdamaxState<float>> optimizer;
};

/// `DOMBERT-CKPT v1`, key=value lines, `arrays=<count>`, then each array as a
/// `name RxC` line followed by R*C little-endian float32 values.
void save_checkpoint(std::ostream& os, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Rejects bad magic, unknown or missing arrays, shape mismatches and
/// truncation with CheckpointError.
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Drives domain-oriented training over a packed corpus. One epoch is
/// counts[t] examples, whichever domains they were drawn from.
class Trainer {
  public:
    Trainer(const PackedCorpus& corpus, ModelConfig model, TrainConfig config);

    /// Continues from a checkpoint written by this trainer.
    static Trainer resume(const PackedCorpus& corpus, const Checkpoint& ckpt, TrainConfig config);

    bool done() const { return examples_seen_ >= total_examples_; }

    /// One optimizer step: sample and mask up to accum_steps micro-batches,
    /// accumulate gradients, apply Adamax, refresh P.
    const StepRecord& step();

    using StepHook = std::function<void(const Trainer&, const StepRecord&)>;
    void run(const StepHook& hook = {});

    const Parameters<float>& params() const { return params_; }
    const AdamaxState<float>& optimizer() const { return optimizer_; }
    const DomainSampler& sampler() const { return sampler_; }
    const std::vector<StepRecord>& records() const { return records_; }
    const ModelConfig& model_config() const { return model_; }
    const TrainConfig& config() const { return config_; }
    std::uint64_t steps_done() const { return step_; }
    std::uint64_t total_examples() const { return total_examples_; }

    Checkpoint checkpoint() const;
    std::vector<RankedDomain> top_domains(std::size_t k) const;

  private:
    void refresh();

    const PackedCorpus* corpus_;
    ModelConfig model_;
    TrainConfig config_;
    Parameters<float> params_;
    Parameters<float> grads_;
    AdamaxState<float> optimizer_;
    DomainSampler sampler_;
    std::uint64_t step_ = 0;
    std::uint64_t examples_seen_ = 0;
    std::uint64_t total_examples_ = 0;
    std::vector<StepRecord> records_;
};

struct TrainResult {
    Parameters<float> params;
    std::vector<StepRecord> log;
};

TrainResult train(const TrainConfig& config, const PackedCorpus& corpus, const ModelConfig& model);

/// Model configuration for a packed corpus with the given sizes.
ModelConfig model_config_for(const PackedCorpus& corpus, std::size_t domain_dim);

}  // namespace dombert
