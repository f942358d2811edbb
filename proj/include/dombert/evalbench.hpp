#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dombert/corpus.hpp"
#include "dombert/masking.hpp"
#include "dombert/model.hpp"

namespace dombert {

struct SyntheticSpec {
    std::size_t clusters = 3;
    std::size_t domains_per_cluster = 4;
    std::size_t shared_vocab = 200;      // per cluster
    std::size_t unique_vocab = 100;      // per domain
    std::size_t background_vocab = 500;  // global
    std::size_t docs_per_domain = 300;
    std::size_t min_doc_len = 20;
    std::size_t max_doc_len = 60;
    double mix_shared = 0.5;
    double mix_unique = 0.3;
    double mix_background = 0.2;
    std::uint64_t seed = 0;

    std::size_t domain_count() const { return clusters * domains_per_cluster; }
    void validate() const;  // throws ConfigError
};

enum class TokenCategory { kShared, kUnique, kBackground, kOther };

/// Token naming: `s<c>x<j>` cluster-shared, `u<c>x<d>x<j>` domain-unique, `b<j>` background.
std::string shared_token(std::size_t cluster, std::size_t j);
std::string unique_token(std::size_t cluster, std::size_t domain, std::size_t j);
std::string background_token(std::size_t j);
TokenCategory classify_token(const std::string& token);

/// `c<cluster>-d<index>`; the target is c0-d0.
std::string synthetic_domain_name(std::size_t cluster, std::size_t index);

struct SyntheticCorpus {
    std::vector<RawRecord> records;
    std::map<std::string, std::size_t> truth;  // domain -> cluster
    std::vector<std::string> domain_order;
    std::string target;
};

/// Each domain gets its own derived stream, so domains are independent of
/// generation order.
SyntheticCorpus gen_synthetic_corpus(const SyntheticSpec& spec);

void write_corpus(std::ostream& os, const std::vector<RawRecord>& records);
void write_truth(std::ostream& os, const SyntheticCorpus& corpus);
std::map<std::string, std::size_t> read_truth(std::istream& is);

/// |top-k by cosine ∩ cluster mates of t| / k with k = number of mates.
double eval_domain_recovery(const Mat<double>& domain_emb, std::size_t target,
                            const std::vector<std::string>& names,
                            const std::map<std::string, std::size_t>& truth);

/// exp(mean masked-token cross-entropy) under one fixed-seed masking pass.
double eval_pseudo_perplexity(const Parameters<float>& params, const ModelConfig& config,
                              const std::vector<PackedExample>& heldout,
                              const MaskingPolicy& policy, std::uint64_t seed);

struct EalBenchReport {
    std::size_t vocab_size = 0;
    std::size_t max_len = 0;
    double mask_rate = 0.0;
    std::size_t repetitions = 0;
    std::size_t batch_size = 0;
    std::size_t targets = 0;
    double eal_steps_per_sec = 0.0;
    double full_steps_per_sec = 0.0;
    double speedup = 0.0;
    double max_logit_deviation = 0.0;
    double max_loss_deviation = 0.0;
    std::uint64_t eal_projection_flops = 0;
    std::uint64_t full_projection_flops = 0;
};

/// Times encode + MLM head + loss on identical batches through the EAL and
/// the full-vocabulary paths, alternating per repetition.
EalBenchReport bench_eal(const ModelConfig& config, double mask_rate, std::size_t repetitions,
                         std::size_t batch_size = 8, std::uint64_t seed = 0);

/// TAB-separated key/value lines.
void write_bench_report(std::ostream& os, const EalBenchReport& report);

}  // namespace dombert
