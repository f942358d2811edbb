#include "dombert/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>

#include "dombert/error.hpp"
#include "dombert/objective.hpp"
#include "dombert/sampler.hpp"

namespace dombert {

void SyntheticSpec::validate() const {
    if (clusters < 1 || domains_per_cluster < 1 || shared_vocab < 1 || unique_vocab < 1 ||
        background_vocab < 1 || docs_per_domain < 1 || min_doc_len < 1) {
        throw ConfigError("synthetic spec sizes must all be >= 1");
    }
    if (max_doc_len < min_doc_len) throw ConfigError("max_doc_len < min_doc_len");
    if (mix_shared < 0 || mix_unique < 0 || mix_background < 0 ||
        std::abs(mix_shared + mix_unique + mix_background - 1.0) > 1e-9) {
        throw ConfigError("token-mix ratios must be non-negative and sum to 1");
    }
}

std::string shared_token(std::size_t cluster, std::size_t j) {
    return "s" + std::to_string(cluster) + "x" + std::to_string(j);
}

std::string unique_token(std::size_t cluster, std::size_t domain, std::size_t j) {
    return "u" + std::to_string(cluster) + "x" + std::to_string(domain) + "x" + std::to_string(j);
}

std::string background_token(std::size_t j) { return "b" + std::to_string(j); }

TokenCategory classify_token(const std::string& token) {
    if (token.empty()) return TokenCategory::kOther;
    const auto xs = std::count(token.begin(), token.end(), 'x');
    switch (token[0]) {
        case 's': return xs == 1 ? TokenCategory::kShared : TokenCategory::kOther;
        case 'u': return xs == 2 ? TokenCategory::kUnique : TokenCategory::kOther;
        case 'b': return xs == 0 ? TokenCategory::kBackground : TokenCategory::kOther;
        default: return TokenCategory::kOther;
    }
}

std::string synthetic_domain_name(std::size_t cluster, std::size_t index) {
    return "c" + std::to_string(cluster) + "-d" + std::to_string(index);
}

SyntheticCorpus gen_synthetic_corpus(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticCorpus out;
    out.target = synthetic_domain_name(0, 0);
    const std::size_t span = spec.max_doc_len - spec.min_doc_len + 1;
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        for (std::size_t d = 0; d < spec.domains_per_cluster; ++d) {
            const std::size_t serial = c * spec.domains_per_cluster + d;
            const auto name = synthetic_domain_name(c, d);
            out.domain_order.push_back(name);
            out.truth[name] = c;
            Rng rng(derive_seed(spec.seed, Stream::kSynthetic, serial));
            for (std::size_t doc = 0; doc < spec.docs_per_domain; ++doc) {
                const std::size_t len = spec.min_doc_len + rng.below(span);
                std::string text;
                for (std::size_t i = 0; i < len; ++i) {
                    const double u = rng.uniform();
                    if (i) text.push_back(' ');
                    if (u < spec.mix_shared) {
                        text += shared_token(c, rng.below(spec.shared_vocab));
                    } else if (u < spec.mix_shared + spec.mix_unique) {
                        text += unique_token(c, d, rng.below(spec.unique_vocab));
                    } else {
                        text += background_token(rng.below(spec.background_vocab));
                    }
                }
                out.records.push_back({name, std::move(text)});
            }
        }
    }
    return out;
}

void write_corpus(std::ostream& os, const std::vector<RawRecord>& records) {
    for (const auto& r : records) os << r.domain << '\t' << r.text << '\n';
}

void write_truth(std::ostream& os, const SyntheticCorpus& corpus) {
    for (const auto& name : corpus.domain_order) os << name << '\t' << corpus.truth.at(name) << '\n';
}

std::map<std::string, std::size_t> read_truth(std::istream& is) {
    std::map<std::string, std::size_t> truth;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("truth line " + std::to_string(line_no) + ": missing TAB");
        }
        try {
            truth[line.substr(0, tab)] = std::stoull(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw ParseError("truth line " + std::to_string(line_no) + ": bad cluster id");
        }
    }
    return truth;
}

double eval_domain_recovery(const Mat<double>& domain_emb, std::size_t target,
                            const std::vector<std::string>& names,
                            const std::map<std::string, std::size_t>& truth) {
    auto cluster_of = [&](const std::string& name) {
        auto it = truth.find(name);
        if (it == truth.end()) throw ConfigError("domain '" + name + "' missing from ground truth");
        return it->second;
    };
    const std::size_t target_cluster = cluster_of(names.at(target));
    std::set<std::string> mates;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i != target && cluster_of(names[i]) == target_cluster) mates.insert(names[i]);
    }
    if (mates.empty()) throw ConfigError("target domain has no cluster mates");
    const auto ranked = report_top_domains(domain_emb, target, names, mates.size());
    std::size_t hits = 0;
    for (const auto& r : ranked) hits += mates.count(r.name);
    return static_cast<double>(hits) / static_cast<double>(mates.size());
}

double eval_pseudo_perplexity(const Parameters<float>& params, const ModelConfig& config,
                              const std::vector<PackedExample>& heldout,
                              const MaskingPolicy& policy, std::uint64_t seed) {
    ModelConfig eval_config = config;
    set_dropout(eval_config, false);
    constexpr std::size_t kBatch = 8;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < heldout.size(); start += kBatch) {
        std::vector<const PackedExample*> chunk;
        for (std::size_t i = start; i < std::min(heldout.size(), start + kBatch); ++i) {
            chunk.push_back(&heldout[i]);
        }
        const auto batch = mask_examples(chunk, policy, config.vocab_size,
                                         derive_seed(seed, Stream::kEval), start);
        const auto out = forward(batch, params, eval_config);
        sum += loss_sums(batch, out).mlm;
        count += batch.target_count();
    }
    if (count == 0) throw ConfigError("held-out set produced no masked targets");
    return std::exp(sum / static_cast<double>(count));
}

EalBenchReport bench_eal(const ModelConfig& config, double mask_rate, std::size_t repetitions,
                         std::size_t batch_size, std::uint64_t seed) {
    ModelConfig cfg = config;
    set_dropout(cfg, false);
    cfg.validate();
    Rng rng(derive_seed(seed, Stream::kBench));
    const auto params = init_params<float>(cfg, rng);

    std::vector<PackedExample> examples(batch_size);
    for (auto& ex : examples) {
        ex.ids.resize(cfg.max_len);
        ex.valid_len = cfg.max_len;
        ex.ids[0] = special::kCls;
        for (std::size_t p = 1; p < cfg.max_len; ++p) {
            ex.ids[p] = static_cast<TokenId>(special::kCount + rng.below(cfg.vocab_size - special::kCount));
        }
    }
    std::vector<const PackedExample*> ptrs;
    for (const auto& ex : examples) ptrs.push_back(&ex);
    MaskingPolicy policy;
    policy.select_prob = mask_rate;
    const auto batch = mask_examples(ptrs, policy, cfg.vocab_size, seed, 0);

    std::vector<TokenId> labels;
    std::vector<Eigen::Index> full_rows;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (const auto& t : batch.examples[b].targets) {
            labels.push_back(t.original);
            full_rows.push_back(static_cast<Eigen::Index>(b * cfg.max_len + t.position));
        }
    }

    EalBenchReport report;
    report.vocab_size = cfg.vocab_size;
    report.max_len = cfg.max_len;
    report.mask_rate = mask_rate;
    report.repetitions = repetitions;
    report.batch_size = batch_size;
    report.targets = labels.size();

    using clock = std::chrono::steady_clock;
    double eal_seconds = 0.0;
    double full_seconds = 0.0;
    volatile float sink = 0.0f;
    for (std::size_t rep = 0; rep <= repetitions; ++rep) {
        const bool warmup = rep == 0;
        OpCounter eal_ops, full_ops;

        auto t0 = clock::now();
        const auto cache_e = encode(batch, params, cfg);
        const auto eal = mlm_logits_eal(cache_e, batch, params, &eal_ops);
        const float eal_loss = loss_mlm<float>(eal.logits, labels);
        auto t1 = clock::now();

        const auto cache_f = encode(batch, params, cfg);
        const auto full = mlm_logits_full(cache_f, params, &full_ops);
        Mat<float> gathered(static_cast<Eigen::Index>(full_rows.size()), full.cols());
        for (std::size_t r = 0; r < full_rows.size(); ++r) {
            gathered.row(static_cast<Eigen::Index>(r)) = full.row(full_rows[r]);
        }
        const float full_loss = loss_mlm<float>(gathered, labels);
        auto t2 = clock::now();
        sink = sink + eal_loss + full_loss;

        if (warmup) continue;
        eal_seconds += std::chrono::duration<double>(t1 - t0).count();
        full_seconds += std::chrono::duration<double>(t2 - t1).count();
        if (gathered.size()) {
            report.max_logit_deviation = std::max(
                report.max_logit_deviation,
                static_cast<double>((gathered - eal.logits).cwiseAbs().maxCoeff()));
        }
        report.max_loss_deviation =
            std::max(report.max_loss_deviation, std::abs(static_cast<double>(eal_loss - full_loss)));
        report.eal_projection_flops = eal_ops.vocab_projection_flops;
        report.full_projection_flops = full_ops.vocab_projection_flops;
    }
    if (repetitions > 0) {
        report.eal_steps_per_sec = static_cast<double>(repetitions) / eal_seconds;
        report.full_steps_per_sec = static_cast<double>(repetitions) / full_seconds;
        report.speedup = report.eal_steps_per_sec / report.full_steps_per_sec;
    }
    return report;
}

void write_bench_report(std::ostream& os, const EalBenchReport& r) {
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    auto sci = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.3e", v);
        return std::string(buf);
    };
    os << "vocab_size\t" << r.vocab_size << '\n'
       << "max_len\t" << r.max_len << '\n'
       << "mask_rate\t" << fmt(r.mask_rate) << '\n'
       << "batch_size\t" << r.batch_size << '\n'
       << "repetitions\t" << r.repetitions << '\n'
       << "targets\t" << r.targets << '\n'
       << "eal_steps_per_sec\t" << fmt(r.eal_steps_per_sec) << '\n'
       << "full_steps_per_sec\t" << fmt(r.full_steps_per_sec) << '\n'
       << "speedup\t" << fmt(r.speedup) << '\n'
       << "max_logit_deviation\t" << sci(r.max_logit_deviation) << '\n'
       << "max_loss_deviation\t" << sci(r.max_loss_deviation) << '\n'
       << "eal_projection_flops\t" << r.eal_projection_flops << '\n'
       << "full_projection_flops\t" << r.full_projection_flops << '\n';
}

}  // namespace dombert
