#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "dombert/corpus.hpp"
#include "dombert/evalbench.hpp"
#include "dombert/masking.hpp"
#include "dombert/model.hpp"
#include "dombert/objective.hpp"
#include "dombert/rng.hpp"
#include "dombert/trainer.hpp"

namespace dombert::testing {

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << text;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("dombert-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline LoadedCorpus loaded_from(const SyntheticCorpus& syn) {
    std::ostringstream os;
    write_corpus(os, syn.records);
    std::istringstream is(os.str());
    return parse_corpus(is, syn.target);
}

/// Small synthetic spec that trains in well under a second per epoch.
inline SyntheticSpec tiny_spec(std::uint64_t seed = 0) {
    SyntheticSpec s;
    s.clusters = 2;
    s.domains_per_cluster = 2;
    s.shared_vocab = 20;
    s.unique_vocab = 10;
    s.background_vocab = 30;
    s.docs_per_domain = 30;
    s.min_doc_len = 5;
    s.max_doc_len = 15;
    s.seed = seed;
    return s;
}

inline IngestResult tiny_ingest(std::uint64_t seed = 0, std::size_t max_len = 16) {
    return ingest(loaded_from(gen_synthetic_corpus(tiny_spec(seed))), max_len, 1, 1000);
}

inline ModelConfig tiny_model(const PackedCorpus& corpus, std::size_t m = 4) {
    ModelConfig c = model_config_for(corpus, m);
    c.hidden = 8;
    c.layers = 1;
    c.heads = 2;
    c.ff = 16;
    return c;
}

/// Random packed example: [CLS] ... [SEP] then padding.
inline PackedExample random_example(Rng& rng, std::size_t vocab, std::size_t max_len,
                                    std::size_t valid_len, std::size_t domain) {
    PackedExample ex;
    ex.ids.assign(max_len, special::kPad);
    ex.valid_len = valid_len;
    ex.domain = domain;
    ex.ids[0] = special::kCls;
    for (std::size_t p = 1; p + 1 < valid_len; ++p) {
        ex.ids[p] = rng.uniform() < 0.05 ? special::kUnk
                                         : static_cast<TokenId>(special::kCount + rng.below(vocab - special::kCount));
    }
    if (valid_len >= 2) ex.ids[valid_len - 1] = special::kSep;
    return ex;
}

template <typename T>
Parameters<T> random_params(const ModelConfig& config, Rng& rng, double scale) {
    auto p = Parameters<T>::zeros(config);
    p.visit([&](const std::string& name, Mat<T>& a) {
        const bool gain = name.find("gain") != std::string::npos;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            a.data()[i] = static_cast<T>((gain ? 1.0 : 0.0) + scale * rng.normal());
        }
    });
    return p;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t entries = 0;
};

/// Central finite differences on sampled entries of every array.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(const std::vector<MaskedBatch>& window, Parameters<double> params,
                                  const ModelConfig& config, double lambda, double h,
                                  std::size_t per_array, double floor, Rng& rng) {
    auto grads = Parameters<double>::zeros(config);
    evaluate_window<double>(window, params, config, lambda, 0, &grads);
    std::vector<Mat<double>*> ps, gs;
    std::vector<std::string> names;
    params.visit([&](const std::string& n, Mat<double>& a) {
        ps.push_back(&a);
        names.push_back(n);
    });
    grads.visit([&](const std::string&, Mat<double>& a) { gs.push_back(&a); });

    GradCheckResult res;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto size = static_cast<std::size_t>(ps[k]->size());
        std::vector<std::size_t> entries(size);
        for (std::size_t i = 0; i < size; ++i) entries[i] = i;
        rng.shuffle(std::span<std::size_t>(entries));
        entries.resize(std::min(size, per_array));
        for (auto e : entries) {
            double& x = ps[k]->data()[e];
            const double saved = x;
            x = saved + h;
            const double up = evaluate_window<double>(window, params, config, lambda, 0, nullptr).total;
            x = saved - h;
            const double down = evaluate_window<double>(window, params, config, lambda, 0, nullptr).total;
            x = saved;
            const double numeric = (up - down) / (2 * h);
            const double analytic = gs[k]->data()[e];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), floor});
            ++res.entries;
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst = names[k] + "[" + std::to_string(e) + "] analytic=" + std::to_string(analytic) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return res;
}

/// Random tiny configuration with a masked accumulation window.
struct TinyCase {
    ModelConfig config;
    Parameters<double> params;
    std::vector<MaskedBatch> window;
    double lambda = 0.5;
};

inline TinyCase random_tiny_case(Rng& rng) {
    TinyCase c;
    auto& m = c.config;
    const std::size_t heads = 1 + rng.below(2);
    m.heads = heads;
    m.hidden = heads * (2 + rng.below(16 / heads - 1));  // <= 16
    m.layers = 1 + rng.below(2);
    m.ff = 4 + rng.below(13);
    m.vocab_size = special::kCount + 2 + rng.below(44);  // <= 50
    m.max_len = 3 + rng.below(6);
    m.domain_dim = 1 + rng.below(6);
    m.n_domains = 1 + rng.below(5);  // <= 5
    m.dropout_enabled = false;
    c.params = random_params<double>(m, rng, 0.3);
    c.lambda = rng.uniform();
    MaskingPolicy policy;
    policy.select_prob = 0.5;
    const std::size_t micro = 1 + rng.below(2);
    std::uint64_t serial = 0;
    for (std::size_t i = 0; i < micro; ++i) {
        std::vector<PackedExample> exs;
        const std::size_t b = 1 + rng.below(3);
        for (std::size_t j = 0; j < b; ++j) {
            const std::size_t len = 2 + rng.below(m.max_len - 1);
            exs.push_back(random_example(rng, m.vocab_size, m.max_len, len, rng.below(m.n_domains)));
        }
        std::vector<const PackedExample*> ptrs;
        for (auto& e : exs) ptrs.push_back(&e);
        c.window.push_back(mask_examples(ptrs, policy, m.vocab_size, rng.next_u64(), serial));
        serial += b;
    }
    return c;
}

}  // namespace dombert::testing
