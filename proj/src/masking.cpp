#include "dombert/masking.hpp"

#include <cmath>

#include "dombert/error.hpp"

namespace dombert {

void MaskingPolicy::validate() const {
    if (!(select_prob >= 0.0 && select_prob <= 1.0)) {
        throw ConfigError("select_prob must lie in [0, 1]");
    }
    if (mask_frac < 0 || random_frac < 0 || keep_frac < 0 ||
        std::abs(mask_frac + random_frac + keep_frac - 1.0) > 1e-9) {
        throw ConfigError("mask/random/keep fractions must be non-negative and sum to 1");
    }
}

std::size_t MaskedBatch::target_count() const {
    std::size_t n = 0;
    for (const auto& ex : examples) n += ex.targets.size();
    return n;
}

bool is_mask_candidate(TokenId id) {
    return id != special::kPad && id != special::kCls && id != special::kSep &&
           id != special::kMask;
}

MaskedExample apply_dynamic_masking(const PackedExample& example, const MaskingPolicy& policy,
                                    std::size_t vocab_size, Rng& rng) {
    MaskedExample out;
    out.input_ids = example.ids;
    out.valid_len = example.valid_len;
    out.domain = example.domain;
    const std::size_t regular = vocab_size > special::kCount ? vocab_size - special::kCount : 0;

    for (std::size_t p = 0; p < example.valid_len; ++p) {
        const TokenId id = example.ids[p];
        if (!is_mask_candidate(id)) continue;
        if (rng.uniform() >= policy.select_prob) continue;
        out.targets.push_back({p, id});
        const double u = rng.uniform();
        if (u < policy.mask_frac) {
            out.input_ids[p] = special::kMask;
            out.corruption.push_back(Corruption::kMask);
        } else if (u < policy.mask_frac + policy.random_frac && regular > 0) {
            out.input_ids[p] = static_cast<TokenId>(special::kCount + rng.below(regular));
            out.corruption.push_back(Corruption::kRandom);
        } else {
            out.corruption.push_back(Corruption::kKeep);
        }
    }
    return out;
}

std::vector<TokenId> restore(const MaskedExample& example) {
    auto ids = example.input_ids;
    for (const auto& t : example.targets) ids[t.position] = t.original;
    return ids;
}

MaskedBatch mask_examples(std::span<const PackedExample* const> examples,
                          const MaskingPolicy& policy, std::size_t vocab_size,
                          std::uint64_t seed, std::uint64_t first_serial) {
    MaskedBatch batch;
    batch.examples.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        Rng rng(derive_seed(seed, Stream::kMasking, first_serial + i));
        batch.examples.push_back(apply_dynamic_masking(*examples[i], policy, vocab_size, rng));
    }
    return batch;
}

}  // namespace dombert
