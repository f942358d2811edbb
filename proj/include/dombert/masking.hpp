#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dombert/corpus.hpp"
#include "dombert/rng.hpp"

namespace dombert {

struct MaskingPolicy {
    double select_prob = 0.15;
    double mask_frac = 0.8;
    double random_frac = 0.1;
    double keep_frac = 0.1;

    void validate() const;  // throws ConfigError
};

struct MlmTarget {
    std::size_t position = 0;
    TokenId original = 0;
};

/// What a selected position was turned into; kept for statistics.
enum class Corruption : std::uint8_t { kMask, kRandom, kKeep };

struct MaskedExample {
    std::vector<TokenId> input_ids;
    std::size_t valid_len = 0;
    std::size_t domain = 0;
    std::vector<MlmTarget> targets;  // strictly increasing positions
    std::vector<Corruption> corruption;  // parallel to targets
};

struct MaskedBatch {
    std::vector<MaskedExample> examples;

    std::size_t size() const { return examples.size(); }
    std::size_t target_count() const;
};

/// Positions that may be selected: inside valid_len, not [CLS]/[SEP]/[PAD]/[MASK].
bool is_mask_candidate(TokenId id);

/// Dynamic MLM corruption of one example. Every candidate is selected
/// independently with `select_prob`; selected positions become [MASK], a
/// uniform non-special id, or stay unchanged, and are all recorded as targets.
MaskedExample apply_dynamic_masking(const PackedExample& example, const MaskingPolicy& policy,
                                    std::size_t vocab_size, Rng& rng);

/// Writes targets back over the corrupted ids.
std::vector<TokenId> restore(const MaskedExample& example);

/// Masks `examples` with one independent stream per example, keyed by the
/// running example serial so results do not depend on batch boundaries.
MaskedBatch mask_examples(std::span<const PackedExample* const> examples,
                          const MaskingPolicy& policy, std::size_t vocab_size,
                          std::uint64_t seed, std::uint64_t first_serial);

}  // namespace dombert
