#include <doctest.h>

#include "dombert/error.hpp"
#include "dombert/masking.hpp"
#include "support.hpp"

using namespace dombert;
using dombert::testing::random_example;

TEST_CASE("select_prob 0 leaves the input unchanged") {
    Rng rng(1);
    const auto ex = random_example(rng, 50, 20, 15, 0);
    MaskingPolicy p;
    p.select_prob = 0.0;
    const auto m = apply_dynamic_masking(ex, p, 50, rng);
    CHECK(m.targets.empty());
    CHECK(m.input_ids == ex.ids);
}

TEST_CASE("special and padding positions are never targets") {
    Rng rng(2);
    MaskingPolicy p;
    p.select_prob = 1.0;
    for (int i = 0; i < 50; ++i) {
        const auto ex = random_example(rng, 30, 16, 2 + rng.below(15), 0);
        const auto m = apply_dynamic_masking(ex, p, 30, rng);
        for (const auto& t : m.targets) {
            CHECK(t.position < ex.valid_len);
            CHECK(ex.ids[t.position] != special::kCls);
            CHECK(ex.ids[t.position] != special::kSep);
            CHECK(ex.ids[t.position] != special::kPad);
        }
        for (std::size_t pos = ex.valid_len; pos < 16; ++pos) CHECK(m.input_ids[pos] == special::kPad);
    }
    CHECK(is_mask_candidate(special::kUnk));
    CHECK_FALSE(is_mask_candidate(special::kMask));
}

TEST_CASE("targets are ordered, record originals and restore the input") {
    Rng rng(3);
    const auto ex = random_example(rng, 40, 64, 64, 2);
    MaskingPolicy p;
    p.select_prob = 0.5;
    const auto m = apply_dynamic_masking(ex, p, 40, rng);
    REQUIRE(m.targets.size() == m.corruption.size());
    for (std::size_t i = 1; i < m.targets.size(); ++i) CHECK(m.targets[i - 1].position < m.targets[i].position);
    for (std::size_t i = 0; i < m.targets.size(); ++i) {
        const auto& t = m.targets[i];
        CHECK(t.original == ex.ids[t.position]);
        const auto now = m.input_ids[t.position];
        switch (m.corruption[i]) {
            case Corruption::kMask: CHECK(now == special::kMask); break;
            case Corruption::kRandom: CHECK(now >= special::kCount); CHECK(now < 40); break;
            case Corruption::kKeep: CHECK(now == t.original); break;
        }
    }
    CHECK(restore(m) == ex.ids);
    CHECK(m.domain == 2);
}

TEST_CASE("same seed gives identical corruption, a new visit re-randomizes") {
    Rng rng(4);
    std::vector<PackedExample> exs;
    for (int i = 0; i < 8; ++i) exs.push_back(random_example(rng, 100, 64, 64, 0));
    std::vector<const PackedExample*> ptrs;
    for (auto& e : exs) ptrs.push_back(&e);
    const auto a = mask_examples(ptrs, MaskingPolicy{}, 100, 9, 0);
    const auto b = mask_examples(ptrs, MaskingPolicy{}, 100, 9, 0);
    const auto c = mask_examples(ptrs, MaskingPolicy{}, 100, 9, 8);
    bool any_diff = false;
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(a.examples[i].input_ids == b.examples[i].input_ids);
        any_diff = any_diff || a.examples[i].input_ids != c.examples[i].input_ids;
    }
    CHECK(any_diff);
    CHECK(a.target_count() == b.target_count());
}

TEST_CASE("masking does not depend on batch boundaries") {
    Rng rng(5);
    std::vector<PackedExample> exs;
    for (int i = 0; i < 6; ++i) exs.push_back(random_example(rng, 100, 32, 32, 0));
    std::vector<const PackedExample*> ptrs;
    for (auto& e : exs) ptrs.push_back(&e);
    const auto whole = mask_examples(ptrs, MaskingPolicy{}, 100, 3, 10);
    const auto head = mask_examples(std::span(ptrs).subspan(0, 2), MaskingPolicy{}, 100, 3, 10);
    const auto tail = mask_examples(std::span(ptrs).subspan(2), MaskingPolicy{}, 100, 3, 12);
    for (std::size_t i = 0; i < 2; ++i) CHECK(whole.examples[i].input_ids == head.examples[i].input_ids);
    for (std::size_t i = 0; i < 4; ++i) CHECK(whole.examples[2 + i].input_ids == tail.examples[i].input_ids);
}

TEST_CASE("selection and replacement frequencies") {
    Rng rng(6);
    std::size_t candidates = 0, selected = 0, masked = 0, random = 0;
    for (int i = 0; i < 800; ++i) {
        const auto ex = random_example(rng, 500, 128, 128, 0);
        for (std::size_t p = 0; p < ex.valid_len; ++p) candidates += is_mask_candidate(ex.ids[p]);
        const auto m = apply_dynamic_masking(ex, MaskingPolicy{}, 500, rng);
        selected += m.targets.size();
        for (auto c : m.corruption) {
            masked += c == Corruption::kMask;
            random += c == Corruption::kRandom;
        }
    }
    const double frac = static_cast<double>(selected) / candidates;
    CHECK(frac >= 0.145);
    CHECK(frac <= 0.155);
    CHECK(static_cast<double>(masked) / selected == doctest::Approx(0.8).epsilon(0.0125));
    CHECK(static_cast<double>(random) / selected == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("vocabulary without regular tokens keeps random picks unchanged") {
    PackedExample ex;
    ex.ids = {special::kCls, special::kUnk, special::kUnk, special::kSep};
    ex.valid_len = 4;
    MaskingPolicy p;
    p.select_prob = 1.0;
    p.mask_frac = 0.0;
    p.random_frac = 1.0;
    p.keep_frac = 0.0;
    Rng rng(7);
    const auto m = apply_dynamic_masking(ex, p, special::kCount, rng);
    CHECK(m.targets.size() == 2);
    CHECK(m.input_ids == ex.ids);
}

TEST_CASE("policy validation") {
    MaskingPolicy p;
    CHECK_NOTHROW(p.validate());
    p.select_prob = 1.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = MaskingPolicy{};
    p.keep_frac = 0.3;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}
