#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "dombert/evalbench.hpp"
#include "dombert/trainer.hpp"

namespace dombert::cli {

inline constexpr const char* kArtifactVersion = "dombert 1.0.0";

/// Maps to exit status 2.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct IngestOptions {
    std::filesystem::path corpus;
    std::string target;
    std::size_t max_len = 128;
    std::size_t min_count = 1;
    std::size_t max_vocab = 8000;
    std::filesystem::path out;
};

/// Sidecar paths written next to a packed corpus.
std::filesystem::path vocab_path(const std::filesystem::path& packed);
std::filesystem::path domains_path(const std::filesystem::path& packed);
std::filesystem::path stats_path(const std::filesystem::path& packed);

/// Writes the packed corpus plus `.vocab`, `.domains` and `.stats` sidecars.
void cmd_ingest(const IngestOptions& opt, std::ostream& out);

/// Reads a packed corpus together with its `.domains` sidecar.
PackedCorpus load_packed_corpus(const std::filesystem::path& packed);

struct TrainOptions {
    std::filesystem::path packed;
    double lambda = 0.9;
    double tau = 0.13;
    double lr = 5e-5;
    std::size_t batch = 8;
    std::size_t accum = 4;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    std::size_t m = 64;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t ff = 256;
    bool dropout = false;
    double dropout_prob = 0.1;
    std::size_t checkpoint_interval = 0;
    std::size_t top = 20;
    std::string refresh = "step";     // step | epoch
    std::string sampling = "domain";  // domain | target-only
    std::optional<std::filesystem::path> resume;
    std::filesystem::path out;
};

Manifest train_manifest(const TrainOptions& opt);

/// Writes `train.log`, `final.ckpt`, periodic `ckpt-<step>.ckpt` and
/// `top_domains.tsv` into opt.out.
void cmd_train(const TrainOptions& opt, std::ostream& out);

struct ReportOptions {
    std::filesystem::path ckpt;
    std::size_t top = 20;
};
void cmd_report(const ReportOptions& opt, std::ostream& out);

struct GenSynthOptions {
    SyntheticSpec spec;
    std::filesystem::path out;  // corpus; ground truth goes to <out>.truth
};
void cmd_gen_synth(const GenSynthOptions& opt, std::ostream& out);

struct EvalOptions {
    std::filesystem::path ckpt;
    std::optional<std::filesystem::path> truth;
    std::optional<std::filesystem::path> heldout;  // dom-corpus file
    std::optional<std::filesystem::path> vocab;    // needed with heldout
    std::uint64_t seed = 0;
};
void cmd_eval(const EvalOptions& opt, std::ostream& out);

struct BenchOptions {
    std::size_t vocab = 8000;
    std::size_t len = 128;
    double mask_rate = 0.15;
    std::size_t reps = 5;
    std::size_t batch = 8;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t ff = 256;
    std::uint64_t seed = 0;
};
void cmd_bench_eal(const BenchOptions& opt, std::ostream& out);

}  // namespace dombert::cli
