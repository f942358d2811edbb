#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dombert {

using TokenId = std::int32_t;

/// Reserved ids; always the five lowest, in this order.
namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kCount = 5;
}  // namespace special

class Vocabulary {
  public:
    Vocabulary();

    /// Appends `token` with the next free id. Returns the existing id when
    /// already present.
    TokenId add(const std::string& token);

    /// Id of `token`, or [UNK].
    TokenId id(std::string_view token) const;
    const std::string& token(TokenId id) const;
    bool contains(std::string_view token) const;

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// One token per line, in id order, reserved tokens included.
    void write(std::ostream& os) const;
    static Vocabulary read(std::istream& is);

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

struct RawRecord {
    std::string domain;
    std::string text;
};

/// Distinct domains in first-seen order. `counts` holds packed-example
/// counts once packing has run.
struct DomainTable {
    std::vector<std::string> names;
    std::size_t target = 0;
    std::vector<std::size_t> counts;

    std::size_t size() const { return names.size(); }
    std::size_t index_of(std::string_view name) const;  // throws ConfigError
};

struct Document {
    std::size_t domain_id = 0;
    std::vector<TokenId> tokens;
};

struct PackedExample {
    std::vector<TokenId> ids;  // length L_max
    std::size_t valid_len = 0;
    std::size_t domain = 0;
};

struct LoadedCorpus {
    DomainTable table;
    std::vector<RawRecord> records;
};

/// Reads a dom-corpus v1 file (`domain<TAB>text` per line, blank lines
/// skipped) and designates `target` by name.
LoadedCorpus load_corpus(const std::filesystem::path& path, const std::string& target);
LoadedCorpus parse_corpus(std::istream& is, const std::string& target);

/// Lowercased word tokens; each ASCII punctuation character is its own token.
std::vector<std::string> split_words(std::string_view text);

Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t min_count,
                       std::size_t max_size);

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);

/// Greedy same-domain packing. Each document is followed by [SEP] except
/// when the separator would land directly after the leading [CLS] of a new
/// example; documents that do not fit are split and carried over.
std::vector<PackedExample> pack_domain(const std::vector<Document>& docs, std::size_t max_len);

/// Domain names with their counts, descending by count, ties by name.
std::vector<std::pair<std::string, std::size_t>> corpus_stats(const DomainTable& table);

/// A packed corpus, examples grouped per domain in packing order.
struct PackedCorpus {
    std::size_t max_len = 0;
    std::size_t vocab_size = 0;
    DomainTable table;
    std::vector<PackedExample> examples;

    /// Indices into `examples` for each domain.
    std::vector<std::vector<std::size_t>> by_domain() const;
};

/// Throws ParseError naming the first violated PackedExample invariant.
void validate_packed(const PackedCorpus& corpus);

/// DOMPACK v1 text format.
void write_packed(std::ostream& os, const PackedCorpus& corpus);
/// Reads examples only; domain names and target come from the sidecar.
PackedCorpus read_packed(std::istream& is);

/// Sidecar next to a packed file: `target=<index>` followed by
/// `id<TAB>name` lines.
void write_domains(std::ostream& os, const DomainTable& table);
DomainTable read_domains(std::istream& is);

/// Full ingest pipeline: tokenize, build vocab, pack every domain.
struct IngestResult {
    Vocabulary vocab;
    PackedCorpus packed;
};
IngestResult ingest(const LoadedCorpus& corpus, std::size_t max_len, std::size_t min_count,
                    std::size_t max_vocab);

}  // namespace dombert
