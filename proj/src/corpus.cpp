#include "dombert/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "dombert/error.hpp"

namespace dombert {

namespace {

constexpr const char* kReservedNames[special::kCount] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                         "[MASK]"};

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

std::string expect_key(std::string_view field, std::string_view key) {
    if (field.substr(0, key.size()) != key || field.size() <= key.size() ||
        field[key.size()] != '=') {
        throw ParseError("expected '" + std::string(key) + "=' in packed header, got '" +
                         std::string(field) + "'");
    }
    return std::string(field.substr(key.size() + 1));
}

std::size_t parse_size(const std::string& text, const std::string& what) {
    std::size_t pos = 0;
    unsigned long long value = 0;
    try {
        value = std::stoull(text, &pos);
    } catch (const std::exception&) {
        throw ParseError("invalid integer for " + what + ": '" + text + "'");
    }
    if (pos != text.size() || (!text.empty() && text[0] == '-')) {
        throw ParseError("invalid integer for " + what + ": '" + text + "'");
    }
    return static_cast<std::size_t>(value);
}

}  // namespace

Vocabulary::Vocabulary() {
    for (const char* name : kReservedNames) add(name);
}

TokenId Vocabulary::add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? special::kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw InputError("token id out of range: " + std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
    return index_.contains(std::string(token));
}

void Vocabulary::write(std::ostream& os) const {
    for (const auto& t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::read(std::istream& is) {
    Vocabulary vocab;
    std::string line;
    for (std::size_t i = 0; i < special::kCount; ++i) {
        if (!std::getline(is, line) || line != kReservedNames[i]) {
            throw ParseError("vocabulary file must start with the reserved tokens");
        }
    }
    std::size_t line_no = special::kCount;
    while (std::getline(is, line)) {
        ++line_no;
        const auto before = vocab.size();
        vocab.add(line);
        if (vocab.size() == before) {
            throw ParseError("duplicate vocabulary token on line " + std::to_string(line_no));
        }
    }
    return vocab;
}

std::size_t DomainTable::index_of(std::string_view name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("unknown domain: " + std::string(name));
    return static_cast<std::size_t>(it - names.begin());
}

LoadedCorpus parse_corpus(std::istream& is, const std::string& target) {
    LoadedCorpus out;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("line " + std::to_string(line_no) + ": missing TAB separator");
        }
        std::string domain = line.substr(0, tab);
        if (domain.empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": empty domain name");
        }
        if (seen.emplace(domain, out.table.names.size()).second) {
            out.table.names.push_back(domain);
        }
        out.records.push_back({std::move(domain), line.substr(tab + 1)});
    }
    if (out.records.empty()) throw ParseError("empty corpus");
    out.table.counts.assign(out.table.names.size(), 0);
    auto it = seen.find(target);
    if (it == seen.end()) {
        throw ConfigError("target domain '" + target + "' not present in corpus");
    }
    out.table.target = it->second;
    return out;
}

LoadedCorpus load_corpus(const std::filesystem::path& path, const std::string& target) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open corpus file: " + path.string());
    return parse_corpus(in, target);
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) words.push_back(std::move(current));
        current.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    flush();
    return words;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t min_count,
                       std::size_t max_size) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    std::unordered_map<std::string, std::size_t> freq;
    for (const auto& text : texts) {
        for (auto& w : split_words(text)) ++freq[std::move(w)];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [word, count] : freq) {
        if (count >= min_count) kept.emplace_back(word, count);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (kept.size() > max_size) kept.resize(max_size);
    Vocabulary vocab;
    for (const auto& [word, count] : kept) vocab.add(word);
    return vocab;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
    std::vector<TokenId> ids;
    for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
    return ids;
}

std::vector<PackedExample> pack_domain(const std::vector<Document>& docs, std::size_t max_len) {
    if (max_len < 3) throw ConfigError("max_len must be >= 3");
    std::vector<PackedExample> out;
    if (docs.empty()) return out;
    const std::size_t domain = docs.front().domain_id;

    PackedExample current;
    auto open = [&] {
        current = PackedExample{};
        current.domain = domain;
        current.ids.reserve(max_len);
        current.ids.push_back(special::kCls);
    };
    auto close = [&] {
        current.valid_len = current.ids.size();
        current.ids.resize(max_len, special::kPad);
        out.push_back(std::move(current));
    };
    bool is_open = false;

    for (const auto& doc : docs) {
        if (doc.domain_id != domain) throw InputError("pack_domain: documents span domains");
        std::size_t i = 0;
        while (i < doc.tokens.size()) {
            if (!is_open) {
                open();
                is_open = true;
            }
            const std::size_t room = max_len - current.ids.size();
            const std::size_t take = std::min(room, doc.tokens.size() - i);
            current.ids.insert(current.ids.end(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                               doc.tokens.begin() + static_cast<std::ptrdiff_t>(i + take));
            i += take;
            if (current.ids.size() == max_len) {
                close();
                is_open = false;
            }
        }
        // A separator that would open an example right after [CLS] is dropped:
        // the example boundary already separates the documents.
        if (is_open) {
            current.ids.push_back(special::kSep);
            if (current.ids.size() == max_len) {
                close();
                is_open = false;
            }
        }
    }
    if (is_open) close();
    return out;
}

std::vector<std::pair<std::string, std::size_t>> corpus_stats(const DomainTable& table) {
    std::vector<std::pair<std::string, std::size_t>> rows;
    rows.reserve(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        rows.emplace_back(table.names[i], i < table.counts.size() ? table.counts[i] : 0);
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return rows;
}

std::vector<std::vector<std::size_t>> PackedCorpus::by_domain() const {
    std::vector<std::vector<std::size_t>> groups(table.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto d = examples[i].domain;
        if (d >= groups.size()) groups.resize(d + 1);
        groups[d].push_back(i);
    }
    return groups;
}

void validate_packed(const PackedCorpus& corpus) {
    std::vector<std::size_t> seen(corpus.table.size(), 0);
    for (std::size_t e = 0; e < corpus.examples.size(); ++e) {
        const auto& ex = corpus.examples[e];
        const std::string where = "example " + std::to_string(e) + ": ";
        if (ex.ids.size() != corpus.max_len) throw ParseError(where + "length != L_max");
        if (ex.valid_len < 2 || ex.valid_len > corpus.max_len) {
            throw ParseError(where + "valid_len out of range");
        }
        if (ex.domain >= corpus.table.size()) throw ParseError(where + "domain out of range");
        if (ex.ids[0] != special::kCls) throw ParseError(where + "does not start with [CLS]");
        for (std::size_t p = 0; p < corpus.max_len; ++p) {
            const TokenId id = ex.ids[p];
            if (id < 0 || static_cast<std::size_t>(id) >= corpus.vocab_size) {
                throw ParseError(where + "token id out of vocabulary range");
            }
            if (p >= ex.valid_len && id != special::kPad) {
                throw ParseError(where + "non-[PAD] token past valid_len");
            }
            if (p < ex.valid_len && (id == special::kPad || (p > 0 && id == special::kCls) ||
                                     id == special::kMask)) {
                throw ParseError(where + "unexpected special token inside example");
            }
        }
        ++seen[ex.domain];
    }
    if (!corpus.table.counts.empty() && corpus.table.counts != seen) {
        throw ParseError("domain counts disagree with packed examples");
    }
}

void write_packed(std::ostream& os, const PackedCorpus& corpus) {
    os << "DOMPACK v1 L_max=" << corpus.max_len << " n_plus_1=" << corpus.table.size()
       << " vocab_size=" << corpus.vocab_size << '\n';
    for (const auto& ex : corpus.examples) {
        os << ex.domain << '\t' << ex.valid_len << '\t';
        for (std::size_t i = 0; i < ex.ids.size(); ++i) {
            if (i) os << ' ';
            os << ex.ids[i];
        }
        os << '\n';
    }
}

PackedCorpus read_packed(std::istream& is) {
    PackedCorpus corpus;
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty packed corpus file");
    {
        std::istringstream hs(line);
        std::string magic, version, f1, f2, f3, extra;
        hs >> magic >> version >> f1 >> f2 >> f3;
        if (magic != "DOMPACK" || version != "v1") throw ParseError("not a DOMPACK v1 file");
        if (hs >> extra) throw ParseError("trailing fields in DOMPACK header");
        corpus.max_len = parse_size(expect_key(f1, "L_max"), "L_max");
        const std::size_t n_plus_1 = parse_size(expect_key(f2, "n_plus_1"), "n_plus_1");
        corpus.vocab_size = parse_size(expect_key(f3, "vocab_size"), "vocab_size");
        corpus.table.names.resize(n_plus_1);
        corpus.table.counts.assign(n_plus_1, 0);
    }
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "packed line " + std::to_string(line_no);
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) throw ParseError(where + ": expected 3 TAB fields");
        PackedExample ex;
        ex.domain = parse_size(line.substr(0, t1), where + " domain_id");
        ex.valid_len = parse_size(line.substr(t1 + 1, t2 - t1 - 1), where + " valid_len");
        std::istringstream ids(line.substr(t2 + 1));
        std::string tok;
        while (ids >> tok) ex.ids.push_back(static_cast<TokenId>(parse_size(tok, where + " id")));
        if (ex.domain >= corpus.table.size()) throw ParseError(where + ": domain_id out of range");
        ++corpus.table.counts[ex.domain];
        corpus.examples.push_back(std::move(ex));
    }
    validate_packed(corpus);
    return corpus;
}

void write_domains(std::ostream& os, const DomainTable& table) {
    os << "target=" << table.target << '\n';
    for (std::size_t i = 0; i < table.size(); ++i) os << i << '\t' << table.names[i] << '\n';
}

DomainTable read_domains(std::istream& is) {
    DomainTable table;
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty domains file");
    table.target = parse_size(expect_key(line, "target"), "target");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("domains file: missing TAB");
        if (parse_size(line.substr(0, tab), "domain id") != table.names.size()) {
            throw ParseError("domains file: ids must be consecutive from 0");
        }
        table.names.push_back(line.substr(tab + 1));
    }
    if (table.target >= table.names.size()) throw ParseError("domains file: target out of range");
    table.counts.assign(table.names.size(), 0);
    return table;
}

IngestResult ingest(const LoadedCorpus& corpus, std::size_t max_len, std::size_t min_count,
                    std::size_t max_vocab) {
    std::vector<std::string> texts;
    texts.reserve(corpus.records.size());
    for (const auto& r : corpus.records) texts.push_back(r.text);
    IngestResult result{build_vocab(texts, min_count, max_vocab), {}};

    const auto& table = corpus.table;
    std::vector<std::vector<Document>> docs(table.size());
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < table.size(); ++i) index.emplace(table.names[i], i);
    for (const auto& r : corpus.records) {
        const std::size_t d = index.at(r.domain);
        auto ids = tokenize(r.text, result.vocab);
        if (!ids.empty()) docs[d].push_back({d, std::move(ids)});
    }

    auto& packed = result.packed;
    packed.max_len = max_len;
    packed.vocab_size = result.vocab.size();
    packed.table = table;
    packed.table.counts.assign(table.size(), 0);
    for (std::size_t d = 0; d < table.size(); ++d) {
        auto examples = pack_domain(docs[d], max_len);
        packed.table.counts[d] = examples.size();
        for (auto& ex : examples) packed.examples.push_back(std::move(ex));
    }
    if (packed.table.counts[table.target] == 0) {
        throw ConfigError("target domain has no tokens after ingestion");
    }
    return result;
}

}  // namespace dombert
