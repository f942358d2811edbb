#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "dombert/error.hpp"
#include "dombert/trainer.hpp"

namespace dombert {

namespace {

constexpr const char* kMagic = "DOMBERT-CKPT v1";

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_array(std::ostream& os, const std::string& name, const Mat<float>& a) {
    os << name << ' ' << a.rows() << 'x' << a.cols() << '\n';
    std::string bytes(static_cast<std::size_t>(a.size()) * 4, '\0');
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, a.data() + i, 4);
        for (int b = 0; b < 4; ++b) {
            bytes[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(b)] =
                static_cast<char>((bits >> (8 * b)) & 0xffu);
        }
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::size_t to_size(const std::string& s, const std::string& key) {
    std::size_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw CheckpointError("bad integer for " + key + ": '" + s + "'");
    }
    return v;
}

double to_double(const std::string& s, const std::string& key) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw CheckpointError("bad number for " + key + ": '" + s + "'");
    }
    return v;
}

}  // namespace

void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
    const auto& m = ck.model;
    os << kMagic << '\n';
    os << "vocab_size=" << m.vocab_size << '\n'
       << "max_len=" << m.max_len << '\n'
       << "hidden=" << m.hidden << '\n'
       << "layers=" << m.layers << '\n'
       << "heads=" << m.heads << '\n'
       << "ff=" << m.ff << '\n'
       << "domain_dim=" << m.domain_dim << '\n'
       << "n_domains=" << m.n_domains << '\n'
       << "dropout=" << format_double(m.dropout) << '\n'
       << "dropout_enabled=" << (m.dropout_enabled ? 1 : 0) << '\n';
    os << "target=" << ck.target << '\n';
    for (std::size_t i = 0; i < ck.domain_names.size(); ++i) {
        os << "domain." << i << '=' << ck.domain_names[i] << '\n';
    }
    for (const auto& [k, v] : ck.extra) os << k << '=' << v << '\n';
    if (ck.optimizer) {
        os << "adamax.step=" << ck.optimizer->step << '\n'
           << "adamax.beta1=" << format_double(ck.optimizer->beta1) << '\n'
           << "adamax.beta2=" << format_double(ck.optimizer->beta2) << '\n'
           << "adamax.eps=" << format_double(ck.optimizer->eps) << '\n';
    }
    std::size_t per_set = 0;
    ck.params.visit([&](const std::string&, const Mat<float>&) { ++per_set; });
    os << "arrays=" << (ck.optimizer ? 3 * per_set : per_set) << '\n';
    ck.params.visit([&](const std::string& name, const Mat<float>& a) { write_array(os, name, a); });
    if (ck.optimizer) {
        ck.optimizer->first_moment.visit(
            [&](const std::string& name, const Mat<float>& a) { write_array(os, "adamax.m." + name, a); });
        ck.optimizer->inf_norm.visit(
            [&](const std::string& name, const Mat<float>& a) { write_array(os, "adamax.u." + name, a); });
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ostringstream buf(std::ios::binary);
    save_checkpoint(buf, ck);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
    const auto s = buf.str();
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kMagic) {
        throw CheckpointError("not a DOMBERT-CKPT v1 file");
    }
    std::vector<std::pair<std::string, std::string>> kv;
    std::unordered_map<std::string, std::string> map;
    std::size_t array_count = 0;
    bool have_arrays = false;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw CheckpointError("malformed header line: '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (key == "arrays") {
            array_count = to_size(value, key);
            have_arrays = true;
            break;
        }
        map[key] = value;
        kv.emplace_back(std::move(key), std::move(value));
    }
    if (!have_arrays) throw CheckpointError("truncated checkpoint header");

    auto need = [&](const std::string& key) -> const std::string& {
        auto it = map.find(key);
        if (it == map.end()) throw CheckpointError("checkpoint lacks key " + key);
        return it->second;
    };

    Checkpoint ck;
    auto& m = ck.model;
    m.vocab_size = to_size(need("vocab_size"), "vocab_size");
    m.max_len = to_size(need("max_len"), "max_len");
    m.hidden = to_size(need("hidden"), "hidden");
    m.layers = to_size(need("layers"), "layers");
    m.heads = to_size(need("heads"), "heads");
    m.ff = to_size(need("ff"), "ff");
    m.domain_dim = to_size(need("domain_dim"), "domain_dim");
    m.n_domains = to_size(need("n_domains"), "n_domains");
    m.dropout = to_double(need("dropout"), "dropout");
    m.dropout_enabled = to_size(need("dropout_enabled"), "dropout_enabled") != 0;
    try {
        m.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("invalid model configuration: ") + e.what());
    }
    ck.target = to_size(need("target"), "target");
    for (std::size_t i = 0; i < m.n_domains; ++i) ck.domain_names.push_back(need("domain." + std::to_string(i)));
    if (ck.target >= m.n_domains) throw CheckpointError("target out of range");

    static const char* kModelKeys[] = {"vocab_size", "max_len", "hidden", "layers", "heads",
                                       "ff", "domain_dim", "n_domains", "dropout",
                                       "dropout_enabled", "target"};
    for (const auto& [k, v] : kv) {
        bool model_key = k.rfind("domain.", 0) == 0 || k.rfind("adamax.", 0) == 0;
        for (const char* mk : kModelKeys) model_key = model_key || k == mk;
        if (!model_key) ck.extra.emplace_back(k, v);
    }

    // Expected layout; everything is read into locals before returning.
    ck.params = Parameters<float>::zeros(m);
    std::unordered_map<std::string, Mat<float>*> slots;
    ck.params.visit([&](const std::string& name, Mat<float>& a) { slots[name] = &a; });
    const bool has_opt = map.contains("adamax.step");
    if (has_opt) {
        ck.optimizer = AdamaxState<float>::zeros(m);
        ck.optimizer->step = to_size(need("adamax.step"), "adamax.step");
        ck.optimizer->beta1 = to_double(need("adamax.beta1"), "adamax.beta1");
        ck.optimizer->beta2 = to_double(need("adamax.beta2"), "adamax.beta2");
        ck.optimizer->eps = to_double(need("adamax.eps"), "adamax.eps");
        ck.optimizer->first_moment.visit(
            [&](const std::string& name, Mat<float>& a) { slots["adamax.m." + name] = &a; });
        ck.optimizer->inf_norm.visit(
            [&](const std::string& name, Mat<float>& a) { slots["adamax.u." + name] = &a; });
    }
    if (array_count != slots.size()) {
        throw CheckpointError("expected " + std::to_string(slots.size()) + " arrays, header says " +
                              std::to_string(array_count));
    }

    std::unordered_map<std::string, bool> filled;
    std::string bytes;
    for (std::size_t i = 0; i < array_count; ++i) {
        if (!std::getline(is, line)) throw CheckpointError("truncated checkpoint: missing array header");
        const auto sp = line.rfind(' ');
        const auto x = sp == std::string::npos ? sp : line.find('x', sp);
        if (x == std::string::npos) throw CheckpointError("malformed array header: '" + line + "'");
        const std::string name = line.substr(0, sp);
        const std::size_t rows = to_size(line.substr(sp + 1, x - sp - 1), name + " rows");
        const std::size_t cols = to_size(line.substr(x + 1), name + " cols");
        auto it = slots.find(name);
        if (it == slots.end()) throw CheckpointError("unexpected array '" + name + "'");
        if (filled[name]) throw CheckpointError("duplicate array '" + name + "'");
        Mat<float>& a = *it->second;
        if (static_cast<std::size_t>(a.rows()) != rows || static_cast<std::size_t>(a.cols()) != cols) {
            throw CheckpointError("shape mismatch for '" + name + "': expected " +
                                  std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                  ", found " + std::to_string(rows) + "x" + std::to_string(cols));
        }
        bytes.resize(rows * cols * 4);
        is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (static_cast<std::size_t>(is.gcount()) != bytes.size()) {
            throw CheckpointError("truncated checkpoint in array '" + name + "'");
        }
        for (std::size_t e = 0; e < rows * cols; ++e) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[e * 4 + static_cast<std::size_t>(b)]))
                        << (8 * b);
            }
            std::memcpy(a.data() + e, &bits, 4);
        }
        filled[name] = true;
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw CheckpointError("trailing bytes after last array");
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    return load_checkpoint(in);
}

}  // namespace dombert
