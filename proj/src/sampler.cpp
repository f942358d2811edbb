#include "dombert/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "dombert/error.hpp"

namespace dombert {

std::vector<double> cosine_to_target(const Mat<double>& domain_emb, std::size_t target) {
    const auto n = static_cast<std::size_t>(domain_emb.rows());
    if (target >= n) throw ConfigError("target index out of range");
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = domain_emb.row(static_cast<Eigen::Index>(i)).norm();
        if (!(norms[i] > 0.0)) {
            throw NumericError("domain embedding row " + std::to_string(i) + " has zero norm");
        }
    }
    const auto t = domain_emb.row(static_cast<Eigen::Index>(target));
    std::vector<double> cos(n);
    for (std::size_t i = 0; i < n; ++i) {
        cos[i] = i == target ? 1.0
                             : t.dot(domain_emb.row(static_cast<Eigen::Index>(i))) /
                                   (norms[i] * norms[target]);
    }
    return cos;
}

std::vector<double> domain_probabilities(const Mat<double>& domain_emb, std::size_t target,
                                         double tau) {
    if (!(tau > 0.0)) throw ConfigError("temperature tau must be > 0");
    auto p = cosine_to_target(domain_emb, target);
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp((v - mx) / tau);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

DomainSampler::DomainSampler(std::vector<std::vector<std::size_t>> examples_per_domain,
                             std::size_t target, double tau, std::uint64_t seed)
    : members_(std::move(examples_per_domain)), target_(target), tau_(tau), rng_(seed) {
    if (!(tau > 0.0)) throw ConfigError("temperature tau must be > 0");
    if (target_ >= members_.size()) throw ConfigError("target index out of range");
    queues_.resize(members_.size());
    for (std::size_t d = 0; d < members_.size(); ++d) {
        if (members_[d].empty()) {
            throw ConfigError("domain " + std::to_string(d) + " has no packed examples");
        }
        auto& q = queues_[d];
        q.domain = d;
        q.order.resize(members_[d].size());
        std::iota(q.order.begin(), q.order.end(), std::size_t{0});
        rng_.shuffle(std::span<std::size_t>(q.order));
    }
    set_probabilities(std::vector<double>(members_.size(), 1.0 / static_cast<double>(members_.size())));
}

void DomainSampler::set_probabilities(std::vector<double> p) {
    if (p.size() != members_.size()) throw ConfigError("probability vector has wrong length");
    probs_ = std::move(p);
    cumulative_.resize(probs_.size());
    std::partial_sum(probs_.begin(), probs_.end(), cumulative_.begin());
}

void DomainSampler::refresh_probabilities(const Mat<double>& domain_emb) {
    if (static_cast<std::size_t>(domain_emb.rows()) != members_.size()) {
        throw ConfigError("domain embedding row count does not match sampler domains");
    }
    set_probabilities(domain_probabilities(domain_emb, target_, tau_));
}

std::size_t DomainSampler::draw_domain() {
    const double u = rng_.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    auto d = static_cast<std::size_t>(it - cumulative_.begin());
    return d < probs_.size() ? d : probs_.size() - 1;
}

std::size_t DomainSampler::pop(std::size_t domain) {
    auto& q = queues_[domain];
    if (q.cursor == q.order.size()) {
        rng_.shuffle(std::span<std::size_t>(q.order));
        q.cursor = 0;
    }
    return members_[domain][q.order[q.cursor++]];
}

std::vector<std::size_t> DomainSampler::sample_batch(std::size_t batch_size) {
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) out.push_back(pop(draw_domain()));
    return out;
}

std::vector<std::pair<std::string, std::string>> DomainSampler::save_state() const {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("sampler.rng", rng_.state());
    for (const auto& q : queues_) {
        std::ostringstream os;
        os << q.cursor;
        for (auto i : q.order) os << ' ' << i;
        kv.emplace_back("sampler.queue." + std::to_string(q.domain), os.str());
    }
    return kv;
}

void DomainSampler::load_state(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::unordered_map<std::string, std::string> map(kv.begin(), kv.end());
    auto rng_it = map.find("sampler.rng");
    if (rng_it == map.end()) throw CheckpointError("checkpoint lacks sampler.rng");
    std::vector<DomainQueue> queues(queues_.size());
    for (std::size_t d = 0; d < queues_.size(); ++d) {
        auto it = map.find("sampler.queue." + std::to_string(d));
        if (it == map.end()) throw CheckpointError("checkpoint lacks sampler queue " + std::to_string(d));
        std::istringstream is(it->second);
        auto& q = queues[d];
        q.domain = d;
        is >> q.cursor;
        std::size_t v = 0;
        while (is >> v) q.order.push_back(v);
        auto sorted = q.order;
        std::sort(sorted.begin(), sorted.end());
        bool perm = sorted.size() == members_[d].size();
        for (std::size_t i = 0; perm && i < sorted.size(); ++i) perm = sorted[i] == i;
        if (!perm || q.cursor > q.order.size()) {
            throw CheckpointError("sampler queue " + std::to_string(d) + " does not match corpus");
        }
    }
    Rng rng;
    rng.set_state(rng_it->second);
    queues_ = std::move(queues);
    rng_ = rng;
}

std::vector<RankedDomain> report_top_domains(const Mat<double>& domain_emb, std::size_t target,
                                             const std::vector<std::string>& names, std::size_t k) {
    if (names.size() != static_cast<std::size_t>(domain_emb.rows())) {
        throw ConfigError("domain names do not match embedding rows");
    }
    if (k + 1 > names.size()) throw ConfigError("k exceeds the number of source domains");
    const auto cos = cosine_to_target(domain_emb, target);
    std::vector<RankedDomain> ranked;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i != target) ranked.push_back({names[i], cos[i]});
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedDomain& a, const RankedDomain& b) {
        return a.cosine != b.cosine ? a.cosine > b.cosine : a.name < b.name;
    });
    ranked.resize(k);
    return ranked;
}

void write_top_domains(std::ostream& os, const std::vector<RankedDomain>& ranked) {
    char buf[64];
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f", ranked[i].cosine);
        os << (i + 1) << '\t' << ranked[i].name << '\t' << buf << '\n';
    }
}

}  // namespace dombert
