#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dombert/linalg.hpp"
#include "dombert/rng.hpp"

namespace dombert {

/// Shuffled queue over one domain's packed-example indices.
struct DomainQueue {
    std::size_t domain = 0;
    std::vector<std::size_t> order;  // permutation of the domain's example ids
    std::size_t cursor = 0;
};

/// Cosine similarity of every row of D to row t.
std::vector<double> cosine_to_target(const Mat<double>& domain_emb, std::size_t target);

/// Temperature softmax of cosines to the target row, max-subtracted.
/// Throws ConfigError for tau <= 0 and NumericError for a zero-norm row.
std::vector<double> domain_probabilities(const Mat<double>& domain_emb, std::size_t target,
                                         double tau);

class DomainSampler {
  public:
    /// `examples_per_domain[d]` lists the global example ids of domain d.
    /// Every domain needs at least one example. P starts uniform until the
    /// first refresh.
    DomainSampler(std::vector<std::vector<std::size_t>> examples_per_domain, std::size_t target,
                  double tau, std::uint64_t seed);

    /// B i.i.d. draws from Cat(P); each pops the next example of the drawn
    /// domain, reshuffling a queue once it is exhausted. Returns global ids.
    std::vector<std::size_t> sample_batch(std::size_t batch_size);

    /// Replaces P from the current D; queues and the rng are untouched.
    void refresh_probabilities(const Mat<double>& domain_emb);

    /// Test hook and target-only baseline: install an arbitrary P.
    void set_probabilities(std::vector<double> p);

    const std::vector<double>& probabilities() const { return probs_; }
    const std::vector<DomainQueue>& queues() const { return queues_; }
    std::size_t target() const { return target_; }
    double tau() const { return tau_; }
    std::size_t domain_count() const { return members_.size(); }

    /// Queue cursors, permutations and rng state as key=value lines, for
    /// checkpoints.
    std::vector<std::pair<std::string, std::string>> save_state() const;
    void load_state(const std::vector<std::pair<std::string, std::string>>& kv);

  private:
    std::size_t draw_domain();
    std::size_t pop(std::size_t domain);

    std::vector<std::vector<std::size_t>> members_;
    std::vector<DomainQueue> queues_;
    std::vector<double> probs_;
    std::vector<double> cumulative_;
    std::size_t target_;
    double tau_;
    Rng rng_;
};

struct RankedDomain {
    std::string name;
    double cosine = 0.0;
};

/// Source domains ranked by cosine to d_t, descending, ties by name.
/// Throws ConfigError when k exceeds the number of source domains.
std::vector<RankedDomain> report_top_domains(const Mat<double>& domain_emb, std::size_t target,
                                             const std::vector<std::string>& names, std::size_t k);

/// `rank<TAB>domain<TAB>cosine` with six decimals, rank starting at 1.
void write_top_domains(std::ostream& os, const std::vector<RankedDomain>& ranked);

}  // namespace dombert
