// Acceptance suite. Prints one PASS/FAIL line per criterion; pass criterion
// numbers as arguments to run a subset. Exit status is 1 if any selected
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "dombert/cli.hpp"
#include "dombert/error.hpp"
#include "dombert/sampler.hpp"
#include "support.hpp"

using namespace dombert;
using namespace dombert::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Outcome gradient_correctness() {
    Rng rng(derive_seed(1, Stream::kEval));
    const int configs = 100;
    double worst = 0.0;
    std::string where;
    std::size_t entries = 0;
    for (int i = 0; i < configs; ++i) {
        auto c = random_tiny_case(rng);
        const auto r = grad_check(c.window, c.params, c.config, c.lambda, 1e-4, 32, 1e-6, rng);
        entries += r.entries;
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            where = r.worst;
        }
    }
    std::ostringstream os;
    os << configs << " configs, " << entries << " entries, max rel error " << worst;
    if (!where.empty()) os << " at " << where;
    return {worst < 1e-4, os.str()};
}

Outcome eal_equivalence() {
    // Equivalence in double on a mid-size model.
    ModelConfig m;
    m.vocab_size = 600;
    m.max_len = 48;
    m.hidden = 32;
    m.layers = 2;
    m.heads = 4;
    m.ff = 64;
    m.domain_dim = 8;
    m.n_domains = 3;
    Rng rng(derive_seed(2, Stream::kEval));
    const auto params = random_params<double>(m, rng, 0.1);
    std::vector<PackedExample> exs;
    for (int b = 0; b < 12; ++b) {
        exs.push_back(random_example(rng, m.vocab_size, m.max_len, 10 + rng.below(m.max_len - 9), 0));
    }
    std::vector<const PackedExample*> ptrs;
    for (auto& e : exs) ptrs.push_back(&e);
    const auto batch = mask_examples(ptrs, MaskingPolicy{}, m.vocab_size, 7, 0);
    const auto cache = encode<double>(batch, params, m);
    const auto eal = mlm_logits_eal<double>(cache, batch, params);
    const auto full = mlm_logits_full<double>(cache, params);
    double dev = 0.0;
    std::vector<TokenId> targets;
    Mat<double> gathered(static_cast<Eigen::Index>(eal.index.size()), full.cols());
    for (std::size_t r = 0; r < eal.index.size(); ++r) {
        const auto [b, p] = eal.index[r];
        gathered.row(static_cast<Eigen::Index>(r)) = full.row(static_cast<Eigen::Index>(b * m.max_len + p));
        dev = std::max(dev, (eal.logits.row(static_cast<Eigen::Index>(r)) -
                             gathered.row(static_cast<Eigen::Index>(r))).cwiseAbs().maxCoeff());
    }
    for (const auto& ex : batch.examples) {
        for (const auto& t : ex.targets) targets.push_back(t.original);
    }
    const double loss_dev = std::abs(loss_mlm<double>(eal.logits, targets) - loss_mlm<double>(gathered, targets));

    ModelConfig bench;
    bench.vocab_size = 8000;
    bench.max_len = 128;
    bench.domain_dim = 16;
    bench.n_domains = 2;
    const auto report = bench_eal(bench, 0.15, 5, 8, 0);
    std::ostringstream os;
    os << "logit dev " << dev << ", loss dev " << loss_dev << " (double, " << targets.size()
       << " targets); V=8000 L=128 15%: eal " << report.eal_steps_per_sec << " steps/s, full "
       << report.full_steps_per_sec << " steps/s, speedup " << report.speedup << ", float dev "
       << report.max_logit_deviation;
    const bool pass = !targets.empty() && dev <= 1e-10 && loss_dev <= 1e-10 && report.speedup > 1.0 &&
                      report.max_logit_deviation < 1e-6;
    return {pass, os.str()};
}

Outcome sampler_fidelity() {
    std::vector<std::vector<std::size_t>> members(4);
    const std::size_t sizes[] = {7, 13, 5, 29};
    std::size_t next = 0;
    for (std::size_t d = 0; d < 4; ++d) {
        for (std::size_t i = 0; i < sizes[d]; ++i) members[d].push_back(next++);
    }
    std::vector<std::size_t> owner(next);
    for (std::size_t d = 0; d < 4; ++d) {
        for (auto id : members[d]) owner[id] = d;
    }
    DomainSampler sampler(members, 0, 1.0, derive_seed(3, Stream::kSampler));
    const std::vector<double> p = {0.4, 0.1, 0.2, 0.3};
    sampler.set_probabilities(p);
    const std::size_t draws = 100000;
    std::vector<std::size_t> freq(4, 0);
    std::vector<std::vector<std::size_t>> seen(4);
    bool no_repeat = true;
    std::size_t remaining = draws;
    while (remaining > 0) {
        const std::size_t b = std::min<std::size_t>(remaining, 32);
        for (auto id : sampler.sample_batch(b)) {
            const auto d = owner[id];
            ++freq[d];
            auto& s = seen[d];
            if (std::find(s.begin(), s.end(), id) != s.end()) no_repeat = false;
            s.push_back(id);
            if (s.size() == members[d].size()) s.clear();
        }
        remaining -= b;
    }
    double l1 = 0.0;
    for (std::size_t d = 0; d < 4; ++d) l1 += std::abs(static_cast<double>(freq[d]) / draws - p[d]);

    // Target probability during real training runs, with both refresh cadences.
    auto data = tiny_ingest(3);
    bool target_max = true;
    std::size_t steps = 0;
    for (auto cadence : {RefreshCadence::kPerStep, RefreshCadence::kPerEpoch}) {
        TrainConfig tc;
        tc.micro_batch = 4;
        tc.accum_steps = 2;
        tc.epochs = 3;
        tc.lr = 3e-3;
        tc.seed = 3;
        tc.refresh = cadence;
        Trainer tr(data.packed, tiny_model(data.packed), tc);
        tr.run([&](const Trainer& t, const StepRecord& r) {
            const auto pr = domain_probabilities(t.params().domain_emb.cast<double>(), 0, tc.tau);
            const bool logged = r.target_is_max;
            const bool fresh = std::all_of(pr.begin(), pr.end(), [&](double v) { return v <= pr[0]; });
            target_max = target_max && logged && fresh;
            ++steps;
        });
    }
    std::ostringstream os;
    os << "L1 " << l1 << " over " << draws << " draws; queue repeats " << (no_repeat ? "none" : "FOUND")
       << "; P[t] maximal on " << steps << " training steps: " << (target_max ? "yes" : "no");
    return {l1 < 0.01 && no_repeat && target_max, os.str()};
}

Outcome regularizer_properties() {
    Mat<double> ortho = Mat<double>::Zero(3, 4);
    ortho(0, 0) = 2.0;
    ortho(1, 1) = -1.0;
    ortho(2, 3) = 0.5;
    const double d_ortho = regularizer<double>(ortho);
    Mat<double> pair(2, 2);
    pair << 1.0, 0.0, 0.6, 0.8;
    const double d_pair = regularizer<double>(pair);

    Rng rng(derive_seed(4, Stream::kEval));
    double scale_dev = 0.0;
    bool decreasing = true;
    for (int trial = 0; trial < 200; ++trial) {
        const auto rows = 2 + rng.below(6);
        const auto cols = 1 + rng.below(8);
        Mat<double> d(rows, cols);
        for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.normal();
        Mat<double> scaled = d;
        for (Eigen::Index r = 0; r < scaled.rows(); ++r) scaled.row(r) *= std::exp(3.0 * rng.normal());
        const double base = regularizer<double>(d);
        scale_dev = std::max(scale_dev, std::abs(regularizer<double>(scaled) - base));
        Mat<double> g = Mat<double>::Zero(rows, cols);
        regularizer_backward<double>(d, g);
        if (g.norm() == 0.0) continue;
        const double eta = 1e-4 / g.norm();
        const Mat<double> stepped = d - eta * g;
        if (!(regularizer<double>(stepped) < base)) decreasing = false;
    }
    std::ostringstream os;
    os << "orthogonal " << d_ortho << ", cosine-0.6 pair " << d_pair << ", max scaling dev " << scale_dev
       << ", strict decrease " << (decreasing ? "yes" : "no");
    const bool pass = std::abs(d_ortho) <= 1e-15 && std::abs(d_pair - 0.18) <= 1e-12 && scale_dev <= 1e-12 &&
                      decreasing;
    return {pass, os.str()};
}

Outcome loss_identity() {
    auto data = tiny_ingest(5);
    const std::size_t count_t = data.packed.table.counts[data.packed.table.target];
    bool identity = true;
    bool logged_identity = true;
    double max_head_norm = 0.0;
    std::size_t steps_checked = 0;
    for (double lambda : {0.9, 1.0}) {
        TrainConfig tc;
        tc.lambda = lambda;
        tc.lr = 1e-3;
        tc.micro_batch = 2;
        tc.accum_steps = 2;
        tc.seed = 5;
        tc.epochs = (200 * tc.effective_batch() + count_t - 1) / count_t;
        Trainer tr(data.packed, tiny_model(data.packed), tc);
        std::size_t steps = 0;
        while (steps < 200 && !tr.done()) {
            const auto& r = tr.step();
            const auto& l = r.loss;
            if (l.total != lambda * l.mlm + (1.0 - lambda) * l.cls + l.delta) identity = false;
            double step_no, epoch, total, mlm, cls, delta, pt;
            std::istringstream line(format_step(r));
            line >> step_no >> epoch >> total >> mlm >> cls >> delta >> pt;
            if (std::abs(total - (lambda * mlm + (1.0 - lambda) * cls + delta)) > 2e-6) logged_identity = false;
            if (lambda == 1.0) max_head_norm = std::max(max_head_norm, r.cls_head_grad_norm);
            ++steps;
        }
        steps_checked += steps;
        if (steps < 200) identity = false;
    }
    std::ostringstream os;
    os << steps_checked << " steps (200 at lambda=0.9, 200 at lambda=1); exact identity "
       << (identity ? "yes" : "no") << ", logged identity " << (logged_identity ? "yes" : "no")
       << ", max |grad W,b| at lambda=1: " << max_head_norm;
    return {identity && logged_identity && max_head_norm == 0.0, os.str()};
}

struct RecoveryRun {
    double precision = 0.0;
    double ppl = 0.0;
};

RecoveryRun recovery_run(std::uint64_t seed, double tau, double lr, std::size_t max_len,
                         SamplingMode mode = SamplingMode::kDomainOriented, bool with_ppl = false) {
    SyntheticSpec spec;
    spec.seed = seed;
    const auto syn = gen_synthetic_corpus(spec);
    const auto data = ingest(loaded_from(syn), max_len, 1, 8000);
    TrainConfig tc;
    tc.tau = tau;
    tc.lr = lr;
    tc.epochs = 20;
    tc.seed = seed;
    tc.sampling = mode;
    Trainer tr(data.packed, model_config_for(data.packed, 16), tc);
    tr.run();
    RecoveryRun out;
    const std::size_t t = data.packed.table.target;
    out.precision = eval_domain_recovery(tr.params().domain_emb.cast<double>(), t, data.packed.table.names,
                                         syn.truth);
    if (with_ppl) {
        SyntheticSpec held = spec;
        held.seed = seed + 1000;
        held.docs_per_domain = 60;
        const auto heldout = gen_synthetic_corpus(held);
        std::vector<Document> docs;
        for (const auto& r : heldout.records) {
            if (r.domain == syn.target) docs.push_back({t, tokenize(r.text, data.vocab)});
        }
        out.ppl = eval_pseudo_perplexity(tr.params(), tr.model_config(), pack_domain(docs, max_len),
                                         MaskingPolicy{}, seed);
    }
    return out;
}

Outcome domain_recovery() {
    // Pilot runs at the default hyperparameters stayed near the random
    // baseline, so the frozen threshold is three times 3/11.
    const double baseline = 3.0 / 11.0;
    const double threshold = 3.0 * baseline;
    double mean = 0.0;
    std::ostringstream os;
    os << "per-seed precision@3:";
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = recovery_run(seed, 0.13, 5e-5, 128);
        mean += r.precision / 5.0;
        os << ' ' << fmt("%.3f", r.precision);
    }
    os << "; mean " << fmt("%.3f", mean) << " vs threshold " << fmt("%.3f", threshold)
       << " (3 x random baseline " << fmt("%.3f", baseline) << ")";
    return {mean >= threshold, os.str()};
}

void recovery_diagnostic() {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) mean += recovery_run(seed, 0.5, 1e-3, 64).precision / 5.0;
    std::cout << "[INFO] recovery at tau=0.5, lr=1e-3, L_max=64 (not a criterion): mean precision@3 "
              << fmt("%.3f", mean) << '\n';
    const auto dom = recovery_run(0, 0.5, 1e-3, 64, SamplingMode::kDomainOriented, true);
    const auto tgt = recovery_run(0, 0.5, 1e-3, 64, SamplingMode::kTargetOnly, true);
    std::cout << "[INFO] held-out target pseudo-perplexity, seed 0: domain-oriented " << fmt("%.3f", dom.ppl)
              << ", target-only " << fmt("%.3f", tgt.ppl) << '\n';
}

Outcome determinism() {
    namespace fs = std::filesystem;
    const auto dir = scratch_dir("acceptance-determinism");
    auto run = [&]() {
        std::ostringstream sink;
        cli::GenSynthOptions g;
        g.spec = tiny_spec(7);
        g.out = dir / "corpus.tsv";
        cli::cmd_gen_synth(g, sink);
        cli::IngestOptions in;
        in.corpus = g.out;
        in.target = "c0-d0";
        in.max_len = 32;
        in.out = dir / "corpus.pack";
        cli::cmd_ingest(in, sink);
        cli::TrainOptions tr;
        tr.packed = in.out;
        tr.epochs = 3;
        tr.lr = 1e-3;
        tr.seed = 7;
        tr.m = 8;
        tr.hidden = 16;
        tr.layers = 1;
        tr.ff = 32;
        tr.batch = 4;
        tr.accum = 2;
        tr.checkpoint_interval = 5;
        tr.out = dir / "run";
        cli::cmd_train(tr, sink);
        std::ostringstream report;
        cli::ReportOptions rep;
        rep.ckpt = tr.out / "final.ckpt";
        cli::cmd_report(rep, report);
        std::vector<std::pair<std::string, std::string>> files;
        for (const auto& e : fs::recursive_directory_iterator(dir)) {
            if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), dir).string(), read_file(e.path()));
        }
        std::sort(files.begin(), files.end());
        files.emplace_back("<report>", report.str());
        files.emplace_back("<stdout>", sink.str());
        return files;
    };
    const auto first = run();
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto second = run();
    std::size_t bytes = 0;
    bool same = first == second;
    for (const auto& f : first) bytes += f.second.size();
    const bool has_ckpt = std::any_of(first.begin(), first.end(),
                                      [](const auto& f) { return f.first.find("ckpt-5.ckpt") != std::string::npos; });
    std::ostringstream os;
    os << first.size() << " artifacts, " << bytes << " bytes, byte-identical " << (same ? "yes" : "no");
    fs::remove_all(dir);
    return {same && has_ckpt, os.str()};
}

Outcome masking_statistics() {
    Rng rng(derive_seed(8, Stream::kEval));
    const std::size_t vocab = 1000;
    const std::size_t max_len = 128;
    std::vector<PackedExample> exs;
    std::size_t candidates = 0;
    while (candidates < 100000) {
        auto ex = random_example(rng, vocab, max_len, 2 + rng.below(max_len - 1), 0);
        for (std::size_t p = 0; p < ex.valid_len; ++p) candidates += is_mask_candidate(ex.ids[p]);
        exs.push_back(std::move(ex));
    }
    std::vector<const PackedExample*> ptrs;
    for (auto& e : exs) ptrs.push_back(&e);
    const auto batch = mask_examples(ptrs, MaskingPolicy{}, vocab, 8, 0);
    std::size_t selected = 0, masked = 0, random = 0, kept = 0;
    bool special_hit = false;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& m = batch.examples[i];
        for (std::size_t k = 0; k < m.targets.size(); ++k) {
            const auto pos = m.targets[k].position;
            if (pos >= exs[i].valid_len || !is_mask_candidate(exs[i].ids[pos])) special_hit = true;
            ++selected;
            switch (m.corruption[k]) {
                case Corruption::kMask: ++masked; break;
                case Corruption::kRandom: ++random; break;
                case Corruption::kKeep: ++kept; break;
            }
        }
    }
    const double frac = static_cast<double>(selected) / static_cast<double>(candidates);
    const double fm = static_cast<double>(masked) / selected;
    const double fr = static_cast<double>(random) / selected;
    const double fk = static_cast<double>(kept) / selected;
    std::ostringstream os;
    os << candidates << " candidates, selected " << fmt("%.4f", frac) << ", split " << fmt("%.4f", fm) << '/'
       << fmt("%.4f", fr) << '/' << fmt("%.4f", fk) << ", special/pad selected " << (special_hit ? "yes" : "no");
    const bool pass = frac >= 0.145 && frac <= 0.155 && std::abs(fm - 0.8) <= 0.01 && std::abs(fr - 0.1) <= 0.01 &&
                      std::abs(fk - 0.1) <= 0.01 && !special_hit;
    return {pass, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all = {
        {1, "gradient correctness", gradient_correctness},
        {2, "EAL equivalence and benefit", eal_equivalence},
        {3, "sampler fidelity", sampler_fidelity},
        {4, "regularizer properties", regularizer_properties},
        {5, "loss identity", loss_identity},
        {6, "domain-relevance recovery", domain_recovery},
        {7, "determinism", determinism},
        {8, "masking statistics", masking_statistics},
    };
    std::set<int> selected;
    bool diagnostics = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--diagnostics") {
            diagnostics = true;
        } else {
            selected.insert(std::atoi(argv[i]));
        }
    }
    bool ok = true;
    for (const auto& c : all) {
        if (!selected.empty() && !selected.contains(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.id << ". " << c.name << ": " << o.detail << " ("
                  << fmt("%.1f", secs) << " s)" << std::endl;
        ok = ok && o.pass;
    }
    if (diagnostics) recovery_diagnostic();
    return ok ? 0 : 1;
}
