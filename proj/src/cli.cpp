#include "dombert/cli.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "dombert/error.hpp"

namespace dombert::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ParseError("cannot write " + path.string());
    return os;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open " + path.string());
    return is;
}

fs::path with_suffix(const fs::path& p, const char* suffix) {
    return fs::path(p.string() + suffix);
}

void emit(std::ostream& out, const Manifest& manifest) { write_manifest(out, manifest); }

}  // namespace

fs::path vocab_path(const fs::path& packed) { return with_suffix(packed, ".vocab"); }
fs::path domains_path(const fs::path& packed) { return with_suffix(packed, ".domains"); }
fs::path stats_path(const fs::path& packed) { return with_suffix(packed, ".stats"); }

void cmd_ingest(const IngestOptions& opt, std::ostream& out) {
    if (opt.target.empty()) throw UsageError("--target is required");
    if (opt.min_count < 1) throw UsageError("--min-count must be >= 1");
    if (opt.max_len < 3) throw UsageError("--max-len must be >= 3");
    emit(out, {{"command", "ingest"},
               {"version", kArtifactVersion},
               {"corpus", opt.corpus.string()},
               {"target", opt.target},
               {"max_len", std::to_string(opt.max_len)},
               {"min_count", std::to_string(opt.min_count)},
               {"max_vocab", std::to_string(opt.max_vocab)},
               {"out", opt.out.string()}});

    const auto loaded = load_corpus(opt.corpus, opt.target);
    const auto result = ingest(loaded, opt.max_len, opt.min_count, opt.max_vocab);
    validate_packed(result.packed);

    {
        auto os = open_out(opt.out);
        write_packed(os, result.packed);
    }
    {
        auto os = open_out(vocab_path(opt.out));
        result.vocab.write(os);
    }
    {
        auto os = open_out(domains_path(opt.out));
        write_domains(os, result.packed.table);
    }
    {
        auto os = open_out(stats_path(opt.out));
        const auto rows = corpus_stats(result.packed.table);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            os << (i + 1) << '\t' << rows[i].first << '\t' << rows[i].second << '\n';
        }
    }
    out << "domains\t" << result.packed.table.size() << '\n'
        << "vocab_size\t" << result.vocab.size() << '\n'
        << "packed_examples\t" << result.packed.examples.size() << '\n'
        << "target_examples\t" << result.packed.table.counts[result.packed.table.target] << '\n';
}

PackedCorpus load_packed_corpus(const fs::path& packed) {
    auto is = open_in(packed);
    auto corpus = read_packed(is);
    auto ds = open_in(domains_path(packed));
    auto table = read_domains(ds);
    if (table.size() != corpus.table.size()) {
        throw ParseError("domains sidecar disagrees with the packed header");
    }
    table.counts = corpus.table.counts;
    corpus.table = std::move(table);
    return corpus;
}

Manifest train_manifest(const TrainOptions& opt) {
    return {{"command", "train"},
            {"version", kArtifactVersion},
            {"packed", opt.packed.string()},
            {"lambda", num(opt.lambda)},
            {"tau", num(opt.tau)},
            {"lr", num(opt.lr)},
            {"batch", std::to_string(opt.batch)},
            {"accum", std::to_string(opt.accum)},
            {"epochs", std::to_string(opt.epochs)},
            {"seed", std::to_string(opt.seed)},
            {"m", std::to_string(opt.m)},
            {"hidden", std::to_string(opt.hidden)},
            {"layers", std::to_string(opt.layers)},
            {"heads", std::to_string(opt.heads)},
            {"ff", std::to_string(opt.ff)},
            {"dropout", opt.dropout ? "1" : "0"},
            {"dropout_prob", num(opt.dropout_prob)},
            {"checkpoint_interval", std::to_string(opt.checkpoint_interval)},
            {"top", std::to_string(opt.top)},
            {"refresh", opt.refresh},
            {"sampling", opt.sampling},
            {"resume", opt.resume ? opt.resume->string() : ""},
            {"out", opt.out.string()}};
}

void cmd_train(const TrainOptions& opt, std::ostream& out) {
    if (!(opt.lambda >= 0.0 && opt.lambda <= 1.0)) throw UsageError("--lambda must lie in [0, 1]");
    if (!(opt.tau > 0.0)) throw UsageError("--tau must be > 0");
    if (!(opt.lr > 0.0)) throw UsageError("--lr must be > 0");
    if (opt.batch < 1 || opt.accum < 1) throw UsageError("--batch and --accum must be >= 1");
    if (opt.refresh != "step" && opt.refresh != "epoch") throw UsageError("--refresh must be step or epoch");
    if (opt.sampling != "domain" && opt.sampling != "target-only") {
        throw UsageError("--sampling must be domain or target-only");
    }

    const auto manifest = train_manifest(opt);
    emit(out, manifest);

    const auto corpus = load_packed_corpus(opt.packed);
    ModelConfig model = model_config_for(corpus, opt.m);
    model.hidden = opt.hidden;
    model.layers = opt.layers;
    model.heads = opt.heads;
    model.ff = opt.ff;
    model.dropout = opt.dropout_prob;

    TrainConfig tc;
    tc.lambda = opt.lambda;
    tc.tau = opt.tau;
    tc.lr = opt.lr;
    tc.micro_batch = opt.batch;
    tc.accum_steps = opt.accum;
    tc.epochs = opt.epochs;
    tc.seed = opt.seed;
    tc.checkpoint_interval = opt.checkpoint_interval;
    tc.report_top = opt.top;
    tc.dropout_enabled = opt.dropout;
    tc.refresh = opt.refresh == "epoch" ? RefreshCadence::kPerEpoch : RefreshCadence::kPerStep;
    tc.sampling = opt.sampling == "target-only" ? SamplingMode::kTargetOnly : SamplingMode::kDomainOriented;

    fs::create_directories(opt.out);
    auto log = open_out(opt.out / "train.log");
    write_manifest(log, manifest);

    auto trainer = opt.resume ? Trainer::resume(corpus, load_checkpoint(*opt.resume), tc)
                              : Trainer(corpus, model, tc);
    trainer.run([&](const Trainer& tr, const StepRecord& rec) {
        log << format_step(rec) << '\n';
        if (tc.checkpoint_interval && rec.step % tc.checkpoint_interval == 0) {
            save_checkpoint(opt.out / ("ckpt-" + std::to_string(rec.step) + ".ckpt"), tr.checkpoint());
            log << "# top-k step=" << rec.step << '\n';
            write_top_domains(log, tr.top_domains(tc.report_top));
        }
    });
    save_checkpoint(opt.out / "final.ckpt", trainer.checkpoint());
    const auto top = trainer.top_domains(tc.report_top);
    {
        auto os = open_out(opt.out / "top_domains.tsv");
        write_top_domains(os, top);
    }
    log << "# final top-k step=" << trainer.steps_done() << '\n';
    write_top_domains(log, top);
    out << "steps\t" << trainer.steps_done() << '\n';
    if (!trainer.records().empty()) out << "last\t" << format_step(trainer.records().back()) << '\n';
    write_top_domains(out, top);
}

void cmd_report(const ReportOptions& opt, std::ostream& out) {
    const auto ck = load_checkpoint(opt.ckpt);
    const std::size_t k = std::min(opt.top, ck.domain_names.size() - 1);
    write_top_domains(out, report_top_domains(ck.params.domain_emb.cast<double>(), ck.target,
                                              ck.domain_names, k));
}

void cmd_gen_synth(const GenSynthOptions& opt, std::ostream& out) {
    const auto& s = opt.spec;
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    emit(out, {{"command", "gen-synth"},
               {"version", kArtifactVersion},
               {"clusters", std::to_string(s.clusters)},
               {"domains_per_cluster", std::to_string(s.domains_per_cluster)},
               {"shared_vocab", std::to_string(s.shared_vocab)},
               {"unique_vocab", std::to_string(s.unique_vocab)},
               {"background_vocab", std::to_string(s.background_vocab)},
               {"docs_per_domain", std::to_string(s.docs_per_domain)},
               {"min_doc_len", std::to_string(s.min_doc_len)},
               {"max_doc_len", std::to_string(s.max_doc_len)},
               {"mix", num(s.mix_shared) + "," + num(s.mix_unique) + "," + num(s.mix_background)},
               {"seed", std::to_string(s.seed)},
               {"out", opt.out.string()}});
    const auto corpus = gen_synthetic_corpus(s);
    {
        auto os = open_out(opt.out);
        write_corpus(os, corpus.records);
    }
    {
        auto os = open_out(with_suffix(opt.out, ".truth"));
        write_truth(os, corpus);
    }
    out << "target\t" << corpus.target << '\n' << "documents\t" << corpus.records.size() << '\n';
}

void cmd_eval(const EvalOptions& opt, std::ostream& out) {
    if (!opt.truth && !opt.heldout) throw UsageError("nothing to evaluate: pass --truth and/or --heldout");
    if (opt.heldout && !opt.vocab) throw UsageError("--heldout requires --vocab");
    const auto ck = load_checkpoint(opt.ckpt);
    if (opt.truth) {
        auto is = open_in(*opt.truth);
        const auto truth = read_truth(is);
        out << "precision_at_k\t"
            << num(eval_domain_recovery(ck.params.domain_emb.cast<double>(), ck.target, ck.domain_names, truth))
            << '\n';
    }
    if (opt.heldout) {
        auto vs = open_in(*opt.vocab);
        const auto vocab = Vocabulary::read(vs);
        if (vocab.size() != ck.model.vocab_size) throw ConfigError("vocabulary does not match checkpoint");
        const auto target_name = ck.domain_names[ck.target];
        const auto loaded = load_corpus(*opt.heldout, target_name);
        std::vector<Document> docs;
        for (const auto& r : loaded.records) {
            if (r.domain != target_name) continue;
            auto ids = tokenize(r.text, vocab);
            if (!ids.empty()) docs.push_back({ck.target, std::move(ids)});
        }
        const auto packed = pack_domain(docs, ck.model.max_len);
        const double ppl = eval_pseudo_perplexity(ck.params, ck.model, packed, MaskingPolicy{}, opt.seed);
        out << "pseudo_perplexity\t" << num(ppl) << '\n';
    }
}

void cmd_bench_eal(const BenchOptions& opt, std::ostream& out) {
    if (!(opt.mask_rate >= 0.0 && opt.mask_rate <= 1.0)) throw UsageError("--mask-rate must lie in [0, 1]");
    if (opt.vocab <= special::kCount) throw UsageError("--vocab must exceed the reserved tokens");
    ModelConfig cfg;
    cfg.vocab_size = opt.vocab;
    cfg.max_len = opt.len;
    cfg.hidden = opt.hidden;
    cfg.layers = opt.layers;
    cfg.heads = opt.heads;
    cfg.ff = opt.ff;
    cfg.domain_dim = 16;
    cfg.n_domains = 2;
    emit(out, {{"command", "bench-eal"},
               {"version", kArtifactVersion},
               {"vocab", std::to_string(opt.vocab)},
               {"len", std::to_string(opt.len)},
               {"mask_rate", num(opt.mask_rate)},
               {"reps", std::to_string(opt.reps)},
               {"batch", std::to_string(opt.batch)},
               {"hidden", std::to_string(opt.hidden)},
               {"layers", std::to_string(opt.layers)},
               {"seed", std::to_string(opt.seed)}});
    write_bench_report(out, bench_eal(cfg, opt.mask_rate, opt.reps, opt.batch, opt.seed));
}

}  // namespace dombert::cli
