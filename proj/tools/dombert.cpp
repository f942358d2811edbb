// Command-line entry point. Exit status: 0 success, 1 runtime/data error,
// 2 usage error.

#include <iostream>

#include <CLI11.hpp>

#include "dombert/cli.hpp"

using namespace dombert;

int main(int argc, char** argv) {
    CLI::App app{"Domain-oriented masked-language-model training"};
    app.require_subcommand(1);

    cli::IngestOptions ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Tokenize, build the vocabulary and pack a dom-corpus file");
    c_ingest->add_option("--corpus", ingest.corpus, "dom-corpus v1 file")->required();
    c_ingest->add_option("--target", ingest.target, "Target domain name")->required();
    c_ingest->add_option("--max-len", ingest.max_len, "Packed example length")->capture_default_str();
    c_ingest->add_option("--min-count", ingest.min_count)->capture_default_str();
    c_ingest->add_option("--max-vocab", ingest.max_vocab, "Retained non-reserved tokens")->capture_default_str();
    c_ingest->add_option("--out", ingest.out, "Packed corpus output path")->required();

    cli::TrainOptions train;
    std::string resume;
    auto* c_train = app.add_subcommand("train", "Train on a packed corpus");
    c_train->add_option("--packed", train.packed)->required();
    c_train->add_option("--lambda", train.lambda, "MLM / domain-classification mix")->capture_default_str();
    c_train->add_option("--tau", train.tau, "Sampler temperature")->capture_default_str();
    c_train->add_option("--lr", train.lr)->capture_default_str();
    c_train->add_option("--batch", train.batch, "Micro-batch size")->capture_default_str();
    c_train->add_option("--accum", train.accum, "Gradient accumulation steps")->capture_default_str();
    c_train->add_option("--epochs", train.epochs)->capture_default_str();
    c_train->add_option("--seed", train.seed)->capture_default_str();
    c_train->add_option("--m", train.m, "Domain embedding size")->capture_default_str();
    c_train->add_option("--hidden", train.hidden)->capture_default_str();
    c_train->add_option("--layers", train.layers)->capture_default_str();
    c_train->add_option("--heads", train.heads)->capture_default_str();
    c_train->add_option("--ff", train.ff)->capture_default_str();
    c_train->add_flag("--dropout", train.dropout, "Enable dropout (off for domain-oriented training)");
    c_train->add_option("--dropout-prob", train.dropout_prob)->capture_default_str();
    c_train->add_option("--checkpoint-interval", train.checkpoint_interval, "Optimizer steps; 0 disables")
        ->capture_default_str();
    c_train->add_option("--top", train.top, "Domains in top-k reports")->capture_default_str();
    c_train->add_option("--refresh", train.refresh, "step | epoch")->capture_default_str();
    c_train->add_option("--sampling", train.sampling, "domain | target-only")->capture_default_str();
    c_train->add_option("--resume", resume, "Continue from a checkpoint");
    c_train->add_option("--out", train.out, "Output directory")->required();

    cli::ReportOptions report;
    auto* c_report = app.add_subcommand("report", "Top relevant domains from a checkpoint");
    c_report->add_option("--ckpt", report.ckpt)->required();
    c_report->add_option("--top", report.top)->capture_default_str();

    cli::GenSynthOptions synth;
    auto* c_synth = app.add_subcommand("gen-synth", "Generate a synthetic clustered corpus");
    auto& s = synth.spec;
    c_synth->add_option("--clusters", s.clusters)->capture_default_str();
    c_synth->add_option("--domains-per-cluster", s.domains_per_cluster)->capture_default_str();
    c_synth->add_option("--shared-vocab", s.shared_vocab)->capture_default_str();
    c_synth->add_option("--unique-vocab", s.unique_vocab)->capture_default_str();
    c_synth->add_option("--background-vocab", s.background_vocab)->capture_default_str();
    c_synth->add_option("--docs", s.docs_per_domain, "Documents per domain")->capture_default_str();
    c_synth->add_option("--min-len", s.min_doc_len)->capture_default_str();
    c_synth->add_option("--max-len", s.max_doc_len)->capture_default_str();
    c_synth->add_option("--mix-shared", s.mix_shared)->capture_default_str();
    c_synth->add_option("--mix-unique", s.mix_unique)->capture_default_str();
    c_synth->add_option("--mix-background", s.mix_background)->capture_default_str();
    c_synth->add_option("--seed", s.seed)->capture_default_str();
    c_synth->add_option("--out", synth.out)->required();

    cli::EvalOptions eval;
    std::string truth, heldout, vocab;
    auto* c_eval = app.add_subcommand("eval", "Domain recovery and pseudo-perplexity");
    c_eval->add_option("--ckpt", eval.ckpt)->required();
    c_eval->add_option("--truth", truth, "Ground-truth cluster map");
    c_eval->add_option("--heldout", heldout, "dom-corpus file with held-out target documents");
    c_eval->add_option("--vocab", vocab, "Vocabulary file from ingest");
    c_eval->add_option("--seed", eval.seed)->capture_default_str();

    cli::BenchOptions bench;
    auto* c_bench = app.add_subcommand("bench-eal", "Benchmark sparse vs full MLM logits");
    c_bench->add_option("--vocab", bench.vocab)->capture_default_str();
    c_bench->add_option("--len", bench.len)->capture_default_str();
    c_bench->add_option("--mask-rate", bench.mask_rate)->capture_default_str();
    c_bench->add_option("--reps", bench.reps)->capture_default_str();
    c_bench->add_option("--batch", bench.batch)->capture_default_str();
    c_bench->add_option("--hidden", bench.hidden)->capture_default_str();
    c_bench->add_option("--layers", bench.layers)->capture_default_str();
    c_bench->add_option("--seed", bench.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_ingest) cli::cmd_ingest(ingest, std::cout);
        if (*c_train) {
            if (!resume.empty()) train.resume = resume;
            cli::cmd_train(train, std::cout);
        }
        if (*c_report) cli::cmd_report(report, std::cout);
        if (*c_synth) cli::cmd_gen_synth(synth, std::cout);
        if (*c_eval) {
            if (!truth.empty()) eval.truth = truth;
            if (!heldout.empty()) eval.heldout = heldout;
            if (!vocab.empty()) eval.vocab = vocab;
            cli::cmd_eval(eval, std::cout);
        }
        if (*c_bench) cli::cmd_bench_eal(bench, std::cout);
    } catch (const cli::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
