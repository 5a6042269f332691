// Copyright 2026 The cassnat authors
// Licensed under the Apache License, Version 2.0
//
// Command-line front end: train, decode, align, bench, gradcheck, analyze.

#include <CLI11.hpp>

#include "cassnat/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"CTC-alignment single-step non-autoregressive speech transformer"};
    app.require_subcommand(1);
    app.footer("The environment variable CASSNAT_SEED overrides the config seed.");

    using namespace cassnat::commands;

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model on the synthetic task");
    train_cmd->add_option("--config", train_args.config, "run configuration file")->required();
    train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
    train_cmd->add_option("--init-encoder", train_args.init_encoder,
                          "AT checkpoint to initialize the encoder from");
    train_cmd->add_flag("--at-baseline", train_args.at_baseline,
                        "train the autoregressive baseline instead");

    DecodeArgs decode_args;
    auto* decode_cmd = app.add_subcommand("decode", "single-step decode of feature files");
    decode_cmd->add_option("--ckpt", decode_args.ckpt, "model checkpoint")->required();
    decode_cmd->add_option("--input", decode_args.input, "feature file or directory")->required();
    decode_cmd->add_option("--beam", decode_args.beam, "alignment beam (default greedy)");

    AlignArgs align_args;
    auto* align_cmd = app.add_subcommand("align", "forced alignment to token spans");
    align_cmd->add_option("--ckpt", align_args.ckpt, "model checkpoint")->required();
    align_cmd->add_option("--input", align_args.input, "feature file or directory")->required();
    align_cmd->add_option("--labels", align_args.labels, "label file, one utterance per line")
        ->required();

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "decode latency: single-step vs autoregressive");
    bench_cmd->add_option("--ckpt-nat", bench_args.ckpt_nat, "CASS-NAT checkpoint")->required();
    bench_cmd->add_option("--ckpt-at", bench_args.ckpt_at, "AT baseline checkpoint")->required();
    bench_cmd->add_option("--lengths", bench_args.lengths, "output lengths to measure");
    bench_cmd->add_option("--repeats", bench_args.repeats, "repeats per length (median reported)");

    GradcheckArgs grad_args;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference checks for every block");
    grad_cmd->add_option("--config", grad_args.config, "run configuration (toy sizes otherwise)");
    grad_cmd->add_option("--module", grad_args.module, "check a single block by name");
    grad_cmd->add_flag("--inject-fault", grad_args.inject_fault,
                       "add a deliberately wrong gradient (harness self-test)");

    AnalyzeArgs analyze_args;
    auto* analyze_cmd = app.add_subcommand("analyze", "attention and embedding analyses");
    analyze_cmd->add_option("--ckpt", analyze_args.ckpt, "model checkpoint")->required();
    analyze_cmd->add_option("--input", analyze_args.input, "feature file or directory")->required();
    analyze_cmd->add_option("--labels", analyze_args.labels, "labels for embed/pca/neighbors modes");
    analyze_cmd->add_option("--mode", analyze_args.mode, "attn | embed | pca | neighbors");
    analyze_cmd->add_option("--layer", analyze_args.layer, "block index or 'last'");
    analyze_cmd->add_option("--heads", analyze_args.heads, "head range like 5-8, or 'all'");
    analyze_cmd->add_option("--module", analyze_args.modules,
                            "comma list of enc,sad,mad,mad_cross,tae (attn mode)");
    analyze_cmd->add_option("--token", analyze_args.token, "query token id (neighbors mode)");
    analyze_cmd->add_option("-n", analyze_args.top_n, "neighbor count (neighbors mode)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage problems exit 1
    }

    if (train_cmd->parsed()) return run_guarded([&] { return train(train_args); });
    if (decode_cmd->parsed()) return run_guarded([&] { return decode(decode_args); });
    if (align_cmd->parsed()) return run_guarded([&] { return align(align_args); });
    if (bench_cmd->parsed()) return run_guarded([&] { return bench(bench_args); });
    if (grad_cmd->parsed()) return run_guarded([&] { return gradcheck(grad_args); });
    if (analyze_cmd->parsed()) return run_guarded([&] { return analyze(analyze_args); });
    return 1;
}
