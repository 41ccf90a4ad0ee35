#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "chunkpool/errors.hpp"
#include "chunkpool/pipeline.hpp"

namespace {

using namespace chunkpool;

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitUserError = 2;
constexpr int kExitNumericFailure = 3;

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    RunConfig cfg = RunConfig::load(path);
    if (seed) cfg.train.seed = *seed;
    return cfg;
}

// User mistakes (bad config, bad data, bad checkpoint) exit 2; numeric
// trouble during training exits 3.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const NumericError& e) {
        std::cerr << "numeric failure in epoch " << e.epoch() << ": " << e.what() << "\n";
        return kExitNumericFailure;
    } catch (const DomainError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumericFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chunked-encoder document classifier"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, corpus_path, input_path, out_path;
    std::optional<std::uint64_t> seed_override;
    bool corrupt_fixture = false;

    CLI::App* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--seed", seed_override, "override the training seed");

    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--seed", seed_override, "override the training seed");

    CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a corpus");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--corpus", corpus_path, "labeled JSONL corpus")->required();
    eval->add_option("--out", out_path, "report JSON path (default report.json)");

    CLI::App* predict = app.add_subcommand("predict", "label unlabeled documents");
    predict->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    predict->add_option("--input", input_path, "JSONL of {id, text} records")->required();
    predict->add_option("--out", out_path, "output JSONL path (default stdout)");

    CLI::App* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
    grad->add_flag("--corrupt-fixture", corrupt_fixture,
                   "include a deliberately broken backward rule (harness sanity)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUserError;
    }

    if (gen->parsed()) {
        return guarded([&] {
            run_gen_corpus(load_config(config_path, seed_override), std::cout);
            return kExitOk;
        });
    }
    if (train->parsed()) {
        return guarded([&] {
            run_train(load_config(config_path, seed_override), std::cout);
            return kExitOk;
        });
    }
    if (eval->parsed()) {
        return guarded([&] {
            std::string report_path = out_path.empty() ? "report.json" : out_path;
            EvalReport report = run_eval(checkpoint_path, corpus_path, report_path);
            std::cout << report.to_json().dump(2) << "\n";
            return kExitOk;
        });
    }
    if (predict->parsed()) {
        return guarded([&] {
            if (out_path.empty()) {
                run_predict(checkpoint_path, input_path, std::cout);
            } else {
                std::ofstream out(out_path, std::ios::binary);
                if (!out) throw DataError("cannot write output file: " + out_path);
                run_predict(checkpoint_path, input_path, out);
            }
            return kExitOk;
        });
    }
    return guarded([&] { return run_grad_check(corrupt_fixture, std::cout); });
}
