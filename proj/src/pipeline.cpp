#include "chunkpool/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "chunkpool/checkpoint.hpp"
#include "chunkpool/errors.hpp"
#include "chunkpool/verification.hpp"

namespace chunkpool {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest-lossless decimal text for a double; stable across runs.
std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace

RunData resolve_run_data(const RunConfig& cfg) {
    RunData data;
    if (cfg.corpus) {
        data.vocab = load_vocab(cfg.vocab_path);
        data.train = load_jsonl_corpus(cfg.corpus->train, cfg.model.labels);
        data.test = load_jsonl_corpus(cfg.corpus->test, cfg.model.labels);
    } else if (cfg.synthetic) {
        data.vocab = synthetic_vocabulary(*cfg.synthetic);
        auto split = generate_synthetic_corpus(*cfg.synthetic, data.vocab);
        data.train = std::move(split.first);
        data.test = std::move(split.second);
    } else {
        throw ConfigError("config needs either corpus paths or a synthetic spec");
    }
    return data;
}

void run_gen_corpus(const RunConfig& cfg, std::ostream& out) {
    if (!cfg.synthetic) throw ConfigError("gen-corpus needs a synthetic spec in the config");
    cfg.synthetic->validate(cfg.model.chunking.content_len);

    Vocabulary vocab = synthetic_vocabulary(*cfg.synthetic);
    auto [train, test] = generate_synthetic_corpus(*cfg.synthetic, vocab);

    fs::create_directories(cfg.output_dir);
    std::string train_path = cfg.output_dir + "/train.jsonl";
    std::string test_path = cfg.output_dir + "/test.jsonl";
    std::string vocab_path = cfg.output_dir + "/vocab.txt";
    save_jsonl_corpus(train, train_path);
    save_jsonl_corpus(test, test_path);
    save_vocab(vocab, vocab_path);

    std::map<std::string, std::size_t> label_counts;
    for (const auto& doc : train)
        for (const auto& name : doc.gold_labels) ++label_counts[name];
    for (const auto& doc : test)
        for (const auto& name : doc.gold_labels) ++label_counts[name];

    out << "wrote " << train.size() << " train documents to " << train_path << "\n";
    out << "wrote " << test.size() << " test documents to " << test_path << "\n";
    out << "wrote vocabulary of " << vocab.size() << " entries to " << vocab_path << "\n";
    for (const auto& [name, count] : label_counts)
        out << "  " << name << ": " << count << " documents\n";
}

TrainResult run_train(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    RunData data = resolve_run_data(cfg);
    Model model(cfg.model, data.vocab, cfg.train.seed);

    TrainResult result;
    result.log = fit(model, data.train, cfg.train);

    fs::create_directories(cfg.output_dir);
    result.checkpoint_path = cfg.output_dir + "/checkpoint.bin";
    result.loss_csv_path = cfg.output_dir + "/loss.csv";
    save_checkpoint(model, result.checkpoint_path);

    std::ostringstream csv;
    csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < result.log.epoch_mean_loss.size(); ++e)
        csv << (e + 1) << "," << fmt_double(result.log.epoch_mean_loss[e]) << "\n";
    write_file(result.loss_csv_path, csv.str());

    out << "trained " << cfg.train.epochs << " epochs over " << data.train.size()
        << " documents\n";
    out << "final mean loss " << fmt_double(result.log.epoch_mean_loss.back()) << "\n";
    out << "checkpoint: " << result.checkpoint_path << "\n";
    out << "loss log: " << result.loss_csv_path << "\n";
    return result;
}

EvalReport run_eval(const std::string& checkpoint_path, const std::string& corpus_path,
                    const std::string& report_path) {
    Model model = load_checkpoint(checkpoint_path);
    auto corpus = load_jsonl_corpus(corpus_path, model.config().labels);
    EvalReport report = evaluate(model, corpus);
    if (!report_path.empty()) {
        fs::path parent = fs::path(report_path).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        write_file(report_path, report.to_json().dump(2) + "\n");
    }
    return report;
}

void run_predict(const std::string& checkpoint_path, const std::string& input_path,
                 std::ostream& out) {
    Model model = load_checkpoint(checkpoint_path);
    const LabelSpace& space = model.config().labels;

    std::ifstream in(input_path, std::ios::binary);
    if (!in) throw DataError("cannot open input file: " + input_path);

    std::string line;
    std::size_t line_no = 0;
    Prng unused(0);
    NoGradGuard guard;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(input_path + ":" + std::to_string(line_no) +
                            ": malformed record: " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
            !rec.contains("text") || !rec["text"].is_string())
            throw DataError(input_path + ":" + std::to_string(line_no) +
                            ": record needs string fields \"id\" and \"text\"");

        Tensor probs =
            model.forward_text(rec["text"].get<std::string>(), Mode::eval, unused);
        auto chosen = decide(probs, space, model.config().classifier.threshold);

        json out_rec;
        out_rec["id"] = rec["id"];
        json names = json::array();
        for (std::size_t j : chosen) names.push_back(space.names[j]);
        out_rec["labels"] = names;
        out_rec["probabilities"] = probs.values();
        out << out_rec.dump() << "\n";
    }
}

int run_grad_check(bool corrupt_fixture, std::ostream& out) {
    auto rows = run_grad_check_suite(corrupt_fixture);
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.name.size());
    for (const auto& r : rows) {
        bool ok = std::isfinite(r.max_rel_err) && r.max_rel_err < kGradTolerance;
        out << std::left << std::setw(static_cast<int>(width) + 2) << r.name << std::right
            << std::scientific << std::setprecision(3) << r.max_rel_err << "  "
            << (ok ? "ok" : "FAIL") << "\n";
    }
    out.flush();
    return suite_passes(rows) ? 0 : 1;
}

}  // namespace chunkpool
