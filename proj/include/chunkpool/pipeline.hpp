#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "chunkpool/evaluation.hpp"
#include "chunkpool/run_config.hpp"
#include "chunkpool/training.hpp"

namespace chunkpool {

// Corpora and vocabulary for a run: read from disk when the config names
// corpus files, generated in memory from the synthetic spec otherwise.
struct RunData {
    std::vector<Document> train;
    std::vector<Document> test;
    Vocabulary vocab;
};

RunData resolve_run_data(const RunConfig& cfg);

// gen-corpus: write train.jsonl, test.jsonl, and vocab.txt under the output
// directory and print summary counts.
void run_gen_corpus(const RunConfig& cfg, std::ostream& out);

struct TrainResult {
    std::string checkpoint_path;
    std::string loss_csv_path;
    TrainLog log;
};

// train: fit per the config, then write the checkpoint and the per-epoch
// loss log (CSV: epoch,mean_loss).
TrainResult run_train(const RunConfig& cfg, std::ostream& out);

// eval: score the checkpointed model on a corpus; the report JSON goes to
// the returned value and to report_path.
EvalReport run_eval(const std::string& checkpoint_path, const std::string& corpus_path,
                    const std::string& report_path);

// predict: one output record {id, labels, probabilities} per input record,
// input order preserved. Input records need "id" and "text"; any "labels"
// field is ignored.
void run_predict(const std::string& checkpoint_path, const std::string& input_path,
                 std::ostream& out);

// grad-check: print the per-component table; 0 iff everything passes.
int run_grad_check(bool corrupt_fixture, std::ostream& out);

}  // namespace chunkpool
