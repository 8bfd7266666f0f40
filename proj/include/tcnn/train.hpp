#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcnn/data.hpp"
#include "tcnn/eval.hpp"
#include "tcnn/model.hpp"

namespace tcnn {

struct TrainConfig {
    double learning_rate = 0.05;
    double lambda = 1e-4;  // L2
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 5;  // epochs without validation-F1 improvement
    std::uint64_t seed = 1;
    double pos_weight = 0.0;  // <= 0: use (negatives / positives) of the training set

    void validate() const;
};

/// accumulator += grad^2; param -= lr * grad / sqrt(accumulator + 1e-8).
void adagrad_step(Mat& param, const Mat& grad, Mat& accumulator, double lr);

/// -[pos_weight*y*ln(p) + (1-y)*ln(1-p)]; p must lie strictly in (0,1).
double bce_loss(double p, int y, double pos_weight);

struct Checkpoint {
    std::uint32_t version = 1;
    ModelConfig config;
    ModelParams params;
    std::size_t epoch = 0;
    double best_valid_f1 = 0.0;
    std::uint64_t vocab_hash = 0;
    std::uint64_t kb_hash = 0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double valid_f1 = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStats> history;
};

/// Encode a triple against the KB with the model's sequence length.
Example make_example(const LabeledTriple& triple, const KnowledgeBase& kb, const Vocabulary& vocab,
                     TokenizeMode mode, std::size_t s);

/// Group labeled triples by query text into rerank inputs (candidate set =
/// the kb ids labeled for that query).
std::vector<EvalQuery> queries_from_triples(const std::vector<LabeledTriple>& triples);

/// Validation F1@1 of the current parameters via a full threshold sweep.
double validation_f1(const std::vector<LabeledTriple>& valid_set, const KnowledgeBase& kb,
                     const Vocabulary& vocab, TokenizeMode mode, const ModelParams& params,
                     const ModelConfig& cfg);

/// AdaGrad + BCE + L2 with per-epoch seeded shuffling and early stopping on
/// validation F1; returns the best-F1 checkpoint.
TrainResult train(const std::vector<LabeledTriple>& train_set, const std::vector<LabeledTriple>& valid_set,
                  const KnowledgeBase& kb, const Vocabulary& vocab, TokenizeMode mode,
                  const ModelConfig& cfg, const TrainConfig& tcfg);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tcnn
