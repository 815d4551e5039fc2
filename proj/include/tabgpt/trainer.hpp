#ifndef TABGPT_TRAINER_HPP
#define TABGPT_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tabgpt/model.hpp"
#include "tabgpt/notes.hpp"
#include "tabgpt/tensor.hpp"

namespace tabgpt {

struct TrainConfig {
    int n = kMaxContext;      // window / sequence length
    int batch_size = 512;
    float lr = 0.003f;
    float beta1 = 0.96f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float dropout = 0.30f;
    int blocks = 3;
    int heads = 10;
    int head_dim = 32;
    int ffn_dim = 512;
    int max_epochs = 200;
    int patience = 10;        // consecutive non-improving epochs before stopping
    int stride = 25;
    float split_ratio = 0.9f;
    std::uint64_t seed = 0;
};

struct TrainingExample {
    std::vector<TokenId> input;  // length n
    std::vector<TokenId> target; // input shifted by one
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0, train_accuracy = 0;
    double val_loss = 0, val_accuracy = 0;
};

struct Checkpoint {
    std::uint32_t version = 1;
    Vocabulary vocab;
    TrainConfig config;
    ModelParams<float> params;
    EpochMetrics best;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> metrics;
    std::size_t skipped_sequences = 0; // too short to yield a window
};

// Sliding windows of n+1 tokens; sequences shorter than n+1 are skipped.
std::vector<TrainingExample> window_dataset(const std::vector<std::vector<TokenId>>& sequences, int n,
                                            int stride, std::size_t* skipped = nullptr);

// Seed-deterministic shuffle, then the first ceil(ratio*n) examples train.
std::pair<std::vector<TrainingExample>, std::vector<TrainingExample>>
split_train_val(std::vector<TrainingExample> examples, double ratio, std::uint64_t seed);

// Fraction of rows whose argmax equals the target; ties go to the lowest index.
template <typename Real>
double accuracy(const Tensor<Real>& logits, const std::vector<TokenId>& targets) {
    if (logits.rank() != 2 || logits.rows() != static_cast<int>(targets.size()))
        throw Error("accuracy: logit rows do not match target count");
    int hits = 0;
    for (int i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        if (best == targets[i]) ++hits;
    }
    return targets.empty() ? 0.0 : static_cast<double>(hits) / targets.size();
}

// Full training run: vocabulary build, windowing, 90-10 split, Adam loop with
// early stopping on validation loss. on_epoch (if set) fires after each epoch.
TrainResult train(const TrainConfig& config, const std::vector<std::vector<NoteTuple>>& corpus,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Mean loss and accuracy of a parameter set over a set of examples
// (evaluation mode, no dropout).
std::pair<double, double> evaluate(const ModelParams<float>& params,
                                   const std::vector<TrainingExample>& examples);

} // namespace tabgpt

#endif
