#include "tabgpt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tabgpt/adam.hpp"
#include "tabgpt/rng.hpp"
#include "tabgpt/tape.hpp"

namespace tabgpt {

std::vector<TrainingExample> window_dataset(const std::vector<std::vector<TokenId>>& sequences, int n,
                                            int stride, std::size_t* skipped) {
    if (n < 1) throw Error("window_dataset: window length must be >= 1");
    if (stride < 1) throw Error("window_dataset: stride must be >= 1");
    std::vector<TrainingExample> out;
    std::size_t skip_count = 0;
    for (const auto& seq : sequences) {
        const std::size_t need = static_cast<std::size_t>(n) + 1;
        if (seq.size() < need) {
            ++skip_count;
            continue;
        }
        for (std::size_t start = 0; start + need <= seq.size(); start += stride) {
            TrainingExample ex;
            ex.input.assign(seq.begin() + start, seq.begin() + start + n);
            ex.target.assign(seq.begin() + start + 1, seq.begin() + start + n + 1);
            out.push_back(std::move(ex));
        }
    }
    if (skipped) *skipped = skip_count;
    return out;
}

std::pair<std::vector<TrainingExample>, std::vector<TrainingExample>>
split_train_val(std::vector<TrainingExample> examples, double ratio, std::uint64_t seed) {
    if (examples.size() < 2) throw Error("split_train_val: need at least 2 examples");
    if (ratio <= 0 || ratio >= 1) throw Error("split_train_val: ratio must be in (0, 1)");
    Rng rng(seed);
    shuffle_in_place(examples, rng);
    const std::size_t n_train =
        static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(examples.size())));
    std::vector<TrainingExample> train(examples.begin(), examples.begin() + n_train);
    std::vector<TrainingExample> val(examples.begin() + n_train, examples.end());
    return {std::move(train), std::move(val)};
}

namespace {

ModelConfig model_config_from(const TrainConfig& c, int vocab_size) {
    ModelConfig mc;
    mc.vocab = vocab_size;
    mc.max_context = c.n;
    mc.blocks = c.blocks;
    mc.heads = c.heads;
    mc.head_dim = c.head_dim;
    mc.ffn_dim = c.ffn_dim;
    mc.dropout = c.dropout;
    return mc;
}

} // namespace

std::pair<double, double> evaluate(const ModelParams<float>& params,
                                   const std::vector<TrainingExample>& examples) {
    double loss = 0, acc = 0;
    for (const auto& ex : examples) {
        Tape<float> tape;
        TapedModel<float> model(tape, params);
        auto logits = model.forward(ex.input);
        std::vector<int> targets(ex.target.begin(), ex.target.end());
        loss += tape.value(tape.cross_entropy(logits, targets)).data[0];
        acc += accuracy(tape.value(logits), ex.target);
    }
    const double n = static_cast<double>(examples.size());
    return {loss / n, acc / n};
}

TrainResult train(const TrainConfig& config, const std::vector<std::vector<NoteTuple>>& corpus,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
    Vocabulary vocab = Vocabulary::build(corpus);
    auto sequences = tokenize_sequences(vocab, corpus);

    std::size_t skipped = 0;
    auto examples = window_dataset(sequences, config.n, config.stride, &skipped);
    if (examples.size() < 2)
        throw Error("corpus yields " + std::to_string(examples.size()) +
                    " training example(s); need at least 2 (sequences must exceed n tokens)");
    auto [train_set, val_set] = split_train_val(std::move(examples), config.split_ratio, config.seed);
    // With very few examples ceil(ratio*n) can swallow everything; fall back
    // to monitoring training loss so early stopping still has a signal.
    const bool has_val = !val_set.empty();

    ModelConfig mc = model_config_from(config, vocab.size());
    ModelParams<float> params = ModelParams<float>::init(mc, config.seed, &vocab);
    auto param_ptrs = params.parameters();
    AdamState<float> adam = AdamState<float>::init(param_ptrs);

    Rng epoch_rng(config.seed + 0x9e3779b97f4a7c15ULL);
    TrainResult result;
    result.skipped_sequences = skipped;

    ModelParams<float> best_params = params;
    EpochMetrics best;
    double best_monitored = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        shuffle_in_place(order, epoch_rng);

        double epoch_loss = 0, epoch_acc = 0;
        std::size_t batch_count = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += config.batch_size) {
            const std::size_t end = std::min(order.size(), pos + config.batch_size);
            Tape<float> tape;
            TapedModel<float> model(tape, params);
            Tape<float>::Ref total = 0;
            bool first = true;
            double batch_acc = 0;
            for (std::size_t k = pos; k < end; ++k) {
                const auto& ex = train_set[order[k]];
                auto logits = model.forward(ex.input, /*training=*/true, &epoch_rng);
                std::vector<int> targets(ex.target.begin(), ex.target.end());
                auto loss = tape.cross_entropy(logits, targets);
                batch_acc += accuracy(tape.value(logits), ex.target);
                total = first ? loss : tape.add(total, loss);
                first = false;
            }
            const auto count = static_cast<float>(end - pos);
            auto mean_loss = tape.scale(total, 1.0f / count);
            const double loss_value = tape.value(mean_loss).data[0];
            if (!std::isfinite(loss_value))
                throw Error("training aborted: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_count));
            tape.backward(mean_loss);

            std::vector<const Tensor<float>*> grads;
            grads.reserve(param_ptrs.size());
            for (auto ref : model.param_refs()) grads.push_back(&tape.grad(ref));
            adam_step(param_ptrs, grads, adam, config.lr, config.beta1, config.beta2, config.eps);

            epoch_loss += loss_value * (end - pos);
            epoch_acc += batch_acc;
            ++batch_count;
        }
        epoch_loss /= static_cast<double>(train_set.size());
        epoch_acc /= static_cast<double>(train_set.size());

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = epoch_loss;
        m.train_accuracy = epoch_acc;
        if (has_val) {
            auto [vl, va] = evaluate(params, val_set);
            m.val_loss = vl;
            m.val_accuracy = va;
        } else {
            m.val_loss = epoch_loss;
            m.val_accuracy = epoch_acc;
        }
        result.metrics.push_back(m);
        if (on_epoch) on_epoch(m);

        const double monitored = m.val_loss;
        if (monitored < best_monitored) {
            best_monitored = monitored;
            best = m;
            best_params = params;
            stale_epochs = 0;
        } else {
            ++stale_epochs;
            if (stale_epochs >= std::max(config.patience, 1)) break;
        }
    }

    result.checkpoint.version = 1;
    result.checkpoint.vocab = std::move(vocab);
    result.checkpoint.config = config;
    result.checkpoint.params = std::move(best_params);
    result.checkpoint.best = best;
    result.checkpoint.seed = config.seed;
    return result;
}

} // namespace tabgpt
