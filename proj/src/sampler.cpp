#include "tabgpt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabgpt/rng.hpp"

namespace tabgpt {

std::vector<double> next_token_distribution(const ModelParams<float>& model,
                                            const std::vector<TokenId>& context, double temperature,
                                            std::optional<int> top_k) {
    if (context.empty()) throw Error("next_token_distribution: empty context");
    if (temperature <= 0) throw Error("next_token_distribution: temperature must be positive");
    const int vocab = model.cfg.vocab;
    if (top_k && (*top_k < 1 || *top_k > vocab))
        throw Error("next_token_distribution: top_k must be in [1, vocabulary size]");

    Tensor<float> logits = forward_logits(model, context);
    const int last = logits.rows() - 1;
    std::vector<double> scaled(vocab);
    for (int j = 0; j < vocab; ++j) scaled[j] = static_cast<double>(logits.at(last, j)) / temperature;

    std::vector<int> support(vocab);
    std::iota(support.begin(), support.end(), 0);
    if (top_k && *top_k < vocab) {
        std::partial_sort(support.begin(), support.begin() + *top_k, support.end(),
                          [&scaled](int a, int b) { return scaled[a] > scaled[b]; });
        support.resize(*top_k);
    }

    double mx = scaled[support[0]];
    for (int j : support) mx = std::max(mx, scaled[j]);
    double sum = 0;
    std::vector<double> probs(vocab, 0.0);
    for (int j : support) {
        probs[j] = std::exp(scaled[j] - mx);
        sum += probs[j];
    }
    for (int j : support) probs[j] /= sum;
    return probs;
}

std::vector<TokenId> sample_continuation(const ModelParams<float>& model, const std::vector<TokenId>& seed,
                                         std::size_t target_length, const SamplerConfig& config) {
    if (seed.empty()) throw Error("sample_continuation: seed must contain at least one token");
    if (target_length <= seed.size())
        throw Error("sample_continuation: target length " + std::to_string(target_length) +
                    " must exceed the seed length " + std::to_string(seed.size()));
    if (config.temperature < 0) throw Error("sample_continuation: temperature must be >= 0");
    for (TokenId id : seed)
        if (id < 0 || id >= model.cfg.vocab)
            throw Error("sample_continuation: seed token " + std::to_string(id) + " is out of vocabulary");

    const int window = std::min(config.max_context, model.cfg.max_context);
    Rng rng(config.rng_seed);

    std::vector<TokenId> out = seed;
    while (out.size() < target_length) {
        const std::size_t ctx_len = std::min<std::size_t>(out.size(), static_cast<std::size_t>(window));
        std::vector<TokenId> context(out.end() - ctx_len, out.end());

        TokenId next;
        if (config.temperature == 0) {
            Tensor<float> logits = forward_logits(model, context);
            const int last = logits.rows() - 1;
            int best = 0;
            for (int j = 1; j < model.cfg.vocab; ++j)
                if (logits.at(last, j) > logits.at(last, best)) best = j;
            next = best;
        } else {
            auto probs = next_token_distribution(model, context, config.temperature, config.top_k);
            double u = uniform01(rng);
            double acc = 0;
            next = static_cast<TokenId>(probs.size() - 1);
            for (std::size_t j = 0; j < probs.size(); ++j) {
                acc += probs[j];
                if (u < acc) {
                    next = static_cast<TokenId>(j);
                    break;
                }
            }
        }
        out.push_back(next);
    }
    return out;
}

Song detokenize_to_song(const Vocabulary& vocab, const std::vector<TokenId>& ids, const std::string& title) {
    if (ids.empty()) throw Error("detokenize_to_song: a song must have at least one note");
    Track track;
    track.name = "generated";
    track.events.reserve(ids.size());
    for (TokenId id : ids) track.events.push_back(vocab.tuple(id));
    Song song;
    song.title = title;
    song.tracks.push_back(std::move(track));
    return song;
}

} // namespace tabgpt
