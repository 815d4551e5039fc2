#ifndef TABGPT_SAMPLER_HPP
#define TABGPT_SAMPLER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabgpt/model.hpp"
#include "tabgpt/tab_format.hpp"

namespace tabgpt {

struct SamplerConfig {
    double temperature = 1.0;     // 0 selects argmax mode
    std::optional<int> top_k;
    std::uint64_t rng_seed = 0;
    int max_context = kMaxContext;
};

// softmax(last-row logits / temperature), optionally restricted to the
// top_k highest logits (everything else exactly 0). Requires temperature > 0;
// argmax mode lives in the sampler.
std::vector<double> next_token_distribution(const ModelParams<float>& model,
                                            const std::vector<TokenId>& context, double temperature,
                                            std::optional<int> top_k = std::nullopt);

// Extends the seed to target_length tokens. The output starts with the seed
// verbatim; each step conditions on at most the last max_context tokens.
std::vector<TokenId> sample_continuation(const ModelParams<float>& model, const std::vector<TokenId>& seed,
                                         std::size_t target_length, const SamplerConfig& config);

Song detokenize_to_song(const Vocabulary& vocab, const std::vector<TokenId>& ids, const std::string& title);

} // namespace tabgpt

#endif
