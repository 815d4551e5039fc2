#ifndef TABGPT_CLI_HPP
#define TABGPT_CLI_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tabgpt/sampler.hpp"
#include "tabgpt/trainer.hpp"

namespace tabgpt::cli {

struct GenerateOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path seed_file;
    std::filesystem::path output;
    std::size_t length = 0;
    double temperature = 1.0;
    std::optional<int> top_k;
    std::uint64_t rng_seed = 0;
    bool ascii = false;
};

int cmd_stats(const std::filesystem::path& corpus_dir, std::ostream& out, std::ostream& err);
int cmd_build_vocab(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_path,
                    std::ostream& out, std::ostream& err);
int cmd_train(const std::filesystem::path& corpus_dir, const std::filesystem::path& checkpoint_path,
              const TrainConfig& config, std::ostream& out, std::ostream& err);
int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const std::filesystem::path& checkpoint_path, const std::filesystem::path& corpus_dir,
             std::ostream& out, std::ostream& err);

// Full argv entry point (CLI11 subcommand parsing).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace tabgpt::cli

#endif
