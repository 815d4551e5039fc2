#include "tabgpt/cli.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "tabgpt/checkpoint.hpp"
#include "tabgpt/tab_format.hpp"

namespace tabgpt::cli {

namespace {

// load_corpus flattens tracks; stats wants the per-track structure too.
std::vector<std::pair<std::string, Track>> load_tracks(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error("corpus path is not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<std::pair<std::string, Track>> tracks;
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot read corpus file " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        Song song;
        try {
            song = parse_tab_stream(buf.str());
        } catch (const Error& e) {
            throw Error(path.string() + ": " + e.what());
        }
        for (auto& t : song.tracks)
            tracks.emplace_back(song.title + "/" + t.name, std::move(t));
    }
    if (tracks.empty()) throw Error("no tracks found under " + dir.string());
    return tracks;
}

bool near_integer(double x) { return std::abs(x - std::round(x)) < 1e-9; }

} // namespace

int cmd_stats(const std::filesystem::path& corpus_dir, std::ostream& out, std::ostream& err) {
    try {
        auto tracks = load_tracks(corpus_dir);
        std::vector<std::vector<NoteTuple>> sequences;
        for (auto& [name, t] : tracks) sequences.push_back(t.events);
        Vocabulary vocab = Vocabulary::build(sequences);

        std::size_t total_events = 0;
        out << "tracks: " << tracks.size() << "\n";
        for (const auto& [name, t] : tracks) {
            const double whole = track_whole_note_total(t);
            out << "  " << name << ": " << t.events.size() << " events, " << std::fixed
                << std::setprecision(3) << whole << " whole notes";
            if (!near_integer(whole)) out << "  [warning: non-integral measure total]";
            out << "\n";
            total_events += t.events.size();
        }
        out << "events: " << total_events << "\n";
        out << "distinct tuples: " << vocab.size() << "\n";

        std::map<TokenId, std::size_t> histogram;
        for (const auto& seq : sequences)
            for (const auto& t : seq) ++histogram[vocab.token(t)];
        out << "token histogram:\n";
        for (const auto& [id, count] : histogram)
            out << "  " << id << "  " << count << "  (" << vocab.tuple(id).describe() << ")\n";
        return 0;
    } catch (const std::exception& e) {
        err << "stats: " << e.what() << "\n";
        return 1;
    }
}

int cmd_build_vocab(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_path,
                    std::ostream& out, std::ostream& err) {
    try {
        Vocabulary vocab = Vocabulary::build(load_corpus(corpus_dir));
        // One canonical note line per token id, so the file doubles as a
        // human-readable id table.
        Song listing;
        listing.title = "vocabulary";
        listing.tracks.push_back({"tokens", vocab.tuples()});
        std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + out_path.string());
        f << serialize_tab_stream(listing);
        out << "vocabulary size: " << vocab.size() << "\n";
        out << "written to " << out_path.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "build-vocab: " << e.what() << "\n";
        return 1;
    }
}

int cmd_train(const std::filesystem::path& corpus_dir, const std::filesystem::path& checkpoint_path,
              const TrainConfig& config, std::ostream& out, std::ostream& err) {
    const std::filesystem::path metrics_path = checkpoint_path.string() + ".metrics.csv";
    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) {
        err << "train: cannot write metrics log " << metrics_path.string() << "\n";
        return 1;
    }
    metrics << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    try {
        auto corpus = load_corpus(corpus_dir);
        auto result = train(config, corpus, [&metrics](const EpochMetrics& m) {
            metrics << m.epoch << "," << m.train_loss << "," << m.train_accuracy << "," << m.val_loss << ","
                    << m.val_accuracy << "\n";
            metrics.flush();
        });
        save_checkpoint(result.checkpoint, checkpoint_path);
        if (result.skipped_sequences > 0)
            out << "skipped " << result.skipped_sequences << " sequence(s) shorter than n+1 tokens\n";
        const auto& b = result.checkpoint.best;
        out << "best epoch " << b.epoch << ": train_loss=" << b.train_loss
            << " train_acc=" << b.train_accuracy << " val_loss=" << b.val_loss
            << " val_acc=" << b.val_accuracy << "\n";
        out << "checkpoint written to " << checkpoint_path.string() << "\n";
        out << "metrics log written to " << metrics_path.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        // keep whatever metrics lines were already flushed
        err << "train: " << e.what() << "\n";
        return 1;
    }
}

int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream& err) {
    try {
        Checkpoint ckpt = load_checkpoint(options.checkpoint);

        std::ifstream in(options.seed_file, std::ios::binary);
        if (!in) throw Error("cannot read seed file " + options.seed_file.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        Song seed_song = parse_tab_stream(buf.str());
        if (seed_song.tracks.size() != 1)
            throw Error("seed file must contain exactly one track, found " +
                        std::to_string(seed_song.tracks.size()));

        std::vector<TokenId> seed_ids;
        for (const auto& t : seed_song.tracks[0].events) seed_ids.push_back(ckpt.vocab.token(t));
        if (options.length <= seed_ids.size())
            throw Error("--length must exceed the seed length (" + std::to_string(seed_ids.size()) + ")");

        SamplerConfig sc;
        sc.temperature = options.temperature;
        sc.top_k = options.top_k;
        sc.rng_seed = options.rng_seed;
        sc.max_context = ckpt.config.n;

        auto ids = sample_continuation(ckpt.params, seed_ids, options.length, sc);
        Song song = detokenize_to_song(ckpt.vocab, ids, seed_song.title + " (continued)");

        std::ofstream f(options.output, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + options.output.string());
        f << serialize_tab_stream(song);

        out << "rng seed: " << options.rng_seed << "\n";
        out << "wrote " << ids.size() << " events to " << options.output.string() << "\n";
        if (options.ascii) out << render_ascii_tab(song.tracks[0], 6, 24);
        return 0;
    } catch (const std::exception& e) {
        err << "generate: " << e.what() << "\n";
        return 1;
    }
}

int cmd_eval(const std::filesystem::path& checkpoint_path, const std::filesystem::path& corpus_dir,
             std::ostream& out, std::ostream& err) {
    try {
        Checkpoint ckpt = load_checkpoint(checkpoint_path);
        auto corpus = load_corpus(corpus_dir);
        std::vector<std::vector<TokenId>> sequences;
        try {
            sequences = tokenize_sequences(ckpt.vocab, corpus);
        } catch (const Error& e) {
            throw Error(std::string("vocabulary mismatch between checkpoint and corpus: ") + e.what());
        }
        auto examples = window_dataset(sequences, ckpt.config.n, ckpt.config.stride);
        if (examples.size() < 2) throw Error("corpus yields fewer than 2 evaluation examples");
        auto [train_set, val_set] =
            split_train_val(std::move(examples), ckpt.config.split_ratio, ckpt.config.seed);
        const auto& held_out = val_set.empty() ? train_set : val_set;
        auto [loss, acc] = evaluate(ckpt.params, held_out);
        out << "held-out examples: " << held_out.size() << "\n";
        out << "next-token loss: " << loss << "\n";
        out << "next-token accuracy: " << acc << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "eval: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Guitar-tablature mini-GPT: tokenize, train, generate"};
    app.require_subcommand(1);

    std::string dir, output, ckpt_path, seed_file;

    auto* stats = app.add_subcommand("stats", "Corpus statistics and duration lint");
    stats->add_option("dir", dir, "corpus directory")->required();

    auto* vocab_cmd = app.add_subcommand("build-vocab", "Build and write the token vocabulary");
    vocab_cmd->add_option("dir", dir, "corpus directory")->required();
    vocab_cmd->add_option("-o,--output", output, "output file")->required();

    TrainConfig tc;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a tab corpus");
    train_cmd->add_option("dir", dir, "corpus directory")->required();
    train_cmd->add_option("-o,--output", ckpt_path, "checkpoint output path")->required();
    train_cmd->add_option("--n", tc.n, "sequence length");
    train_cmd->add_option("--batch", tc.batch_size, "batch size");
    train_cmd->add_option("--lr", tc.lr, "initial learning rate");
    train_cmd->add_option("--beta1", tc.beta1, "Adam beta1");
    train_cmd->add_option("--dropout", tc.dropout, "dropout rate");
    train_cmd->add_option("--blocks", tc.blocks, "transformer blocks");
    train_cmd->add_option("--heads", tc.heads, "attention heads per block");
    train_cmd->add_option("--head-dim", tc.head_dim, "per-head query/key/value width");
    train_cmd->add_option("--ffn", tc.ffn_dim, "feedforward dimension");
    train_cmd->add_option("--stride", tc.stride, "window stride");
    train_cmd->add_option("--patience", tc.patience, "early-stop patience (epochs)");
    train_cmd->add_option("--max-epochs", tc.max_epochs, "epoch budget");
    train_cmd->add_option("--seed", tc.seed, "rng seed");

    GenerateOptions go;
    auto* gen = app.add_subcommand("generate", "Autoregressively continue a seed snippet");
    gen->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
    gen->add_option("--seed-file", seed_file, "seed tab stream")->required();
    gen->add_option("--length", go.length, "total output length M")->required();
    gen->add_option("-o,--output", output, "output tab stream")->required();
    gen->add_option("--temperature", go.temperature, "sampling temperature (0 = argmax)");
    int top_k = 0;
    auto* top_k_opt = gen->add_option("--top-k", top_k, "restrict sampling to the k best tokens");
    gen->add_option("--rng-seed", go.rng_seed, "sampling rng seed");
    gen->add_flag("--ascii", go.ascii, "also print ASCII tablature");

    auto* eval_cmd = app.add_subcommand("eval", "Held-out loss/accuracy of a checkpoint");
    eval_cmd->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("dir", dir, "corpus directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << e.what() << "\n";
        return 2;
    }

    if (stats->parsed()) return cmd_stats(dir, out, err);
    if (vocab_cmd->parsed()) return cmd_build_vocab(dir, output, out, err);
    if (train_cmd->parsed()) return cmd_train(dir, ckpt_path, tc, out, err);
    if (gen->parsed()) {
        go.checkpoint = ckpt_path;
        go.seed_file = seed_file;
        go.output = output;
        if (top_k_opt->count() > 0) go.top_k = top_k;
        return cmd_generate(go, out, err);
    }
    if (eval_cmd->parsed()) return cmd_eval(ckpt_path, dir, out, err);
    err << "no subcommand\n";
    return 2;
}

} // namespace tabgpt::cli
