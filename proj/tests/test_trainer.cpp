#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>


#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "tabgpt/checkpoint.hpp"
#include "tabgpt/trainer.hpp"

using namespace tabgpt;
namespace fs = std::filesystem;

namespace {

std::vector<TokenId> iota_seq(int len) {
    std::vector<TokenId> s(len);
    for (int i = 0; i < len; ++i) s[i] = i;
    return s;
}

// small cyclic corpus of distinct tuples
std::vector<NoteTuple> motif_corpus(int length, int period) {
    std::vector<NoteTuple> base;
    const int frets[] = {0, 3, 5, 7, 8, 10, 12, 15};
    for (int i = 0; i < period; ++i)
        base.emplace_back(PitchClass::fret(frets[i % 8]), Duration::of(i % 2 == 0 ? 4 : 8));
    std::vector<NoteTuple> seq;
    for (int i = 0; i < length; ++i) seq.push_back(base[i % period]);
    return seq;
}

TrainConfig tiny_train_config() {
    TrainConfig c;
    c.n = 8;
    c.batch_size = 8;
    c.blocks = 1;
    c.heads = 2;
    c.head_dim = 8;
    c.ffn_dim = 32;
    c.dropout = 0.0f;
    c.stride = 3;
    c.max_epochs = 60;
    c.patience = 60;
    c.seed = 5;
    return c;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("tabgpt_trainer_" + std::to_string(Rng(std::random_device{}())()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

// ---------------------------------------------------------------------------
// windowing
// ---------------------------------------------------------------------------

TEST_CASE("window counts match the closed form") {
    auto count = [](int L, int n, int stride) {
        return window_dataset({iota_seq(L)}, n, stride).size();
    };
    CHECK(count(101, 100, 1) == 1);
    CHECK(count(101, 100, 25) == 1);
    CHECK(count(110, 100, 5) == 2);
    CHECK(count(100, 100, 1) == 0); // needs n+1 tokens

    // brute-force comparison across a grid
    for (int L : {1, 5, 17, 40, 101}) {
        for (int n : {1, 4, 16}) {
            for (int stride : {1, 3, 7}) {
                std::size_t brute = 0;
                for (int start = 0; start + n + 1 <= L; start += stride) ++brute;
                CHECK(count(L, n, stride) == brute);
                const auto formula =
                    L >= n + 1 ? static_cast<std::size_t>((L - n - 1) / stride + 1) : std::size_t{0};
                CHECK(brute == formula);
            }
        }
    }
}

TEST_CASE("windows are shifted-by-one pairs and skipping is reported") {
    std::vector<std::vector<TokenId>> seqs = {iota_seq(12), iota_seq(3)};
    std::size_t skipped = 0;
    auto ex = window_dataset(seqs, 4, 2, &skipped);
    CHECK(skipped == 1);
    REQUIRE(!ex.empty());
    for (const auto& e : ex) {
        REQUIRE(e.input.size() == 4);
        REQUIRE(e.target.size() == 4);
        for (int t = 0; t < 4; ++t) CHECK(e.target[t] == e.input[t] + 1); // iota source
    }
    CHECK_THROWS_AS(window_dataset(seqs, 0, 1), Error);
    CHECK_THROWS_AS(window_dataset(seqs, 4, 0), Error);
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

TEST_CASE("90-10 split partitions deterministically") {
    std::vector<TrainingExample> ex;
    for (int i = 0; i < 10; ++i) ex.push_back({iota_seq(4), std::vector<TokenId>(4, i)});

    auto [train_a, val_a] = split_train_val(ex, 0.9, 42);
    CHECK(train_a.size() == 9);
    CHECK(val_a.size() == 1);

    auto [train_b, val_b] = split_train_val(ex, 0.9, 42);
    for (std::size_t i = 0; i < train_a.size(); ++i) CHECK(train_a[i].target == train_b[i].target);
    CHECK(val_a[0].target == val_b[0].target);

    // partition: multiset union equals the input, intersection empty
    std::multiset<int> seen;
    for (const auto& e : train_a) seen.insert(e.target[0]);
    for (const auto& e : val_a) seen.insert(e.target[0]);
    std::multiset<int> expected;
    for (int i = 0; i < 10; ++i) expected.insert(i);
    CHECK(seen == expected);

    auto [train_c, val_c] = split_train_val(ex, 0.9, 43);
    bool any_diff = val_a[0].target != val_c[0].target;
    for (std::size_t i = 0; !any_diff && i < train_a.size(); ++i)
        any_diff = train_a[i].target != train_c[i].target;
    CHECK(any_diff); // different seed, different shuffle

    CHECK_THROWS_AS(split_train_val({ex[0]}, 0.9, 1), Error);
    CHECK_THROWS_AS(split_train_val(ex, 0.0, 1), Error);
    CHECK_THROWS_AS(split_train_val(ex, 1.0, 1), Error);
}

// ---------------------------------------------------------------------------
// accuracy
// ---------------------------------------------------------------------------

TEST_CASE("accuracy basics") {
    auto logits = Tensor<float>::zeros({4, 3});
    logits.at(0, 1) = 5;
    logits.at(1, 2) = 5;
    logits.at(2, 0) = 5;
    logits.at(3, 1) = 5;
    CHECK(accuracy(logits, {1, 2, 0, 1}) == 1.0);
    CHECK(accuracy(logits, {0, 0, 2, 2}) == 0.0);
    CHECK(accuracy(logits, {1, 2, 0, 2}) == 0.75);
    CHECK_THROWS_AS(accuracy(logits, {0}), Error);
}

TEST_CASE("accuracy breaks ties toward the lowest index") {
    auto logits = Tensor<float>::zeros({1, 4}); // all equal
    CHECK(accuracy(logits, {0}) == 1.0);
    CHECK(accuracy(logits, {1}) == 0.0);
}

TEST_CASE("accuracy is invariant under monotone per-row transforms") {
    Rng rng(31);
    auto logits = Tensor<float>::zeros({6, 5});
    for (auto& v : logits.data) v = static_cast<float>(normal01(rng));
    std::vector<TokenId> targets;
    for (int i = 0; i < 6; ++i) targets.push_back(static_cast<TokenId>(uniform_index(rng, 5)));

    auto transformed = logits;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 5; ++j)
            transformed.at(i, j) = std::exp(0.5f * logits.at(i, j)) + static_cast<float>(i);
    CHECK(accuracy(logits, targets) == accuracy(transformed, targets));
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TEST_CASE("tiny motif overfits quickly") {
    auto corpus = std::vector<std::vector<NoteTuple>>{motif_corpus(120, 6)};
    TrainConfig cfg = tiny_train_config();
    auto result = train(cfg, corpus);

    REQUIRE(!result.metrics.empty());
    double best_acc = 0;
    for (const auto& m : result.metrics) best_acc = std::max(best_acc, m.train_accuracy);
    CHECK(best_acc >= 0.95);

    // smoothed training loss is non-increasing over 10-epoch windows
    const auto& ms = result.metrics;
    if (ms.size() >= 20) {
        auto window_mean = [&ms](std::size_t start) {
            double s = 0;
            for (std::size_t i = start; i < start + 10; ++i) s += ms[i].train_loss;
            return s / 10;
        };
        for (std::size_t start = 0; start + 20 <= ms.size(); start += 10)
            CHECK(window_mean(start + 10) <= window_mean(start) + 1e-6);
    }
}

TEST_CASE("early stopping with patience 0 stops at the first non-improving epoch") {
    auto corpus = std::vector<std::vector<NoteTuple>>{motif_corpus(60, 5)};
    TrainConfig cfg = tiny_train_config();
    cfg.stride = 1;
    cfg.max_epochs = 200;
    cfg.patience = 0;
    auto result = train(cfg, corpus);
    REQUIRE(result.metrics.size() >= 1);
    // every epoch except the last must have improved on the running best
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < result.metrics.size(); ++i) {
        CHECK(result.metrics[i].val_loss < best);
        best = std::min(best, result.metrics[i].val_loss);
    }
    if (result.metrics.size() < static_cast<std::size_t>(cfg.max_epochs))
        CHECK(result.metrics.back().val_loss >= best);
}

TEST_CASE("checkpoint keeps the best validation epoch") {
    auto corpus = std::vector<std::vector<NoteTuple>>{motif_corpus(80, 7)};
    TrainConfig cfg = tiny_train_config();
    cfg.stride = 1;
    cfg.max_epochs = 25;
    cfg.patience = 25;
    auto result = train(cfg, corpus);

    double min_val = std::numeric_limits<double>::infinity();
    int min_epoch = -1;
    for (const auto& m : result.metrics)
        if (m.val_loss < min_val) {
            min_val = m.val_loss;
            min_epoch = m.epoch;
        }
    CHECK(result.checkpoint.best.epoch == min_epoch);
    CHECK(result.checkpoint.best.val_loss == doctest::Approx(min_val));
}

TEST_CASE("train rejects corpora that yield too few examples") {
    auto corpus = std::vector<std::vector<NoteTuple>>{motif_corpus(5, 5)};
    TrainConfig cfg = tiny_train_config();
    CHECK_THROWS_AS(train(cfg, corpus), Error);
}

// ---------------------------------------------------------------------------
// checkpoint round trip
// ---------------------------------------------------------------------------

namespace {

Checkpoint quick_checkpoint() {
    auto corpus = std::vector<std::vector<NoteTuple>>{motif_corpus(60, 6)};
    TrainConfig cfg = tiny_train_config();
    cfg.stride = 1;
    cfg.max_epochs = 2;
    return train(cfg, corpus).checkpoint;
}

} // namespace

TEST_CASE("checkpoint save/load reproduces logits bit-exactly") {
    TempDir dir;
    Checkpoint ckpt = quick_checkpoint();
    const auto path = dir.path / "model.ckpt";
    save_checkpoint(ckpt, path);
    Checkpoint loaded = load_checkpoint(path);

    CHECK(loaded.vocab == ckpt.vocab);
    CHECK(loaded.config.n == ckpt.config.n);
    CHECK(loaded.config.lr == ckpt.config.lr);
    CHECK(loaded.config.beta1 == ckpt.config.beta1);
    CHECK(loaded.config.seed == ckpt.config.seed);
    CHECK(loaded.best.epoch == ckpt.best.epoch);

    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 1 + static_cast<int>(uniform_index(rng, ckpt.config.n));
        std::vector<TokenId> ctx;
        for (int i = 0; i < n; ++i)
            ctx.push_back(static_cast<TokenId>(uniform_index(rng, ckpt.vocab.size())));
        auto a = forward_logits(ckpt.params, ctx);
        auto b = forward_logits(loaded.params, ctx);
        CHECK(a.data == b.data); // bit-identical
    }
}

TEST_CASE("checkpoint corruption and version errors") {
    TempDir dir;
    Checkpoint ckpt = quick_checkpoint();
    const auto path = dir.path / "model.ckpt";
    save_checkpoint(ckpt, path);

    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    // truncation
    {
        std::ofstream out(dir.path / "trunc.ckpt", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(dir.path / "trunc.ckpt"), Error);

    // payload bit flip -> checksum mismatch
    {
        auto corrupted = bytes;
        corrupted[corrupted.size() - 3] ^= 0x5a;
        std::ofstream out(dir.path / "flip.ckpt", std::ios::binary);
        out.write(corrupted.data(), static_cast<std::streamsize>(corrupted.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(dir.path / "flip.ckpt"), Error);

    // unsupported version
    {
        auto versioned = bytes;
        versioned[8] = 0x7f;
        std::ofstream out(dir.path / "ver.ckpt", std::ios::binary);
        out.write(versioned.data(), static_cast<std::streamsize>(versioned.size()));
    }
    try {
        load_checkpoint(dir.path / "ver.ckpt");
        FAIL("expected version mismatch");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    // bad magic
    {
        auto magic = bytes;
        magic[0] = 'X';
        std::ofstream out(dir.path / "magic.ckpt", std::ios::binary);
        out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(dir.path / "magic.ckpt"), Error);

    CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ckpt"), Error);
}
