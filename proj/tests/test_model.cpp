#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "tabgpt/model.hpp"

using namespace tabgpt;
using tabgpt::testing::check_gradients;

namespace {

Tensor<double> randn(Rng& rng, std::vector<int> shape, double stddev = 1.0) {
    auto t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) v = normal01(rng) * stddev;
    return t;
}

// Brute-force per-position attention: v̂_i = Σ_j softmax(q_i·k_j / √D) v_j
// over the permitted j ≤ i, computed without any shared code path.
Tensor<double> attention_oracle(const Tensor<double>& x, const Tensor<double>& wq, const Tensor<double>& wk,
                                const Tensor<double>& wv) {
    const int n = x.rows(), dx = x.cols();
    const int d = wq.rows(), dv = wv.rows();
    auto project = [&](const Tensor<double>& w, int out_dim) {
        Tensor<double> p = Tensor<double>::zeros({n, out_dim});
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < out_dim; ++r) {
                double s = 0;
                for (int c = 0; c < dx; ++c) s += x.at(i, c) * w.at(r, c);
                p.at(i, r) = s;
            }
        return p;
    };
    Tensor<double> q = project(wq, d), k = project(wk, d), v = project(wv, dv);

    Tensor<double> out = Tensor<double>::zeros({n, dv});
    for (int i = 0; i < n; ++i) {
        std::vector<double> scores;
        for (int j = 0; j <= i; ++j) {
            double s = 0;
            for (int c = 0; c < d; ++c) s += q.at(i, c) * k.at(j, c);
            scores.push_back(s / std::sqrt(double(d)));
        }
        double mx = *std::max_element(scores.begin(), scores.end());
        double z = 0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            z += s;
        }
        for (int j = 0; j <= i; ++j)
            for (int c = 0; c < dv; ++c) out.at(i, c) += (scores[j] / z) * v.at(j, c);
    }
    return out;
}

ModelConfig tiny_config(int vocab = 8, int n_max = 8) {
    ModelConfig cfg;
    cfg.vocab = vocab;
    cfg.max_context = n_max;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.head_dim = 8;
    cfg.ffn_dim = 16;
    cfg.dropout = 0.0f;
    return cfg;
}

} // namespace

// ---------------------------------------------------------------------------
// embedding initialization
// ---------------------------------------------------------------------------

TEST_CASE("fret 0 whole note lights indices 0 and 62") {
    auto v = init_note_embedding<double>(NoteTuple(PitchClass::fret(0), Duration::of(1)));
    for (int i = 0; i < layout::kWidth; ++i)
        CHECK(v[i] == (i == 0 || i == 62 ? 1.0 : 0.0));
}

TEST_CASE("rest quarter note lights 60 and 64") {
    auto v = init_note_embedding<double>(NoteTuple(PitchClass::rest(), Duration::of(4)));
    for (int i = 0; i < layout::kWidth; ++i)
        CHECK(v[i] == (i == 60 || i == 64 ? 1.0 : 0.0));
}

TEST_CASE("fret 7 dotted muted eighth with chord lights 7, 65, 70, 71") {
    auto v = init_note_embedding<double>(
        NoteTuple(PitchClass::fret(7), Duration::of(8), ChordKind::PerfectFifth, true, true));
    for (int i = 0; i < layout::kWidth; ++i)
        CHECK(v[i] == (i == 7 || i == 65 || i == 70 || i == 71 ? 1.0 : 0.0));
}

TEST_CASE("embedding entries are binary with sum in {2,3,4}") {
    Rng rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        PitchClass pitch = PitchClass::rest();
        switch (uniform_index(rng, 4)) {
            case 0: pitch = PitchClass::fret(static_cast<int>(uniform_index(rng, 59))); break;
            case 1: pitch = PitchClass::rest(); break;
            case 2: pitch = PitchClass::dead(); break;
            case 3: pitch = PitchClass::tied(); break;
        }
        bool rest = pitch.variant() == PitchVariant::Rest;
        NoteTuple t(pitch, Duration::of(1 << uniform_index(rng, 8)),
                    rest ? ChordKind::None : static_cast<ChordKind>(uniform_index(rng, 4)),
                    uniform_index(rng, 2) == 1, rest ? false : uniform_index(rng, 2) == 1);
        auto v = init_note_embedding<double>(t);
        double sum = 0;
        for (double e : v) {
            CHECK((e == 0.0 || e == 1.0));
            sum += e;
        }
        CHECK(sum >= 2);
        CHECK(sum <= 4);
        CHECK(sum == 2 + (t.dotted ? 1 : 0) + (t.muted ? 1 : 0));
    }
}

// ---------------------------------------------------------------------------
// causal mask
// ---------------------------------------------------------------------------

TEST_CASE("causal mask shapes and counts") {
    auto m1 = build_causal_mask(1);
    CHECK(m1.allowed(0, 0));

    auto m3 = build_causal_mask(3);
    int per_row[3] = {0, 0, 0};
    int total = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (m3.allowed(i, j)) {
                ++per_row[i];
                ++total;
            }
    CHECK(per_row[0] == 1);
    CHECK(per_row[1] == 2);
    CHECK(per_row[2] == 3);
    CHECK(total == 3 * 4 / 2);

    for (int n : {2, 5, 17, 100}) {
        auto m = build_causal_mask(n);
        int count = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) count += m.allowed(i, j) ? 1 : 0;
        CHECK(count == n * (n + 1) / 2);
    }
    CHECK_THROWS_AS(build_causal_mask(0), Error);
    CHECK_THROWS_AS(build_causal_mask(101), Error);
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

TEST_CASE("single-token attention returns the value vector") {
    Rng rng(11);
    AttentionHeadParams<double> p{randn(rng, {4, 6}), randn(rng, {4, 6}), randn(rng, {3, 6})};
    auto x = randn(rng, {1, 6});
    auto out = attention_head(x, p, CausalMask(1));
    auto expect = attention_oracle(x, p.wq, p.wk, p.wv);
    REQUIRE(out.shape == std::vector<int>{1, 3});
    for (int c = 0; c < 3; ++c) CHECK(out.at(0, c) == doctest::Approx(expect.at(0, c)).epsilon(1e-12));
}

TEST_CASE("attention head matches the per-vector oracle") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(uniform_index(rng, 6));
        const int d = 1 + static_cast<int>(uniform_index(rng, 8));
        const int dv = 1 + static_cast<int>(uniform_index(rng, 8));
        const int dx = 2 + static_cast<int>(uniform_index(rng, 6));
        AttentionHeadParams<double> p{randn(rng, {d, dx}), randn(rng, {d, dx}), randn(rng, {dv, dx})};
        auto x = randn(rng, {n, dx});
        auto out = attention_head(x, p, CausalMask(n));
        auto expect = attention_oracle(x, p.wq, p.wk, p.wv);
        for (std::size_t i = 0; i < out.data.size(); ++i)
            CHECK(std::abs(out.data[i] - expect.data[i]) < 1e-6);
    }
}

TEST_CASE("attention rows are convex combinations; key scaling keeps rows normalized") {
    Rng rng(13);
    const int n = 5, dx = 6, d = 4;
    auto x = randn(rng, {n, dx});
    auto wq = randn(rng, {d, dx}), wk = randn(rng, {d, dx});
    for (double c : {1.0, 3.0}) {
        Tape<double> tape;
        auto wk_scaled = wk;
        for (auto& v : wk_scaled.data) v *= c;
        auto q = tape.matmul_nt(tape.leaf(x), tape.leaf(wq));
        auto k = tape.matmul_nt(tape.leaf(x), tape.leaf(wk_scaled));
        auto a = tape.softmax_rows_op(
            tape.causal_mask_fill(tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(double(d)))));
        const auto& av = tape.value(a);
        for (int i = 0; i < n; ++i) {
            double sum = 0;
            for (int j = 0; j < n; ++j) {
                sum += av.at(i, j);
                if (j > i) CHECK(av.at(i, j) == 0.0); // masked entries exactly zero
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("multi-head attention with one head and identity projection reduces to attention_head") {
    Rng rng(14);
    const int n = 4, dx = 5, dv = 5;
    AttentionHeadParams<double> p{randn(rng, {3, dx}), randn(rng, {3, dx}), randn(rng, {dv, dx})};
    auto x = randn(rng, {n, dx});

    Tensor<double> identity = Tensor<double>::zeros({dv, dv});
    for (int i = 0; i < dv; ++i) identity.at(i, i) = 1.0;

    auto mha = multi_head_attention(x, {p}, identity, CausalMask(n));
    auto single = attention_head(x, p, CausalMask(n));
    REQUIRE(mha.shape == single.shape);
    for (std::size_t i = 0; i < mha.data.size(); ++i)
        CHECK(mha.data[i] == doctest::Approx(single.data[i]).epsilon(1e-12));
}

TEST_CASE("multi-head output width follows the projection, zero projection gives zero") {
    Rng rng(15);
    const int n = 3, dx = 72, dv = 4;
    std::vector<AttentionHeadParams<double>> heads;
    for (int h = 0; h < 3; ++h)
        heads.push_back({randn(rng, {4, dx}), randn(rng, {4, dx}), randn(rng, {dv, dx})});
    auto x = randn(rng, {n, dx});

    auto wo = randn(rng, {72, 3 * dv});
    auto out = multi_head_attention(x, heads, wo, CausalMask(n));
    CHECK(out.shape == std::vector<int>{n, 72});

    auto zero = Tensor<double>::zeros({72, 3 * dv});
    auto out0 = multi_head_attention(x, heads, zero, CausalMask(n));
    for (double v : out0.data) CHECK(v == 0.0);
}

// ---------------------------------------------------------------------------
// transformer block and full forward
// ---------------------------------------------------------------------------

TEST_CASE("transformer block: shape, determinism, zero-weight passthrough") {
    ModelConfig cfg = tiny_config();
    auto params = ModelParams<double>::init(cfg, 21);
    Rng rng(22);
    auto x = randn(rng, {5, cfg.width});

    auto a = transformer_block(x, params.blocks[0], CausalMask(5));
    auto b = transformer_block(x, params.blocks[0], CausalMask(5));
    CHECK(a.shape == x.shape);
    CHECK(a.data == b.data); // evaluation mode is bit-identical

    auto zeroed = params.blocks[0];
    for (Tensor<double>* t : {&zeroed.wo, &zeroed.w2, &zeroed.b2})
        for (auto& v : t->data) v = 0;
    auto passthrough = transformer_block(x, zeroed, CausalMask(5));
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(passthrough.data[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
}

TEST_CASE("forward logits shape contract") {
    ModelConfig cfg = tiny_config(/*vocab=*/11, /*n_max=*/16);
    auto params = ModelParams<double>::init(cfg, 23);
    auto logits = forward_logits(params, {0, 1, 2, 3, 4});
    CHECK(logits.shape == std::vector<int>{5, 11});
    logits = forward_logits(params, {10});
    CHECK(logits.shape == std::vector<int>{1, 11});
}

TEST_CASE("forward rejects bad contexts") {
    ModelConfig cfg = tiny_config(8, 4);
    auto params = ModelParams<double>::init(cfg, 24);
    Tape<double> tape;
    TapedModel<double> model(tape, params);
    CHECK_THROWS_AS(model.forward({}), Error);
    CHECK_THROWS_AS(model.forward({0, 1, 2, 3, 0}), Error); // longer than max_context
    CHECK_THROWS_AS(model.forward({8}), Error);             // invalid id
}

TEST_CASE("causality: future perturbations leave earlier rows bit-identical") {
    ModelConfig cfg = tiny_config(16, 20);
    cfg.blocks = 2;
    auto params = ModelParams<double>::init(cfg, 25);
    Rng rng(26);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(uniform_index(rng, 19));
        std::vector<TokenId> ctx;
        for (int i = 0; i < n; ++i) ctx.push_back(static_cast<TokenId>(uniform_index(rng, 16)));
        const int cut = static_cast<int>(uniform_index(rng, n - 1)); // perturb position > cut
        auto perturbed = ctx;
        const int pos = cut + 1 + static_cast<int>(uniform_index(rng, n - cut - 1));
        perturbed[pos] = static_cast<TokenId>((perturbed[pos] + 1 + uniform_index(rng, 15)) % 16);

        auto a = forward_logits(params, ctx);
        auto b = forward_logits(params, perturbed);
        for (int i = 0; i <= cut; ++i)
            for (int j = 0; j < 16; ++j) CHECK(a.at(i, j) == b.at(i, j));
    }
}

TEST_CASE("parameter count matches the closed-form formula") {
    ModelConfig cfg;
    cfg.vocab = 37;
    cfg.max_context = 100;
    cfg.blocks = 3;
    cfg.heads = 10;
    cfg.head_dim = 32;
    cfg.ffn_dim = 512;
    auto params = ModelParams<float>::init(cfg, 27);

    const std::size_t w = 72;
    const std::size_t per_block = 3 * cfg.heads * cfg.head_dim * w          // q,k,v
                                  + w * cfg.heads * cfg.head_dim            // output projection
                                  + 4 * w                                   // two layer norms
                                  + cfg.ffn_dim * w + cfg.ffn_dim           // ffn in
                                  + w * cfg.ffn_dim + w;                    // ffn out
    const std::size_t expected = std::size_t(cfg.vocab) * w                 // token table
                                 + std::size_t(cfg.max_context) * w         // positional table
                                 + std::size_t(cfg.blocks) * per_block
                                 + 2 * w                                    // final norm
                                 + std::size_t(cfg.vocab) * w;              // head
    CHECK(params.parameter_count() == expected);
}

TEST_CASE("hand-crafted embedding rows are used when a vocabulary is given") {
    std::vector<std::vector<NoteTuple>> corpus = {{
        NoteTuple(PitchClass::fret(0), Duration::of(1)),
        NoteTuple(PitchClass::rest(), Duration::of(4)),
    }};
    Vocabulary vocab = Vocabulary::build(corpus);
    ModelConfig cfg = tiny_config(vocab.size());
    auto params = ModelParams<float>::init(cfg, 28, &vocab);
    // row for (fret 0, whole): ones exactly at 0 and 62
    for (int j = 0; j < 72; ++j)
        CHECK(params.token_embedding.at(0, j) == (j == 0 || j == 62 ? 1.0f : 0.0f));
}

TEST_CASE("dropout only fires in training mode") {
    ModelConfig cfg = tiny_config();
    cfg.dropout = 0.5f;
    auto params = ModelParams<double>::init(cfg, 29);
    std::vector<TokenId> ctx{0, 1, 2};

    auto a = forward_logits(params, ctx);
    auto b = forward_logits(params, ctx);
    CHECK(a.data == b.data);

    Tape<double> tape;
    TapedModel<double> model(tape, params);
    Rng rng(30);
    auto train1 = tape.value(model.forward(ctx, true, &rng));
    CHECK(a.data != train1.data);
}

TEST_CASE("full-model gradient check at tiny scale") {
    // 1 block, width 72, vocab 8; finite differences on a random subset of
    // every parameter tensor
    ModelConfig cfg;
    cfg.vocab = 8;
    cfg.max_context = 6;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.head_dim = 8;
    cfg.ffn_dim = 16;
    cfg.dropout = 0.0f;

    std::vector<TokenId> ctx{3, 1, 4, 1, 5};
    std::vector<int> targets{1, 4, 1, 5, 2};

    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto params = ModelParams<double>::init(cfg, seed);
        auto param_ptrs = params.parameters();

        std::vector<Tensor<double>> inputs;
        for (const auto* t : param_ptrs) inputs.push_back(*t);

        auto eval = [&](const std::vector<Tensor<double>>& ins) {
            ModelParams<double> p = params;
            auto slots = p.parameters();
            for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = ins[i];
            Tape<double> tape;
            TapedModel<double> model(tape, p);
            return tape.value(tape.cross_entropy(model.forward(ctx), targets)).data[0];
        };

        Tape<double> tape;
        TapedModel<double> model(tape, params);
        tape.backward(tape.cross_entropy(model.forward(ctx), targets));
        std::vector<Tensor<double>> analytic;
        for (auto r : model.param_refs()) analytic.push_back(tape.grad(r));

        Rng rng(seed + 100);
        auto res = check_gradients(eval, inputs, analytic, 1e-3, rng, 16, 1e-5, 1e-5);
        INFO("seed " << seed << " worst rel " << res.worst_rel << " over " << res.checked << " entries");
        CHECK(res.failures == 0);
    }
}
