#ifndef TABGPT_MODEL_HPP
#define TABGPT_MODEL_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "tabgpt/notes.hpp"
#include "tabgpt/rng.hpp"
#include "tabgpt/tape.hpp"

namespace tabgpt {

// Layout of the 72-dim hand-crafted note embedding: 59 fret slots, then the
// dead/rest/tied flags, then the 8-slot duration one-hot, then the dotted
// and palm-mute flags.
namespace layout {
inline constexpr int kFretBase = 0;
inline constexpr int kFretSlots = 59;
inline constexpr int kDead = 59;
inline constexpr int kRest = 60;
inline constexpr int kTied = 61;
inline constexpr int kDurationBase = 62;
inline constexpr int kDurationSlots = 8;
inline constexpr int kDotted = 70;
inline constexpr int kMuted = 71;
inline constexpr int kWidth = 72;
} // namespace layout

inline constexpr int kMaxContext = 100;

// Binary 72-vector: one pitch-or-special slot, one duration slot, plus the
// dotted/muted flags. Chord kind contributes no dimension.
template <typename Real>
std::array<Real, layout::kWidth> init_note_embedding(const NoteTuple& t) {
    std::array<Real, layout::kWidth> v{};
    switch (t.pitch.variant()) {
        case PitchVariant::Fret: v[layout::kFretBase + t.pitch.fret_index()] = Real(1); break;
        case PitchVariant::Dead: v[layout::kDead] = Real(1); break;
        case PitchVariant::Rest: v[layout::kRest] = Real(1); break;
        case PitchVariant::Tied: v[layout::kTied] = Real(1); break;
    }
    v[layout::kDurationBase + t.duration.ladder_index()] = Real(1);
    if (t.dotted) v[layout::kDotted] = Real(1);
    if (t.muted) v[layout::kMuted] = Real(1);
    return v;
}

// Lower-triangular attention mask: position i may attend to j iff j <= i.
class CausalMask {
public:
    explicit CausalMask(int n) : n_(n), allowed_(static_cast<std::size_t>(n) * n, 0) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) allowed_[static_cast<std::size_t>(i) * n + j] = 1;
    }
    int size() const { return n_; }
    bool allowed(int i, int j) const { return allowed_[static_cast<std::size_t>(i) * n_ + j] != 0; }

private:
    int n_;
    std::vector<std::uint8_t> allowed_;
};

inline CausalMask build_causal_mask(int n) {
    if (n < 1 || n > kMaxContext)
        throw Error("causal mask size " + std::to_string(n) + " out of range [1, " + std::to_string(kMaxContext) + "]");
    return CausalMask(n);
}

struct ModelConfig {
    int vocab = 0;
    int width = layout::kWidth;
    int max_context = kMaxContext;
    int blocks = 3;
    int heads = 10;
    int head_dim = 32; // D = D_v; queries/keys and values share this width
    int ffn_dim = 512;
    float dropout = 0.30f;
};

template <typename Real>
struct AttentionHeadParams {
    Tensor<Real> wq; // [D x D_x]
    Tensor<Real> wk; // [D x D_x]
    Tensor<Real> wv; // [D_v x D_x]
};

template <typename Real>
struct BlockParams {
    std::vector<AttentionHeadParams<Real>> heads;
    Tensor<Real> wo;                  // [width x heads*D_v]
    Tensor<Real> ln1_gain, ln1_bias;  // [width]
    Tensor<Real> ln2_gain, ln2_bias;  // [width]
    Tensor<Real> w1, b1;              // [ffn x width], [ffn]
    Tensor<Real> w2, b2;              // [width x ffn], [width]
};

template <typename Real>
struct ModelParams {
    ModelConfig cfg;
    Tensor<Real> token_embedding;      // [vocab x width]
    Tensor<Real> positional_embedding; // [max_context x width]
    std::vector<BlockParams<Real>> blocks;
    Tensor<Real> lnf_gain, lnf_bias;   // final pre-head norm
    Tensor<Real> head_weight;          // [vocab x width]

    // Random init; token embedding rows overwritten from the vocabulary when
    // one is supplied (the hand-crafted scheme).
    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed,
                            const Vocabulary* vocab = nullptr);

    std::vector<Tensor<Real>*> parameters();
    std::vector<const Tensor<Real>*> parameters() const;
    std::size_t parameter_count() const;

    template <typename Other>
    static ModelParams from(const ModelParams<Other>& o);
};

template <typename Real>
ModelParams<Real> ModelParams<Real>::init(const ModelConfig& cfg, std::uint64_t seed, const Vocabulary* vocab) {
    if (cfg.vocab < 1) throw Error("model config: vocabulary size must be positive");
    if (vocab && vocab->size() != cfg.vocab) throw Error("model config vocab size disagrees with vocabulary");
    if (vocab && cfg.width != layout::kWidth)
        throw Error("hand-crafted embedding initialization requires width 72");

    Rng rng(seed);
    auto randn = [&rng](std::vector<int> shape, double stddev) {
        Tensor<Real> t = Tensor<Real>::zeros(std::move(shape));
        for (auto& v : t.data) v = static_cast<Real>(normal01(rng) * stddev);
        return t;
    };

    ModelParams p;
    p.cfg = cfg;
    p.token_embedding = randn({cfg.vocab, cfg.width}, 0.02);
    if (vocab) {
        for (int i = 0; i < cfg.vocab; ++i) {
            auto row = init_note_embedding<Real>(vocab->tuple(i));
            for (int j = 0; j < cfg.width; ++j) p.token_embedding.at(i, j) = row[j];
        }
    }
    p.positional_embedding = randn({cfg.max_context, cfg.width}, 0.02);
    p.blocks.resize(cfg.blocks);
    for (auto& b : p.blocks) {
        b.heads.resize(cfg.heads);
        for (auto& h : b.heads) {
            h.wq = randn({cfg.head_dim, cfg.width}, 0.02);
            h.wk = randn({cfg.head_dim, cfg.width}, 0.02);
            h.wv = randn({cfg.head_dim, cfg.width}, 0.02);
        }
        b.wo = randn({cfg.width, cfg.heads * cfg.head_dim}, 0.02);
        b.ln1_gain = Tensor<Real>::from({cfg.width}, std::vector<Real>(cfg.width, Real(1)));
        b.ln1_bias = Tensor<Real>::zeros({cfg.width});
        b.ln2_gain = Tensor<Real>::from({cfg.width}, std::vector<Real>(cfg.width, Real(1)));
        b.ln2_bias = Tensor<Real>::zeros({cfg.width});
        b.w1 = randn({cfg.ffn_dim, cfg.width}, 0.02);
        b.b1 = Tensor<Real>::zeros({cfg.ffn_dim});
        b.w2 = randn({cfg.width, cfg.ffn_dim}, 0.02);
        b.b2 = Tensor<Real>::zeros({cfg.width});
    }
    p.lnf_gain = Tensor<Real>::from({cfg.width}, std::vector<Real>(cfg.width, Real(1)));
    p.lnf_bias = Tensor<Real>::zeros({cfg.width});
    p.head_weight = randn({cfg.vocab, cfg.width}, 0.02);
    return p;
}

template <typename Real>
std::vector<Tensor<Real>*> ModelParams<Real>::parameters() {
    std::vector<Tensor<Real>*> out{&token_embedding, &positional_embedding};
    for (auto& b : blocks) {
        for (auto& h : b.heads) {
            out.push_back(&h.wq);
            out.push_back(&h.wk);
            out.push_back(&h.wv);
        }
        out.push_back(&b.wo);
        out.push_back(&b.ln1_gain);
        out.push_back(&b.ln1_bias);
        out.push_back(&b.ln2_gain);
        out.push_back(&b.ln2_bias);
        out.push_back(&b.w1);
        out.push_back(&b.b1);
        out.push_back(&b.w2);
        out.push_back(&b.b2);
    }
    out.push_back(&lnf_gain);
    out.push_back(&lnf_bias);
    out.push_back(&head_weight);
    return out;
}

template <typename Real>
std::vector<const Tensor<Real>*> ModelParams<Real>::parameters() const {
    auto mut = const_cast<ModelParams*>(this)->parameters();
    return std::vector<const Tensor<Real>*>(mut.begin(), mut.end());
}

template <typename Real>
std::size_t ModelParams<Real>::parameter_count() const {
    std::size_t n = 0;
    for (const auto* t : parameters()) n += t->size();
    return n;
}

template <typename Real>
template <typename Other>
ModelParams<Real> ModelParams<Real>::from(const ModelParams<Other>& o) {
    ModelParams p;
    p.cfg = o.cfg;
    auto convert = [](const Tensor<Other>& t) {
        Tensor<Real> out;
        out.shape = t.shape;
        out.data.assign(t.data.begin(), t.data.end());
        return out;
    };
    p.token_embedding = convert(o.token_embedding);
    p.positional_embedding = convert(o.positional_embedding);
    p.blocks.resize(o.blocks.size());
    for (std::size_t i = 0; i < o.blocks.size(); ++i) {
        const auto& ob = o.blocks[i];
        auto& b = p.blocks[i];
        b.heads.resize(ob.heads.size());
        for (std::size_t h = 0; h < ob.heads.size(); ++h) {
            b.heads[h].wq = convert(ob.heads[h].wq);
            b.heads[h].wk = convert(ob.heads[h].wk);
            b.heads[h].wv = convert(ob.heads[h].wv);
        }
        b.wo = convert(ob.wo);
        b.ln1_gain = convert(ob.ln1_gain);
        b.ln1_bias = convert(ob.ln1_bias);
        b.ln2_gain = convert(ob.ln2_gain);
        b.ln2_bias = convert(ob.ln2_bias);
        b.w1 = convert(ob.w1);
        b.b1 = convert(ob.b1);
        b.w2 = convert(ob.w2);
        b.b2 = convert(ob.b2);
    }
    p.lnf_gain = convert(o.lnf_gain);
    p.lnf_bias = convert(o.lnf_bias);
    p.head_weight = convert(o.head_weight);
    return p;
}

// One self-attention head on the tape: Q = X Wq^T, K = X Wk^T, V = X Wv^T,
// scores QK^T/sqrt(D) masked causally, row softmax, output A V.
template <typename Real>
typename Tape<Real>::Ref attention_head_op(Tape<Real>& tape, typename Tape<Real>::Ref x,
                                           typename Tape<Real>::Ref wq, typename Tape<Real>::Ref wk,
                                           typename Tape<Real>::Ref wv, const CausalMask& mask,
                                           Real dropout_rate = Real(0), Rng* rng = nullptr) {
    const int n = tape.value(x).rows();
    if (n > mask.size()) throw Error("attention_head: context longer than mask");
    const int d = tape.value(wq).rows();
    auto q = tape.matmul_nt(x, wq);
    auto k = tape.matmul_nt(x, wk);
    auto v = tape.matmul_nt(x, wv);
    auto scores = tape.scale(tape.matmul_nt(q, k), Real(1) / static_cast<Real>(std::sqrt(double(d))));
    scores = tape.causal_mask_fill(scores);
    auto attn = tape.softmax_rows_op(scores);
    if (dropout_rate > Real(0) && rng) attn = tape.dropout(attn, dropout_rate, *rng);
    return tape.matmul(attn, v);
}

// Plain-tensor attention head (evaluation mode).
template <typename Real>
Tensor<Real> attention_head(const Tensor<Real>& x, const AttentionHeadParams<Real>& params,
                            const CausalMask& mask) {
    Tape<Real> tape;
    auto xr = tape.leaf(x);
    auto out = attention_head_op(tape, xr, tape.leaf(params.wq), tape.leaf(params.wk),
                                 tape.leaf(params.wv), mask);
    return tape.value(out);
}

// Concatenated head outputs projected back to the residual width.
template <typename Real>
typename Tape<Real>::Ref multi_head_attention_op(Tape<Real>& tape, typename Tape<Real>::Ref x,
                                                 const std::vector<std::array<typename Tape<Real>::Ref, 3>>& heads,
                                                 typename Tape<Real>::Ref wo, const CausalMask& mask,
                                                 Real dropout_rate = Real(0), Rng* rng = nullptr) {
    std::vector<typename Tape<Real>::Ref> outs;
    outs.reserve(heads.size());
    for (const auto& h : heads)
        outs.push_back(attention_head_op(tape, x, h[0], h[1], h[2], mask, dropout_rate, rng));
    return tape.matmul_nt(tape.concat_cols(outs), wo);
}

template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& x, const std::vector<AttentionHeadParams<Real>>& heads,
                                  const Tensor<Real>& projection, const CausalMask& mask) {
    Tape<Real> tape;
    auto xr = tape.leaf(x);
    std::vector<std::array<typename Tape<Real>::Ref, 3>> refs;
    refs.reserve(heads.size());
    for (const auto& h : heads)
        refs.push_back({tape.leaf(h.wq), tape.leaf(h.wk), tape.leaf(h.wv)});
    return tape.value(multi_head_attention_op(tape, xr, refs, tape.leaf(projection), mask));
}

// Pre-norm residual block: x + MHA(norm(x)), then + FFN(norm(.)).
template <typename Real>
typename Tape<Real>::Ref transformer_block_op(Tape<Real>& tape, typename Tape<Real>::Ref x,
                                              const std::vector<std::array<typename Tape<Real>::Ref, 3>>& heads,
                                              typename Tape<Real>::Ref wo, typename Tape<Real>::Ref ln1_gain,
                                              typename Tape<Real>::Ref ln1_bias, typename Tape<Real>::Ref ln2_gain,
                                              typename Tape<Real>::Ref ln2_bias, typename Tape<Real>::Ref w1,
                                              typename Tape<Real>::Ref b1, typename Tape<Real>::Ref w2,
                                              typename Tape<Real>::Ref b2, const CausalMask& mask,
                                              Real dropout_rate = Real(0), Rng* rng = nullptr) {
    auto h = tape.layer_norm(x, ln1_gain, ln1_bias);
    x = tape.add(x, multi_head_attention_op(tape, h, heads, wo, mask, dropout_rate, rng));
    auto h2 = tape.layer_norm(x, ln2_gain, ln2_bias);
    auto f1 = tape.relu(tape.add_bias(tape.matmul_nt(h2, w1), b1));
    if (dropout_rate > Real(0) && rng) f1 = tape.dropout(f1, dropout_rate, *rng);
    return tape.add(x, tape.add_bias(tape.matmul_nt(f1, w2), b2));
}

template <typename Real>
Tensor<Real> transformer_block(const Tensor<Real>& x, const BlockParams<Real>& b, const CausalMask& mask,
                               Real dropout_rate = Real(0), bool training = false, Rng* rng = nullptr) {
    Tape<Real> tape;
    auto xr = tape.leaf(x);
    std::vector<std::array<typename Tape<Real>::Ref, 3>> refs;
    refs.reserve(b.heads.size());
    for (const auto& h : b.heads)
        refs.push_back({tape.leaf(h.wq), tape.leaf(h.wk), tape.leaf(h.wv)});
    auto out = transformer_block_op(tape, xr, refs, tape.leaf(b.wo), tape.leaf(b.ln1_gain),
                                    tape.leaf(b.ln1_bias), tape.leaf(b.ln2_gain), tape.leaf(b.ln2_bias),
                                    tape.leaf(b.w1), tape.leaf(b.b1), tape.leaf(b.w2), tape.leaf(b.b2), mask,
                                    training ? dropout_rate : Real(0), rng);
    return tape.value(out);
}

// Records the whole model on a tape. Parameter leaves are registered in the
// same order as ModelParams::parameters(), so tape gradients line up with
// the optimizer's parameter list.
template <typename Real>
class TapedModel {
public:
    using Ref = typename Tape<Real>::Ref;

    TapedModel(Tape<Real>& tape, const ModelParams<Real>& params) : tape_(tape), cfg_(params.cfg) {
        for (const auto* t : params.parameters()) param_refs_.push_back(tape_.leaf(*t));
        std::size_t i = 0;
        tok_ = param_refs_[i++];
        pos_ = param_refs_[i++];
        blocks_.resize(cfg_.blocks);
        for (auto& b : blocks_) {
            b.heads.resize(cfg_.heads);
            for (auto& h : b.heads) {
                h.wq = param_refs_[i++];
                h.wk = param_refs_[i++];
                h.wv = param_refs_[i++];
            }
            b.wo = param_refs_[i++];
            b.ln1_gain = param_refs_[i++];
            b.ln1_bias = param_refs_[i++];
            b.ln2_gain = param_refs_[i++];
            b.ln2_bias = param_refs_[i++];
            b.w1 = param_refs_[i++];
            b.b1 = param_refs_[i++];
            b.w2 = param_refs_[i++];
            b.b2 = param_refs_[i++];
        }
        lnf_gain_ = param_refs_[i++];
        lnf_bias_ = param_refs_[i++];
        head_w_ = param_refs_[i++];
    }

    // Logits [n x vocab]; row t predicts token t+1. Dropout only when
    // training is set (rng required then).
    Ref forward(const std::vector<TokenId>& context, bool training = false, Rng* rng = nullptr) {
        const int n = static_cast<int>(context.size());
        if (n < 1) throw Error("forward: empty context");
        if (n > cfg_.max_context)
            throw Error("forward: context length " + std::to_string(n) + " exceeds " +
                        std::to_string(cfg_.max_context));
        for (TokenId id : context)
            if (id < 0 || id >= cfg_.vocab) throw Error("forward: invalid token id " + std::to_string(id));
        if (training && cfg_.dropout > 0 && !rng) throw Error("forward: training mode needs an rng");

        CausalMask mask(n);
        std::vector<int> ids(context.begin(), context.end());
        auto x = tape_.add(tape_.gather_rows(tok_, ids), tape_.slice_rows(pos_, 0, n));
        const Real rate = training ? static_cast<Real>(cfg_.dropout) : Real(0);
        for (const auto& b : blocks_) {
            std::vector<std::array<Ref, 3>> heads;
            heads.reserve(b.heads.size());
            for (const auto& hd : b.heads) heads.push_back({hd.wq, hd.wk, hd.wv});
            x = transformer_block_op(tape_, x, heads, b.wo, b.ln1_gain, b.ln1_bias, b.ln2_gain,
                                     b.ln2_bias, b.w1, b.b1, b.w2, b.b2, mask, rate, rng);
        }
        auto xf = tape_.layer_norm(x, lnf_gain_, lnf_bias_);
        return tape_.matmul_nt(xf, head_w_);
    }

    const std::vector<Ref>& param_refs() const { return param_refs_; }

private:
    struct BlockRefs {
        struct HeadRefs {
            Ref wq, wk, wv;
        };
        std::vector<HeadRefs> heads;
        Ref wo, ln1_gain, ln1_bias, ln2_gain, ln2_bias, w1, b1, w2, b2;
    };

    Tape<Real>& tape_;
    ModelConfig cfg_;
    std::vector<Ref> param_refs_;
    Ref tok_, pos_, lnf_gain_, lnf_bias_, head_w_;
    std::vector<BlockRefs> blocks_;
};

// Evaluation-mode logits on a throwaway tape.
template <typename Real>
Tensor<Real> forward_logits(const ModelParams<Real>& params, const std::vector<TokenId>& context) {
    Tape<Real> tape;
    TapedModel<Real> model(tape, params);
    return tape.value(model.forward(context));
}

} // namespace tabgpt

#endif
