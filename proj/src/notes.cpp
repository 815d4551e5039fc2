#include "tabgpt/notes.hpp"

#include <algorithm>
#include <set>

namespace tabgpt {

PitchClass PitchClass::fret(int index) {
    if (index < 0 || index > kMaxFret)
        throw Error("fret index " + std::to_string(index) + " out of range [0, " + std::to_string(kMaxFret) + "]");
    return PitchClass(PitchVariant::Fret, index);
}

int PitchClass::fret_index() const {
    if (!is_fret()) throw Error("pitch has no fret index");
    return fret_;
}

Duration Duration::of(int denominator) {
    switch (denominator) {
        case 1: case 2: case 4: case 8: case 16: case 32: case 64: case 128:
            return Duration(denominator);
        default:
            throw Error("invalid duration denominator " + std::to_string(denominator) +
                        " (expected a power of two in 1..128)");
    }
}

int Duration::ladder_index() const {
    int i = 0;
    for (int d = denominator_; d > 1; d >>= 1) ++i;
    return i;
}

NoteTuple::NoteTuple(PitchClass p, Duration d, ChordKind c, bool dot, bool mute)
    : pitch(p), duration(d), chord(c), dotted(dot), muted(mute) {
    if (pitch.variant() == PitchVariant::Rest) {
        if (chord != ChordKind::None) throw Error("rest note cannot carry a chord");
        if (muted) throw Error("rest note cannot be muted");
    }
}

std::string NoteTuple::describe() const {
    std::string s;
    switch (pitch.variant()) {
        case PitchVariant::Fret: s = "fret " + std::to_string(pitch.fret_index()); break;
        case PitchVariant::Rest: s = "rest"; break;
        case PitchVariant::Dead: s = "dead"; break;
        case PitchVariant::Tied: s = "tied"; break;
    }
    s += ", 1/" + std::to_string(duration.denominator());
    switch (chord) {
        case ChordKind::None: break;
        case ChordKind::Fourth: s += ", 4th chord"; break;
        case ChordKind::DiminishedFifth: s += ", dim5 chord"; break;
        case ChordKind::PerfectFifth: s += ", 5th chord"; break;
    }
    if (dotted) s += ", dotted";
    if (muted) s += ", muted";
    return s;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<NoteTuple>>& corpus) {
    std::set<NoteTuple> distinct;
    for (const auto& seq : corpus) distinct.insert(seq.begin(), seq.end());
    if (distinct.empty()) throw Error("empty corpus: no note tuples to build a vocabulary from");
    return from_ordered(std::vector<NoteTuple>(distinct.begin(), distinct.end()));
}

Vocabulary Vocabulary::from_ordered(std::vector<NoteTuple> tuples) {
    if (tuples.empty()) throw Error("vocabulary cannot be empty");
    if (!std::is_sorted(tuples.begin(), tuples.end()))
        throw Error("vocabulary tuple list is not in canonical order");
    Vocabulary v;
    v.ordered_ = std::move(tuples);
    for (std::size_t i = 0; i < v.ordered_.size(); ++i) {
        auto [it, inserted] = v.ids_.emplace(v.ordered_[i], static_cast<TokenId>(i));
        if (!inserted) throw Error("vocabulary tuple list contains duplicates");
    }
    return v;
}

TokenId Vocabulary::token(const NoteTuple& t) const {
    auto it = ids_.find(t);
    if (it == ids_.end()) throw Error("out-of-vocabulary tuple: " + t.describe());
    return it->second;
}

const NoteTuple& Vocabulary::tuple(TokenId id) const {
    if (id < 0 || id >= size())
        throw Error("invalid token id " + std::to_string(id) + " (vocabulary size " + std::to_string(size()) + ")");
    return ordered_[static_cast<std::size_t>(id)];
}

std::vector<std::vector<TokenId>> tokenize_sequences(const Vocabulary& vocab,
                                                     const std::vector<std::vector<NoteTuple>>& sequences) {
    std::vector<std::vector<TokenId>> out;
    out.reserve(sequences.size());
    for (const auto& seq : sequences) {
        std::vector<TokenId> ids;
        ids.reserve(seq.size());
        for (const auto& t : seq) ids.push_back(vocab.token(t));
        out.push_back(std::move(ids));
    }
    return out;
}

} // namespace tabgpt
