#ifndef TABGPT_NOTES_HPP
#define TABGPT_NOTES_HPP

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "tabgpt/common.hpp"

namespace tabgpt {

using TokenId = std::int32_t;

inline constexpr int kMaxFret = 58; // 59 one-hot fret slots, 0..58

enum class PitchVariant : std::uint8_t { Fret = 0, Rest = 1, Dead = 2, Tied = 3 };

// Fret offset in semitones above the instrument's lowest pitch, or one of
// the special rest/dead/tied designations.
class PitchClass {
public:
    static PitchClass fret(int index);
    static PitchClass rest() { return PitchClass(PitchVariant::Rest, 0); }
    static PitchClass dead() { return PitchClass(PitchVariant::Dead, 0); }
    static PitchClass tied() { return PitchClass(PitchVariant::Tied, 0); }

    PitchVariant variant() const { return variant_; }
    bool is_fret() const { return variant_ == PitchVariant::Fret; }
    int fret_index() const; // throws unless is_fret()

    auto key() const { return std::make_tuple(static_cast<int>(variant_), fret_); }
    bool operator==(const PitchClass& o) const { return key() == o.key(); }
    bool operator<(const PitchClass& o) const { return key() < o.key(); }

private:
    PitchClass(PitchVariant v, int f) : variant_(v), fret_(f) {}
    PitchVariant variant_;
    int fret_;
};

// Note length as a power-of-two denominator: 1 = whole ... 128 = 128th.
class Duration {
public:
    static Duration of(int denominator);
    int denominator() const { return denominator_; }
    // Position in the 8-slot one-hot ladder: whole -> 0, 128th -> 7.
    int ladder_index() const;

    bool operator==(const Duration& o) const { return denominator_ == o.denominator_; }
    bool operator<(const Duration& o) const { return denominator_ < o.denominator_; }

private:
    explicit Duration(int d) : denominator_(d) {}
    int denominator_;
};

enum class ChordKind : std::uint8_t { None = 0, Fourth = 1, DiminishedFifth = 2, PerfectFifth = 3 };

// One tablature event. Immutable after construction; the constructor
// enforces the rest-note restrictions.
struct NoteTuple {
    PitchClass pitch;
    Duration duration;
    ChordKind chord = ChordKind::None;
    bool dotted = false;
    bool muted = false;

    NoteTuple(PitchClass p, Duration d, ChordKind c = ChordKind::None, bool dot = false, bool mute = false);

    auto key() const {
        return std::make_tuple(static_cast<int>(pitch.variant()),
                               pitch.is_fret() ? pitch.fret_index() : 0,
                               duration.denominator(), static_cast<int>(chord),
                               dotted ? 1 : 0, muted ? 1 : 0);
    }
    bool operator==(const NoteTuple& o) const { return key() == o.key(); }
    bool operator<(const NoteTuple& o) const { return key() < o.key(); }

    std::string describe() const;
};

// Invertible tuple <-> id map with contiguous ids assigned in the
// deterministic (pitch variant, fret, duration, chord, dotted, muted) order.
class Vocabulary {
public:
    Vocabulary() = default;

    static Vocabulary build(const std::vector<std::vector<NoteTuple>>& corpus);
    // Rebuild from an already-ordered canonical tuple list (checkpoint load).
    static Vocabulary from_ordered(std::vector<NoteTuple> tuples);

    int size() const { return static_cast<int>(ordered_.size()); }
    TokenId token(const NoteTuple& t) const;
    const NoteTuple& tuple(TokenId id) const;
    const std::vector<NoteTuple>& tuples() const { return ordered_; }

    bool operator==(const Vocabulary& o) const { return ordered_ == o.ordered_; }

private:
    std::vector<NoteTuple> ordered_;
    std::map<NoteTuple, TokenId> ids_;
};

// Tokenize sequences against a fixed vocabulary; any unknown tuple is an error.
std::vector<std::vector<TokenId>> tokenize_sequences(const Vocabulary& vocab,
                                                     const std::vector<std::vector<NoteTuple>>& sequences);

} // namespace tabgpt

#endif
