#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mstn/grid.hpp"
#include "mstn/pitch.hpp"

namespace mstn {

// One sounding event on the tick grid. Rests are first-class events: a
// Score's notes tile [0, 24*n_bars) with no gaps and no overlaps.
struct Note {
    bool is_rest = false;
    SpelledPitch pitch;       // ignored when is_rest
    std::int64_t onset = 0;   // tick index, 24 per bar
    std::int64_t duration = 1;  // tick count, >= 1
};

// A monophonic 4/4 melody with its key signature.
struct Score {
    std::string id;
    PitchClass tonic;
    Mode mode = Mode::major;
    std::vector<Note> notes;
    int n_bars = 0;
};

inline void validate_score(const Score& s) {
    if (s.n_bars < 1) throw MalformedInput(s.id + ": score has no bars");
    if (s.n_bars > kMaxBars) {
        throw MalformedInput(s.id + ": exceeds " + std::to_string(kMaxBars) + " bars");
    }
    std::int64_t cursor = 0;
    for (const Note& n : s.notes) {
        if (n.onset != cursor) throw MalformedInput(s.id + ": events not gapless");
        if (n.duration < 1) throw MalformedInput(s.id + ": non-positive duration");
        if (!n.is_rest && !n.pitch.valid()) throw MalformedInput(s.id + ": invalid pitch");
        cursor = n.onset + n.duration;
    }
    if (cursor != static_cast<std::int64_t>(s.n_bars) * kTicksPerBar) {
        throw MalformedInput(s.id + ": events do not fill " + std::to_string(s.n_bars) + " bars");
    }
}

inline bool score_ok(const Score& s) {
    try {
        validate_score(s);
        return true;
    } catch (const Error&) {
        return false;
    }
}

// Shift all pitches and the tonic by k semitones with a consistent respelling
// along the line of fifths. Rhythm is untouched.
inline Score transpose(const Score& s, int k) {
    if (k < -6 || k > 6) throw OutOfRange("transposition step must be in [-6, 6]");
    Score out = s;
    if (k == 0) return out;
    const int shift = fifths_shift_for_transposition(k, s.tonic.fifths());
    int tonic_fifths = s.tonic.fifths() + shift;
    // keep the tonic spelling to at most double accidentals
    while (tonic_fifths > 7 + 5) tonic_fifths -= 12;
    while (tonic_fifths < -7 - 6) tonic_fifths += 12;
    out.tonic = pitch_class_from_fifths(tonic_fifths);
    for (Note& n : out.notes) {
        if (!n.is_rest) n.pitch = transpose_pitch(n.pitch, k, shift);
    }
    return out;
}

// Merge runs of adjacent rests into one event. Parsers canonicalize through
// this so that notation-level rest splitting (e.g. across barlines) does not
// leak into the frame representation.
inline void merge_adjacent_rests(Score& s) {
    std::vector<Note> merged;
    for (const Note& n : s.notes) {
        if (n.is_rest && !merged.empty() && merged.back().is_rest) {
            merged.back().duration += n.duration;
            continue;
        }
        merged.push_back(n);
    }
    s.notes = std::move(merged);
}

struct FilterReport {
    std::size_t input = 0;
    std::size_t kept = 0;
    std::size_t dropped_invalid = 0;
    std::size_t dropped_too_long = 0;
    std::vector<std::string> dropped_ids;
};

// Keep only well-formed scores of at most kMaxBars bars. Time-signature and
// grid violations are rejected at parse time already; this re-checks the
// structural invariants so synthetic corpora go through the same gate.
inline std::vector<Score> filter_corpus(const std::vector<Score>& scores,
                                        FilterReport* report = nullptr) {
    FilterReport local;
    local.input = scores.size();
    std::vector<Score> kept;
    kept.reserve(scores.size());
    for (const Score& s : scores) {
        if (s.n_bars > kMaxBars) {
            local.dropped_too_long++;
            local.dropped_ids.push_back(s.id);
            continue;
        }
        if (!score_ok(s)) {
            local.dropped_invalid++;
            local.dropped_ids.push_back(s.id);
            continue;
        }
        kept.push_back(s);
    }
    local.kept = kept.size();
    if (report) *report = local;
    return kept;
}

// Deterministic 90/10-style split: shuffle by seed, first ceil(N*ratio) go to
// the training side.
inline std::pair<std::vector<Score>, std::vector<Score>> split_train_valid(
    const std::vector<Score>& scores, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw MalformedInput("split ratio must be in (0, 1)");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t n_train =
        static_cast<std::size_t>(std::ceil(static_cast<double>(scores.size()) * ratio));
    std::pair<std::vector<Score>, std::vector<Score>> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? out.first : out.second).push_back(scores[order[i]]);
    }
    return out;
}

}  // namespace mstn
