#pragma once

// Shared generators for tests and the acceptance suite: random scores and
// the synthetic structured corpora used by the training checks.

#include <string>
#include <vector>

#include "mstn/common.hpp"
#include "mstn/score.hpp"

namespace mstn::testutil {

inline const int kCMajorScale[] = {60, 62, 64, 65, 67, 69, 71, 72};  // C4..C5

// Random melody from quarter/eighth/half cells; rhythmically regular enough
// for small models to learn.
inline Score random_score(Rng& rng, int n_bars, const std::string& id) {
    Score s;
    s.id = id;
    s.tonic = PitchClass{0, 0};
    s.mode = Mode::major;
    s.n_bars = n_bars;
    std::int64_t cursor = 0;
    const std::int64_t total = static_cast<std::int64_t>(n_bars) * kTicksPerBar;
    while (cursor < total) {
        std::int64_t dur;
        switch (rng.next_below(4)) {
            case 0: dur = 2 * kTicksPerBeat; break;
            case 1: dur = kTicksPerBeat; break;
            default: dur = kTicksPerBeat / 2; break;
        }
        if (cursor % kTicksPerBeat == kTicksPerBeat / 2) dur = kTicksPerBeat / 2;
        if (cursor + dur > total) dur = total - cursor;
        Note n;
        n.onset = cursor;
        n.duration = dur;
        n.is_rest = rng.next_below(6) == 0;
        if (!n.is_rest) n.pitch = respell_minimal(kCMajorScale[rng.next_below(8)]);
        s.notes.push_back(n);
        cursor += dur;
    }
    validate_score(s);
    return s;
}

// Random melody with arbitrary tick durations (1..12); exercises the uneven
// grid in the metric oracles.
inline Score random_grid_score(Rng& rng, int n_bars, const std::string& id) {
    Score s;
    s.id = id;
    s.tonic = PitchClass{0, 0};
    s.mode = Mode::major;
    s.n_bars = n_bars;
    std::int64_t cursor = 0;
    const std::int64_t total = static_cast<std::int64_t>(n_bars) * kTicksPerBar;
    while (cursor < total) {
        std::int64_t dur = 1 + static_cast<std::int64_t>(rng.next_below(12));
        if (cursor + dur > total) dur = total - cursor;
        Note n;
        n.onset = cursor;
        n.duration = dur;
        n.is_rest = rng.next_below(5) == 0;
        if (!n.is_rest) n.pitch = respell_minimal(kCMajorScale[rng.next_below(8)]);
        s.notes.push_back(n);
        cursor += dur;
    }
    validate_score(s);
    return s;
}

// One random bar from quarter/eighth cells, for assembling pieces with exact
// bar-level repeats.
inline std::vector<Note> random_bar_cells(Rng& rng) {
    std::vector<Note> notes;
    std::int64_t cursor = 0;
    while (cursor < kTicksPerBar) {
        std::int64_t dur = rng.next_below(2) == 0 ? kTicksPerBeat : kTicksPerBeat / 2;
        if (cursor % kTicksPerBeat == kTicksPerBeat / 2) dur = kTicksPerBeat / 2;
        Note n;
        n.onset = cursor;
        n.duration = dur;
        n.is_rest = rng.next_below(8) == 0;
        if (!n.is_rest) n.pitch = respell_minimal(kCMajorScale[rng.next_below(8)]);
        notes.push_back(n);
        cursor += dur;
    }
    return notes;
}

inline Score score_from_bars(const std::vector<std::vector<Note>>& bars, const std::string& id) {
    Score s;
    s.id = id;
    s.tonic = PitchClass{0, 0};
    s.mode = Mode::major;
    s.n_bars = static_cast<int>(bars.size());
    for (std::size_t b = 0; b < bars.size(); ++b) {
        for (Note n : bars[b]) {
            n.onset += static_cast<std::int64_t>(b) * kTicksPerBar;
            s.notes.push_back(n);
        }
    }
    validate_score(s);
    return s;
}

// Synthetic corpus with known AABB / ABAB section forms (section = 4 bars by
// default). Every piece gets its own random A and B material.
inline std::vector<Score> form_corpus(Rng& rng, int n_pieces_per_form, int section_bars = 4) {
    std::vector<Score> out;
    for (int form = 0; form < 2; ++form) {
        for (int i = 0; i < n_pieces_per_form; ++i) {
            std::vector<std::vector<Note>> a, b;
            for (int j = 0; j < section_bars; ++j) a.push_back(random_bar_cells(rng));
            for (int j = 0; j < section_bars; ++j) b.push_back(random_bar_cells(rng));
            std::vector<std::vector<Note>> bars;
            const auto append = [&](const std::vector<std::vector<Note>>& sec) {
                for (const auto& bar : sec) bars.push_back(bar);
            };
            if (form == 0) {  // AABB
                append(a); append(a); append(b); append(b);
            } else {  // ABAB
                append(a); append(b); append(a); append(b);
            }
            const std::string name = (form == 0 ? "aabb-" : "abab-") + std::to_string(i);
            out.push_back(score_from_bars(bars, name));
        }
    }
    return out;
}

}  // namespace mstn::testutil
