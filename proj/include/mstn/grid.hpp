#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "mstn/fraction.hpp"

namespace mstn {

// Frame grid: 6 uneven ticks per beat at the beat fractions
// {0, 1/4, 1/3, 1/2, 2/3, 3/4}, i.e. twelfth-of-a-beat offsets below.
// This covers sixteenths and eighth triplets; 24 ticks per 4/4 bar.
constexpr int kTicksPerBeat = 6;
constexpr int kBeatsPerBar = 4;
constexpr int kTicksPerBar = kTicksPerBeat * kBeatsPerBar;
constexpr int kTwelfthsPerBeat = 12;
constexpr int kTwelfthsPerBar = kTwelfthsPerBeat * kBeatsPerBar;
constexpr int kMaxBars = 100;

constexpr std::array<std::int64_t, 6> kTickTwelfths = {0, 3, 4, 6, 8, 9};

inline std::int64_t tick_to_twelfths(std::int64_t tick) {
    const std::int64_t beat = tick / kTicksPerBeat;
    const std::int64_t r = tick % kTicksPerBeat;
    return beat * kTwelfthsPerBeat + kTickTwelfths[static_cast<std::size_t>(r)];
}

inline std::optional<std::int64_t> twelfths_to_tick(std::int64_t twelfths) {
    if (twelfths < 0) return std::nullopt;
    const std::int64_t beat = twelfths / kTwelfthsPerBeat;
    const std::int64_t r = twelfths % kTwelfthsPerBeat;
    for (std::size_t i = 0; i < kTickTwelfths.size(); ++i) {
        if (kTickTwelfths[i] == r) return beat * kTicksPerBeat + static_cast<std::int64_t>(i);
    }
    return std::nullopt;
}

inline bool on_grid(std::int64_t twelfths) { return twelfths_to_tick(twelfths).has_value(); }

// Tick spans are uneven in time; durations for the metrics are exact beat
// fractions derived from the twelfth positions.
inline std::int64_t tick_span_twelfths(std::int64_t onset_tick, std::int64_t duration_ticks) {
    return tick_to_twelfths(onset_tick + duration_ticks) - tick_to_twelfths(onset_tick);
}

inline Frac tick_span_beats(std::int64_t onset_tick, std::int64_t duration_ticks) {
    return Frac(tick_span_twelfths(onset_tick, duration_ticks), kTwelfthsPerBeat);
}

}  // namespace mstn
