#pragma once

#include <array>
#include <cstdlib>
#include <string>

#include "mstn/common.hpp"

namespace mstn {

// Letters are indexed in degree order C=0 .. B=6; octaves follow scientific
// pitch notation (C4 = middle C, MIDI 60).
constexpr std::array<int, 7> kLetterPc = {0, 2, 4, 5, 7, 9, 11};
constexpr std::array<int, 7> kLetterFifths = {0, 2, 4, -1, 1, 3, 5};
constexpr std::array<char, 7> kLetterName = {'C', 'D', 'E', 'F', 'G', 'A', 'B'};

inline int letter_from_char(char c) {
    switch (c) {
        case 'C': return 0;
        case 'D': return 1;
        case 'E': return 2;
        case 'F': return 3;
        case 'G': return 4;
        case 'A': return 5;
        case 'B': return 6;
        default: throw MalformedInput(std::string("bad pitch letter '") + c + "'");
    }
}

struct SpelledPitch {
    int letter = 0;      // 0..6, C..B
    int accidental = 0;  // -2..+2 semitones
    int octave = 4;

    int midi() const { return (octave + 1) * 12 + kLetterPc[letter] + accidental; }
    int fifths() const { return kLetterFifths[letter] + 7 * accidental; }
    int diatonic() const { return octave * 7 + letter; }

    bool valid() const {
        const int m = midi();
        return letter >= 0 && letter <= 6 && accidental >= -2 && accidental <= 2 && m >= 0 &&
               m <= 127;
    }

    std::string str() const {
        std::string s(1, kLetterName[letter]);
        for (int i = 0; i < accidental; ++i) s += '#';
        for (int i = 0; i > accidental; --i) s += 'b';
        return s + std::to_string(octave);
    }

    friend bool operator==(const SpelledPitch& a, const SpelledPitch& b) {
        return a.letter == b.letter && a.accidental == b.accidental && a.octave == b.octave;
    }
};

// Tonal center: a spelled pitch class (no octave).
struct PitchClass {
    int letter = 0;
    int accidental = 0;

    int fifths() const { return kLetterFifths[letter] + 7 * accidental; }
    int pc() const { return ((kLetterPc[letter] + accidental) % 12 + 12) % 12; }

    std::string str() const {
        std::string s(1, kLetterName[letter]);
        for (int i = 0; i < accidental; ++i) s += '#';
        for (int i = 0; i > accidental; --i) s += 'b';
        return s;
    }

    friend bool operator==(const PitchClass& a, const PitchClass& b) {
        return a.letter == b.letter && a.accidental == b.accidental;
    }
};

// (letter, accidental) from a line-of-fifths index.
inline PitchClass pitch_class_from_fifths(int f) {
    int acc = f >= -1 ? (f + 1) / 7 : -((-f + 5) / 7);
    const int rem = f - 7 * acc;  // in [-1, 5]
    for (int l = 0; l < 7; ++l) {
        if (kLetterFifths[l] == rem) return {l, acc};
    }
    throw MalformedInput("unreachable fifths remainder");
}

inline SpelledPitch parse_pitch(const std::string& s) {
    if (s.empty()) throw MalformedInput("empty pitch token");
    SpelledPitch p;
    p.letter = letter_from_char(s[0]);
    std::size_t i = 1;
    while (i < s.size() && (s[i] == '#' || s[i] == 'b')) {
        p.accidental += s[i] == '#' ? 1 : -1;
        ++i;
    }
    if (i >= s.size()) throw MalformedInput("pitch token missing octave: " + s);
    char* end = nullptr;
    p.octave = static_cast<int>(std::strtol(s.c_str() + i, &end, 10));
    if (end != s.c_str() + s.size()) throw MalformedInput("bad pitch token: " + s);
    if (!p.valid()) throw MalformedInput("pitch out of range: " + s);
    return p;
}

// Directed staff interval in diatonic steps (C4 -> E4 = +2). Accidental
// quality is ignored on purpose: step counts are transposition invariant.
inline int staff_interval(const SpelledPitch& from, const SpelledPitch& to) {
    return to.diatonic() - from.diatonic();
}

enum class Mode { major, minor, dorian, mixolydian, other };

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::major: return "major";
        case Mode::minor: return "minor";
        case Mode::dorian: return "dorian";
        case Mode::mixolydian: return "mixolydian";
        case Mode::other: return "other";
    }
    return "other";
}

inline Mode mode_from_name(const std::string& s) {
    if (s == "major") return Mode::major;
    if (s == "minor") return Mode::minor;
    if (s == "dorian") return Mode::dorian;
    if (s == "mixolydian") return Mode::mixolydian;
    if (s == "other") return Mode::other;
    throw MalformedInput("unknown mode name: " + s);
}

// Tonic offset from the relative major, on the line of fifths.
inline int mode_fifths_offset(Mode m) {
    switch (m) {
        case Mode::major: return 0;
        case Mode::mixolydian: return 1;
        case Mode::dorian: return 2;
        case Mode::minor: return 3;
        case Mode::other: return 0;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Transposition
// ---------------------------------------------------------------------------

// A semitone shift k maps to a line-of-fifths shift f with 7f = k (mod 12).
// Of the two candidates, pick the one giving the new tonic the smaller key
// signature; ties go to the sharp side (+6 from C picks F#, not Gb).
inline int fifths_shift_for_transposition(int semitones, int tonic_fifths) {
    const int f0 = ((7 * semitones) % 12 + 12) % 12;
    const int sharp = f0;
    const int flat = f0 - 12;
    if (std::abs(tonic_fifths + sharp) <= std::abs(tonic_fifths + flat)) return sharp;
    return flat;
}

// Spelling with the smallest accidental for a MIDI value (tie -> sharp).
inline SpelledPitch respell_minimal(int midi) {
    const int pc = ((midi % 12) + 12) % 12;
    for (int acc : {0, 1, -1, 2, -2}) {
        for (int l = 0; l < 7; ++l) {
            if (((kLetterPc[l] + acc) % 12 + 12) % 12 == pc) {
                SpelledPitch p{l, acc, (midi - kLetterPc[l] - acc) / 12 - 1};
                if (p.midi() == midi && p.valid()) return p;
            }
        }
    }
    throw OutOfRange("midi value " + std::to_string(midi) + " has no valid spelling");
}

// Shift a pitch by `semitones`, respelled along the line of fifths by
// `fifths_shift` (taken from the tonic move so the whole piece respells
// consistently). Falls back to the minimal enharmonic spelling when the
// shifted accidental leaves [-2, 2].
inline SpelledPitch transpose_pitch(const SpelledPitch& p, int semitones, int fifths_shift) {
    const int target_midi = p.midi() + semitones;
    if (target_midi < 0 || target_midi > 127) {
        throw OutOfRange("transposed pitch " + p.str() + " leaves the MIDI range");
    }
    const PitchClass shifted = pitch_class_from_fifths(p.fifths() + fifths_shift);
    SpelledPitch out{shifted.letter, shifted.accidental, 0};
    const int base = kLetterPc[out.letter] + out.accidental;
    if (((target_midi - base) % 12 + 12) % 12 != 0) {
        // fifths arithmetic and semitone arithmetic disagree only on bad input
        throw OutOfRange("inconsistent transposition of " + p.str());
    }
    out.octave = (target_midi - base) / 12 - 1;
    if (out.accidental < -2 || out.accidental > 2) return respell_minimal(target_midi);
    return out;
}

}  // namespace mstn
