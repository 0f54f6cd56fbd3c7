#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mstn/score.hpp"
#include "mstn/vocab.hpp"

namespace mstn {

// Frame token sequence: [tonic, mode] then one token per tick (onset token or
// HOLD), 24 per bar.
struct TokenSequence {
    std::string template_id;
    std::vector<int> tokens;
};

constexpr int kPrefixLen = 2;  // tonic + mode

inline TokenSequence encode(const Score& s, const Vocab& vocab) {
    validate_score(s);
    TokenSequence seq;
    seq.template_id = s.id;
    seq.tokens.reserve(static_cast<std::size_t>(kPrefixLen + s.n_bars * kTicksPerBar));
    seq.tokens.push_back(vocab.tonic_id(s.tonic));
    seq.tokens.push_back(vocab.mode_id(s.mode));
    const int hold = vocab.hold_id();
    for (const Note& n : s.notes) {
        seq.tokens.push_back(n.is_rest ? vocab.rest_id() : vocab.pitch_id(n.pitch));
        for (std::int64_t i = 1; i < n.duration; ++i) seq.tokens.push_back(hold);
    }
    return seq;
}

// Inverse of encode. With `repair_count` set, a HOLD with no antecedent (only
// possible in the first frame) is replaced by a REST and counted instead of
// rejected; generated sequences go through this path.
inline Score decode(const TokenSequence& seq, const Vocab& vocab,
                    std::size_t* repair_count = nullptr) {
    const std::vector<int>& t = seq.tokens;
    if (t.size() < kPrefixLen + kTicksPerBar) {
        throw MalformedSequence("sequence shorter than one bar");
    }
    if ((t.size() - kPrefixLen) % kTicksPerBar != 0) {
        throw MalformedSequence("frame count is not a whole number of bars");
    }
    if (vocab.kind(t[0]) != TokenKind::tonic) {
        throw MalformedSequence("sequence does not start with a tonic token");
    }
    if (vocab.kind(t[1]) != TokenKind::mode) {
        throw MalformedSequence("second token is not a mode token");
    }
    Score s;
    s.id = seq.template_id;
    s.tonic = vocab.tonic_of(t[0]);
    s.mode = vocab.mode_of(t[1]);
    s.n_bars = static_cast<int>((t.size() - kPrefixLen) / kTicksPerBar);

    for (std::size_t i = kPrefixLen; i < t.size(); ++i) {
        int id = t[i];
        if (!vocab.is_frame_token(id)) {
            throw MalformedSequence("non-frame token at tick " +
                                    std::to_string(i - kPrefixLen));
        }
        const std::int64_t tick = static_cast<std::int64_t>(i - kPrefixLen);
        if (vocab.kind(id) == TokenKind::hold) {
            if (s.notes.empty()) {
                if (!repair_count) {
                    throw MalformedSequence("HOLD with no antecedent at tick 0");
                }
                ++*repair_count;
                id = vocab.rest_id();
            } else {
                s.notes.back().duration += 1;
                continue;
            }
        }
        Note n;
        n.is_rest = vocab.kind(id) == TokenKind::rest;
        if (!n.is_rest) n.pitch = vocab.pitch_of(id);
        n.onset = tick;
        n.duration = 1;
        s.notes.push_back(n);
    }
    validate_score(s);
    return s;
}

// Pitch-transposition augmentation: up to 13 copies per piece (k in [-6, 6]),
// skipping transpositions that leave the pitch range. The template map sends
// every augmented id to the id of its source piece; augmented versions share
// the source's structure embedding.
inline std::pair<std::vector<Score>, std::map<std::string, std::string>> augment_corpus(
    const std::vector<Score>& corpus) {
    std::vector<Score> out;
    std::map<std::string, std::string> template_map;
    for (const Score& s : corpus) {
        for (int k = -6; k <= 6; ++k) {
            try {
                Score t = transpose(s, k);
                if (k != 0) {
                    t.id = s.id + "~t" + (k > 0 ? "+" : "") + std::to_string(k);
                }
                template_map[t.id] = s.id;
                out.push_back(std::move(t));
            } catch (const OutOfRange&) {
                // transposition leaves the range: skip this copy
            }
        }
    }
    return {std::move(out), std::move(template_map)};
}

}  // namespace mstn
