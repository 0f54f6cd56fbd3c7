#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mstn/score.hpp"

namespace mstn {

enum class TokenKind { pad, hold, rest, pitch, tonic, mode };

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kHoldToken = "__";
inline constexpr const char* kRestToken = "rest";

// Token table: PAD/HOLD/REST specials, one token per spelled pitch, per tonic
// spelling and per mode. Ids are dense and deterministic.
class Vocab {
  public:
    static Vocab build(const std::vector<Score>& corpus) {
        if (corpus.empty()) throw EmptyCorpus("cannot build a vocabulary from nothing");
        std::set<std::tuple<int, int, int>> pitches;   // midi, letter, accidental
        std::set<std::pair<int, int>> tonics;          // pc, fifths
        std::set<int> modes;
        for (const Score& s : corpus) {
            tonics.insert({s.tonic.pc(), s.tonic.fifths()});
            modes.insert(static_cast<int>(s.mode));
            for (const Note& n : s.notes) {
                if (!n.is_rest) {
                    pitches.insert({n.pitch.midi(), n.pitch.letter, n.pitch.accidental});
                }
            }
        }
        Vocab v;
        v.add(kPadToken, TokenKind::pad);
        v.add(kHoldToken, TokenKind::hold);
        v.add(kRestToken, TokenKind::rest);
        for (const auto& [midi, letter, acc] : pitches) {
            SpelledPitch p{letter, acc, (midi - kLetterPc[letter] - acc) / 12 - 1};
            v.add(p.str(), TokenKind::pitch);
        }
        for (const auto& [pc, fifths] : tonics) {
            (void)pc;
            v.add(std::string("T:") + pitch_class_from_fifths(fifths).str(), TokenKind::tonic);
        }
        for (int m : modes) {
            v.add("M:" + mode_name(static_cast<Mode>(m)), TokenKind::mode);
        }
        return v;
    }

    int id(const std::string& token) const {
        auto it = ids_.find(token);
        if (it == ids_.end()) throw MalformedInput("token not in vocabulary: " + token);
        return it->second;
    }
    bool contains(const std::string& token) const { return ids_.count(token) != 0; }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    TokenKind kind(int id) const { return kinds_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(tokens_.size()); }

    int pad_id() const { return id(kPadToken); }
    int hold_id() const { return id(kHoldToken); }
    int rest_id() const { return id(kRestToken); }

    int pitch_id(const SpelledPitch& p) const { return id(p.str()); }
    int tonic_id(const PitchClass& t) const { return id("T:" + t.str()); }
    int mode_id(Mode m) const { return id("M:" + mode_name(m)); }

    SpelledPitch pitch_of(int id) const {
        if (kind(id) != TokenKind::pitch) throw MalformedSequence("not a pitch token");
        return parse_pitch(token(id));
    }
    PitchClass tonic_of(int token_id) const {
        if (kind(token_id) != TokenKind::tonic) throw MalformedSequence("not a tonic token");
        const std::string s = token(token_id).substr(2);
        PitchClass pc;
        pc.letter = letter_from_char(s[0]);
        for (std::size_t i = 1; i < s.size(); ++i) pc.accidental += s[i] == '#' ? 1 : -1;
        return pc;
    }
    Mode mode_of(int token_id) const {
        if (kind(token_id) != TokenKind::mode) throw MalformedSequence("not a mode token");
        return mode_from_name(token(token_id).substr(2));
    }

    // frame positions may hold pitch, rest, or hold tokens only
    bool is_frame_token(int id) const {
        const TokenKind k = kind(id);
        return k == TokenKind::pitch || k == TokenKind::rest || k == TokenKind::hold;
    }

    std::vector<int> ids_of_kind(TokenKind k) const {
        std::vector<int> out;
        for (int i = 0; i < size(); ++i) {
            if (kinds_[static_cast<std::size_t>(i)] == k) out.push_back(i);
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (int i = 0; i < size(); ++i) j[token(i)] = i;
        return j;
    }

    static Vocab from_json(const nlohmann::json& j) {
        std::vector<std::string> toks(j.size());
        for (auto it = j.begin(); it != j.end(); ++it) {
            const int id = it.value().get<int>();
            if (id < 0 || id >= static_cast<int>(j.size())) {
                throw MalformedInput("vocabulary ids are not dense");
            }
            toks[static_cast<std::size_t>(id)] = it.key();
        }
        Vocab v;
        for (const std::string& t : toks) v.add(t, classify(t));
        return v;
    }

  private:
    void add(const std::string& token, TokenKind kind) {
        if (ids_.count(token)) return;
        ids_[token] = static_cast<int>(tokens_.size());
        tokens_.push_back(token);
        kinds_.push_back(kind);
    }

    static TokenKind classify(const std::string& t) {
        if (t == kPadToken) return TokenKind::pad;
        if (t == kHoldToken) return TokenKind::hold;
        if (t == kRestToken) return TokenKind::rest;
        if (t.rfind("T:", 0) == 0) return TokenKind::tonic;
        if (t.rfind("M:", 0) == 0) return TokenKind::mode;
        return TokenKind::pitch;
    }

    std::vector<std::string> tokens_;
    std::vector<TokenKind> kinds_;
    std::map<std::string, int> ids_;
};

}  // namespace mstn
