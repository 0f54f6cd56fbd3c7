#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mstn/fraction.hpp"
#include "mstn/score.hpp"

namespace mstn {
namespace abc_detail {

struct KeyInfo {
    PitchClass tonic;
    Mode mode = Mode::major;   // collapsed to the supported set
    int sig_fifths = 0;        // key signature, sharps > 0 > flats
};

// offset of the tonic from its relative major on the line of fifths
inline int true_mode_offset(const std::string& m) {
    if (m.empty() || m.rfind("maj", 0) == 0 || m.rfind("ion", 0) == 0) return 0;
    if (m.rfind("mix", 0) == 0) return 1;
    if (m.rfind("dor", 0) == 0) return 2;
    if (m == "m" || m.rfind("min", 0) == 0 || m.rfind("aeo", 0) == 0) return 3;
    if (m.rfind("phr", 0) == 0) return 4;
    if (m.rfind("lyd", 0) == 0) return -1;
    if (m.rfind("loc", 0) == 0) return 5;
    throw MalformedInput("unsupported key mode: " + m);
}

inline Mode collapse_mode(const std::string& m) {
    if (m.empty() || m.rfind("maj", 0) == 0 || m.rfind("ion", 0) == 0) return Mode::major;
    if (m.rfind("mix", 0) == 0) return Mode::mixolydian;
    if (m.rfind("dor", 0) == 0) return Mode::dorian;
    if (m == "m" || m.rfind("min", 0) == 0 || m.rfind("aeo", 0) == 0) return Mode::minor;
    return Mode::other;
}

inline KeyInfo parse_key(const std::string& raw) {
    std::string s;
    for (char c : raw) {
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    }
    if (s.empty()) throw MalformedInput("empty K: field");
    KeyInfo k;
    k.tonic.letter = letter_from_char(static_cast<char>(std::toupper(s[0])));
    std::size_t i = 1;
    if (i < s.size() && (s[i] == '#' || s[i] == 'b')) {
        k.tonic.accidental = s[i] == '#' ? 1 : -1;
        ++i;
    }
    std::string mode;
    for (; i < s.size(); ++i) mode += static_cast<char>(std::tolower(s[i]));
    k.sig_fifths = k.tonic.fifths() - true_mode_offset(mode);
    k.mode = collapse_mode(mode);
    return k;
}

// key signature as a per-letter accidental
inline std::array<int, 7> signature_accidentals(int fifths) {
    std::array<int, 7> acc{};
    static constexpr int kSharpOrder[7] = {3, 0, 4, 1, 5, 2, 6};  // F C G D A E B
    static constexpr int kFlatOrder[7] = {6, 2, 5, 1, 4, 0, 3};   // B E A D G C F
    if (fifths > 7 || fifths < -7) throw MalformedInput("key signature out of range");
    for (int i = 0; i < fifths; ++i) acc[static_cast<std::size_t>(kSharpOrder[i])] = 1;
    for (int i = 0; i < -fifths; ++i) acc[static_cast<std::size_t>(kFlatOrder[i])] = -1;
    return acc;
}

struct RawEvent {
    bool is_rest = false;
    SpelledPitch pitch;
    Frac duration;  // beats
    bool tied = false;
};

struct Segment {
    std::vector<RawEvent> events;
    Frac length() const {
        Frac total(0);
        for (const RawEvent& e : events) total = total + e.duration;
        return total;
    }
};

class BodyParser {
  public:
    BodyParser(const std::string& body, const KeyInfo& key, Frac unit_beats)
        : body_(body), key_sig_(signature_accidentals(key.sig_fifths)), unit_beats_(unit_beats) {}

    std::vector<Segment> parse() {
        while (pos_ < body_.size()) {
            step();
        }
        if (!current_.events.empty()) segments_.push_back(std::move(current_));
        return std::move(segments_);
    }

  private:
    void step() {
        const char c = body_[pos_];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos_;
            return;
        }
        switch (c) {
            case '%': skip_line(); return;
            case '|': case ':': consume_barline(); return;
            case '[': consume_bracket(); return;
            case ']': ++pos_; return;
            case '(': consume_paren(); return;
            case ')': case '.': case '~': case '*': case '`': case '$': ++pos_; return;
            case '{': skip_until('}'); return;
            case '"': ++pos_; skip_until('"'); return;
            case '!': ++pos_; skip_until('!'); return;
            case '^': case '_': case '=': consume_accidental(); return;
            case '>': case '<': consume_broken(); return;
            case '-':
                if (!current_.events.empty()) current_.events.back().tied = true;
                ++pos_;
                return;
            case 'z': case 'x': consume_rest(); return;
            case 'Z': consume_multibar_rest(); return;
            case '&': throw MalformedInput("voice overlay '&' is not supported");
            default: break;
        }
        if ((c >= 'A' && c <= 'G') || (c >= 'a' && c <= 'g')) {
            consume_note();
            return;
        }
        // decoration shorthand letters (H..W, u, v) carry no duration
        if ((c >= 'H' && c <= 'W') || c == 'u' || c == 'v') {
            ++pos_;
            return;
        }
        throw MalformedInput(std::string("unexpected character '") + c + "' in tune body");
    }

    void skip_line() {
        while (pos_ < body_.size() && body_[pos_] != '\n') ++pos_;
    }

    void skip_until(char close) {
        while (pos_ < body_.size() && body_[pos_] != close) ++pos_;
        if (pos_ < body_.size()) ++pos_;
    }

    void consume_barline() {
        while (pos_ < body_.size() &&
               (body_[pos_] == '|' || body_[pos_] == ':' || body_[pos_] == ']')) {
            ++pos_;
        }
        // volta numbers ("|1", ":|2", "[1,3") are read past; endings are kept
        // in linear order
        while (pos_ < body_.size() && (std::isdigit(static_cast<unsigned char>(body_[pos_])) ||
                                       body_[pos_] == ',' || body_[pos_] == '-')) {
            ++pos_;
        }
        end_bar();
    }

    void end_bar() {
        measure_accidentals_.clear();
        if (current_.events.empty()) return;  // adjacent barlines
        segments_.push_back(std::move(current_));
        current_ = Segment{};
    }

    void consume_bracket() {
        // "[|" barline, "[1" volta, "[K:...]" inline field, "[CEG]" chord
        if (pos_ + 1 < body_.size()) {
            const char n = body_[pos_ + 1];
            if (n == '|') {
                pos_ += 2;
                consume_barline_tail();
                return;
            }
            if (std::isdigit(static_cast<unsigned char>(n))) {
                pos_ += 1;
                while (pos_ < body_.size() &&
                       (std::isdigit(static_cast<unsigned char>(body_[pos_])) ||
                        body_[pos_] == ',' || body_[pos_] == '-')) {
                    ++pos_;
                }
                end_bar();
                return;
            }
            if (pos_ + 2 < body_.size() && std::isalpha(static_cast<unsigned char>(n)) &&
                body_[pos_ + 2] == ':') {
                consume_inline_field(n);
                return;
            }
        }
        throw MalformedInput("chords are not supported (monophonic melodies only)");
    }

    void consume_barline_tail() {
        while (pos_ < body_.size() && (body_[pos_] == '|' || body_[pos_] == ':')) ++pos_;
        end_bar();
    }

    void consume_inline_field(char field) {
        std::size_t end = body_.find(']', pos_);
        if (end == std::string::npos) throw MalformedInput("unterminated inline field");
        const std::string value = body_.substr(pos_ + 3, end - pos_ - 3);
        pos_ = end + 1;
        switch (field) {
            case 'M':
                if (value != "4/4" && value != "C") {
                    throw UnsupportedTimeSignature("inline meter change to " + value);
                }
                return;
            case 'L': unit_beats_ = parse_unit_length(value); return;
            case 'K': throw MalformedInput("mid-tune key change is not supported");
            default: return;  // remarks etc.
        }
    }

    void consume_paren() {
        // "(3" tuplet, otherwise a slur
        if (pos_ + 1 >= body_.size() || !std::isdigit(static_cast<unsigned char>(body_[pos_ + 1]))) {
            ++pos_;
            return;
        }
        ++pos_;
        const int p = read_int();
        int q = default_tuplet_q(p);
        int r = p;
        if (pos_ < body_.size() && body_[pos_] == ':') {
            ++pos_;
            if (pos_ < body_.size() && std::isdigit(static_cast<unsigned char>(body_[pos_]))) {
                q = read_int();
            }
            if (pos_ < body_.size() && body_[pos_] == ':') {
                ++pos_;
                if (pos_ < body_.size() && std::isdigit(static_cast<unsigned char>(body_[pos_]))) {
                    r = read_int();
                }
            }
        }
        tuplet_factor_ = Frac(q, p);
        tuplet_remaining_ = r;
    }

    static int default_tuplet_q(int p) {
        // simple-meter defaults of the ABC standard
        switch (p) {
            case 2: case 6: return 2;
            case 3: return 2;
            case 4: case 8: return 3;
            default: return 2;
        }
    }

    int read_int() {
        int v = 0;
        while (pos_ < body_.size() && std::isdigit(static_cast<unsigned char>(body_[pos_]))) {
            v = v * 10 + (body_[pos_] - '0');
            ++pos_;
        }
        return v;
    }

    void consume_accidental() {
        int acc = 0;
        while (pos_ < body_.size() &&
               (body_[pos_] == '^' || body_[pos_] == '_' || body_[pos_] == '=')) {
            if (body_[pos_] == '^') acc += 1;
            else if (body_[pos_] == '_') acc -= 1;
            ++pos_;
        }
        pending_accidental_ = acc;
        has_pending_accidental_ = true;
        if (acc < -2 || acc > 2) throw MalformedInput("accidental beyond double sharp/flat");
    }

    void consume_broken(){
        char c = body_[pos_];
        int n = 0;
        while (pos_ < body_.size() && body_[pos_] == c) {
            ++n;
            ++pos_;
        }
        if (current_.events.empty()) throw MalformedInput("broken rhythm with no left note");
        broken_ = c == '>' ? n : -n;
        broken_left_ = static_cast<int>(current_.events.size()) - 1;
    }

    Frac read_length_multiplier() {
        Frac mult(1);
        if (pos_ < body_.size() && std::isdigit(static_cast<unsigned char>(body_[pos_]))) {
            mult = Frac(read_int());
        }
        while (pos_ < body_.size() && body_[pos_] == '/') {
            ++pos_;
            if (pos_ < body_.size() && std::isdigit(static_cast<unsigned char>(body_[pos_]))) {
                mult = mult / Frac(read_int());
            } else {
                mult = mult / Frac(2);
            }
        }
        return mult;
    }

    void apply_rhythm_state(RawEvent& e) {
        if (tuplet_remaining_ > 0) {
            e.duration = e.duration * tuplet_factor_;
            if (--tuplet_remaining_ == 0) tuplet_factor_ = Frac(1);
        }
        current_.events.push_back(e);
        if (broken_ != 0) {
            const int n = broken_ > 0 ? broken_ : -broken_;
            Frac dotted(2);
            dotted = dotted - Frac(1, 1LL << n);  // 2 - 2^-n
            Frac halved(1, 1LL << n);
            RawEvent& left = current_.events[static_cast<std::size_t>(broken_left_)];
            RawEvent& right = current_.events.back();
            if (broken_ > 0) {
                left.duration = left.duration * dotted;
                right.duration = right.duration * halved;
            } else {
                left.duration = left.duration * halved;
                right.duration = right.duration * dotted;
            }
            broken_ = 0;
        }
    }

    void consume_rest() {
        ++pos_;
        RawEvent e;
        e.is_rest = true;
        e.duration = unit_beats_ * read_length_multiplier();
        has_pending_accidental_ = false;
        apply_rhythm_state(e);
    }

    void consume_multibar_rest() {
        ++pos_;
        int bars = 1;
        if (pos_ < body_.size() && std::isdigit(static_cast<unsigned char>(body_[pos_]))) {
            bars = read_int();
        }
        RawEvent e;
        e.is_rest = true;
        e.duration = Frac(4LL * bars);
        apply_rhythm_state(e);
    }

    void consume_note() {
        const char c = body_[pos_];
        ++pos_;
        RawEvent e;
        e.pitch.letter = letter_from_char(static_cast<char>(std::toupper(c)));
        e.pitch.octave = std::isupper(static_cast<unsigned char>(c)) ? 4 : 5;
        while (pos_ < body_.size() && (body_[pos_] == '\'' || body_[pos_] == ',')) {
            e.pitch.octave += body_[pos_] == '\'' ? 1 : -1;
            ++pos_;
        }
        const int key = e.pitch.letter * 16 + e.pitch.octave;
        if (has_pending_accidental_) {
            e.pitch.accidental = pending_accidental_;
            measure_accidentals_[key] = pending_accidental_;
            has_pending_accidental_ = false;
        } else if (auto it = measure_accidentals_.find(key); it != measure_accidentals_.end()) {
            e.pitch.accidental = it->second;
        } else {
            e.pitch.accidental = key_sig_[static_cast<std::size_t>(e.pitch.letter)];
        }
        if (!e.pitch.valid()) throw MalformedInput("note out of range: " + e.pitch.str());
        e.duration = unit_beats_ * read_length_multiplier();
        apply_rhythm_state(e);
    }

  public:
    static Frac parse_unit_length(const std::string& value) {
        const std::size_t slash = value.find('/');
        if (slash == std::string::npos) throw MalformedInput("bad L: field: " + value);
        const long num = std::strtol(value.substr(0, slash).c_str(), nullptr, 10);
        const long den = std::strtol(value.substr(slash + 1).c_str(), nullptr, 10);
        if (num <= 0 || den <= 0) throw MalformedInput("bad L: field: " + value);
        return Frac(4L * num, den);  // beats (quarter = 1 beat in 4/4)
    }

  private:
    const std::string& body_;
    std::array<int, 7> key_sig_;
    Frac unit_beats_;
    std::size_t pos_ = 0;

    std::vector<Segment> segments_;
    Segment current_;
    std::map<int, int> measure_accidentals_;
    bool has_pending_accidental_ = false;
    int pending_accidental_ = 0;
    Frac tuplet_factor_{1};
    int tuplet_remaining_ = 0;
    int broken_ = 0;
    int broken_left_ = 0;
};

}  // namespace abc_detail

// Parse one tune in ABC notation into a Score on the 24-tick grid.
//
// Supported: the monophonic core of the standard (notes, rests, lengths,
// broken rhythm, tuplets, ties, key signatures with modes, measure
// accidentals, voltas read linearly). Chords, voice overlays and mid-tune
// key changes are rejected.
inline Score parse_abc(const std::string& text) {
    using namespace abc_detail;

    // split header (through the first K: line) from the body
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);

    std::string x_field, m_field, l_field, k_field;
    std::string body;
    bool in_body = false;
    for (const std::string& raw : lines) {
        std::string line = raw;
        if (!in_body) {
            if (line.size() >= 2 && line[1] == ':' &&
                std::isalpha(static_cast<unsigned char>(line[0]))) {
                const char f = line[0];
                std::string value = line.substr(2);
                const std::size_t cmt = value.find('%');
                if (cmt != std::string::npos) value = value.substr(0, cmt);
                while (!value.empty() && std::isspace(static_cast<unsigned char>(value.front())))
                    value.erase(value.begin());
                while (!value.empty() && std::isspace(static_cast<unsigned char>(value.back())))
                    value.pop_back();
                switch (f) {
                    case 'X': if (x_field.empty()) x_field = value; break;
                    case 'M': m_field = value; break;
                    case 'L': l_field = value; break;
                    case 'K':
                        k_field = value;
                        in_body = true;
                        break;
                    default: break;
                }
                continue;
            }
            if (line.rfind("%", 0) == 0 || line.empty()) continue;
            throw MalformedInput("content before K: header");
        } else {
            if (line.rfind("X:", 0) == 0) break;  // next tune in a multi-tune file
            if (line.size() >= 2 && line[1] == ':' && line[0] != '|' &&
                std::isalpha(static_cast<unsigned char>(line[0])) &&
                (line[0] == 'w' || line[0] == 'W' || line[0] == 'T' || line[0] == 'N' ||
                 line[0] == 'R' || line[0] == 'S' || line[0] == 'B' || line[0] == 'D' ||
                 line[0] == 'F' || line[0] == 'H' || line[0] == 'O' || line[0] == 'Z' ||
                 line[0] == 'P' || line[0] == 'Q' || line[0] == 'I')) {
                continue;  // information lines inside the body
            }
            if (line.rfind("%", 0) == 0) continue;
            const std::size_t cmt = line.find('%');
            if (cmt != std::string::npos) line = line.substr(0, cmt);
            if (!line.empty() && line.back() == '\\') line.pop_back();
            body += line;
            body += '\n';
        }
    }
    if (x_field.empty()) throw MalformedInput("missing X: header");
    if (m_field.empty()) throw MalformedInput("missing M: header");
    if (k_field.empty()) throw MalformedInput("missing K: header");
    if (m_field != "4/4" && m_field != "C") {
        throw UnsupportedTimeSignature("meter " + m_field + " (only 4/4 is supported)");
    }
    const Frac unit_beats =
        l_field.empty() ? Frac(1, 2) : BodyParser::parse_unit_length(l_field);

    const KeyInfo key = parse_key(k_field);
    BodyParser parser(body, key, unit_beats);
    std::vector<Segment> segments = parser.parse();
    if (segments.empty()) throw MalformedInput("tune has no notes");

    // Assemble bars: a short first segment is an anacrusis (pad with a rest in
    // front), a short last segment is padded at the end, and interior segments
    // must be whole bars. Segments spanning several exact bars are allowed.
    const Frac bar_len(kBeatsPerBar);
    std::vector<RawEvent> events;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        Frac len = segments[i].length();
        if (i == 0 && len < bar_len) {
            RawEvent pad;
            pad.is_rest = true;
            pad.duration = bar_len - len;
            events.push_back(pad);
            len = bar_len;
        }
        if (i + 1 == segments.size() && len < bar_len && len > Frac(0)) {
            for (const RawEvent& e : segments[i].events) events.push_back(e);
            RawEvent pad;
            pad.is_rest = true;
            pad.duration = bar_len - len;
            events.push_back(pad);
            continue;
        }
        const Frac bars = len / bar_len;
        if (!bars.is_integer()) {
            throw MalformedInput("bar " + std::to_string(i + 1) + " does not fill the meter");
        }
        for (const RawEvent& e : segments[i].events) events.push_back(e);
    }

    // merge ties between equal pitches; a tie to a different pitch is a slur
    std::vector<RawEvent> merged;
    for (const RawEvent& e : events) {
        if (!merged.empty() && merged.back().tied && !merged.back().is_rest && !e.is_rest &&
            merged.back().pitch.midi() == e.pitch.midi()) {
            merged.back().duration = merged.back().duration + e.duration;
            merged.back().tied = e.tied;
            continue;
        }
        merged.push_back(e);
    }

    Score s;
    s.id = "abc-" + x_field;
    s.tonic = key.tonic;
    s.mode = key.mode;
    Frac cursor(0);
    for (const RawEvent& e : merged) {
        const Frac start_tw = cursor * Frac(kTwelfthsPerBeat);
        cursor = cursor + e.duration;
        const Frac end_tw = cursor * Frac(kTwelfthsPerBeat);
        if (!start_tw.is_integer() || !end_tw.is_integer()) {
            throw UnrepresentableDuration("note boundary off the twelfth grid");
        }
        const auto t0 = twelfths_to_tick(start_tw.num);
        const auto t1 = twelfths_to_tick(end_tw.num);
        if (!t0 || !t1) throw UnrepresentableDuration("note boundary off the uneven tick grid");
        Note n;
        n.is_rest = e.is_rest;
        n.pitch = e.pitch;
        n.onset = *t0;
        n.duration = *t1 - *t0;
        if (n.duration < 1) throw UnrepresentableDuration("zero-length event on the grid");
        s.notes.push_back(n);
    }
    const Frac total_bars = cursor / bar_len;
    if (!total_bars.is_integer()) throw MalformedInput("tune does not end on a barline");
    s.n_bars = static_cast<int>(total_bars.num);
    merge_adjacent_rests(s);
    validate_score(s);
    return s;
}

}  // namespace mstn
