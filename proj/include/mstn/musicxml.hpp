#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "mstn/fraction.hpp"
#include "mstn/score.hpp"

namespace mstn {
namespace xml_detail {

struct RawEvent {
    bool is_rest = false;
    SpelledPitch pitch;
    Frac onset;     // beats from piece start
    Frac duration;  // beats
    bool tie_start = false;
};

inline int mode_offset_from_name(const std::string& m) {
    if (m == "major" || m == "ionian" || m.empty()) return 0;
    if (m == "mixolydian") return 1;
    if (m == "dorian") return 2;
    if (m == "minor" || m == "aeolian") return 3;
    if (m == "phrygian") return 4;
    if (m == "lydian") return -1;
    if (m == "locrian") return 5;
    return 0;
}

inline Mode collapse_mode_name(const std::string& m) {
    if (m == "major" || m == "ionian" || m.empty()) return Mode::major;
    if (m == "minor" || m == "aeolian") return Mode::minor;
    if (m == "dorian") return Mode::dorian;
    if (m == "mixolydian") return Mode::mixolydian;
    return Mode::other;
}

// a note fragment confined to one measure
struct BarPiece {
    bool is_rest = false;
    SpelledPitch pitch;
    std::int64_t onset = 0;
    std::int64_t duration = 0;
    bool tie_start = false;
    bool tie_stop = false;
};

}  // namespace xml_detail

// Parse a MusicXML lead sheet into a Score. Only the first part and the
// first voice are read; chord notes, grace notes and harmony elements are
// dropped.
inline Score parse_musicxml(const std::string& text) {
    namespace pt = boost::property_tree;
    using xml_detail::RawEvent;

    pt::ptree doc;
    try {
        std::istringstream in(text);
        pt::read_xml(in, doc);
    } catch (const pt::xml_parser_error& e) {
        throw MalformedInput(std::string("XML parse error: ") + e.what());
    }

    auto partwise = doc.get_child_optional("score-partwise");
    if (!partwise) throw MalformedInput("missing <score-partwise> root");
    const pt::ptree* part = nullptr;
    for (const auto& [name, child] : *partwise) {
        if (name == "part") {
            part = &child;
            break;
        }
    }
    if (!part) throw MalformedInput("no <part> element");

    long divisions = 0;
    bool time_ok = false;
    bool saw_time = false;
    int key_fifths = 0;
    std::string key_mode;
    bool saw_key = false;

    std::vector<RawEvent> events;
    std::string melody_voice;
    Frac bar_base(0);
    std::size_t measure_index = 0;
    std::size_t measure_count = 0;
    for (const auto& [name, _] : *part) {
        if (name == "measure") ++measure_count;
    }

    for (const auto& [mname, measure] : *part) {
        if (mname != "measure") continue;
        Frac cursor(0);
        Frac max_end(0);
        std::vector<RawEvent> kept;

        for (const auto& [ename, el] : measure) {
            if (ename == "attributes") {
                if (auto d = el.get_optional<long>("divisions")) divisions = *d;
                if (auto k = el.get_child_optional("key")) {
                    key_fifths = k->get<int>("fifths", 0);
                    key_mode = k->get<std::string>("mode", "");
                    saw_key = true;
                }
                if (auto t = el.get_child_optional("time")) {
                    saw_time = true;
                    const std::string beats = t->get<std::string>("beats", "");
                    const std::string beat_type = t->get<std::string>("beat-type", "");
                    time_ok = beats == "4" && beat_type == "4";
                    if (!time_ok) {
                        throw UnsupportedTimeSignature(beats + "/" + beat_type +
                                                       " (only 4/4 is supported)");
                    }
                }
            } else if (ename == "backup" || ename == "forward") {
                const long d = el.get<long>("duration", 0);
                if (divisions <= 0) throw MalformedInput("missing <divisions>");
                const Frac delta(d, divisions);
                cursor = ename == "backup" ? cursor - delta : cursor + delta;
            } else if (ename == "note") {
                const bool grace = el.get_child_optional("grace").has_value();
                const bool chord = el.get_child_optional("chord").has_value();
                const bool rest = el.get_child_optional("rest").has_value();
                const long dur = el.get<long>("duration", 0);
                if (grace) continue;
                if (divisions <= 0) throw MalformedInput("missing <divisions>");
                if (dur <= 0) throw MalformedInput("note without duration");
                const Frac beats(dur, divisions);
                if (chord) continue;  // later chord members; melody keeps the first

                const std::string voice = el.get<std::string>("voice", "1");
                if (melody_voice.empty()) melody_voice = voice;
                if (voice == melody_voice) {
                    RawEvent e;
                    e.is_rest = rest;
                    if (!rest) {
                        auto p = el.get_child_optional("pitch");
                        if (!p) throw MalformedInput("note without <pitch> or <rest>");
                        const std::string step = p->get<std::string>("step", "");
                        if (step.size() != 1) throw MalformedInput("bad <step>");
                        e.pitch.letter = letter_from_char(step[0]);
                        e.pitch.accidental = p->get<int>("alter", 0);
                        e.pitch.octave = p->get<int>("octave", 4);
                        if (!e.pitch.valid()) {
                            throw MalformedInput("pitch out of range: " + e.pitch.str());
                        }
                    }
                    e.onset = bar_base + cursor;
                    e.duration = beats;
                    for (const auto& [tname, tie] : el) {
                        if (tname == "tie" &&
                            tie.get<std::string>("<xmlattr>.type", "") == "start") {
                            e.tie_start = true;
                        }
                    }
                    kept.push_back(e);
                }
                cursor = cursor + beats;
            }
            if (cursor > max_end) max_end = cursor;
            if (cursor < Frac(0)) throw MalformedInput("backup before measure start");
        }

        const Frac bar_len(kBeatsPerBar);
        Frac length = max_end;
        if (length > bar_len) throw MalformedInput("overfull measure");
        Frac shift(0);
        if (length < bar_len) {
            if (measure_index == 0) {
                shift = bar_len - length;  // anacrusis: pad in front
            } else if (measure_index + 1 == measure_count) {
                // final short measure: pad at the end (handled by gap fill)
            } else if (length == Frac(0)) {
                // completely empty interior measure: whole-bar rest
            } else {
                throw MalformedInput("underfull interior measure");
            }
        }
        for (RawEvent e : kept) {
            e.onset = e.onset + shift;
            events.push_back(e);
        }
        bar_base = bar_base + bar_len;
        ++measure_index;
    }
    if (!saw_time) {
        // no explicit time signature: treat as 4/4 lead-sheet fragment
    }
    if (measure_count == 0) throw MalformedInput("part has no measures");

    // fill gaps with rests and verify monotonicity
    std::vector<RawEvent> tiled;
    Frac cursor(0);
    for (const RawEvent& e : events) {
        if (e.onset < cursor) throw MalformedInput("overlapping melody notes");
        if (e.onset > cursor) {
            RawEvent gap;
            gap.is_rest = true;
            gap.onset = cursor;
            gap.duration = e.onset - cursor;
            tiled.push_back(gap);
        }
        tiled.push_back(e);
        cursor = e.onset + e.duration;
    }
    const Frac total(static_cast<std::int64_t>(measure_count) * kBeatsPerBar);
    if (cursor > total) throw MalformedInput("content spills past the last measure");
    if (cursor < total) {
        RawEvent gap;
        gap.is_rest = true;
        gap.onset = cursor;
        gap.duration = total - cursor;
        tiled.push_back(gap);
    }

    // merge ties (also across barlines)
    std::vector<RawEvent> merged;
    for (const RawEvent& e : tiled) {
        if (!merged.empty() && merged.back().tie_start && !merged.back().is_rest && !e.is_rest &&
            merged.back().pitch.midi() == e.pitch.midi() &&
            merged.back().onset + merged.back().duration == e.onset) {
            merged.back().duration = merged.back().duration + e.duration;
            merged.back().tie_start = e.tie_start;
            continue;
        }
        merged.push_back(e);
    }

    Score s;
    s.id = "xml";
    if (saw_key) {
        const int tonic_fifths = key_fifths + xml_detail::mode_offset_from_name(key_mode);
        s.tonic = pitch_class_from_fifths(tonic_fifths);
        s.mode = xml_detail::collapse_mode_name(key_mode);
    }
    for (const RawEvent& e : merged) {
        const Frac start_tw = e.onset * Frac(kTwelfthsPerBeat);
        const Frac end_tw = (e.onset + e.duration) * Frac(kTwelfthsPerBeat);
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
    s.n_bars = static_cast<int>(measure_count);
    merge_adjacent_rests(s);
    validate_score(s);
    return s;
}

// Serialize a Score as minimal MusicXML (divisions = 12 per quarter, which
// expresses the uneven grid exactly). Notes crossing barlines are split and
// tied.
inline std::string write_musicxml(const Score& s) {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<score-partwise version=\"3.1\">\n";
    out << "  <part-list>\n    <score-part id=\"P1\">\n      <part-name>melody</part-name>\n"
           "    </score-part>\n  </part-list>\n";
    out << "  <part id=\"P1\">\n";

    const int fifths = s.tonic.fifths() - mode_fifths_offset(s.mode);

    // split events at barlines
    using xml_detail::BarPiece;
    std::vector<std::vector<BarPiece>> bars(static_cast<std::size_t>(s.n_bars));
    for (const Note& n : s.notes) {
        std::int64_t pos = n.onset;
        const std::int64_t end = n.onset + n.duration;
        bool first = true;
        while (pos < end) {
            const std::int64_t bar = pos / kTicksPerBar;
            const std::int64_t bar_end = (bar + 1) * kTicksPerBar;
            const std::int64_t seg_end = end < bar_end ? end : bar_end;
            BarPiece p;
            p.is_rest = n.is_rest;
            p.pitch = n.pitch;
            p.onset = pos;
            p.duration = seg_end - pos;
            p.tie_stop = !first && !n.is_rest;
            p.tie_start = seg_end < end && !n.is_rest;
            bars[static_cast<std::size_t>(bar)].push_back(p);
            pos = seg_end;
            first = false;
        }
    }

    for (int b = 0; b < s.n_bars; ++b) {
        out << "    <measure number=\"" << (b + 1) << "\">\n";
        if (b == 0) {
            out << "      <attributes>\n        <divisions>12</divisions>\n";
            out << "        <key><fifths>" << fifths << "</fifths>";
            if (s.mode != Mode::other) out << "<mode>" << mode_name(s.mode) << "</mode>";
            out << "</key>\n";
            out << "        <time><beats>4</beats><beat-type>4</beat-type></time>\n";
            out << "      </attributes>\n";
        }
        for (const BarPiece& p : bars[static_cast<std::size_t>(b)]) {
            const std::int64_t tw = tick_span_twelfths(p.onset, p.duration);
            out << "      <note>";
            if (p.is_rest) {
                out << "<rest/>";
            } else {
                out << "<pitch><step>" << kLetterName[p.pitch.letter] << "</step>";
                if (p.pitch.accidental != 0) {
                    out << "<alter>" << p.pitch.accidental << "</alter>";
                }
                out << "<octave>" << p.pitch.octave << "</octave></pitch>";
            }
            out << "<duration>" << tw << "</duration><voice>1</voice>";
            if (p.tie_stop) out << "<tie type=\"stop\"/>";
            if (p.tie_start) out << "<tie type=\"start\"/>";
            out << "</note>\n";
        }
        out << "    </measure>\n";
    }
    out << "  </part>\n</score-partwise>\n";
    return out.str();
}

}  // namespace mstn
