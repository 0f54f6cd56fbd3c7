#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mstn/registry.hpp"
#include "mstn/score.hpp"
#include "mstn/tokenizer.hpp"

namespace mstn {

namespace fs = std::filesystem;

inline std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("short write to " + path.string());
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json_file(const fs::path& path) {
    return nlohmann::json::parse(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Score serialization
// ---------------------------------------------------------------------------

inline nlohmann::json score_to_json(const Score& s) {
    nlohmann::json notes = nlohmann::json::array();
    for (const Note& n : s.notes) {
        notes.push_back({n.is_rest ? "rest" : n.pitch.str(), n.onset, n.duration});
    }
    return {{"id", s.id},
            {"tonic", s.tonic.str()},
            {"mode", mode_name(s.mode)},
            {"n_bars", s.n_bars},
            {"notes", notes}};
}

inline Score score_from_json(const nlohmann::json& j) {
    Score s;
    s.id = j.at("id").get<std::string>();
    const std::string tonic = j.at("tonic").get<std::string>();
    s.tonic.letter = letter_from_char(tonic.at(0));
    for (std::size_t i = 1; i < tonic.size(); ++i) {
        s.tonic.accidental += tonic[i] == '#' ? 1 : -1;
    }
    s.mode = mode_from_name(j.at("mode").get<std::string>());
    s.n_bars = j.at("n_bars").get<int>();
    for (const auto& n : j.at("notes")) {
        Note note;
        const std::string p = n.at(0).get<std::string>();
        note.is_rest = p == "rest";
        if (!note.is_rest) note.pitch = parse_pitch(p);
        note.onset = n.at(1).get<std::int64_t>();
        note.duration = n.at(2).get<std::int64_t>();
        s.notes.push_back(note);
    }
    validate_score(s);
    return s;
}

inline void write_scores(const fs::path& path, const std::vector<Score>& scores) {
    nlohmann::json j = nlohmann::json::array();
    for (const Score& s : scores) j.push_back(score_to_json(s));
    write_json_file(path, j);
}

inline std::vector<Score> read_scores(const fs::path& path) {
    std::vector<Score> out;
    for (const auto& j : read_json_file(path)) out.push_back(score_from_json(j));
    return out;
}

// ---------------------------------------------------------------------------
// Token files: one piece per line, space-separated token strings, preceded
// by "template_id=<id>"
// ---------------------------------------------------------------------------

inline void write_token_file(const fs::path& path, const std::vector<TokenSequence>& seqs,
                             const Vocab& vocab) {
    std::ostringstream out;
    for (const TokenSequence& s : seqs) {
        out << "template_id=" << s.template_id;
        for (int id : s.tokens) out << ' ' << vocab.token(id);
        out << '\n';
    }
    write_text_file(path, out.str());
}

inline std::vector<TokenSequence> read_token_file(const fs::path& path, const Vocab& vocab) {
    std::vector<TokenSequence> out;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (head.rfind("template_id=", 0) != 0) {
            throw MalformedInput("token line missing template_id prefix");
        }
        TokenSequence seq;
        seq.template_id = head.substr(std::string("template_id=").size());
        std::string tok;
        while (ls >> tok) seq.tokens.push_back(vocab.id(tok));
        out.push_back(std::move(seq));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

class CsvWriter {
  public:
    explicit CsvWriter(const fs::path& path) : path_(path) {}

    template <typename... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell_str(cells), first = false), ...);
        out_ << '\n';
    }

    ~CsvWriter() {
        try {
            write_text_file(path_, out_.str());
        } catch (...) {
        }
    }

  private:
    static std::string cell_str(const std::string& s) { return csv_escape(s); }
    static std::string cell_str(const char* s) { return csv_escape(s); }
    static std::string cell_str(double v) {
        std::ostringstream ss;
        ss.precision(12);
        ss << v;
        return ss.str();
    }
    static std::string cell_str(int v) { return std::to_string(v); }
    static std::string cell_str(std::int64_t v) { return std::to_string(v); }
    static std::string cell_str(std::size_t v) { return std::to_string(v); }

    fs::path path_;
    std::ostringstream out_;
};

// Sorted file listing with one of the given extensions (recursive).
inline std::vector<fs::path> list_files(const fs::path& root,
                                        const std::vector<std::string>& extensions) {
    std::vector<fs::path> out;
    if (fs::is_regular_file(root)) {
        out.push_back(root);
        return out;
    }
    if (!fs::is_directory(root)) throw Error("no such file or directory: " + root.string());
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        for (const std::string& want : extensions) {
            if (ext == want) {
                out.push_back(entry.path());
                break;
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace mstn
