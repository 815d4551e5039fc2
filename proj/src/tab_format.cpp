#include "tabgpt/tab_format.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tabgpt {

namespace {

struct Line {
    int number;
    std::string text;
};

[[noreturn]] void fail_at(int line, const std::string& msg) {
    throw Error("line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

bool parse_int(const std::string& s, int& out) {
    if (s.empty() || s.size() > 9) return false;
    int v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

NoteTuple parse_note_line(const std::string& line, int lineno) {
    auto fields = split_ws(line);
    if (fields.size() < 2 || fields.size() > 3)
        fail_at(lineno, "expected '<pitch> <dur> [<flags>]', got '" + line + "'");

    PitchClass pitch = PitchClass::rest();
    const std::string& p = fields[0];
    if (p == "REST") {
        pitch = PitchClass::rest();
    } else if (p == "DEAD") {
        pitch = PitchClass::dead();
    } else if (p == "TIED") {
        pitch = PitchClass::tied();
    } else {
        int fret;
        if (!parse_int(p, fret)) fail_at(lineno, "invalid pitch '" + p + "'");
        if (fret > kMaxFret)
            fail_at(lineno, "fret " + std::to_string(fret) + " out of range (valid frets are 0.." +
                                std::to_string(kMaxFret) + ")");
        pitch = PitchClass::fret(fret);
    }

    int den;
    if (!parse_int(fields[1], den)) fail_at(lineno, "invalid duration '" + fields[1] + "'");
    Duration dur = [&] {
        try {
            return Duration::of(den);
        } catch (const Error& e) {
            fail_at(lineno, e.what());
        }
    }();

    bool dotted = false, muted = false;
    ChordKind chord = ChordKind::None;
    if (fields.size() == 3) {
        std::stringstream fs(fields[2]);
        std::string flag;
        while (std::getline(fs, flag, ',')) {
            if (flag == "d") {
                if (dotted) fail_at(lineno, "duplicate flag 'd'");
                dotted = true;
            } else if (flag == "m") {
                if (muted) fail_at(lineno, "duplicate flag 'm'");
                muted = true;
            } else if (flag == "c4" || flag == "cd5" || flag == "c5") {
                if (chord != ChordKind::None) fail_at(lineno, "more than one chord flag");
                chord = flag == "c4"    ? ChordKind::Fourth
                        : flag == "cd5" ? ChordKind::DiminishedFifth
                                        : ChordKind::PerfectFifth;
            } else {
                fail_at(lineno, "unknown flag '" + flag + "'");
            }
        }
    }

    try {
        return NoteTuple(pitch, dur, chord, dotted, muted);
    } catch (const Error& e) {
        fail_at(lineno, e.what());
    }
}

} // namespace

Song parse_tab_stream(const std::string& text) {
    std::vector<Line> lines;
    {
        std::istringstream iss(text);
        std::string raw;
        int n = 0;
        while (std::getline(iss, raw)) {
            ++n;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            std::size_t first = raw.find_first_not_of(" \t");
            if (first == std::string::npos || raw[first] == ';') continue;
            lines.push_back({n, raw});
        }
    }
    if (lines.empty()) throw Error("empty document");

    std::size_t i = 0;
    auto fields0 = split_ws(lines[0].text);
    if (fields0.empty() || fields0[0] != "song")
        fail_at(lines[0].number, "document must start with a 'song' line");
    Song song;
    {
        std::size_t pos = lines[0].text.find("song");
        std::string title = lines[0].text.substr(pos + 4);
        std::size_t b = title.find_first_not_of(" \t");
        song.title = b == std::string::npos ? "" : title.substr(b);
    }
    if (song.title.empty()) fail_at(lines[0].number, "song title is empty");
    ++i;

    while (i < lines.size()) {
        auto fields = split_ws(lines[i].text);
        if (fields.empty() || fields[0] != "track")
            fail_at(lines[i].number, "expected a 'track' line, got '" + lines[i].text + "'");
        if (fields.size() < 2) fail_at(lines[i].number, "track name is empty");
        Track track;
        {
            std::size_t pos = lines[i].text.find("track");
            std::string name = lines[i].text.substr(pos + 5);
            std::size_t b = name.find_first_not_of(" \t");
            track.name = name.substr(b);
        }
        ++i;
        while (i < lines.size() && split_ws(lines[i].text)[0] != "track") {
            track.events.push_back(parse_note_line(lines[i].text, lines[i].number));
            ++i;
        }
        if (track.events.empty())
            throw Error("track '" + track.name + "' has no events");
        song.tracks.push_back(std::move(track));
    }
    if (song.tracks.empty()) throw Error("song has no tracks");
    return song;
}

std::string serialize_tab_stream(const Song& song) {
    std::string out = "song " + song.title + "\n";
    for (const auto& track : song.tracks) {
        out += "track " + track.name + "\n";
        for (const auto& e : track.events) {
            switch (e.pitch.variant()) {
                case PitchVariant::Fret: out += std::to_string(e.pitch.fret_index()); break;
                case PitchVariant::Rest: out += "REST"; break;
                case PitchVariant::Dead: out += "DEAD"; break;
                case PitchVariant::Tied: out += "TIED"; break;
            }
            out += " " + std::to_string(e.duration.denominator());
            std::string flags;
            if (e.dotted) flags += "d";
            if (e.muted) flags += flags.empty() ? "m" : ",m";
            if (e.chord != ChordKind::None) {
                if (!flags.empty()) flags += ",";
                flags += e.chord == ChordKind::Fourth            ? "c4"
                         : e.chord == ChordKind::DiminishedFifth ? "cd5"
                                                                 : "c5";
            }
            if (!flags.empty()) out += " " + flags;
            out += "\n";
        }
    }
    return out;
}

std::string render_ascii_tab(const Track& track, int strings, int columns_per_line) {
    if (strings < 1) throw Error("render_ascii_tab: need at least one string");
    if (columns_per_line < 1) throw Error("render_ascii_tab: need at least one column per line");

    std::vector<std::string> glyphs;
    std::vector<bool> pm;
    std::size_t width = 1;
    for (const auto& e : track.events) {
        std::string g;
        switch (e.pitch.variant()) {
            case PitchVariant::Fret: g = std::to_string(e.pitch.fret_index()); break;
            case PitchVariant::Rest: g = ""; break;
            case PitchVariant::Dead: g = "x"; break;
            case PitchVariant::Tied: g = "~"; break;
        }
        width = std::max(width, g.size());
        glyphs.push_back(std::move(g));
        pm.push_back(e.muted);
    }
    const std::size_t cell = width + 1; // glyph plus one dash of separation

    std::string out;
    for (std::size_t start = 0; start < glyphs.size(); start += columns_per_line) {
        std::size_t end = std::min(glyphs.size(), start + columns_per_line);
        bool any_pm = false;
        for (int s = 0; s < strings; ++s) {
            std::string line = "|";
            for (std::size_t c = start; c < end; ++c) {
                if (s == strings - 1) {
                    // events sit on the lowest string line
                    std::string g = glyphs[c].empty() ? std::string(" ") : glyphs[c];
                    line += g;
                    line += std::string(cell - g.size(), '-');
                } else {
                    line += std::string(cell, '-');
                }
            }
            line += "|\n";
            out += line;
        }
        std::string ann = " ";
        for (std::size_t c = start; c < end; ++c) {
            if (pm[c]) {
                ann += "PM";
                ann += std::string(cell > 2 ? cell - 2 : 0, ' ');
                any_pm = true;
            } else {
                ann += std::string(cell, ' ');
            }
        }
        if (any_pm) out += ann + "\n";
        if (end < glyphs.size()) out += "\n";
    }
    return out;
}

std::vector<std::vector<NoteTuple>> load_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error("corpus path is not a directory: " + dir.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<std::vector<NoteTuple>> sequences;
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot read corpus file " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        Song song;
        try {
            song = parse_tab_stream(buf.str());
        } catch (const Error& e) {
            throw Error(path.string() + ": " + e.what());
        }
        for (auto& track : song.tracks) sequences.push_back(std::move(track.events));
    }
    if (sequences.empty()) throw Error("no tracks found under " + dir.string());
    return sequences;
}

double track_whole_note_total(const Track& track) {
    double total = 0;
    for (const auto& e : track.events) {
        double d = 1.0 / e.duration.denominator();
        if (e.dotted) d *= 1.5;
        total += d;
    }
    return total;
}

} // namespace tabgpt
