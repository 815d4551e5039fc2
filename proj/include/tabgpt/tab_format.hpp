#ifndef TABGPT_TAB_FORMAT_HPP
#define TABGPT_TAB_FORMAT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "tabgpt/notes.hpp"

namespace tabgpt {

struct Track {
    std::string name;
    std::vector<NoteTuple> events;
};

struct Song {
    std::string title;
    std::vector<Track> tracks;
};

// Tab event stream, one document per song:
//   song <title>
//   track <name>
//   <pitch> <dur> [<flags>]
// pitch is a fret number 0..58 or REST/DEAD/TIED; dur is 1|2|4|8|...|128;
// flags is a comma list of d, m and at most one of c4/cd5/c5.
// Lines starting with ';' and blank lines are ignored.
Song parse_tab_stream(const std::string& text);

// Canonical form: LF endings, one event per line, flags in d,m,chord order.
// parse(serialize(s)) == s and serialize is a fixed point of serialize∘parse.
std::string serialize_tab_stream(const Song& song);

// Monospaced ASCII tablature. One column per event on the lowest string
// line; rests are blank, dead notes 'x', ties '~'; palm-muted events get a
// "PM" annotation row underneath.
std::string render_ascii_tab(const Track& track, int strings, int columns_per_line);

// Parses every regular file under `dir` (recursively, sorted by path) and
// returns one event sequence per track. Any unparseable file is an error.
std::vector<std::vector<NoteTuple>> load_corpus(const std::filesystem::path& dir);

// Total duration of a track in whole-note units (dotted notes count 1.5x).
double track_whole_note_total(const Track& track);

} // namespace tabgpt

#endif
