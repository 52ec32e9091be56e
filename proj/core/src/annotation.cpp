// Copyright 2026 The voxalign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "voxalign/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <sstream>

#include "internal_util.hpp"
#include "voxalign/errors.hpp"

namespace voxalign {

namespace {

constexpr int kPitchMin = -60;
constexpr int kPitchMax = 84;

struct LineCursor {
  std::string_view text;
  int number = 0;
};

// Consumes one integer field followed by a single space (or end of line when
// allow_end). Returns the value, advances pos.
std::int64_t take_int_field(std::string_view line, std::size_t& pos,
                            bool expect_space, int line_no) {
  std::int64_t value = 0;
  const char* begin = line.data() + pos;
  const char* end = line.data() + line.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin)
    throw SyntaxError("expected integer field", line_no);
  pos = static_cast<std::size_t>(ptr - line.data());
  if (expect_space) {
    if (pos >= line.size() || line[pos] != ' ')
      throw SyntaxError("expected space after integer field", line_no);
    ++pos;
  }
  return value;
}

double parse_double_value(std::string_view value, int line_no,
                          const char* what) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(),
                                   out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw SyntaxError(std::string("malformed ") + what + " value", line_no);
  return out;
}

}  // namespace

bool VoiceSequence::any() const {
  return std::any_of(frames.begin(), frames.end(),
                     [](std::uint8_t b) { return b != 0; });
}

void validate(const AnnotationFile& file) {
  if (!(file.timing.frame_rate > 0.0))
    throw InvariantError("frame rate must be positive");
  for (std::size_t i = 0; i < file.notes.size(); ++i) {
    const NoteAnnotation& n = file.notes[i];
    if (n.start_units < 0)
      throw InvariantError("note " + std::to_string(i) +
                           ": negative start unit");
    if (n.duration_units < 1)
      throw InvariantError("note " + std::to_string(i) +
                           ": duration must be at least one unit");
    if (n.pitch < kPitchMin || n.pitch > kPitchMax)
      throw InvariantError("note " + std::to_string(i) + ": pitch " +
                           std::to_string(n.pitch) + " outside [" +
                           std::to_string(kPitchMin) + ", " +
                           std::to_string(kPitchMax) + "]");
    if (n.text.empty())
      throw InvariantError("note " + std::to_string(i) + ": empty text");
    if (i > 0) {
      const NoteAnnotation& p = file.notes[i - 1];
      if (n.start_units <= p.start_units)
        throw InvariantError("notes " + std::to_string(i - 1) + " and " +
                             std::to_string(i) +
                             ": starts not strictly increasing");
      if (p.end_units() > n.start_units)
        throw InvariantError("notes " + std::to_string(i - 1) + " and " +
                             std::to_string(i) + ": overlapping grid units");
    }
  }
  std::int64_t prev_break = INT64_MIN;
  for (std::int64_t b : file.line_breaks) {
    if (b <= prev_break)
      throw InvariantError("line breaks not strictly increasing");
    prev_break = b;
    // A break must sit in the gap after some note (or after the last note).
    auto next = std::find_if(
        file.notes.begin(), file.notes.end(),
        [b](const NoteAnnotation& n) { return n.end_units() > b; });
    if (next == file.notes.begin())
      throw InvariantError("line break at unit " + std::to_string(b) +
                           " precedes the end of the first note");
    if (next != file.notes.end() && b > next->start_units)
      throw InvariantError("line break at unit " + std::to_string(b) +
                           " falls inside a note");
  }
}

AnnotationFile parse_annotation_file(std::string_view raw_text) {
  AnnotationFile file;
  std::optional<double> offset, frame_rate;
  std::optional<std::string> title, artist;

  bool in_body = false;
  bool terminated = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= raw_text.size()) {
    std::size_t eol = raw_text.find('\n', pos);
    std::string_view line = raw_text.substr(
        pos, eol == std::string_view::npos ? raw_text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? raw_text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    if (terminated)
      throw SyntaxError("content after terminator", line_no);

    if (line[0] == '#') {
      if (in_body)
        throw SyntaxError("header after first note or break line", line_no);
      const std::size_t colon = line.find(':');
      if (colon == std::string_view::npos || colon == 1)
        throw SyntaxError("malformed header line", line_no);
      std::string key(line.substr(1, colon - 1));
      std::string value(line.substr(colon + 1));
      if (key == "TITLE") {
        if (title) throw SyntaxError("duplicate #TITLE header", line_no);
        title = value;
      } else if (key == "ARTIST") {
        if (artist) throw SyntaxError("duplicate #ARTIST header", line_no);
        artist = value;
      } else if (key == "OFFSET") {
        if (offset) throw SyntaxError("duplicate #OFFSET header", line_no);
        offset = parse_double_value(value, line_no, "OFFSET");
      } else if (key == "FRAMERATE") {
        if (frame_rate)
          throw SyntaxError("duplicate #FRAMERATE header", line_no);
        frame_rate = parse_double_value(value, line_no, "FRAMERATE");
      } else {
        file.extra_headers.emplace_back(std::move(key), std::move(value));
      }
      continue;
    }

    if (line[0] == ':') {
      in_body = true;
      if (line.size() < 2 || line[1] != ' ')
        throw SyntaxError("malformed note line", line_no);
      std::size_t p = 2;
      NoteAnnotation note;
      note.start_units = take_int_field(line, p, true, line_no);
      note.duration_units = take_int_field(line, p, true, line_no);
      const std::int64_t pitch = take_int_field(line, p, true, line_no);
      if (pitch < INT32_MIN || pitch > INT32_MAX)
        throw SyntaxError("pitch out of integer range", line_no);
      note.pitch = static_cast<int>(pitch);
      note.text = std::string(line.substr(p));
      if (note.text.empty())
        throw SyntaxError("note without text", line_no);
      file.notes.push_back(std::move(note));
      continue;
    }

    if (line[0] == '-') {
      in_body = true;
      if (line.size() < 2 || line[1] != ' ')
        throw SyntaxError("malformed line-break line", line_no);
      std::size_t p = 2;
      const std::int64_t units = take_int_field(line, p, false, line_no);
      if (p != line.size())
        throw SyntaxError("trailing content on line-break line", line_no);
      file.line_breaks.push_back(units);
      continue;
    }

    if (line == "E") {
      terminated = true;
      continue;
    }

    throw SyntaxError("unrecognized line", line_no);
  }

  if (!terminated) throw SyntaxError("missing E terminator");
  if (!title) throw SyntaxError("missing #TITLE header");
  if (!artist) throw SyntaxError("missing #ARTIST header");
  if (!offset) throw SyntaxError("missing #OFFSET header");
  if (!frame_rate) throw SyntaxError("missing #FRAMERATE header");

  file.song_title = *title;
  file.artist_name = *artist;
  file.timing.offset_seconds = *offset;
  file.timing.frame_rate = *frame_rate;

  validate(file);
  return file;
}

std::string serialize_annotation_file(const AnnotationFile& file) {
  std::string out;
  out += "#TITLE:" + file.song_title + "\n";
  out += "#ARTIST:" + file.artist_name + "\n";
  out += "#OFFSET:" + detail::format_double_shortest(file.timing.offset_seconds) + "\n";
  out += "#FRAMERATE:" + detail::format_double_shortest(file.timing.frame_rate) + "\n";
  for (const auto& [key, value] : file.extra_headers)
    out += "#" + key + ":" + value + "\n";

  std::size_t ni = 0, bi = 0;
  while (ni < file.notes.size() || bi < file.line_breaks.size()) {
    const bool take_break =
        bi < file.line_breaks.size() &&
        (ni == file.notes.size() ||
         file.line_breaks[bi] <= file.notes[ni].start_units);
    if (take_break) {
      out += "- " + std::to_string(file.line_breaks[bi]) + "\n";
      ++bi;
    } else {
      const NoteAnnotation& n = file.notes[ni];
      out += ": " + std::to_string(n.start_units) + " " +
             std::to_string(n.duration_units) + " " +
             std::to_string(n.pitch) + " " + n.text + "\n";
      ++ni;
    }
  }
  out += "E\n";
  return out;
}

double note_to_frequency(int pitch) {
  // Semitone distance from A4 (MIDI 69), with C3 = MIDI 48. Split into
  // octave and residue so octave steps are exact powers of two.
  const int d = pitch + 48 - 69;
  const int oct = d >= 0 ? d / 12 : -((-d + 11) / 12);
  const int rem = d - 12 * oct;
  return std::ldexp(440.0 * std::exp2(rem / 12.0), oct);
}

double note_start_seconds(const TimingParams& t, const NoteAnnotation& n) {
  return t.offset_seconds + static_cast<double>(n.start_units) / t.frame_rate;
}

double note_end_seconds(const TimingParams& t, const NoteAnnotation& n) {
  return t.offset_seconds + static_cast<double>(n.end_units()) / t.frame_rate;
}

VoiceSequence rasterize_voice_sequence(const AnnotationFile& file, double fr,
                                       double o, double hop_seconds,
                                       std::size_t n_frames) {
  if (!(fr > 0.0)) throw InvariantError("rasterize: fr must be positive");
  if (!(hop_seconds > 0.0))
    throw InvariantError("rasterize: hop must be positive");
  VoiceSequence seq;
  seq.hop_seconds = hop_seconds;
  seq.frames.assign(n_frames, 0);
  if (n_frames == 0) return seq;

  const double base = file.timing.offset_seconds + o;
  for (const NoteAnnotation& n : file.notes) {
    const double t0 = base + static_cast<double>(n.start_units) / fr;
    const double t1 = base + static_cast<double>(n.end_units()) / fr;
    // Candidate range with one frame of slack; the exact predicate decides.
    const double lo = std::floor(t0 / hop_seconds) - 1.0;
    const double hi = std::ceil(t1 / hop_seconds) + 1.0;
    std::int64_t k0 = lo < 0.0 ? 0 : static_cast<std::int64_t>(lo);
    std::int64_t k1 = hi >= static_cast<double>(n_frames)
                          ? static_cast<std::int64_t>(n_frames) - 1
                          : static_cast<std::int64_t>(hi);
    for (std::int64_t k = k0; k <= k1; ++k) {
      const double t = static_cast<double>(k) * hop_seconds;
      if (t0 <= t && t < t1) seq.frames[static_cast<std::size_t>(k)] = 1;
    }
  }
  return seq;
}

std::size_t annotation_span_frames(const AnnotationFile& file, double fr,
                                   double o, double hop_seconds) {
  if (!(fr > 0.0) || !(hop_seconds > 0.0))
    throw InvariantError("annotation_span_frames: fr and hop must be positive");
  if (file.notes.empty()) return 0;
  const double t_end = file.timing.offset_seconds + o +
                       static_cast<double>(file.notes.back().end_units()) / fr;
  if (t_end <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(t_end / hop_seconds));
}

AnnotationFile adapt_timing(const AnnotationFile& file, double o_hat,
                            double fr_hat) {
  if (!(fr_hat > 0.0))
    throw InvariantError("adapt_timing: fr_hat must be positive");
  AnnotationFile out = file;
  out.timing.offset_seconds = file.timing.offset_seconds + o_hat;
  out.timing.frame_rate = fr_hat;
  return out;
}

namespace {

std::string strip_leading_spaces(std::string s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

std::vector<std::size_t> paragraph_line_counts(std::string_view lyrics) {
  std::vector<std::size_t> counts;
  std::size_t current = 0;
  std::size_t pos = 0;
  while (pos <= lyrics.size()) {
    std::size_t eol = lyrics.find('\n', pos);
    std::string_view line = lyrics.substr(
        pos, eol == std::string_view::npos ? lyrics.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? lyrics.size() + 1 : eol + 1;
    if (detail::trim(line).empty()) {
      if (current > 0) counts.push_back(current);
      current = 0;
    } else {
      ++current;
    }
  }
  if (current > 0) counts.push_back(current);
  return counts;
}

TimedText span_of(const std::vector<TimedText>& children, std::size_t first,
                  std::size_t last, std::string text) {
  TimedText t;
  t.start_seconds = children[first].start_seconds;
  t.end_seconds = children[last].end_seconds;
  for (std::size_t i = first; i <= last; ++i) {
    t.start_seconds = std::min(t.start_seconds, children[i].start_seconds);
    t.end_seconds = std::max(t.end_seconds, children[i].end_seconds);
  }
  t.text = std::move(text);
  return t;
}

}  // namespace

GranularityHierarchy expand_granularity(const AnnotationFile& file,
                                        std::string_view plain_lyrics) {
  GranularityHierarchy h;
  const TimingParams& timing = file.timing;
  for (const NoteAnnotation& n : file.notes) {
    h.notes.push_back({note_start_seconds(timing, n),
                       note_end_seconds(timing, n), n.text});
  }

  // Word grouping: a leading space opens a new word, and so does a line
  // break sitting in the gap before the note.
  std::vector<std::size_t> word_of_note(file.notes.size());
  std::vector<std::pair<std::size_t, std::size_t>> word_note_range;
  auto break_before = [&](std::size_t i) {
    if (i == 0) return false;
    const std::int64_t gap_lo = file.notes[i - 1].end_units();
    const std::int64_t gap_hi = file.notes[i].start_units;
    return std::any_of(file.line_breaks.begin(), file.line_breaks.end(),
                       [&](std::int64_t b) { return b >= gap_lo && b <= gap_hi; });
  };
  for (std::size_t i = 0; i < file.notes.size(); ++i) {
    const bool new_word = i == 0 || file.notes[i].text.front() == ' ' ||
                          break_before(i);
    if (new_word) word_note_range.push_back({i, i});
    else word_note_range.back().second = i;
    word_of_note[i] = word_note_range.size() - 1;
  }
  for (const auto& [first, last] : word_note_range) {
    std::string text;
    for (std::size_t i = first; i <= last; ++i) text += file.notes[i].text;
    h.words.push_back(span_of(h.notes, first, last,
                              strip_leading_spaces(std::move(text))));
  }

  // Line grouping: partition notes at the line breaks, drop empty segments.
  std::vector<std::pair<std::size_t, std::size_t>> line_word_range;
  {
    std::size_t note_i = 0;
    std::size_t seg_first_note = 0;
    auto flush_segment = [&](std::size_t end_note) {
      if (end_note > seg_first_note) {
        const std::size_t wf = word_of_note[seg_first_note];
        const std::size_t wl = word_of_note[end_note - 1];
        line_word_range.push_back({wf, wl});
      }
      seg_first_note = end_note;
    };
    for (std::int64_t b : file.line_breaks) {
      while (note_i < file.notes.size() &&
             file.notes[note_i].end_units() <= b)
        ++note_i;
      flush_segment(note_i);
    }
    flush_segment(file.notes.size());
  }
  for (const auto& [wf, wl] : line_word_range) {
    std::string text;
    for (std::size_t w = wf; w <= wl; ++w) {
      if (w > wf) text += " ";
      text += h.words[w].text;
    }
    h.lines.push_back(span_of(h.words, wf, wl, std::move(text)));
  }

  // Paragraph grouping by the blank-line structure of the plain lyrics.
  const std::vector<std::size_t> counts = paragraph_line_counts(plain_lyrics);
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  if (total != h.lines.size()) {
    std::string msg = "cannot partition " + std::to_string(h.lines.size()) +
                      " annotated lines into lyric paragraphs of";
    for (std::size_t c : counts) msg += " " + std::to_string(c);
    msg += " lines (total " + std::to_string(total) + ")";
    throw MatchError(msg);
  }
  std::size_t line_i = 0;
  for (std::size_t c : counts) {
    std::string text;
    for (std::size_t l = line_i; l < line_i + c; ++l) {
      if (l > line_i) text += "\n";
      text += h.lines[l].text;
    }
    h.paragraphs.push_back(span_of(h.lines, line_i, line_i + c - 1,
                                   std::move(text)));
    line_i += c;
  }
  return h;
}

std::string export_granularity(const GranularityHierarchy& h) {
  std::string out;
  auto emit = [&out](const char* level, const std::vector<TimedText>& v) {
    for (const TimedText& t : v) {
      out += level;
      out += "\t" + detail::format_fixed(t.start_seconds, 6) + "\t" +
             detail::format_fixed(t.end_seconds, 6) + "\t" + t.text + "\n";
    }
  };
  emit("note", h.notes);
  emit("word", h.words);
  emit("line", h.lines);
  emit("paragraph", h.paragraphs);
  return out;
}

}  // namespace voxalign
