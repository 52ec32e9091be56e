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

#ifndef VOXALIGN_ANNOTATION_HPP
#define VOXALIGN_ANNOTATION_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace voxalign {

// One sung note. Positions are integer units on the annotation grid; the
// wall-clock time of grid unit u is offset_seconds + u / frame_rate.
// Pitch is in semitones relative to C3 (pitch 0 = C3).
struct NoteAnnotation {
  std::int64_t start_units = 0;
  std::int64_t duration_units = 1;
  int pitch = 0;
  std::string text;

  std::int64_t end_units() const { return start_units + duration_units; }
  bool operator==(const NoteAnnotation&) const = default;
};

struct TimingParams {
  double offset_seconds = 0.0;  // wall-clock start of the grid
  double frame_rate = 1.0;      // grid units per second, > 0
  bool operator==(const TimingParams&) const = default;
};

// A parsed karaoke annotation file: a monophonic note sequence plus lyric
// line breaks and the grid timing. Unknown header keys survive round trips
// in `extra_headers`, in file order.
struct AnnotationFile {
  std::vector<NoteAnnotation> notes;
  std::vector<std::int64_t> line_breaks;  // grid units, strictly increasing
  TimingParams timing;
  std::string song_title;
  std::string artist_name;
  std::vector<std::pair<std::string, std::string>> extra_headers;

  bool operator==(const AnnotationFile&) const = default;
};

// Binary voiced/unvoiced curve on the analysis frame grid.
struct VoiceSequence {
  std::vector<std::uint8_t> frames;  // each 0 or 1
  double hop_seconds = 0.0;

  std::size_t size() const { return frames.size(); }
  bool any() const;
};

struct TimedText {
  double start_seconds = 0.0;
  double end_seconds = 0.0;
  std::string text;
  bool operator==(const TimedText&) const = default;
};

// The four nested lyric levels. Every note interval lies inside exactly one
// word, every word inside one line, every line inside one paragraph.
struct GranularityHierarchy {
  std::vector<TimedText> notes;
  std::vector<TimedText> words;
  std::vector<TimedText> lines;
  std::vector<TimedText> paragraphs;
};

// Throws InvariantError when a type invariant is violated (unsorted or
// overlapping notes, frame_rate <= 0, out-of-range pitch, misplaced breaks).
void validate(const AnnotationFile& file);

// Text format:
//   #KEY:VALUE        headers; TITLE, ARTIST, OFFSET, FRAMERATE are mandatory
//   : start dur pitch text
//   - units           lyric line break
//   E                 terminator
// Throws SyntaxError (malformed line / missing header, with line number) or
// InvariantError (semantic violations).
AnnotationFile parse_annotation_file(std::string_view raw_text);

// Deterministic inverse of the parser: parse(serialize(f)) == f.
std::string serialize_annotation_file(const AnnotationFile& file);

// Equal temperament anchored at A4 = 440 Hz, with C3 = MIDI note 48.
// Built so that octave steps scale by exactly 2.
double note_to_frequency(int pitch);

double note_start_seconds(const TimingParams& t, const NoteAnnotation& n);
double note_end_seconds(const TimingParams& t, const NoteAnnotation& n);

// avs(t): frame k is 1 iff some note covers instant k*hop under grid rate
// `fr` and additional offset `o` (seconds, applied on top of the file's own
// offset). Notes outside [0, n_frames) are clipped.
VoiceSequence rasterize_voice_sequence(const AnnotationFile& file, double fr,
                                       double o, double hop_seconds,
                                       std::size_t n_frames);

// Frame count that covers the whole annotated span at the given timing.
std::size_t annotation_span_frames(const AnnotationFile& file, double fr,
                                   double o, double hop_seconds);

// Applies an alignment correction: offset becomes O + o_hat, grid rate
// becomes fr_hat. Grid-unit note values are untouched.
AnnotationFile adapt_timing(const AnnotationFile& file, double o_hat,
                            double fr_hat);

// Builds notes/words/lines/paragraphs. Words break where a note text starts
// with a space (and at line breaks); lines follow the file's line breaks;
// paragraphs group lines by the blank-line structure of `plain_lyrics`.
// Throws MatchError when the line count cannot be partitioned into the
// paragraph line counts of `plain_lyrics`.
GranularityHierarchy expand_granularity(const AnnotationFile& file,
                                        std::string_view plain_lyrics);

// Line-oriented export: level<TAB>start<TAB>end<TAB>text, 6-decimal seconds.
std::string export_granularity(const GranularityHierarchy& h);

}  // namespace voxalign

#endif  // VOXALIGN_ANNOTATION_HPP
