#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace psvf {

enum class Sex { female, male };
enum class SingerAge { a20_34, a35_49, a50_64, a65_plus };
// Participants were asked for 50-65, singers were binned 50-64.
enum class ParticipantAge { a20_34, a35_49, a50_65, a65_plus };
enum class Language { fr, en, sp, man, ge };
enum class Gender { female, male, other };

inline constexpr Sex kAllSexes[] = {Sex::female, Sex::male};
inline constexpr SingerAge kAllSingerAges[] = {SingerAge::a20_34, SingerAge::a35_49,
                                               SingerAge::a50_64, SingerAge::a65_plus};
inline constexpr ParticipantAge kAllParticipantAges[] = {
    ParticipantAge::a20_34, ParticipantAge::a35_49, ParticipantAge::a50_65,
    ParticipantAge::a65_plus};
inline constexpr Language kAllLanguages[] = {Language::fr, Language::en, Language::sp,
                                             Language::man, Language::ge};
inline constexpr Gender kAllGenders[] = {Gender::female, Gender::male, Gender::other};

std::string_view to_string(Sex v);
std::string_view to_string(SingerAge v);
std::string_view to_string(ParticipantAge v);
std::string_view to_string(Language v);
std::string_view to_string(Gender v);

// Lenient spellings are accepted ("F", "French", "50–64", ...). Each returns
// nullopt on an unrecognized value; callers turn that into a ParseError.
std::optional<Sex> parse_sex(std::string_view s);
std::optional<SingerAge> parse_singer_age(std::string_view s);
std::optional<ParticipantAge> parse_participant_age(std::string_view s);
std::optional<Language> parse_language(std::string_view s);
std::optional<Gender> parse_gender(std::string_view s);
std::optional<bool> parse_flag(std::string_view s);

// Maps one of the five Likert labels (trimmed, case-insensitive) or an
// integer in -2..2 to its value. Throws UnknownLabel otherwise.
int parse_likert(std::string_view label);

struct SegmentMeta {
  std::string segment_id;
  std::string song_id;
  Sex singer_sex = Sex::female;
  SingerAge singer_age_group = SingerAge::a20_34;
  Language language = Language::fr;
  double start_time = 0.0;
  double duration = 3.0;
  std::optional<std::string> audio_ref;
  std::optional<std::string> stem_ref;

  bool operator==(const SegmentMeta&) const = default;
};

struct ParticipantMeta {
  std::string participant_id;
  Gender gender = Gender::other;
  ParticipantAge age_group = ParticipantAge::a20_34;
  std::set<Language> languages;
  bool reported_difficulty = false;

  bool operator==(const ParticipantMeta&) const = default;
};

struct Response {
  std::string participant_id;
  std::string segment_id;
  int likert = 0;
  bool recognized_singer = false;

  bool operator==(const Response&) const = default;
};

inline constexpr std::size_t kMaxSegmentsPerSong = 6;

// Immutable after construction. The constructor enforces id uniqueness,
// foreign keys, the per-song segment limit and value ranges, throwing
// IntegrityError on the first violation.
class SurveyDataset {
 public:
  SurveyDataset() = default;
  SurveyDataset(std::vector<SegmentMeta> segments, std::vector<ParticipantMeta> participants,
                std::vector<Response> responses);

  const std::vector<SegmentMeta>& segments() const { return segments_; }
  const std::vector<ParticipantMeta>& participants() const { return participants_; }
  const std::vector<Response>& responses() const { return responses_; }

  const SegmentMeta* find_segment(std::string_view id) const;
  const ParticipantMeta* find_participant(std::string_view id) const;
  std::size_t segment_index(std::string_view id) const;
  std::size_t participant_index(std::string_view id) const;

  // Indices into responses(), in input order.
  const std::vector<std::size_t>& responses_for_segment(std::size_t segment_index) const {
    return by_segment_[segment_index];
  }

  // FNV-1a over the canonical CSV serialization.
  std::uint64_t content_hash() const;

  bool operator==(const SurveyDataset& o) const {
    return segments_ == o.segments_ && participants_ == o.participants_ &&
           responses_ == o.responses_;
  }

 private:
  std::vector<SegmentMeta> segments_;
  std::vector<ParticipantMeta> participants_;
  std::vector<Response> responses_;
  std::unordered_map<std::string, std::size_t> segment_idx_;
  std::unordered_map<std::string, std::size_t> participant_idx_;
  std::vector<std::vector<std::size_t>> by_segment_;
};

struct SegmentScore {
  std::string segment_id;
  int n_responses = 0;
  double mean_psvf = 0.0;
  double unit_score = 0.5;

  bool operator==(const SegmentScore&) const = default;
};

// [-2, 2] -> [0, 1]
inline double to_unit(double mean_psvf) { return (mean_psvf + 2.0) / 4.0; }

struct DatasetPaths {
  std::string segments;
  std::string participants;
  std::string responses;

  // <dir>/segments.csv, <dir>/participants.csv, <dir>/responses.csv
  static DatasetPaths in_directory(const std::string& dir);
};

// Canonical field -> source column, keyed "<table>.<field>", e.g.
// "responses.likert = answer". Unmapped fields use their canonical name. A
// source of "-" marks an optional field as absent from the input.
class ColumnMap {
 public:
  ColumnMap() = default;
  explicit ColumnMap(std::map<std::string, std::string> entries);

  // Key-value text: one "table.field = column" per line, '#' comments.
  static ColumnMap parse(std::string_view text, const std::string& source_name);
  static ColumnMap load(const std::string& path);

  std::string source(std::string_view table, std::string_view field) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// Reads the three delimited files. Raw rows (including recognition and
// difficulty flags) are kept; filtering is a separate step.
SurveyDataset ingest(const DatasetPaths& paths, const ColumnMap& columns = {});

// Writes the canonical three-file layout into dir (created if missing).
void write_canonical(const SurveyDataset& dataset, const std::string& dir);

// Drops responses flagged as recognizing the singer, and participants who
// reported difficulties together with all their responses. Segments are
// always kept. Idempotent.
SurveyDataset filter_valid(const SurveyDataset& dataset);

// Throws NoResponses when the segment has no responses.
SegmentScore segment_mean(const SurveyDataset& dataset, std::string_view segment_id);

// One score per segment with at least one response, ordered by segment_id.
std::vector<SegmentScore> all_scores(const SurveyDataset& dataset);

}  // namespace psvf
