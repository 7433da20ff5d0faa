#include "psvf/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "psvf/csv.hpp"
#include "psvf/error.hpp"
#include "util.hpp"

namespace psvf {

using detail::lower;
using detail::trim;

std::string_view to_string(Sex v) { return v == Sex::female ? "female" : "male"; }

std::string_view to_string(SingerAge v) {
  switch (v) {
    case SingerAge::a20_34: return "20-34";
    case SingerAge::a35_49: return "35-49";
    case SingerAge::a50_64: return "50-64";
    case SingerAge::a65_plus: return "65+";
  }
  return "?";
}

std::string_view to_string(ParticipantAge v) {
  switch (v) {
    case ParticipantAge::a20_34: return "20-34";
    case ParticipantAge::a35_49: return "35-49";
    case ParticipantAge::a50_65: return "50-65";
    case ParticipantAge::a65_plus: return "65+";
  }
  return "?";
}

std::string_view to_string(Language v) {
  switch (v) {
    case Language::fr: return "fr";
    case Language::en: return "en";
    case Language::sp: return "sp";
    case Language::man: return "man";
    case Language::ge: return "ge";
  }
  return "?";
}

std::string_view to_string(Gender v) {
  switch (v) {
    case Gender::female: return "female";
    case Gender::male: return "male";
    case Gender::other: return "other";
  }
  return "?";
}

namespace {

// Lowercase, drop whitespace and fold unicode dashes to '-'.
std::string normalize_token(std::string_view s) {
  std::string in = lower(trim(s));
  std::string out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(in[i]);
    if (c == 0xE2 && i + 2 < in.size() && static_cast<unsigned char>(in[i + 1]) == 0x80) {
      const unsigned char d = static_cast<unsigned char>(in[i + 2]);
      if (d >= 0x90 && d <= 0x95) {
        out.push_back('-');
        i += 2;
        continue;
      }
    }
    if (c == ' ' || c == '\t' || c == '_') continue;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

template <class E, std::size_t N>
std::optional<E> match_age(std::string_view s, const E (&values)[N]) {
  std::string t = normalize_token(s);
  if (t == ">65" || t == "65plus" || t == "over65" || t == "65-") t = "65+";
  for (E v : values) {
    if (t == to_string(v)) return v;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Sex> parse_sex(std::string_view s) {
  const std::string t = normalize_token(s);
  if (t == "female" || t == "f" || t == "woman" || t == "w") return Sex::female;
  if (t == "male" || t == "m" || t == "man") return Sex::male;
  return std::nullopt;
}

std::optional<SingerAge> parse_singer_age(std::string_view s) {
  return match_age(s, kAllSingerAges);
}

std::optional<ParticipantAge> parse_participant_age(std::string_view s) {
  return match_age(s, kAllParticipantAges);
}

std::optional<Language> parse_language(std::string_view s) {
  const std::string t = normalize_token(s);
  if (t == "fr" || t == "french" || t == "fre" || t == "fra") return Language::fr;
  if (t == "en" || t == "english" || t == "eng") return Language::en;
  if (t == "sp" || t == "es" || t == "spanish" || t == "spa") return Language::sp;
  if (t == "man" || t == "zh" || t == "mandarin" || t == "chinese" || t == "cmn")
    return Language::man;
  if (t == "ge" || t == "de" || t == "german" || t == "ger" || t == "deu") return Language::ge;
  return std::nullopt;
}

std::optional<Gender> parse_gender(std::string_view s) {
  const std::string t = normalize_token(s);
  if (t == "female" || t == "f" || t == "woman" || t == "w") return Gender::female;
  if (t == "male" || t == "m" || t == "man") return Gender::male;
  if (t.empty() || t == "other" || t == "unspecified" || t == "nonbinary" ||
      t == "non-binary" || t == "prefernottosay" || t == "na" || t == "n/a")
    return Gender::other;
  return std::nullopt;
}

std::optional<bool> parse_flag(std::string_view s) {
  const std::string t = normalize_token(s);
  if (t.empty() || t == "0" || t == "false" || t == "no" || t == "n") return false;
  if (t == "1" || t == "true" || t == "yes" || t == "y") return true;
  return std::nullopt;
}

int parse_likert(std::string_view label) {
  const std::string t = lower(trim(label));
  if (auto v = detail::parse_int(t); v && *v >= -2 && *v <= 2) return static_cast<int>(*v);
  // Curly apostrophes are folded so "I don’t know" matches.
  std::string folded;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i + 2 < t.size() && static_cast<unsigned char>(t[i]) == 0xE2 &&
        static_cast<unsigned char>(t[i + 1]) == 0x80 &&
        static_cast<unsigned char>(t[i + 2]) == 0x99) {
      folded.push_back('\'');
      i += 2;
    } else {
      folded.push_back(t[i]);
    }
  }
  if (folded == "definitely feminine") return 2;
  if (folded == "rather feminine") return 1;
  if (folded == "i don't know") return 0;
  if (folded == "rather masculine") return -1;
  if (folded == "definitely masculine") return -2;
  throw UnknownLabel("unknown Likert label '" + std::string(label) + "'");
}

SurveyDataset::SurveyDataset(std::vector<SegmentMeta> segments,
                             std::vector<ParticipantMeta> participants,
                             std::vector<Response> responses)
    : segments_(std::move(segments)),
      participants_(std::move(participants)),
      responses_(std::move(responses)) {
  std::unordered_map<std::string, std::size_t> per_song;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (s.segment_id.empty()) throw IntegrityError("segment with empty segment_id");
    if (!segment_idx_.emplace(s.segment_id, i).second)
      throw IntegrityError("duplicate segment_id '" + s.segment_id + "'");
    if (s.song_id.empty()) throw IntegrityError("segment '" + s.segment_id + "' has no song_id");
    if (++per_song[s.song_id] > kMaxSegmentsPerSong)
      throw IntegrityError("song '" + s.song_id + "' has more than " +
                           std::to_string(kMaxSegmentsPerSong) + " segments");
    if (!(s.duration > 0.0))
      throw IntegrityError("segment '" + s.segment_id + "' has non-positive duration");
    if (!(s.start_time >= 0.0))
      throw IntegrityError("segment '" + s.segment_id + "' has negative start_time");
  }
  for (std::size_t i = 0; i < participants_.size(); ++i) {
    const auto& p = participants_[i];
    if (p.participant_id.empty()) throw IntegrityError("participant with empty participant_id");
    if (!participant_idx_.emplace(p.participant_id, i).second)
      throw IntegrityError("duplicate participant_id '" + p.participant_id + "'");
  }
  by_segment_.resize(segments_.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < responses_.size(); ++i) {
    const auto& r = responses_[i];
    auto s = segment_idx_.find(r.segment_id);
    if (s == segment_idx_.end())
      throw IntegrityError("response references unknown segment '" + r.segment_id + "'");
    auto p = participant_idx_.find(r.participant_id);
    if (p == participant_idx_.end())
      throw IntegrityError("response references unknown participant '" + r.participant_id +
                           "'");
    if (r.likert < -2 || r.likert > 2)
      throw IntegrityError("likert value out of range: " + std::to_string(r.likert));
    if (!seen.emplace(p->second, s->second).second)
      throw IntegrityError("duplicate response for participant '" + r.participant_id +
                           "' and segment '" + r.segment_id + "'");
    by_segment_[s->second].push_back(i);
  }
}

const SegmentMeta* SurveyDataset::find_segment(std::string_view id) const {
  auto it = segment_idx_.find(std::string(id));
  return it == segment_idx_.end() ? nullptr : &segments_[it->second];
}

const ParticipantMeta* SurveyDataset::find_participant(std::string_view id) const {
  auto it = participant_idx_.find(std::string(id));
  return it == participant_idx_.end() ? nullptr : &participants_[it->second];
}

std::size_t SurveyDataset::segment_index(std::string_view id) const {
  auto it = segment_idx_.find(std::string(id));
  if (it == segment_idx_.end()) throw IntegrityError("unknown segment '" + std::string(id) + "'");
  return it->second;
}

std::size_t SurveyDataset::participant_index(std::string_view id) const {
  auto it = participant_idx_.find(std::string(id));
  if (it == participant_idx_.end())
    throw IntegrityError("unknown participant '" + std::string(id) + "'");
  return it->second;
}

namespace {

std::vector<std::string> segment_fields(const SegmentMeta& s) {
  return {s.segment_id,
          s.song_id,
          std::string(to_string(s.singer_sex)),
          std::string(to_string(s.singer_age_group)),
          std::string(to_string(s.language)),
          detail::format_double(s.start_time),
          detail::format_double(s.duration),
          s.audio_ref.value_or(""),
          s.stem_ref.value_or("")};
}

std::string join_languages(const std::set<Language>& langs) {
  std::string out;
  for (Language l : langs) {
    if (!out.empty()) out.push_back('|');
    out += to_string(l);
  }
  return out;
}

std::vector<std::string> participant_fields(const ParticipantMeta& p) {
  return {p.participant_id, std::string(to_string(p.gender)),
          std::string(to_string(p.age_group)), join_languages(p.languages),
          p.reported_difficulty ? "1" : "0"};
}

std::vector<std::string> response_fields(const Response& r) {
  return {r.participant_id, r.segment_id, std::to_string(r.likert),
          r.recognized_singer ? "1" : "0"};
}

const std::vector<std::string> kSegmentHeader = {
    "segment_id", "song_id", "singer_sex", "singer_age_group", "language",
    "start_time", "duration", "audio_ref",  "stem_ref"};
const std::vector<std::string> kParticipantHeader = {
    "participant_id", "gender", "age_group", "languages", "reported_difficulty"};
const std::vector<std::string> kResponseHeader = {"participant_id", "segment_id", "likert",
                                                  "recognized_singer"};

}  // namespace

std::uint64_t SurveyDataset::content_hash() const {
  std::ostringstream os;
  for (const auto& s : segments_) csv::write_row(os, segment_fields(s));
  os << '\x1e';
  for (const auto& p : participants_) csv::write_row(os, participant_fields(p));
  os << '\x1e';
  for (const auto& r : responses_) csv::write_row(os, response_fields(r));
  return detail::fnv1a(os.str());
}

DatasetPaths DatasetPaths::in_directory(const std::string& dir) {
  const std::filesystem::path d(dir);
  return {(d / "segments.csv").string(), (d / "participants.csv").string(),
          (d / "responses.csv").string()};
}

ColumnMap::ColumnMap(std::map<std::string, std::string> entries)
    : entries_(std::move(entries)) {}

ColumnMap ColumnMap::parse(std::string_view text, const std::string& source_name) {
  std::map<std::string, std::string> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) eq = line.find(':');
    if (eq == std::string_view::npos)
      throw ParseError(source_name, line_no, "", "expected 'table.field = column'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.find('.') == std::string::npos || value.empty())
      throw ParseError(source_name, line_no, key, "expected 'table.field = column'");
    entries[key] = value;
  }
  return ColumnMap(std::move(entries));
}

ColumnMap ColumnMap::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string ColumnMap::source(std::string_view table, std::string_view field) const {
  std::string key(table);
  key += '.';
  key += field;
  auto it = entries_.find(key);
  return it == entries_.end() ? std::string(field) : it->second;
}

namespace {

// Resolves canonical fields to column indices for one table.
class Columns {
 public:
  Columns(const csv::Table& t, const ColumnMap& map, std::string table, std::string file)
      : t_(t), map_(map), table_(std::move(table)), file_(std::move(file)) {}

  std::size_t required(std::string_view field) const {
    const std::string src = map_.source(table_, field);
    auto idx = src == "-" ? std::nullopt : t_.column(src);
    if (!idx) throw ParseError(file_, 1, src, "missing required column for '" +
                                                  std::string(field) + "'");
    return *idx;
  }

  std::optional<std::size_t> optional(std::string_view field) const {
    const std::string src = map_.source(table_, field);
    if (src == "-") return std::nullopt;
    return t_.column(src);
  }

  const std::string& file() const { return file_; }
  std::string name(std::string_view field) const { return map_.source(table_, field); }

 private:
  const csv::Table& t_;
  const ColumnMap& map_;
  std::string table_;
  std::string file_;
};

template <class T>
T require(std::optional<T> v, const Columns& cols, std::size_t row, std::string_view field,
          const std::string& raw, const char* what) {
  if (!v) throw ParseError(cols.file(), row, cols.name(field),
                           std::string("invalid ") + what + " '" + raw + "'");
  return *v;
}

}  // namespace

SurveyDataset ingest(const DatasetPaths& paths, const ColumnMap& columns) {
  for (const auto* p : {&paths.segments, &paths.participants, &paths.responses}) {
    if (!std::filesystem::exists(*p)) throw IoError("no such file: " + *p);
  }
  const csv::Table seg_t = csv::read_file(paths.segments);
  const csv::Table par_t = csv::read_file(paths.participants);
  const csv::Table res_t = csv::read_file(paths.responses);

  std::vector<SegmentMeta> segments;
  {
    Columns c(seg_t, columns, "segments", paths.segments);
    const auto id = c.required("segment_id"), song = c.required("song_id"),
               sex = c.required("singer_sex"), age = c.required("singer_age_group"),
               lang = c.required("language");
    const auto start = c.optional("start_time"), dur = c.optional("duration"),
               audio = c.optional("audio_ref"), stem = c.optional("stem_ref");
    segments.reserve(seg_t.size());
    for (std::size_t r = 0; r < seg_t.size(); ++r) {
      const auto& row = seg_t.rows()[r];
      const std::size_t line = r + 2;
      SegmentMeta s;
      s.segment_id = std::string(trim(row[id]));
      s.song_id = std::string(trim(row[song]));
      s.singer_sex = require(parse_sex(row[sex]), c, line, "singer_sex", row[sex], "sex");
      s.singer_age_group =
          require(parse_singer_age(row[age]), c, line, "singer_age_group", row[age], "age group");
      s.language = require(parse_language(row[lang]), c, line, "language", row[lang], "language");
      if (start && !trim(row[*start]).empty())
        s.start_time = require(detail::parse_double(row[*start]), c, line, "start_time",
                               row[*start], "number");
      if (dur && !trim(row[*dur]).empty())
        s.duration =
            require(detail::parse_double(row[*dur]), c, line, "duration", row[*dur], "number");
      if (audio && !trim(row[*audio]).empty()) s.audio_ref = std::string(trim(row[*audio]));
      if (stem && !trim(row[*stem]).empty()) s.stem_ref = std::string(trim(row[*stem]));
      segments.push_back(std::move(s));
    }
  }

  std::vector<ParticipantMeta> participants;
  {
    Columns c(par_t, columns, "participants", paths.participants);
    const auto id = c.required("participant_id"), gender = c.required("gender"),
               age = c.required("age_group");
    const auto langs = c.optional("languages"), diff = c.optional("reported_difficulty");
    participants.reserve(par_t.size());
    for (std::size_t r = 0; r < par_t.size(); ++r) {
      const auto& row = par_t.rows()[r];
      const std::size_t line = r + 2;
      ParticipantMeta p;
      p.participant_id = std::string(trim(row[id]));
      p.gender = require(parse_gender(row[gender]), c, line, "gender", row[gender], "gender");
      p.age_group = require(parse_participant_age(row[age]), c, line, "age_group", row[age],
                            "age group");
      if (langs) {
        std::string_view rest = row[*langs];
        while (!rest.empty()) {
          auto bar = rest.find_first_of("|;");
          std::string_view tok = trim(rest.substr(0, bar));
          rest = bar == std::string_view::npos ? std::string_view{} : rest.substr(bar + 1);
          if (tok.empty()) continue;
          p.languages.insert(require(parse_language(tok), c, line, "languages",
                                     std::string(tok), "language"));
        }
      }
      if (diff)
        p.reported_difficulty = require(parse_flag(row[*diff]), c, line, "reported_difficulty",
                                        row[*diff], "flag");
      participants.push_back(std::move(p));
    }
  }

  std::vector<Response> responses;
  {
    Columns c(res_t, columns, "responses", paths.responses);
    const auto pid = c.required("participant_id"), sid = c.required("segment_id"),
               likert = c.required("likert");
    const auto rec = c.optional("recognized_singer");
    responses.reserve(res_t.size());
    for (std::size_t r = 0; r < res_t.size(); ++r) {
      const auto& row = res_t.rows()[r];
      const std::size_t line = r + 2;
      Response x;
      x.participant_id = std::string(trim(row[pid]));
      x.segment_id = std::string(trim(row[sid]));
      try {
        x.likert = parse_likert(row[likert]);
      } catch (const UnknownLabel& e) {
        throw ParseError(c.file(), line, c.name("likert"), e.what());
      }
      if (rec)
        x.recognized_singer =
            require(parse_flag(row[*rec]), c, line, "recognized_singer", row[*rec], "flag");
      responses.push_back(std::move(x));
    }
  }

  return SurveyDataset(std::move(segments), std::move(participants), std::move(responses));
}

void write_canonical(const SurveyDataset& dataset, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const DatasetPaths p = DatasetPaths::in_directory(dir);
  auto write = [](const std::string& path, const std::vector<std::string>& header,
                  auto&& rows, auto&& fields) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    csv::write_row(os, header);
    for (const auto& r : rows) csv::write_row(os, fields(r));
    if (!os) throw IoError("write failed: " + path);
  };
  write(p.segments, kSegmentHeader, dataset.segments(), segment_fields);
  write(p.participants, kParticipantHeader, dataset.participants(), participant_fields);
  write(p.responses, kResponseHeader, dataset.responses(), response_fields);
}

SurveyDataset filter_valid(const SurveyDataset& dataset) {
  std::vector<ParticipantMeta> participants;
  std::set<std::string> dropped;
  for (const auto& p : dataset.participants()) {
    if (p.reported_difficulty) {
      dropped.insert(p.participant_id);
    } else {
      participants.push_back(p);
    }
  }
  std::vector<Response> responses;
  for (const auto& r : dataset.responses()) {
    if (r.recognized_singer || dropped.count(r.participant_id)) continue;
    responses.push_back(r);
  }
  return SurveyDataset(dataset.segments(), std::move(participants), std::move(responses));
}

SegmentScore segment_mean(const SurveyDataset& dataset, std::string_view segment_id) {
  const std::size_t idx = dataset.segment_index(segment_id);
  const auto& rs = dataset.responses_for_segment(idx);
  if (rs.empty()) throw NoResponses("segment '" + std::string(segment_id) + "' has no responses");
  long sum = 0;
  for (std::size_t i : rs) sum += dataset.responses()[i].likert;
  SegmentScore s;
  s.segment_id = std::string(segment_id);
  s.n_responses = static_cast<int>(rs.size());
  s.mean_psvf = static_cast<double>(sum) / static_cast<double>(rs.size());
  s.unit_score = to_unit(s.mean_psvf);
  return s;
}

std::vector<SegmentScore> all_scores(const SurveyDataset& dataset) {
  std::vector<const SegmentMeta*> order;
  for (const auto& s : dataset.segments()) order.push_back(&s);
  std::sort(order.begin(), order.end(),
            [](const SegmentMeta* a, const SegmentMeta* b) { return a->segment_id < b->segment_id; });
  std::vector<SegmentScore> out;
  for (const SegmentMeta* s : order) {
    if (dataset.responses_for_segment(dataset.segment_index(s->segment_id)).empty()) continue;
    out.push_back(segment_mean(dataset, s->segment_id));
  }
  return out;
}

}  // namespace psvf
