#include "psvf/analytics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "psvf/csv.hpp"
#include "psvf/error.hpp"
#include "util.hpp"

namespace psvf {

using nlohmann::json;

ParticipantDim dim_of(const ParticipantValue& v) {
  return static_cast<ParticipantDim>(v.index());
}
SingerDim dim_of(const SingerValue& v) { return static_cast<SingerDim>(v.index()); }

std::string_view to_string(ParticipantDim d) {
  switch (d) {
    case ParticipantDim::gender: return "gender";
    case ParticipantDim::age_group: return "age";
    case ParticipantDim::language: return "language";
  }
  return "?";
}

std::string_view to_string(SingerDim d) {
  switch (d) {
    case SingerDim::sex: return "sex";
    case SingerDim::age_group: return "age";
    case SingerDim::language: return "language";
  }
  return "?";
}

std::string label_of(const ParticipantValue& v) {
  return std::visit([](auto x) { return std::string(to_string(x)); }, v);
}
std::string label_of(const SingerValue& v) {
  return std::visit([](auto x) { return std::string(to_string(x)); }, v);
}

std::optional<ParticipantDim> parse_participant_dim(std::string_view s) {
  const std::string t = detail::lower(detail::trim(s));
  if (t == "gender") return ParticipantDim::gender;
  if (t == "age" || t == "age_group") return ParticipantDim::age_group;
  if (t == "language" || t == "lang") return ParticipantDim::language;
  return std::nullopt;
}

std::optional<SingerDim> parse_singer_dim(std::string_view s) {
  const std::string t = detail::lower(detail::trim(s));
  if (t == "sex" || t == "gender") return SingerDim::sex;
  if (t == "age" || t == "age_group") return SingerDim::age_group;
  if (t == "language" || t == "lang") return SingerDim::language;
  return std::nullopt;
}

std::vector<ParticipantValue> values_of(ParticipantDim d) {
  std::vector<ParticipantValue> out;
  switch (d) {
    case ParticipantDim::gender:
      for (auto v : kAllGenders) out.emplace_back(v);
      break;
    case ParticipantDim::age_group:
      for (auto v : kAllParticipantAges) out.emplace_back(v);
      break;
    case ParticipantDim::language:
      for (auto v : kAllLanguages) out.emplace_back(v);
      break;
  }
  return out;
}

std::vector<SingerValue> values_of(SingerDim d) {
  std::vector<SingerValue> out;
  switch (d) {
    case SingerDim::sex:
      for (auto v : kAllSexes) out.emplace_back(v);
      break;
    case SingerDim::age_group:
      for (auto v : kAllSingerAges) out.emplace_back(v);
      break;
    case SingerDim::language:
      for (auto v : kAllLanguages) out.emplace_back(v);
      break;
  }
  return out;
}

bool participant_in(const ParticipantMeta& p, const ParticipantValue& v) {
  if (auto g = std::get_if<Gender>(&v)) return p.gender == *g;
  if (auto a = std::get_if<ParticipantAge>(&v)) return p.age_group == *a;
  return p.languages.count(std::get<Language>(v)) > 0;
}

bool segment_in(const SegmentMeta& s, const SingerValue& v) {
  if (auto x = std::get_if<Sex>(&v)) return s.singer_sex == *x;
  if (auto a = std::get_if<SingerAge>(&v)) return s.singer_age_group == *a;
  return s.language == std::get<Language>(v);
}

bool sex_alignment(double mean_psvf, Sex singer_sex, const AnalyticsOptions& opts) {
  if (mean_psvf == 0.0) return opts.zero_mean_aligns;
  return singer_sex == Sex::female ? mean_psvf > 0.0 : mean_psvf < 0.0;
}

namespace {

std::string describe(const SubgroupKey& key) {
  std::string s;
  if (key.participant)
    s += "participants " + std::string(to_string(dim_of(*key.participant))) + "=" +
         label_of(*key.participant);
  if (key.singer) {
    if (!s.empty()) s += ", ";
    s += "singers " + std::string(to_string(dim_of(*key.singer))) + "=" + label_of(*key.singer);
  }
  return s.empty() ? "all" : s;
}

// Calls fn(segment, sum, count) for each segment of the singer subgroup that
// has at least one response from the participant subgroup.
template <class Fn>
void for_each_segment_mean(const SurveyDataset& d, const SubgroupKey& key, Fn&& fn) {
  std::vector<char> member;
  if (key.participant) {
    member.resize(d.participants().size());
    for (std::size_t i = 0; i < member.size(); ++i)
      member[i] = participant_in(d.participants()[i], *key.participant);
  }
  for (std::size_t s = 0; s < d.segments().size(); ++s) {
    const SegmentMeta& seg = d.segments()[s];
    if (key.singer && !segment_in(seg, *key.singer)) continue;
    long sum = 0;
    long count = 0;
    for (std::size_t r : d.responses_for_segment(s)) {
      const Response& resp = d.responses()[r];
      if (key.participant && !member[d.participant_index(resp.participant_id)]) continue;
      sum += resp.likert;
      ++count;
    }
    if (count > 0) fn(seg, sum, count);
  }
}

}  // namespace

ACResult try_average_correspondence(const SurveyDataset& dataset, const SubgroupKey& key,
                                    const AnalyticsOptions& opts) {
  ACResult out;
  out.key = key;
  for_each_segment_mean(dataset, key, [&](const SegmentMeta& seg, long sum, long count) {
    ++out.n_segments;
    const double mean = static_cast<double>(sum) / static_cast<double>(count);
    if (sex_alignment(mean, seg.singer_sex, opts)) ++out.aligned;
  });
  if (out.n_segments > 0) out.ac_percent = 100.0 * out.aligned / out.n_segments;
  return out;
}

ACResult average_correspondence(const SurveyDataset& dataset, const SubgroupKey& key,
                                const AnalyticsOptions& opts) {
  if (!key.participant && !key.singer) throw ConfigError("subgroup key has no dimension set");
  ACResult r = try_average_correspondence(dataset, key, opts);
  if (r.n_segments == 0) throw EmptySubgroup("no qualifying segments for " + describe(key));
  return r;
}

UnsureResult try_unsure_fraction(const SurveyDataset& dataset, const SubgroupKey& key,
                                 const AnalyticsOptions& opts) {
  if (key.participant) throw ConfigError("unsure rate is defined over singer subgroups only");
  UnsureResult out;
  out.key = key;
  for_each_segment_mean(dataset, key, [&](const SegmentMeta&, long sum, long count) {
    ++out.n_segments;
    const double mean = std::abs(static_cast<double>(sum) / static_cast<double>(count));
    if (opts.unsure_inclusive ? mean <= 0.5 : mean < 0.5) ++out.unsure;
  });
  if (out.n_segments > 0) out.unsure_percent = 100.0 * out.unsure / out.n_segments;
  return out;
}

UnsureResult unsure_fraction(const SurveyDataset& dataset, const SubgroupKey& key,
                             const AnalyticsOptions& opts) {
  if (!key.singer) throw ConfigError("unsure rate requires a singer subgroup");
  UnsureResult r = try_unsure_fraction(dataset, key, opts);
  if (r.n_segments == 0) throw EmptySubgroup("no qualifying segments for " + describe(key));
  return r;
}

CrossTab crosstab(const SurveyDataset& dataset, ParticipantDim participant_dim,
                  SingerDim singer_dim, const AnalyticsOptions& opts, bool drop_incomplete) {
  CrossTab t;
  t.participant_dim = participant_dim;
  t.singer_dim = singer_dim;
  t.rows = values_of(singer_dim);
  t.cells.resize(t.rows.size());
  for (const ParticipantValue& pv : values_of(participant_dim)) {
    int members = 0;
    for (const auto& p : dataset.participants()) members += participant_in(p, pv);
    std::vector<ACResult> column;
    bool complete = members > 0;
    for (const SingerValue& sv : t.rows) {
      column.push_back(try_average_correspondence(dataset, {pv, sv}, opts));
      complete = complete && column.back().ac_percent.has_value();
    }
    if (drop_incomplete && !complete) continue;
    t.columns.push_back(pv);
    t.n_participants.push_back(members);
    for (std::size_t r = 0; r < t.rows.size(); ++r) t.cells[r].push_back(std::move(column[r]));
  }
  return t;
}

ReportRequest ReportRequest::standard() {
  ReportRequest r;
  r.tables = {{ParticipantDim::gender, SingerDim::sex},
              {ParticipantDim::age_group, SingerDim::age_group},
              {ParticipantDim::language, SingerDim::language}};
  r.unsure_dims = {SingerDim::sex, SingerDim::age_group, SingerDim::language};
  return r;
}

AnalyticsReport build_report(const SurveyDataset& filtered, const ReportRequest& request,
                             const AnalyticsOptions& opts,
                             const std::string& filter_description) {
  AnalyticsReport report;
  report.provenance.dataset_hash = detail::hex64(filtered.content_hash());
  report.provenance.filter = filter_description;
  report.provenance.options = opts;
  for (const auto& [pd, sd] : request.tables)
    report.ac_tables.push_back(crosstab(filtered, pd, sd, opts));
  if (request.include_unsure) {
    for (SingerDim d : request.unsure_dims) {
      for (const SingerValue& v : values_of(d))
        report.unsure.push_back(try_unsure_fraction(filtered, {std::nullopt, v}, opts));
    }
  }
  return report;
}

std::optional<ReportFormat> parse_report_format(std::string_view s) {
  const std::string t = detail::lower(detail::trim(s));
  if (t == "md" || t == "markdown") return ReportFormat::markdown;
  if (t == "json") return ReportFormat::json;
  if (t == "csv") return ReportFormat::csv;
  return std::nullopt;
}

std::string format_percent(double percent) {
  // Percentages here are ratios of small integers; the epsilon keeps values
  // like 96.65 (stored as 96.6499...) rounding up.
  const double scaled = std::floor(percent * 10.0 + 0.5 + 1e-9);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", scaled / 10.0);
  return buf;
}

namespace {

std::string row_label(const SingerValue& v) {
  if (std::holds_alternative<Language>(v)) return "AC " + label_of(v) + " tracks";
  return "AC " + label_of(v) + " singers";
}

std::string percent_or_na(const std::optional<double>& p) {
  return p ? format_percent(*p) : "n/a";
}

void render_markdown(std::ostream& os, const AnalyticsReport& r) {
  os << "# Average correspondence and unsure rates\n\n";
  os << "- dataset hash: `" << r.provenance.dataset_hash << "`\n";
  os << "- filter: " << r.provenance.filter << "\n";
  os << "- zero mean aligns: " << (r.provenance.options.zero_mean_aligns ? "yes" : "no")
     << "\n";
  os << "- unsure interval: "
     << (r.provenance.options.unsure_inclusive ? "|mean| <= 0.5" : "|mean| < 0.5") << "\n";
  for (const CrossTab& t : r.ac_tables) {
    os << "\n## AC (%): participant " << to_string(t.participant_dim) << " x singer "
       << to_string(t.singer_dim) << "\n\n|  |";
    for (const auto& c : t.columns) os << ' ' << label_of(c) << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < t.columns.size(); ++i) os << "---|";
    os << "\n| nb. participants |";
    for (int n : t.n_participants) os << ' ' << n << " |";
    os << '\n';
    for (std::size_t row = 0; row < t.rows.size(); ++row) {
      os << "| " << row_label(t.rows[row]) << " |";
      for (const ACResult& cell : t.cells[row]) os << ' ' << percent_or_na(cell.ac_percent) << " |";
      os << '\n';
    }
  }
  if (!r.unsure.empty()) {
    os << "\n## Unsure (%) of singer subgroups\n\n|  |";
    for (const auto& u : r.unsure) os << ' ' << label_of(*u.key.singer) << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < r.unsure.size(); ++i) os << "---|";
    os << "\n| group |";
    for (const auto& u : r.unsure) os << ' ' << to_string(dim_of(*u.key.singer)) << " |";
    os << "\n| Unsure (%) |";
    for (const auto& u : r.unsure) os << ' ' << percent_or_na(u.unsure_percent) << " |";
    os << '\n';
  }
}

void render_csv(std::ostream& os, const AnalyticsReport& r) {
  csv::write_row(os, {"table", "participant_dim", "participant_value", "singer_dim",
                      "singer_value", "n_participants", "n_segments", "count", "percent"});
  for (const CrossTab& t : r.ac_tables) {
    for (std::size_t row = 0; row < t.rows.size(); ++row) {
      for (std::size_t col = 0; col < t.columns.size(); ++col) {
        const ACResult& c = t.cells[row][col];
        csv::write_row(os, {"ac", std::string(to_string(t.participant_dim)),
                            label_of(t.columns[col]), std::string(to_string(t.singer_dim)),
                            label_of(t.rows[row]), std::to_string(t.n_participants[col]),
                            std::to_string(c.n_segments), std::to_string(c.aligned),
                            c.ac_percent ? format_percent(*c.ac_percent) : ""});
      }
    }
  }
  for (const UnsureResult& u : r.unsure) {
    csv::write_row(os, {"unsure", "", "", std::string(to_string(dim_of(*u.key.singer))),
                        label_of(*u.key.singer), "", std::to_string(u.n_segments),
                        std::to_string(u.unsure),
                        u.unsure_percent ? format_percent(*u.unsure_percent) : ""});
  }
}

json key_to_json(const SubgroupKey& k) {
  json j = json::object();
  if (k.participant)
    j["participant"] = {{"dim", to_string(dim_of(*k.participant))},
                        {"value", label_of(*k.participant)}};
  if (k.singer)
    j["singer"] = {{"dim", to_string(dim_of(*k.singer))}, {"value", label_of(*k.singer)}};
  return j;
}

ParticipantValue participant_value(ParticipantDim d, const std::string& label) {
  for (const auto& v : values_of(d))
    if (label_of(v) == label) return v;
  throw ParseError("report.json", 0, std::string(to_string(d)), "unknown value '" + label + "'");
}

SingerValue singer_value(SingerDim d, const std::string& label) {
  for (const auto& v : values_of(d))
    if (label_of(v) == label) return v;
  throw ParseError("report.json", 0, std::string(to_string(d)), "unknown value '" + label + "'");
}

ParticipantDim require_pdim(const std::string& s) {
  auto d = parse_participant_dim(s);
  if (!d) throw ParseError("report.json", 0, "participant_dim", "unknown dimension '" + s + "'");
  return *d;
}

SingerDim require_sdim(const std::string& s) {
  auto d = parse_singer_dim(s);
  if (!d) throw ParseError("report.json", 0, "singer_dim", "unknown dimension '" + s + "'");
  return *d;
}

SubgroupKey key_from_json(const json& j) {
  SubgroupKey k;
  if (j.contains("participant")) {
    const auto d = require_pdim(j["participant"]["dim"].get<std::string>());
    k.participant = participant_value(d, j["participant"]["value"].get<std::string>());
  }
  if (j.contains("singer")) {
    const auto d = require_sdim(j["singer"]["dim"].get<std::string>());
    k.singer = singer_value(d, j["singer"]["value"].get<std::string>());
  }
  return k;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json to_json(const AnalyticsReport& r) {
  json out;
  out["schema"] = "psvf.analytics_report/1";
  out["provenance"] = {{"dataset_hash", r.provenance.dataset_hash},
                       {"filter", r.provenance.filter},
                       {"zero_mean_aligns", r.provenance.options.zero_mean_aligns},
                       {"unsure_inclusive", r.provenance.options.unsure_inclusive}};
  json tables = json::array();
  for (const CrossTab& t : r.ac_tables) {
    json jt;
    jt["participant_dim"] = to_string(t.participant_dim);
    jt["singer_dim"] = to_string(t.singer_dim);
    jt["columns"] = json::array();
    for (const auto& c : t.columns) jt["columns"].push_back(label_of(c));
    jt["n_participants"] = t.n_participants;
    jt["rows"] = json::array();
    for (const auto& row : t.rows) jt["rows"].push_back(label_of(row));
    jt["cells"] = json::array();
    for (const auto& row : t.cells) {
      json jr = json::array();
      for (const ACResult& c : row) {
        jr.push_back({{"key", key_to_json(c.key)},
                      {"n_segments", c.n_segments},
                      {"aligned", c.aligned},
                      {"ac_percent", optional_number(c.ac_percent)},
                      {"display", percent_or_na(c.ac_percent)}});
      }
      jt["cells"].push_back(std::move(jr));
    }
    tables.push_back(std::move(jt));
  }
  out["ac_tables"] = std::move(tables);
  json unsure = json::array();
  for (const UnsureResult& u : r.unsure) {
    unsure.push_back({{"key", key_to_json(u.key)},
                      {"n_segments", u.n_segments},
                      {"unsure", u.unsure},
                      {"unsure_percent", optional_number(u.unsure_percent)},
                      {"display", percent_or_na(u.unsure_percent)}});
  }
  out["unsure"] = std::move(unsure);
  return out;
}

}  // namespace

std::string render_report(const AnalyticsReport& report, ReportFormat format) {
  std::ostringstream os;
  switch (format) {
    case ReportFormat::markdown: render_markdown(os, report); break;
    case ReportFormat::csv: render_csv(os, report); break;
    case ReportFormat::json: os << to_json(report).dump(2) << '\n'; break;
  }
  return os.str();
}

std::string render_report(const AnalyticsReport& report, std::string_view format) {
  auto f = parse_report_format(format);
  if (!f) throw UnsupportedFormat("unsupported report format '" + std::string(format) + "'");
  return render_report(report, *f);
}

AnalyticsReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("report.json", 0, "", e.what());
  }
  try {
    AnalyticsReport r;
    const json& p = j.at("provenance");
    r.provenance.dataset_hash = p.at("dataset_hash").get<std::string>();
    r.provenance.filter = p.at("filter").get<std::string>();
    r.provenance.options.zero_mean_aligns = p.at("zero_mean_aligns").get<bool>();
    r.provenance.options.unsure_inclusive = p.at("unsure_inclusive").get<bool>();
    for (const json& jt : j.at("ac_tables")) {
      CrossTab t;
      t.participant_dim = require_pdim(jt.at("participant_dim").get<std::string>());
      t.singer_dim = require_sdim(jt.at("singer_dim").get<std::string>());
      for (const json& c : jt.at("columns"))
        t.columns.push_back(participant_value(t.participant_dim, c.get<std::string>()));
      t.n_participants = jt.at("n_participants").get<std::vector<int>>();
      for (const json& row : jt.at("rows"))
        t.rows.push_back(singer_value(t.singer_dim, row.get<std::string>()));
      for (const json& jr : jt.at("cells")) {
        std::vector<ACResult> row;
        for (const json& c : jr) {
          ACResult a;
          a.key = key_from_json(c.at("key"));
          a.n_segments = c.at("n_segments").get<int>();
          a.aligned = c.at("aligned").get<int>();
          a.ac_percent = number_or_null(c.at("ac_percent"));
          row.push_back(std::move(a));
        }
        t.cells.push_back(std::move(row));
      }
      r.ac_tables.push_back(std::move(t));
    }
    for (const json& ju : j.at("unsure")) {
      UnsureResult u;
      u.key = key_from_json(ju.at("key"));
      u.n_segments = ju.at("n_segments").get<int>();
      u.unsure = ju.at("unsure").get<int>();
      u.unsure_percent = number_or_null(ju.at("unsure_percent"));
      r.unsure.push_back(std::move(u));
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError("report.json", 0, "", e.what());
  }
}

}  // namespace psvf
