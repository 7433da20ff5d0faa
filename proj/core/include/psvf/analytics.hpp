#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "psvf/dataset.hpp"

namespace psvf {

enum class ParticipantDim { gender, age_group, language };
enum class SingerDim { sex, age_group, language };

using ParticipantValue = std::variant<Gender, ParticipantAge, Language>;
using SingerValue = std::variant<Sex, SingerAge, Language>;

ParticipantDim dim_of(const ParticipantValue& v);
SingerDim dim_of(const SingerValue& v);
std::string_view to_string(ParticipantDim d);
std::string_view to_string(SingerDim d);
std::string label_of(const ParticipantValue& v);
std::string label_of(const SingerValue& v);
std::optional<ParticipantDim> parse_participant_dim(std::string_view s);
std::optional<SingerDim> parse_singer_dim(std::string_view s);

// Every value of a dimension, in table order.
std::vector<ParticipantValue> values_of(ParticipantDim d);
std::vector<SingerValue> values_of(SingerDim d);

bool participant_in(const ParticipantMeta& p, const ParticipantValue& v);
bool segment_in(const SegmentMeta& s, const SingerValue& v);

// At least one side is set (checked by the operations that take it).
struct SubgroupKey {
  std::optional<ParticipantValue> participant;
  std::optional<SingerValue> singer;

  bool operator==(const SubgroupKey&) const = default;
};

struct AnalyticsOptions {
  // A mean of exactly 0 aligns with neither sex unless this is set.
  bool zero_mean_aligns = false;
  // Unsure uses |mean| < 0.5 unless this is set (then |mean| <= 0.5).
  bool unsure_inclusive = false;

  bool operator==(const AnalyticsOptions&) const = default;
};

struct ACResult {
  SubgroupKey key;
  int n_segments = 0;
  int aligned = 0;
  std::optional<double> ac_percent;  // absent when n_segments == 0

  bool operator==(const ACResult&) const = default;
};

struct UnsureResult {
  SubgroupKey key;
  int n_segments = 0;
  int unsure = 0;
  std::optional<double> unsure_percent;

  bool operator==(const UnsureResult&) const = default;
};

bool sex_alignment(double mean_psvf, Sex singer_sex, const AnalyticsOptions& opts = {});

// Alignment rate over the segments of the singer subgroup (all segments when
// unset) that have at least one qualifying response. With a participant
// value set, each segment mean is taken over that subgroup's responses only.
// Throws EmptySubgroup when no segment qualifies.
ACResult average_correspondence(const SurveyDataset& dataset, const SubgroupKey& key,
                                const AnalyticsOptions& opts = {});

// Same, but reports an empty subgroup as an absent percentage.
ACResult try_average_correspondence(const SurveyDataset& dataset, const SubgroupKey& key,
                                    const AnalyticsOptions& opts = {});

// Share of segments whose mean over all responses is within 0.5 of zero.
// Only singer keys are accepted (ConfigError otherwise). Throws EmptySubgroup.
UnsureResult unsure_fraction(const SurveyDataset& dataset, const SubgroupKey& key,
                             const AnalyticsOptions& opts = {});
UnsureResult try_unsure_fraction(const SurveyDataset& dataset, const SubgroupKey& key,
                                 const AnalyticsOptions& opts = {});

// Participant subgroups are columns, singer subgroups rows.
struct CrossTab {
  ParticipantDim participant_dim = ParticipantDim::gender;
  SingerDim singer_dim = SingerDim::sex;
  std::vector<ParticipantValue> columns;
  std::vector<int> n_participants;        // per column
  std::vector<SingerValue> rows;
  std::vector<std::vector<ACResult>> cells;  // [row][column]

  bool operator==(const CrossTab&) const = default;
};

// Participant subgroups with no members, or with any absent cell (they do not
// cover every singer subgroup), are omitted when drop_incomplete is set.
CrossTab crosstab(const SurveyDataset& dataset, ParticipantDim participant_dim,
                  SingerDim singer_dim, const AnalyticsOptions& opts = {},
                  bool drop_incomplete = true);

struct ReportProvenance {
  std::string dataset_hash;
  std::string filter;  // e.g. "filter_valid" or "none"
  AnalyticsOptions options;

  bool operator==(const ReportProvenance&) const = default;
};

struct AnalyticsReport {
  ReportProvenance provenance;
  std::vector<CrossTab> ac_tables;
  std::vector<UnsureResult> unsure;

  bool operator==(const AnalyticsReport&) const = default;
};

struct ReportRequest {
  // Defaults to the three same-dimension blocks (gender x sex, age x age,
  // language x language).
  std::vector<std::pair<ParticipantDim, SingerDim>> tables;
  // Defaults to sex, age group and language.
  std::vector<SingerDim> unsure_dims;
  bool include_unsure = true;

  static ReportRequest standard();
};

AnalyticsReport build_report(const SurveyDataset& filtered, const ReportRequest& request,
                             const AnalyticsOptions& opts = {},
                             const std::string& filter_description = "filter_valid");

enum class ReportFormat { markdown, json, csv };
std::optional<ReportFormat> parse_report_format(std::string_view s);

// Half-up rounding to one decimal, as printed in the tables.
std::string format_percent(double percent);

// Deterministic. Markdown and CSV show one-decimal percentages; JSON keeps
// full precision and parses back with report_from_json.
std::string render_report(const AnalyticsReport& report, ReportFormat format);
// Throws UnsupportedFormat for anything but "md"/"markdown", "json", "csv".
std::string render_report(const AnalyticsReport& report, std::string_view format);
AnalyticsReport report_from_json(const std::string& json);

}  // namespace psvf
