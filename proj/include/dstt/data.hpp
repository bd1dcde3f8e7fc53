#pragma once

// Ingestion and preparation of hourly solar-wind tables: parsing, gap
// handling, horizon labeling, standardization, windowing and splitting.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dstt/tensor.hpp"
#include "dstt/time.hpp"

namespace dstt::data {

inline constexpr std::size_t kFeatureCount = 7;
/// Feature columns in model order, followed by the Dst column.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "imf", "bz", "temp", "density", "speed", "pressure", "efield"};
inline constexpr std::size_t kDstColumn = kFeatureCount;
inline constexpr std::size_t kColumnCount = kFeatureCount + 1;
inline constexpr double kDstMin = -1000.0;
inline constexpr double kDstMax = 500.0;
inline constexpr int kMaxHorizon = 6;

using FeatureVector = std::array<double, kFeatureCount>;

/// One hourly observation. Missing values are flagged per column; their
/// stored value is meaningless until cleaned.
struct SolarWindRecord {
  HourStamp time;
  FeatureVector features{};
  double dst = 0.0;
  std::uint8_t missing = 0;  // bit c set = column c missing (c == kDstColumn for Dst)

  double column(std::size_t c) const { return c == kDstColumn ? dst : features[c]; }
  void set_column(std::size_t c, double v) { (c == kDstColumn ? dst : features[c]) = v; }
  bool is_missing(std::size_t c) const { return (missing >> c) & 1u; }
  void set_missing(std::size_t c, bool m = true) {
    missing = m ? static_cast<std::uint8_t>(missing | (1u << c))
                : static_cast<std::uint8_t>(missing & ~(1u << c));
  }
  bool complete() const { return missing == 0; }
};

/// Record at time t paired with Dst at t + w.
struct LabeledRecord {
  HourStamp time;
  FeatureVector features{};
  double current_dst = 0.0;  // Dst at t, in nT
  double label = 0.0;        // Dst at t + w, in nT
  int w = 1;
};

struct NormalizationStats {
  FeatureVector mean{};
  FeatureVector std{};

  /// Population statistics; throws DegenerateFeature (ValidationError) on a
  /// constant feature.
  static NormalizationStats compute(std::span<const LabeledRecord> records);
};

struct DatasetSplit {
  std::vector<LabeledRecord> train;
  std::vector<LabeledRecord> test;
  std::string provenance;
};

/// A window of consecutive records fed to the network as one sequence.
struct Sequence {
  Tensor features;  // [T x 7]
  std::vector<double> labels;
  std::vector<double> current_dst;
  std::vector<HourStamp> times;

  std::size_t length() const noexcept { return labels.size(); }
};

// ---- parsing --------------------------------------------------------------

struct ColumnSpec {
  std::size_t index = 0;  // 1-based column in the table
  double fill = 0.0;      // values with magnitude >= fill are missing
};

/// Where each quantity lives in an OMNI-style table.
struct ColumnMap {
  std::size_t year = 1;
  std::size_t day_of_year = 2;
  std::size_t hour = 3;
  std::array<ColumnSpec, kColumnCount> columns{};

  /// Layout of the OMNI2 low-resolution hourly files (omni2_YYYY.dat).
  static ColumnMap omni2();
  /// From a JSON document, e.g. config/omni2_columns.json.
  static ColumnMap from_json(std::string_view text);
  static ColumnMap from_file(const std::string& path);
};

bool is_fill_value(double value, double fill);

/// Whitespace- or comma-delimited hourly rows. Blank lines and lines starting
/// with '#' are skipped. Throws ParseError (with line number) on malformed
/// rows and OrderingError when timestamps do not strictly increase.
std::vector<SolarWindRecord> parse_omni_table(std::istream& in, const ColumnMap& map);

/// CSV with header timestamp,imf,bz,temp,density,speed,pressure,efield,dst
/// (extra trailing columns are ignored). Empty or "nan" cells are missing.
std::vector<SolarWindRecord> parse_record_csv(std::istream& in);

/// Picks CSV or OMNI parsing from the first non-comment line.
std::vector<SolarWindRecord> load_records(const std::string& path, const ColumnMap& map);

// ---- cleaning -------------------------------------------------------------

struct CleaningReport {
  std::array<std::size_t, kColumnCount> missing{};
  std::array<std::size_t, kColumnCount> interpolated{};
  std::size_t inserted_rows = 0;  // hours absent from the input table
  std::size_t dropped_rows = 0;   // rows inside gaps longer than the limit
  std::size_t segments = 0;
};

struct CleanResult {
  std::vector<std::vector<SolarWindRecord>> segments;
  CleaningReport report;
};

/// Linearly interpolates missing runs of at most `max_gap` hours per column.
/// Longer runs (and unbracketed runs at either end) remove the affected hours
/// and split the data into independent contiguous segments.
CleanResult clean_missing(std::span<const SolarWindRecord> records, std::size_t max_gap = 6);

// ---- labeling and preparation ---------------------------------------------

/// Labels one contiguous segment with Dst at t + w; the final w records have
/// no label and are dropped. Throws RangeError unless 1 <= w <= 6.
std::vector<LabeledRecord> label_records(std::span<const SolarWindRecord> segment, int w);

/// label_records over every segment, concatenated in order.
std::vector<LabeledRecord> label_segments(const std::vector<std::vector<SolarWindRecord>>& segments,
                                          int w);

/// (feature - mean) / std with the given statistics; labels untouched.
std::vector<LabeledRecord> standardize(std::span<const LabeledRecord> records,
                                       const NormalizationStats& stats);

/// Consecutive disjoint windows of up to n records. A window also ends where
/// the hourly timestamps jump, so no window spans a gap; each trailing part
/// is kept at its natural length.
std::vector<Sequence> make_sequences(std::span<const LabeledRecord> records, std::size_t n = 1024);

/// Train: time < boundary. Test: time >= boundary.
DatasetSplit chronological_split(std::span<const LabeledRecord> records, HourStamp boundary);

/// Last `test_fraction` of the records (by position) form the test part.
DatasetSplit fraction_split(std::span<const LabeledRecord> records, double test_fraction);

/// Contiguous order-preserving folds; the first m % k folds get one extra
/// record. Split i tests on fold i and trains on the rest in order.
std::vector<DatasetSplit> kfold_splits(std::span<const LabeledRecord> records, std::size_t k = 10);

/// Sizes of the folds used by kfold_splits.
std::vector<std::size_t> fold_sizes(std::size_t m, std::size_t k);

// ---- CSV output -----------------------------------------------------------

inline constexpr std::string_view kRecordCsvHeader =
    "timestamp,imf,bz,temp,density,speed,pressure,efield,dst";

/// 17 significant digits, enough to read back the identical double.
std::string format_double(double v);

void write_record_csv(std::ostream& out, std::span<const SolarWindRecord> records);
/// Record columns plus label,w. Features are written as stored.
void write_labeled_csv(std::ostream& out, std::span<const LabeledRecord> records);

}  // namespace dstt::data
