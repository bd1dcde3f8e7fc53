#include "dstt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "dstt/errors.hpp"

namespace dstt::data {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == ',' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != ',' && line[i] != '\r') ++i;
    out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string line_context(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

void check_dst_range(SolarWindRecord& r) {
  if (!r.is_missing(kDstColumn) && (r.dst < kDstMin || r.dst > kDstMax)) r.set_missing(kDstColumn);
}

}  // namespace

// ---- column map -----------------------------------------------------------

ColumnMap ColumnMap::omni2() {
  ColumnMap m;
  m.columns = {ColumnSpec{9, 999.9},      // imf: field magnitude average |B|, nT
               ColumnSpec{17, 999.9},     // bz: Bz GSM, nT
               ColumnSpec{23, 9999999.},  // temp: proton temperature, K
               ColumnSpec{24, 999.9},     // density: proton density, n/cc
               ColumnSpec{25, 9999.},     // speed: plasma flow speed, km/s
               ColumnSpec{29, 99.99},     // pressure: flow pressure, nPa
               ColumnSpec{36, 999.99},    // efield: electric field, mV/m
               ColumnSpec{41, 99999.}};   // dst, nT
  return m;
}

ColumnMap ColumnMap::from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("column map: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("column map must be a JSON object");
  ColumnMap m;
  bool seen[kColumnCount] = {};
  for (const auto& [key, value] : doc.items()) {
    if (key == "year") {
      m.year = value.get<std::size_t>();
    } else if (key == "day_of_year") {
      m.day_of_year = value.get<std::size_t>();
    } else if (key == "hour") {
      m.hour = value.get<std::size_t>();
    } else if (key == "description") {
      continue;
    } else if (key == "columns") {
      for (const auto& [name, spec] : value.items()) {
        std::size_t c = kColumnCount;
        for (std::size_t i = 0; i < kFeatureCount; ++i)
          if (kFeatureNames[i] == name) c = i;
        if (name == "dst") c = kDstColumn;
        if (c == kColumnCount) throw ConfigError("column map: unknown column '" + name + "'");
        m.columns[c] = ColumnSpec{spec.at("index").get<std::size_t>(), spec.at("fill").get<double>()};
        seen[c] = true;
      }
    } else {
      throw ConfigError("column map: unknown key '" + key + "'");
    }
  }
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    if (!seen[c]) {
      throw ConfigError("column map: missing column '" +
                        std::string(c == kDstColumn ? "dst" : kFeatureNames[c]) + "'");
    }
  }
  return m;
}

ColumnMap ColumnMap::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open column map '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

bool is_fill_value(double value, double fill) {
  return !std::isfinite(value) || (fill > 0.0 && std::abs(value) >= fill * (1.0 - 1e-9));
}

// ---- parsing --------------------------------------------------------------

std::vector<SolarWindRecord> parse_omni_table(std::istream& in, const ColumnMap& map) {
  std::size_t needed = std::max({map.year, map.day_of_year, map.hour});
  for (const ColumnSpec& c : map.columns) needed = std::max(needed, c.index);

  std::vector<SolarWindRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split_fields(body);
    if (fields.size() < needed) {
      throw ParseError(line_context(line_no) + "expected at least " + std::to_string(needed) +
                       " columns, found " + std::to_string(fields.size()));
    }
    auto number = [&](std::size_t index) {
      double v = 0.0;
      if (!parse_double(fields[index - 1], v)) {
        throw ParseError(line_context(line_no) + "column " + std::to_string(index) + " ('" +
                         std::string(fields[index - 1]) + "') is not a number");
      }
      return v;
    };
    SolarWindRecord r;
    try {
      r.time = HourStamp::from_day_of_year(static_cast<int>(number(map.year)),
                                           static_cast<unsigned>(number(map.day_of_year)),
                                           static_cast<unsigned>(number(map.hour)));
    } catch (const ParseError& e) {
      throw ParseError(line_context(line_no) + e.what());
    }
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      const double v = number(map.columns[c].index);
      if (is_fill_value(v, map.columns[c].fill)) {
        r.set_column(c, 0.0);
        r.set_missing(c);
      } else {
        r.set_column(c, v);
      }
    }
    check_dst_range(r);
    if (!out.empty() && r.time <= out.back().time) {
      throw OrderingError(line_context(line_no) + "timestamp " + r.time.iso() +
                          " does not follow " + out.back().time.iso());
    }
    out.push_back(r);
  }
  return out;
}

std::vector<SolarWindRecord> parse_record_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::size_t> position(kColumnCount + 1, std::string_view::npos);
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto names = split_csv(body);
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == "timestamp") position[kColumnCount] = i;
      if (names[i] == "dst") position[kDstColumn] = i;
      for (std::size_t c = 0; c < kFeatureCount; ++c)
        if (names[i] == kFeatureNames[c]) position[c] = i;
    }
    break;
  }
  for (std::size_t c = 0; c <= kColumnCount; ++c) {
    if (position[c] == std::string_view::npos) {
      throw ParseError("CSV header must contain " + std::string(kRecordCsvHeader));
    }
  }
  const std::size_t needed = *std::max_element(position.begin(), position.end()) + 1;

  std::vector<SolarWindRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto cells = split_csv(body);
    if (cells.size() < needed) {
      throw ParseError(line_context(line_no) + "expected " + std::to_string(needed) + " fields");
    }
    SolarWindRecord r;
    try {
      r.time = HourStamp::parse(cells[position[kColumnCount]]);
    } catch (const ParseError& e) {
      throw ParseError(line_context(line_no) + e.what());
    }
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      const std::string_view cell = cells[position[c]];
      double v = 0.0;
      if (cell.empty() || cell == "nan" || cell == "NaN") {
        r.set_missing(c);
      } else if (!parse_double(cell, v)) {
        throw ParseError(line_context(line_no) + "'" + std::string(cell) + "' is not a number");
      } else if (!std::isfinite(v)) {
        r.set_missing(c);
      } else {
        r.set_column(c, v);
      }
    }
    check_dst_range(r);
    if (!out.empty() && r.time <= out.back().time) {
      throw OrderingError(line_context(line_no) + "timestamp " + r.time.iso() +
                          " does not follow " + out.back().time.iso());
    }
    out.push_back(r);
  }
  return out;
}

std::vector<SolarWindRecord> load_records(const std::string& path, const ColumnMap& map) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file '" + path + "'");
  std::string line;
  bool csv = false;
  while (std::getline(in, line)) {
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    csv = body.starts_with("timestamp");
    break;
  }
  in.clear();
  in.seekg(0);
  return csv ? parse_record_csv(in) : parse_omni_table(in, map);
}

// ---- cleaning -------------------------------------------------------------

CleanResult clean_missing(std::span<const SolarWindRecord> records, std::size_t max_gap) {
  CleanResult result;
  if (records.empty()) return result;

  // Dense hourly grid; hours absent from the input become all-missing rows.
  std::vector<SolarWindRecord> grid;
  grid.reserve(records.size());
  for (const SolarWindRecord& r : records) {
    if (!grid.empty()) {
      if (r.time <= grid.back().time) {
        throw OrderingError("clean_missing: records are not in strictly increasing time order");
      }
      for (HourStamp t = grid.back().time + 1; t < r.time; t = t + 1) {
        SolarWindRecord gap;
        gap.time = t;
        gap.missing = 0xFF;
        grid.push_back(gap);
        ++result.report.inserted_rows;
      }
    }
    for (std::size_t c = 0; c < kColumnCount; ++c)
      if (r.is_missing(c)) ++result.report.missing[c];
    grid.push_back(r);
  }

  const std::size_t n = grid.size();
  std::vector<bool> usable(n, true);
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    std::size_t i = 0;
    while (i < n) {
      if (!grid[i].is_missing(c)) {
        ++i;
        continue;
      }
      const std::size_t begin = i;
      while (i < n && grid[i].is_missing(c)) ++i;
      const std::size_t end = i;  // [begin, end) missing
      const bool bracketed = begin > 0 && end < n;
      if (bracketed && end - begin <= max_gap) {
        const double lo = grid[begin - 1].column(c);
        const double hi = grid[end].column(c);
        const double span = static_cast<double>(end - begin + 1);
        for (std::size_t k = begin; k < end; ++k) {
          const double frac = static_cast<double>(k - begin + 1) / span;
          grid[k].set_column(c, lo + (hi - lo) * frac);
          grid[k].set_missing(c, false);
          ++result.report.interpolated[c];
        }
      } else {
        for (std::size_t k = begin; k < end; ++k) usable[k] = false;
      }
    }
  }

  std::vector<SolarWindRecord> current;
  for (std::size_t i = 0; i < n; ++i) {
    if (usable[i]) {
      current.push_back(grid[i]);
    } else {
      ++result.report.dropped_rows;
      if (!current.empty()) result.segments.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) result.segments.push_back(std::move(current));
  result.report.segments = result.segments.size();
  return result;
}

// ---- labeling -------------------------------------------------------------

std::vector<LabeledRecord> label_records(std::span<const SolarWindRecord> segment, int w) {
  if (w < 1 || w > kMaxHorizon) {
    throw RangeError("horizon w must lie in 1..6, got " + std::to_string(w));
  }
  std::vector<LabeledRecord> out;
  const auto shift = static_cast<std::size_t>(w);
  if (segment.size() <= shift) return out;
  out.reserve(segment.size() - shift);
  for (std::size_t i = 0; i + shift < segment.size(); ++i) {
    const SolarWindRecord& now = segment[i];
    const SolarWindRecord& ahead = segment[i + shift];
    if (!now.complete() || !ahead.complete()) {
      throw ContractError("label_records: segment contains missing values at " + now.time.iso());
    }
    if (ahead.time - now.time != w) {
      throw ContractError("label_records: segment is not hourly-contiguous at " + now.time.iso());
    }
    out.push_back(LabeledRecord{now.time, now.features, now.dst, ahead.dst, w});
  }
  return out;
}

std::vector<LabeledRecord> label_segments(const std::vector<std::vector<SolarWindRecord>>& segments,
                                          int w) {
  std::vector<LabeledRecord> out;
  for (const auto& seg : segments) {
    auto part = label_records(seg, w);
    out.insert(out.end(), part.begin(), part.end());
  }
  if (segments.empty() && (w < 1 || w > kMaxHorizon)) {
    throw RangeError("horizon w must lie in 1..6, got " + std::to_string(w));
  }
  return out;
}

NormalizationStats NormalizationStats::compute(std::span<const LabeledRecord> records) {
  if (records.empty()) throw ContractError("normalization statistics need at least one record");
  NormalizationStats s;
  const auto m = static_cast<double>(records.size());
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    double sum = 0.0;
    for (const LabeledRecord& r : records) sum += r.features[c];
    const double mean = sum / m;
    double ss = 0.0;
    for (const LabeledRecord& r : records) ss += (r.features[c] - mean) * (r.features[c] - mean);
    const double sd = std::sqrt(ss / m);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      throw ValidationError("degenerate feature '" + std::string(kFeatureNames[c]) +
                            "': zero standard deviation");
    }
    s.mean[c] = mean;
    s.std[c] = sd;
  }
  return s;
}

std::vector<LabeledRecord> standardize(std::span<const LabeledRecord> records,
                                       const NormalizationStats& stats) {
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    if (!(stats.std[c] > 0.0)) {
      throw ValidationError("degenerate feature '" + std::string(kFeatureNames[c]) +
                            "': zero standard deviation");
    }
  }
  std::vector<LabeledRecord> out(records.begin(), records.end());
  for (LabeledRecord& r : out)
    for (std::size_t c = 0; c < kFeatureCount; ++c)
      r.features[c] = (r.features[c] - stats.mean[c]) / stats.std[c];
  return out;
}

std::vector<Sequence> make_sequences(std::span<const LabeledRecord> records, std::size_t n) {
  if (n == 0) throw ConfigError("sequence_length must be at least 1");
  std::vector<Sequence> out;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t end = i + 1;
    while (end < records.size() && end - i < n && records[end].time - records[end - 1].time == 1) ++end;
    Sequence s;
    const std::size_t len = end - i;
    s.features = Tensor(Shape{len, kFeatureCount});
    s.labels.reserve(len);
    for (std::size_t k = 0; k < len; ++k) {
      const LabeledRecord& r = records[i + k];
      std::copy(r.features.begin(), r.features.end(), s.features.data() + k * kFeatureCount);
      s.labels.push_back(r.label);
      s.current_dst.push_back(r.current_dst);
      s.times.push_back(r.time);
    }
    out.push_back(std::move(s));
    i = end;
  }
  return out;
}

// ---- splitting ------------------------------------------------------------

DatasetSplit chronological_split(std::span<const LabeledRecord> records, HourStamp boundary) {
  DatasetSplit split;
  for (const LabeledRecord& r : records) (r.time < boundary ? split.train : split.test).push_back(r);
  if (split.train.empty() || split.test.empty()) {
    throw SplitError("boundary " + boundary.iso() + " leaves the " +
                     (split.train.empty() ? "training" : "test") + " side empty");
  }
  split.provenance = "train < " + boundary.iso() + " <= test";
  return split;
}

DatasetSplit fraction_split(std::span<const LabeledRecord> records, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw RangeError("test_fraction must lie in (0, 1)");
  }
  const auto m = records.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(m) * test_fraction));
  if (n_test == 0 || n_test >= m) throw SplitError("fraction split leaves one side empty");
  DatasetSplit split;
  split.train.assign(records.begin(), records.end() - static_cast<std::ptrdiff_t>(n_test));
  split.test.assign(records.end() - static_cast<std::ptrdiff_t>(n_test), records.end());
  split.provenance = "last " + std::to_string(n_test) + " of " + std::to_string(m) + " records";
  return split;
}

std::vector<std::size_t> fold_sizes(std::size_t m, std::size_t k) {
  if (k < 2) throw RangeError("k-fold needs k >= 2, got " + std::to_string(k));
  if (m < k) {
    throw SplitError("cannot split " + std::to_string(m) + " records into " + std::to_string(k) +
                     " folds");
  }
  std::vector<std::size_t> sizes(k, m / k);
  for (std::size_t i = 0; i < m % k; ++i) ++sizes[i];
  return sizes;
}

std::vector<DatasetSplit> kfold_splits(std::span<const LabeledRecord> records, std::size_t k) {
  const auto sizes = fold_sizes(records.size(), k);
  std::vector<DatasetSplit> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t end = begin + sizes[i];
    DatasetSplit s;
    s.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(begin));
    s.train.insert(s.train.end(), records.begin() + static_cast<std::ptrdiff_t>(end), records.end());
    s.test.assign(records.begin() + static_cast<std::ptrdiff_t>(begin),
                  records.begin() + static_cast<std::ptrdiff_t>(end));
    s.provenance = "fold " + std::to_string(i + 1) + "/" + std::to_string(k);
    out.push_back(std::move(s));
    begin = end;
  }
  return out;
}

// ---- CSV output -----------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_record_csv(std::ostream& out, std::span<const SolarWindRecord> records) {
  out << kRecordCsvHeader << '\n';
  for (const SolarWindRecord& r : records) {
    out << r.time.iso();
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      out << ',';
      if (!r.is_missing(c)) out << format_double(r.column(c));
    }
    out << '\n';
  }
}

void write_labeled_csv(std::ostream& out, std::span<const LabeledRecord> records) {
  out << kRecordCsvHeader << ",label,w\n";
  for (const LabeledRecord& r : records) {
    out << r.time.iso();
    for (double f : r.features) out << ',' << format_double(f);
    out << ',' << format_double(r.current_dst) << ',' << format_double(r.label) << ',' << r.w << '\n';
  }
}

}  // namespace dstt::data
