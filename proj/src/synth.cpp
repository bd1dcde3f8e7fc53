#include "dstt/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace dstt::data {

namespace {

constexpr std::size_t kLookahead = 6;

// OMNI2 fill value per 1-based column; columns 1-3 are the time stamp.
constexpr std::array<const char*, 56> kOmniFill = {
    "", "", "", "", "9999", "99", "99", "999",
    "999", "999.9", "999.9", "999.9", "999.9", "999.9", "999.9", "999.9",
    "999.9", "999.9", "999.9", "999.9", "999.9", "999.9", "999.9", "9999999.",
    "999.9", "9999.", "999.9", "999.9", "9.999", "99.99", "9999999.", "999.9",
    "9999.", "999.9", "999.9", "9.999", "999.99", "999.99", "999.9", "99",
    "999", "99999", "9999", "999999.99", "999999.99", "999999.99", "999999.99", "999999.99",
    "999999.99", "0", "999", "999.9", "999.9", "99999", "99999", "99.9"};

}  // namespace

SyntheticStream::SyntheticStream(const SynthOptions& options)
    : options_(options), rng_(Rng::derive_seed(options.seed, 1)), noise_(Rng::derive_seed(options.seed, 2)) {
  for (std::size_t k = 0; k <= kLookahead; ++k) ahead_.push_back(next_dst());
}

double SyntheticStream::next_dst() {
  quiet_ = -10.0 + 0.95 * (quiet_ + 10.0) + 2.0 * rng_.normal();
  if (main_phase_left_ == 0 && rng_.bernoulli(options_.storm_rate)) {
    const double u = rng_.uniform();
    storm_target_ = storm_ + (-30.0 - 220.0 * u * u);
    main_phase_left_ = 3 + static_cast<int>(rng_.uniform() * 6.0);
    recovery_ = std::exp(-1.0 / (8.0 + 22.0 * rng_.uniform()));
  }
  if (main_phase_left_ > 0) {
    storm_ += (storm_target_ - storm_) * (1.0 - std::exp(-1.0)) / (1.0 - std::exp(-static_cast<double>(main_phase_left_)));
    --main_phase_left_;
  } else {
    storm_ *= recovery_;
  }
  return std::clamp(quiet_ + storm_, -500.0, 100.0);
}

SolarWindRecord SyntheticStream::next() {
  const double s = options_.feature_noise;
  auto lead = [&](std::size_t k) { return ahead_[k] + 10.0; };
  SolarWindRecord r;
  r.time = options_.start + index_++;
  r.dst = ahead_[0];
  const double speed = 420.0 - 1.2 * lead(1) + 2.0 * s * noise_.normal();
  const double bz = 0.06 * lead(2) + 0.05 * s * noise_.normal();
  const double density = 5.0 * std::exp(-0.004 * lead(3) + 0.01 * s * noise_.normal());
  const double temp = 8.0e4 * std::exp(-0.005 * lead(4) + 0.01 * s * noise_.normal());
  const double efield = -speed * bz * 1e-3 + 0.03 * s * noise_.normal();
  const double imf = std::max(0.1, 6.0 - 0.05 * lead(6) + 0.05 * s * noise_.normal());
  const double pressure = 1.6726e-6 * density * speed * speed + 0.02 * s * noise_.normal() - 0.002 * lead(5);
  r.features = {imf, bz, temp, density, speed, std::max(0.01, pressure), efield};
  ahead_.pop_front();
  ahead_.push_back(next_dst());
  return r;
}

std::vector<SolarWindRecord> synthesize_records(std::size_t count, const SynthOptions& options) {
  SyntheticStream stream(options);
  std::vector<SolarWindRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(stream.next());
  return out;
}

std::vector<SolarWindRecord> synthesize_records(std::size_t count, std::uint64_t seed) {
  SynthOptions options;
  options.seed = seed;
  return synthesize_records(count, options);
}

void write_omni_row(std::ostream& out, const SolarWindRecord& r) {
  const ColumnMap map = ColumnMap::omni2();
  std::array<std::string, 56> cells;
  for (std::size_t c = 4; c <= 55; ++c) cells[c] = kOmniFill[c];
  cells[1] = std::to_string(r.time.year());
  cells[2] = std::to_string(r.time.day_of_year());
  cells[3] = std::to_string(r.time.hour_of_day());
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    const std::size_t col = map.columns[c].index;
    cells[col] = r.is_missing(c) ? std::string(kOmniFill[col]) : format_double(r.column(c));
  }
  for (std::size_t c = 1; c <= 55; ++c) {
    if (c > 1) out << ' ';
    out << cells[c];
  }
  out << '\n';
}

void write_synthetic(std::ostream& out, std::size_t count, const SynthOptions& options, SynthFormat format) {
  SyntheticStream stream(options);
  if (format == SynthFormat::Csv) out << kRecordCsvHeader << '\n';
  for (std::size_t i = 0; i < count; ++i) {
    const SolarWindRecord r = stream.next();
    if (format == SynthFormat::Omni) {
      write_omni_row(out, r);
      continue;
    }
    out << r.time.iso();
    for (std::size_t c = 0; c < kColumnCount; ++c) out << ',' << format_double(r.column(c));
    out << '\n';
  }
}

}  // namespace dstt::data
