#pragma once

// Seeded synthetic hourly solar-wind/Dst generator. Dst is a quiet-time
// AR(1) process around -10 nT with randomly injected storms; the solar-wind
// columns respond to the Dst of the following hours through fixed kernels
// plus noise, so future Dst can be inferred from the features.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <vector>

#include "dstt/data.hpp"
#include "dstt/rng.hpp"

namespace dstt::data {

struct SynthOptions {
  std::uint64_t seed = 0;
  HourStamp start = HourStamp::from_civil(2010, 1, 1);
  double storm_rate = 1.0 / 120.0;  // expected storm onsets per hour
  double feature_noise = 1.0;       // multiplies every feature's noise level
};

/// Streams records one at a time with O(1) memory.
class SyntheticStream {
public:
  explicit SyntheticStream(const SynthOptions& options);

  SolarWindRecord next();

private:
  double next_dst();

  SynthOptions options_;
  Rng rng_;
  Rng noise_;
  double quiet_ = -10.0;
  double storm_ = 0.0;
  double storm_target_ = 0.0;
  int main_phase_left_ = 0;
  double recovery_ = 0.95;
  std::deque<double> ahead_;  // Dst for hours t .. t + kLookahead
  std::int64_t index_ = 0;
};

std::vector<SolarWindRecord> synthesize_records(std::size_t count, const SynthOptions& options);
std::vector<SolarWindRecord> synthesize_records(std::size_t count, std::uint64_t seed);

enum class SynthFormat { Csv, Omni };

/// Writes `count` streamed records; memory use does not grow with count.
void write_synthetic(std::ostream& out, std::size_t count, const SynthOptions& options, SynthFormat format);

/// One OMNI2-layout row (55 columns); unmapped columns carry fill values.
/// Missing columns of the record are written as their fill value.
void write_omni_row(std::ostream& out, const SolarWindRecord& r);

}  // namespace dstt::data
