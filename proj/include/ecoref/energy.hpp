// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ecoref/clock.hpp"

namespace ecoref::energy {

inline constexpr double kDefaultSampleRateHz = 10.0;

struct PowerSample {
  double t_seconds = 0.0;  // relative to capture start
  double watts = 0.0;

  bool operator==(const PowerSample&) const = default;
};

struct EnergyReport {
  double energy_wh = 0.0;
  double window_start_s = 0.0;
  double window_end_s = 0.0;
  std::size_t sample_count = 0;  // samples inside the window
};

// Trapezoidal integral of power over [window_start_s, window_end_s], in Wh.
// Power is linear between samples; before the first sample the first value is
// held and after the last sample the last value is held. Samples must be
// strictly increasing in time.
EnergyReport integrate_energy(std::span<const PowerSample> samples, double window_start_s,
                              double window_end_s);

// Trace text: one `t_seconds,watts` per line, strictly ascending t, `#`
// comments and blank lines ignored. Throws Error(kParse) naming the line.
std::vector<PowerSample> parse_power_trace(std::istream& in, const std::string& source = "trace");
std::vector<PowerSample> load_power_trace(const std::filesystem::path& path);
void write_power_trace(std::ostream& out, std::span<const PowerSample> samples);

enum class MeterMode { kSynthetic, kTraceReplay };

struct MeterProfile {
  MeterMode mode = MeterMode::kSynthetic;
  std::filesystem::path trace_path;  // replay only
  double idle_watts = 0.0;
  double active_watts = 0.0;
  double noise_stddev = 0.0;
  double sample_rate_hz = kDefaultSampleRateHz;
  std::uint64_t seed = 0;

  static MeterProfile constant(double watts) {
    MeterProfile p;
    p.idle_watts = watts;
    p.active_watts = watts;
    return p;
  }

  // Throws Error(kConfig).
  void validate() const;
};

// One capture channel. start() anchors t = 0 at the clock's current time;
// stop() returns every sample taken in [start, stop] in increasing time.
class PowerMeter {
 public:
  virtual ~PowerMeter() = default;
  virtual void start() = 0;
  virtual std::vector<PowerSample> stop() = 0;
  virtual bool active() const = 0;
};

// Build a simulated meter. Trace files are read here, so a missing or
// malformed trace surfaces as Error(kConfig) before any capture begins.
std::unique_ptr<PowerMeter> make_meter(const MeterProfile& profile,
                                       std::shared_ptr<const Clock> clock);

}  // namespace ecoref::energy
