// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecoref/energy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <iomanip>
#include <istream>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "ecoref/error.hpp"

namespace ecoref::energy {

namespace {

void check_sorted(std::span<const PowerSample> samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!std::isfinite(s.t_seconds) || !std::isfinite(s.watts) || s.watts < 0.0) {
      throw Error(ErrorKind::kInvalidInput, "sample " + std::to_string(i) + " is not finite/non-negative");
    }
    if (i > 0 && !(s.t_seconds > samples[i - 1].t_seconds)) {
      throw Error(ErrorKind::kInvalidInput,
                  "samples not strictly increasing at index " + std::to_string(i));
    }
  }
}

// Power at time t under linear interpolation with held ends.
double power_at(std::span<const PowerSample> s, double t) {
  if (t <= s.front().t_seconds) return s.front().watts;
  if (t >= s.back().t_seconds) return s.back().watts;
  const auto hi = std::upper_bound(s.begin(), s.end(), t, [](double v, const PowerSample& p) {
    return v < p.t_seconds;
  });
  const auto lo = hi - 1;
  const double f = (t - lo->t_seconds) / (hi->t_seconds - lo->t_seconds);
  return lo->watts + f * (hi->watts - lo->watts);
}

}  // namespace

EnergyReport integrate_energy(std::span<const PowerSample> samples, double window_start_s,
                              double window_end_s) {
  if (!std::isfinite(window_start_s) || !std::isfinite(window_end_s) ||
      window_end_s < window_start_s) {
    throw Error(ErrorKind::kInvalidInput, "energy window end precedes its start");
  }
  check_sorted(samples);

  EnergyReport report;
  report.window_start_s = window_start_s;
  report.window_end_s = window_end_s;
  if (samples.empty() || window_end_s == window_start_s) return report;

  // Breakpoints: window ends plus every sample strictly inside the window.
  double joules = 0.0;
  double prev_t = window_start_s;
  double prev_w = power_at(samples, window_start_s);
  for (const auto& s : samples) {
    if (s.t_seconds < window_start_s || s.t_seconds > window_end_s) continue;
    ++report.sample_count;
    if (s.t_seconds == window_start_s) continue;
    joules += 0.5 * (prev_w + s.watts) * (s.t_seconds - prev_t);
    prev_t = s.t_seconds;
    prev_w = s.watts;
  }
  if (window_end_s > prev_t) {
    joules += 0.5 * (prev_w + power_at(samples, window_end_s)) * (window_end_s - prev_t);
  }
  report.energy_wh = joules / 3600.0;
  return report;
}

std::vector<PowerSample> parse_power_trace(std::istream& in, const std::string& source) {
  std::vector<PowerSample> samples;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::kParse, source + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail("expected `t_seconds,watts`");
    PowerSample s;
    std::istringstream t_in(line.substr(0, comma));
    std::istringstream w_in(line.substr(comma + 1));
    if (!(t_in >> s.t_seconds) || !(w_in >> s.watts)) fail("non-numeric field");
    std::string rest;
    if (t_in >> rest || w_in >> rest) fail("trailing characters");
    if (!std::isfinite(s.t_seconds) || s.t_seconds < 0.0) fail("time must be finite and >= 0");
    if (!std::isfinite(s.watts) || s.watts < 0.0) fail("watts must be finite and >= 0");
    if (!samples.empty() && !(s.t_seconds > samples.back().t_seconds)) {
      fail("timestamps must be strictly ascending");
    }
    samples.push_back(s);
  }
  return samples;
}

std::vector<PowerSample> load_power_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open power trace " + path.string());
  return parse_power_trace(in, path.string());
}

void write_power_trace(std::ostream& out, std::span<const PowerSample> samples) {
  out << "# t_seconds,watts\n" << std::setprecision(17);
  for (const auto& s : samples) out << s.t_seconds << ',' << s.watts << '\n';
}

void MeterProfile::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw Error(ErrorKind::kConfig, "meter sample_rate_hz must be positive");
  }
  if (mode == MeterMode::kSynthetic) {
    if (idle_watts < 0.0 || active_watts < 0.0 || noise_stddev < 0.0) {
      throw Error(ErrorKind::kConfig, "meter wattages and noise must be non-negative");
    }
    if (idle_watts > active_watts) {
      throw Error(ErrorKind::kConfig, "meter idle_watts exceeds active_watts");
    }
  } else if (trace_path.empty()) {
    throw Error(ErrorKind::kConfig, "trace replay meter needs trace_path");
  }
}

namespace {

// Sampler thread polls the clock at the sample period and appends any sample
// whose scheduled time has passed. Sample times and values are a pure
// function of the profile and the capture's start/stop instants, so the
// thread's scheduling never changes the result.
class SimulatedMeter final : public PowerMeter {
 public:
  SimulatedMeter(MeterProfile profile, std::shared_ptr<const Clock> clock,
                 std::vector<PowerSample> trace)
      : profile_(std::move(profile)), clock_(std::move(clock)), trace_(std::move(trace)) {}

  ~SimulatedMeter() override {
    if (active()) stop();
  }

  void start() override {
    std::lock_guard<std::mutex> lock(mutex_);
    if (running_) throw Error(ErrorKind::kState, "meter capture already active");
    origin_ = clock_->now_seconds();
    samples_.clear();
    next_ = 0;
    rng_.seed(profile_.seed);
    running_ = true;
    stop_requested_ = false;
    append_until(0.0);
    sampler_ = std::thread([this] { run(); });
  }

  std::vector<PowerSample> stop() override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!running_) throw Error(ErrorKind::kState, "meter capture not active");
      stop_requested_ = true;
    }
    wake_.notify_all();
    sampler_.join();
    std::lock_guard<std::mutex> lock(mutex_);
    append_until(clock_->now_seconds() - origin_);
    running_ = false;
    return std::move(samples_);
  }

  bool active() const override {
    std::lock_guard<std::mutex> lock(mutex_);
    return running_;
  }

 private:
  void run() {
    const auto period = std::chrono::duration<double>(1.0 / profile_.sample_rate_hz);
    std::unique_lock<std::mutex> lock(mutex_);
    while (!stop_requested_) {
      wake_.wait_for(lock, period, [this] { return stop_requested_; });
      if (stop_requested_) break;
      append_until(clock_->now_seconds() - origin_);
    }
  }

  // Caller holds mutex_.
  void append_until(double t) {
    if (profile_.mode == MeterMode::kTraceReplay) {
      while (next_ < trace_.size() && trace_[next_].t_seconds <= t) samples_.push_back(trace_[next_++]);
      return;
    }
    const double last = std::floor(t * profile_.sample_rate_hz + 1e-9);
    while (static_cast<double>(next_) <= last) {
      const double ts = static_cast<double>(next_) / profile_.sample_rate_hz;
      double watts = next_ == 0 ? profile_.idle_watts : profile_.active_watts;
      if (next_ > 0 && profile_.noise_stddev > 0.0) {
        watts = std::max(0.0, watts + std::normal_distribution<double>(0.0, profile_.noise_stddev)(rng_));
      }
      samples_.push_back(PowerSample{ts, watts});
      ++next_;
    }
  }

  MeterProfile profile_;
  std::shared_ptr<const Clock> clock_;
  std::vector<PowerSample> trace_;

  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::thread sampler_;
  bool running_ = false;
  bool stop_requested_ = false;
  double origin_ = 0.0;
  std::size_t next_ = 0;
  std::mt19937_64 rng_;
  std::vector<PowerSample> samples_;
};

}  // namespace

std::unique_ptr<PowerMeter> make_meter(const MeterProfile& profile,
                                       std::shared_ptr<const Clock> clock) {
  profile.validate();
  std::vector<PowerSample> trace;
  if (profile.mode == MeterMode::kTraceReplay) {
    try {
      trace = load_power_trace(profile.trace_path);
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, std::string("meter trace: ") + e.what());
    }
    if (trace.empty()) throw Error(ErrorKind::kConfig, "meter trace " + profile.trace_path.string() + " is empty");
  }
  return std::make_unique<SimulatedMeter>(profile, std::move(clock), std::move(trace));
}

}  // namespace ecoref::energy
