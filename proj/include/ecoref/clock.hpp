// Copyright 2026 The ecoref Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>

namespace ecoref {

// Monotonic time source in seconds. Deadlines and meter timestamps are always
// derived from one of these, never from wall-clock time.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_seconds() const = 0;
};

class SteadyClock final : public Clock {
 public:
  SteadyClock() : origin_(std::chrono::steady_clock::now()) {}

  double now_seconds() const override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
  }

 private:
  std::chrono::steady_clock::time_point origin_;
};

// Manually driven clock for deterministic tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(double start = 0.0) : now_(start) {}

  double now_seconds() const override { return now_.load(); }
  void set(double t) { now_.store(t); }
  void advance(double dt) { now_.store(now_.load() + dt); }

 private:
  std::atomic<double> now_;
};

}  // namespace ecoref
