#pragma once

#include <chrono>
#include <thread>

namespace ecoforge {

/// Time source used by everything that sleeps, samples, or stamps.
/// Injecting it keeps mock pipelines deterministic and fast: a scripted run
/// advances a virtual timeline instead of burning wall-clock time.
class Clock {
 public:
  virtual ~Clock() = default;
  /// Seconds since an arbitrary epoch; monotone non-decreasing.
  virtual double now_s() = 0;
  /// Blocks (or advances the timeline) for the given duration.
  virtual void sleep_s(double seconds) = 0;
};

/// Wall-clock implementation over std::chrono::steady_clock. Thread-safe.
class SteadyClock final : public Clock {
 public:
  double now_s() override {
    auto d = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration<double>(d).count();
  }
  void sleep_s(double seconds) override {
    if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }
};

/// Process-wide steady clock for call sites that do not need injection.
SteadyClock& steady_clock();

/// Deterministic clock for tests and mock runs: sleeping advances time,
/// nothing blocks. Single-threaded use only.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(double start_s = 0.0) : now_(start_s) {}
  double now_s() override { return now_; }
  void sleep_s(double seconds) override {
    if (seconds > 0) now_ += seconds;
  }
  void advance_s(double seconds) { now_ += seconds; }

 private:
  double now_;
};

}  // namespace ecoforge
