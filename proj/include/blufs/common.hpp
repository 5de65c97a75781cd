#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace blufs {

inline constexpr std::string_view kVersion = "blufs 0.1.0";

// Error categories; the CLI maps these onto distinct exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Current log level, parsed once from the BLUFS_LOG environment variable
/// (error|warn|info|debug, default warn).
LogLevel log_level();
void log(LogLevel level, const std::string& msg);
inline void log_warn(const std::string& msg) { log(LogLevel::Warn, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::Debug, msg); }

// Deterministic RNG. The engine (mt19937_64) is bit-specified by the
// standard; the value mappings are hand-rolled because the standard
// distributions are implementation-defined and would break cross-platform
// reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n) { return eng_() % n; }

  /// Standard normal deviate (Box-Muller).
  double normal();

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string fnv1a_hex(std::string_view bytes);

/// Runs fn(0..tasks-1) on a bounded pool. Results must be written to
/// pre-indexed slots so the output is independent of scheduling order.
/// The first exception thrown by any task is rethrown after the join.
void parallel_for(int tasks, int workers, const std::function<void(int)>& fn);

}  // namespace blufs
