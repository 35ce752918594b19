#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasewalk/nmpc.hpp"
#include "phasewalk/sim.hpp"

namespace phasewalk {

/// Malformed scenario input. `line()` is 0 when the problem is not tied to a
/// particular line (for example a missing required key).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

enum class SweepMode { Direction, Timing, Magnitude, Ablation };

const char* to_string(SweepMode mode);
std::optional<SweepMode> parse_sweep_mode(const std::string& s);

struct SweepSpec {
  SweepMode mode = SweepMode::Direction;
  std::vector<AblationMethod> methods{AblationMethod::M1, AblationMethod::M2, AblationMethod::M3, AblationMethod::M4};
  /// Push directions in degrees; theta pushes along (sin theta, -cos theta),
  /// so 90 is forward and 270 backward.
  std::vector<double> directions{0, 30, 60, 90, 120, 150, 180, 210, 240, 270, 300, 330};
  /// Offsets within the step cycle that starts at `cycle_start`.
  std::vector<double> timings{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  double cycle_start = 0.9;
  /// Push time for direction, magnitude and ablation sweeps.
  double push_time = 1.2;
  /// Push direction for timing, magnitude and ablation sweeps.
  double direction = 90.0;
  double force_step = 10.0;
  double force_duration = 0.2;
  double max_force = 2000.0;
  /// Simulated time after the push ends before a trial counts as recovered.
  double settle_window = 3.0;

  /// Throws ConfigError (line 0) on an inconsistent grid.
  void validate(double cycle_length) const;
};

struct Scenario {
  std::string name;
  SimConfig sim;
  SweepSpec sweep;
  /// Optional [nmpc] method, applied on top of the file's NMPC settings by
  /// resolved(). Ablation runs use the unmodified settings as their base.
  std::optional<AblationMethod> method;

  SimConfig resolved() const;
};

/// Parses the INI-style scenario text. Unknown sections or keys, malformed
/// values and a missing `name` raise ConfigError with the offending line.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

/// Unit vector of a push direction in degrees.
Vec2 push_direction(double degrees);

}  // namespace phasewalk
