#include "phasewalk/scenario.hpp"

#include <boost/algorithm/string.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace phasewalk {

ConfigError::ConfigError(int line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

const char* to_string(SweepMode mode) {
  switch (mode) {
    case SweepMode::Direction: return "direction";
    case SweepMode::Timing: return "timing";
    case SweepMode::Magnitude: return "magnitude";
    case SweepMode::Ablation: return "ablation";
  }
  return "direction";
}

std::optional<SweepMode> parse_sweep_mode(const std::string& s) {
  for (SweepMode m : {SweepMode::Direction, SweepMode::Timing, SweepMode::Magnitude, SweepMode::Ablation}) {
    if (boost::algorithm::iequals(s, to_string(m))) return m;
  }
  return std::nullopt;
}

void SweepSpec::validate(double cycle_length) const {
  if (methods.empty()) throw ConfigError(0, "sweep: at least one method is required");
  if (!(force_step > 0)) throw ConfigError(0, "sweep: force_step must be positive");
  if (!(force_duration > 0)) throw ConfigError(0, "sweep: force_duration must be positive");
  if (!(max_force >= force_step)) throw ConfigError(0, "sweep: max_force must be at least force_step");
  if (!(settle_window > 0)) throw ConfigError(0, "sweep: settle_window must be positive");
  if (push_time < 0 || cycle_start < 0) throw ConfigError(0, "sweep: push times must be non-negative");
  for (double t : timings) {
    if (t < 0 || t >= cycle_length) throw ConfigError(0, "sweep: timing outside the step cycle");
  }
  if (mode == SweepMode::Direction && directions.empty()) throw ConfigError(0, "sweep: empty direction grid");
  if (mode == SweepMode::Timing && timings.empty()) throw ConfigError(0, "sweep: empty timing grid");
}

SimConfig Scenario::resolved() const {
  SimConfig cfg = sim;
  if (method) cfg.nmpc = ablation_config(*method, cfg.nmpc);
  return cfg;
}

Vec2 push_direction(double degrees) {
  const double th = degrees * M_PI / 180.0;
  return {std::sin(th), -std::cos(th)};
}

namespace {

double to_double(const std::string& s, int line) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) throw ConfigError(line, "expected a number, got '" + s + "'");
  return v;
}

int to_int(const std::string& s, int line) {
  int v = 0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError(line, "expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s, int line) {
  const std::string v = boost::algorithm::to_lower_copy(s);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(line, "expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, s, boost::algorithm::is_any_of(","));
  for (std::string& p : parts) boost::algorithm::trim(p);
  if (parts.size() == 1 && parts.front().empty()) parts.clear();
  return parts;
}

std::vector<double> to_doubles(const std::string& s, int line) {
  std::vector<double> out;
  for (const std::string& p : split_list(s)) out.push_back(to_double(p, line));
  return out;
}

Vec2 to_vec2(const std::string& s, int line) {
  const std::vector<double> v = to_doubles(s, line);
  if (v.size() != 2) throw ConfigError(line, "expected two comma-separated numbers, got '" + s + "'");
  return {v[0], v[1]};
}

AblationMethod to_method(const std::string& s, int line) {
  const auto m = parse_ablation_method(s);
  if (!m) throw ConfigError(line, "unknown method '" + s + "' (expected M1..M4)");
  return *m;
}

SweepMode to_mode(const std::string& s, int line) {
  const auto m = parse_sweep_mode(s);
  if (!m) throw ConfigError(line, "unknown sweep mode '" + s + "'");
  return *m;
}

// A [disturbance] section under construction.
struct PendingPush {
  int line = 0;
  std::optional<Vec2> force;
  std::optional<double> magnitude;
  std::optional<double> direction;
  Disturbance d;

  Disturbance finish() const {
    Disturbance out = d;
    if (force && (magnitude || direction)) throw ConfigError(line, "disturbance: give either force or magnitude/direction");
    if (force) {
      out.force = *force;
    } else {
      out.force = magnitude.value_or(0.0) * push_direction(direction.value_or(90.0));
    }
    if (!(out.duration > 0)) throw ConfigError(line, "disturbance: duration must be positive");
    return out;
  }
};

using Setter = std::function<void(const std::string&, int)>;

class Parser {
 public:
  Parser() { register_keys(); }

  Scenario parse(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      std::string s = raw;
      const auto hash = s.find('#');
      if (hash != std::string::npos) s.erase(hash);
      boost::algorithm::trim(s);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError(line, "malformed section header");
        section = boost::algorithm::trim_copy(s.substr(1, s.size() - 2));
        if (!known_sections_.count(section)) throw ConfigError(line, "unknown section [" + section + "]");
        if (section == "disturbance") {
          flush_push();
          push_ = PendingPush{};
          push_->line = line;
        }
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
      const std::string key = boost::algorithm::trim_copy(s.substr(0, eq));
      const std::string value = boost::algorithm::trim_copy(s.substr(eq + 1));
      if (key.empty()) throw ConfigError(line, "empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      const auto it = setters_.find(full);
      if (it == setters_.end()) {
        throw ConfigError(line, "unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
      }
      if (value.empty()) throw ConfigError(line, "missing value for '" + key + "'");
      it->second(value, line);
    }
    flush_push();
    if (out_.name.empty()) throw ConfigError(0, "missing required key 'name'");
    try {
      out_.resolved().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(0, e.what());
    }
    out_.sweep.validate(out_.sim.gait.ssp_duration + out_.sim.gait.dsp_duration);
    return out_;
  }

 private:
  void flush_push() {
    if (push_) out_.sim.disturbances.push_back(push_->finish());
    push_.reset();
  }

  void add(const std::string& key, Setter f) { setters_[key] = std::move(f); }

  void num(const std::string& key, double& target) {
    add(key, [&target](const std::string& v, int l) { target = to_double(v, l); });
  }

  void register_keys() {
    Scenario& o = out_;
    add("name", [&o](const std::string& v, int) { o.name = v; });

    add("model.com_height", [&o](const std::string& v, int l) { wrap(l, [&] { o.sim.model.set_com_height(to_double(v, l)); }); });
    add("model.zmp_height", [&o](const std::string& v, int l) { wrap(l, [&] { o.sim.model.set_zmp_height(to_double(v, l)); }); });
    add("model.gravity", [&o](const std::string& v, int l) { wrap(l, [&] { o.sim.model.set_gravity(to_double(v, l)); }); });
    add("model.mass", [&o](const std::string& v, int l) { wrap(l, [&] { o.sim.model.set_mass(to_double(v, l)); }); });

    GaitConfig& g = o.sim.gait;
    num("gait.step_length", g.command.step_length);
    num("gait.step_width", g.command.step_width);
    add("gait.n_steps", [&g](const std::string& v, int l) { g.command.n_steps = to_int(v, l); });
    add("gait.first_swing", [&g](const std::string& v, int l) {
      if (boost::algorithm::iequals(v, "left")) {
        g.command.first_swing = SwingSide::Left;
      } else if (boost::algorithm::iequals(v, "right")) {
        g.command.first_swing = SwingSide::Right;
      } else {
        throw ConfigError(l, "first_swing must be left or right");
      }
    });
    num("gait.ssp_duration", g.ssp_duration);
    num("gait.dsp_duration", g.dsp_duration);
    num("gait.preroll_hold", g.preroll_hold);
    num("gait.preroll_shift", g.preroll_shift);
    add("gait.preview_horizon", [&g](const std::string& v, int l) { g.preview_horizon = to_int(v, l); });
    num("gait.jerk_weight", g.preview_weights.jerk_weight);
    num("gait.zmp_weight", g.preview_weights.zmp_weight);

    NmpcConfig& n = o.sim.nmpc;
    add("nmpc.n_phases", [&n](const std::string& v, int l) { n.n_phases = to_int(v, l); });
    num("nmpc.weight_zmp", n.weights.zmp);
    num("nmpc.weight_step", n.weights.step);
    num("nmpc.weight_dcm_offset", n.weights.dcm_offset);
    num("nmpc.weight_duration", n.weights.duration);
    add("nmpc.zmp_ctrl_lower", [&n](const std::string& v, int l) { n.zmp_ctrl_lower = to_vec2(v, l); });
    add("nmpc.zmp_ctrl_upper", [&n](const std::string& v, int l) { n.zmp_ctrl_upper = to_vec2(v, l); });
    add("nmpc.step_ctrl_lower", [&n](const std::string& v, int l) { n.step_ctrl_lower = to_vec2(v, l); });
    add("nmpc.step_ctrl_upper", [&n](const std::string& v, int l) { n.step_ctrl_upper = to_vec2(v, l); });
    num("nmpc.lateral_clearance", n.lateral_clearance);
    num("nmpc.ssp_delta_lower", n.ssp_delta_lower);
    num("nmpc.ssp_delta_upper", n.ssp_delta_upper);
    num("nmpc.dsp_delta_lower", n.dsp_delta_lower);
    num("nmpc.dsp_delta_upper", n.dsp_delta_upper);
    num("nmpc.dsp_min_duration", n.dsp_min_duration);
    num("nmpc.min_remaining", n.min_remaining);
    add("nmpc.max_sqp_iters", [&n](const std::string& v, int l) { n.max_sqp_iters = to_int(v, l); });
    num("nmpc.sqp_tolerance", n.sqp_tolerance);
    add("nmpc.method", [&o](const std::string& v, int l) { o.method = to_method(v, l); });

    SimConfig& s = o.sim;
    num("sim.physics_dt", s.physics_dt);
    num("sim.control_period", s.control_period);
    num("sim.duration", s.duration);
    add("sim.stop_on_fall", [&s](const std::string& v, int l) { s.stop_on_fall = to_bool(v, l); });
    num("sim.swing_height", s.swing_height);
    num("sim.fall_dcm_error", s.fall.dcm_error);
    num("sim.fall_sustain", s.fall.sustain);
    num("sim.fall_com_radius", s.fall.com_radius);

    add("disturbance.force", [this](const std::string& v, int l) { push_->force = to_vec2(v, l); });
    add("disturbance.magnitude", [this](const std::string& v, int l) { push_->magnitude = to_double(v, l); });
    add("disturbance.direction", [this](const std::string& v, int l) { push_->direction = to_double(v, l); });
    add("disturbance.start_time", [this](const std::string& v, int l) { push_->d.start_time = to_double(v, l); });
    add("disturbance.duration", [this](const std::string& v, int l) { push_->d.duration = to_double(v, l); });

    SweepSpec& w = o.sweep;
    add("sweep.mode", [&w](const std::string& v, int l) { w.mode = to_mode(v, l); });
    add("sweep.methods", [&w](const std::string& v, int l) {
      w.methods.clear();
      for (const std::string& p : split_list(v)) w.methods.push_back(to_method(p, l));
    });
    add("sweep.directions", [&w](const std::string& v, int l) { w.directions = to_doubles(v, l); });
    add("sweep.timings", [&w](const std::string& v, int l) { w.timings = to_doubles(v, l); });
    num("sweep.cycle_start", w.cycle_start);
    num("sweep.push_time", w.push_time);
    num("sweep.direction", w.direction);
    num("sweep.force_step", w.force_step);
    num("sweep.force_duration", w.force_duration);
    num("sweep.max_force", w.max_force);
    num("sweep.settle_window", w.settle_window);
  }

  // Re-raises model setter errors with the line number.
  template <class F>
  static void wrap(int line, F&& f) {
    try {
      f();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line, e.what());
    }
  }

  Scenario out_;
  std::optional<PendingPush> push_;
  std::map<std::string, Setter> setters_;
  const std::set<std::string> known_sections_{"model", "gait", "nmpc", "sim", "disturbance", "sweep"};
};

}  // namespace

Scenario parse_scenario(const std::string& text) { return Parser().parse(text); }

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace phasewalk
