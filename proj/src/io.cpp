#include "cbfd/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace cbfd {

using nlohmann::json;

namespace {

std::vector<double> to_std(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec to_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  return os;
}

}  // namespace

json to_json(const Box& b) { return {{"lo", to_std(b.lo)}, {"hi", to_std(b.hi)}}; }

Box box_from_json(const json& j) { return Box(to_vec(j.at("lo")), to_vec(j.at("hi"))); }

json to_json(const ScenarioConfig& c) {
  json j;
  j["builtin"] = c.builtin;
  j["dt"] = c.dt;
  j["t_max"] = c.t_max;
  j["dist_box"] = to_json(c.dist_box);
  j["x0_box"] = to_json(c.x0_box);
  if (c.goal) {
    j["goal"] = {{"coords", c.goal->coords}, {"center", to_std(c.goal->center)}, {"threshold", c.goal->threshold}};
  } else {
    j["goal"] = nullptr;
  }
  j["gains"] = c.gains;
  json obs = json::array();
  for (const auto& o : c.obstacles) obs.push_back({{"center", to_std(o.center)}, {"threshold", o.threshold}});
  j["obstacles"] = obs;
  j["speed"] = c.speed;
  j["heading_gain"] = c.heading_gain;
  j["u_ref_constant"] = to_std(c.u_ref_constant);
  j["u_box"] = c.u_box ? to_json(*c.u_box) : json(nullptr);
  j["feature_map"] = to_string(c.feature_map);
  return j;
}

ScenarioConfig scenario_config_from_json(const json& j) {
  try {
    const std::string builtin = j.at("builtin").get<std::string>();
    ScenarioConfig c;
    if (builtin == "unicycle") {
      c = unicycle_config();
    } else if (builtin == "example1") {
      c = example1_config();
    } else {
      throw InvalidArgument("unknown builtin scenario '" + builtin + "'");
    }
    if (j.contains("dt")) c.dt = j["dt"].get<double>();
    if (j.contains("t_max")) c.t_max = j["t_max"].get<double>();
    if (j.contains("dist_box")) c.dist_box = box_from_json(j["dist_box"]);
    if (j.contains("x0_box")) c.x0_box = box_from_json(j["x0_box"]);
    if (j.contains("goal")) {
      if (j["goal"].is_null()) {
        c.goal.reset();
      } else {
        GoalSet g;
        g.coords = j["goal"].value("coords", std::vector<int>{0, 1});
        g.center = to_vec(j["goal"].at("center"));
        g.threshold = j["goal"].at("threshold").get<double>();
        c.goal = g;
      }
    }
    if (j.contains("gains")) c.gains = j["gains"].get<std::vector<double>>();
    if (j.contains("obstacles")) {
      c.obstacles.clear();
      for (const auto& o : j["obstacles"]) c.obstacles.push_back({to_vec(o.at("center")), o.at("threshold").get<double>()});
    }
    if (j.contains("speed")) c.speed = j["speed"].get<double>();
    if (j.contains("heading_gain")) c.heading_gain = j["heading_gain"].get<double>();
    if (j.contains("u_ref_constant")) c.u_ref_constant = to_vec(j["u_ref_constant"]);
    if (j.contains("u_box")) {
      if (j["u_box"].is_null()) {
        c.u_box.reset();
      } else {
        c.u_box = box_from_json(j["u_box"]);
      }
    }
    if (j.contains("feature_map")) c.feature_map = feature_map_from_string(j["feature_map"].get<std::string>());
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("scenario JSON: ") + e.what());
  }
}

ScenarioConfig load_scenario_config(const std::string& name_or_path) {
  if (name_or_path == "unicycle") return unicycle_config();
  if (name_or_path == "example1") return example1_config();
  if (!std::filesystem::exists(name_or_path)) {
    throw InvalidArgument("scenario '" + name_or_path + "' is neither a builtin nor a file");
  }
  return scenario_config_from_json(read_json(name_or_path));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

std::string trajectory_csv_header(const Scenario& sc) {
  std::string h = "t";
  for (int i = 1; i <= sc.dynamics.n; ++i) h += fmt::format(",x{}", i);
  for (int i = 1; i <= sc.dynamics.mu; ++i) h += fmt::format(",u{}", i);
  for (int i = 1; i <= sc.dynamics.l; ++i) h += fmt::format(",w{}", i);
  for (std::size_t b = 0; b < sc.barriers.size(); ++b) {
    for (int k = 0; k <= sc.barriers[b].degree; ++k) h += fmt::format(",psi{}_b{}", k, b + 1);
  }
  return h;
}

void write_trajectory_csv(std::ostream& os, const Scenario& sc, const Trajectory& traj) {
  os << trajectory_csv_header(sc) << '\n';
  std::string line;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    line = format_double(traj.times[k]);
    auto put = [&](const Vec& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        line += ',';
        line += format_double(v[i]);
      }
    };
    put(traj.states[k]);
    put(traj.controls[k]);
    put(traj.disturbances[k]);
    for (std::size_t b = 0; b < sc.barriers.size(); ++b) {
      const PsiChain& c = traj.psi[k][b];
      line += ',' + format_double(c.psi0);
      line += ',' + format_double(c.psi1);
      if (sc.barriers[b].degree == 2) {
        line += ',' + format_double(c.psi2.value_or(std::numeric_limits<double>::quiet_NaN()));
      }
    }
    os << line << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Scenario& sc, const Trajectory& traj) {
  auto os = open_out(path);
  write_trajectory_csv(os, sc, traj);
}

json to_json(const ExpertDiagnostics& d) {
  json bars = json::array();
  for (const auto& b : d.barriers) {
    bars.push_back({{"barrier", b.barrier_id},
                    {"w_opt", to_std(b.w_opt)},
                    {"a", to_std(b.row.a)},
                    {"b", b.row.b},
                    {"slack", b.slack}});
  }
  return {{"u_ref", to_std(d.u_ref)}, {"fallback_used", d.fallback_used}, {"barriers", bars}};
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  auto os = open_out(path);
  std::string h;
  for (int i = 1; i <= data.feature_dim(); ++i) h += fmt::format("f{},", i);
  for (int i = 1; i <= data.label_dim(); ++i) h += fmt::format("label{},", i);
  os << h << "split\n";
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::string line;
    for (Eigen::Index i = 0; i < data.features(r).size(); ++i) line += format_double(data.features(r)[i]) + ',';
    for (Eigen::Index i = 0; i < data.label(r).size(); ++i) line += format_double(data.label(r)[i]) + ',';
    line += data.split(r) == Dataset::Split::Val ? "val" : "train";
    os << line << '\n';
  }
}

std::string render_svg(const Scenario& sc, const std::vector<Trajectory>& trajectories,
                       const SvgOptions& opts) {
  double xmin = std::numeric_limits<double>::infinity();
  double ymin = xmin;
  double xmax = -xmin;
  double ymax = -xmin;
  auto grow = [&](double x, double y, double r) {
    xmin = std::min(xmin, x - r);
    xmax = std::max(xmax, x + r);
    ymin = std::min(ymin, y - r);
    ymax = std::max(ymax, y + r);
  };
  const Box& x0 = sc.config.x0_box;
  if (x0.dim() >= 2) {
    grow(x0.lo[0], x0.lo[1], 0.0);
    grow(x0.hi[0], x0.hi[1], 0.0);
  }
  for (const auto& o : sc.config.obstacles) grow(o.center[0], o.center[1], std::sqrt(std::max(0.0, o.threshold)));
  if (sc.config.goal && sc.config.goal->center.size() >= 2) {
    grow(sc.config.goal->center[0], sc.config.goal->center[1], std::sqrt(std::max(0.0, sc.config.goal->threshold)));
  }
  for (const auto& t : trajectories) {
    for (const auto& s : t.states) {
      if (s.size() >= 2) grow(s[0], s[1], 0.0);
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = ymin = 0.0;
    xmax = ymax = 1.0;
  }
  const double pad = 0.05 * std::max({xmax - xmin, ymax - ymin, 1e-9});
  xmin -= pad;
  ymin -= pad;
  xmax += pad;
  ymax += pad;
  const double scale = std::min(opts.width / (xmax - xmin), opts.height / (ymax - ymin));
  auto px = [&](double x) { return (x - xmin) * scale; };
  auto py = [&](double y) { return opts.height - (y - ymin) * scale; };

  std::ostringstream os;
  os << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)",
                    opts.width, opts.height, opts.width, opts.height)
     << '\n';
  os << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
  if (x0.dim() >= 2) {
    os << fmt::format(
              R"(<rect class="x0" x="{:.3f}" y="{:.3f}" width="{:.3f}" height="{:.3f}" fill="none" stroke="gray" stroke-dasharray="4 3"/>)",
              px(x0.lo[0]), py(x0.hi[1]), (x0.hi[0] - x0.lo[0]) * scale, (x0.hi[1] - x0.lo[1]) * scale)
       << '\n';
  }
  for (const auto& o : sc.config.obstacles) {
    os << fmt::format(R"(<circle class="obstacle" cx="{:.3f}" cy="{:.3f}" r="{:.3f}" fill="#d62728" fill-opacity="0.5"/>)",
                      px(o.center[0]), py(o.center[1]), std::sqrt(std::max(0.0, o.threshold)) * scale)
       << '\n';
  }
  if (sc.config.goal && sc.config.goal->center.size() >= 2) {
    const auto& g = *sc.config.goal;
    os << fmt::format(R"(<circle class="goal" cx="{:.3f}" cy="{:.3f}" r="{:.3f}" fill="#2ca02c" fill-opacity="0.4"/>)",
                      px(g.center[0]), py(g.center[1]), std::sqrt(std::max(0.0, g.threshold)) * scale)
       << '\n';
  }
  for (const auto& t : trajectories) {
    std::string pts;
    for (const auto& s : t.states) {
      if (s.size() < 2) continue;
      pts += fmt::format("{:.2f},{:.2f} ", px(s[0]), py(s[1]));
    }
    const bool ok = t.safe() && (t.reached_goal() || !sc.config.goal);
    os << fmt::format(R"(<polyline class="trajectory" points="{}" fill="none" stroke="{}" stroke-width="1"/>)",
                      pts, ok ? "#1f77b4" : "#ff7f0e")
       << '\n';
  }
  os << "</svg>\n";
  return os.str();
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw InvalidArgument("'" + path.string() + "': " + e.what());
  }
}

DisturbanceSignal disturbance_from_string(const std::string& s, int l) {
  if (s == "zero") return DisturbanceSignal::zero();
  if (s == "random") return DisturbanceSignal::piecewise_random();
  try {
    if (s.rfind("random:", 0) == 0) {
      const int hold = std::stoi(s.substr(7));
      if (hold < 1) throw InvalidArgument("disturbance: hold steps must be >= 1");
      return DisturbanceSignal::piecewise_random(hold);
    }
    if (s.rfind("const:", 0) == 0) {
      std::vector<double> vals;
      std::stringstream ss(s.substr(6));
      std::string tok;
      while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
      if (static_cast<int>(vals.size()) != l) {
        throw InvalidArgument("disturbance: const needs " + std::to_string(l) + " value(s)");
      }
      return DisturbanceSignal::constant(Eigen::Map<const Vec>(vals.data(), l));
    }
  } catch (const std::logic_error&) {
    throw InvalidArgument("disturbance: cannot parse '" + s + "'");
  }
  throw InvalidArgument("disturbance must be zero, const:<v>, random or random:<hold_steps>");
}

std::string to_string(const DisturbanceSignal& s) {
  switch (s.kind) {
    case DisturbanceSignal::Kind::Zero: return "zero";
    case DisturbanceSignal::Kind::PiecewiseRandom: return "random:" + std::to_string(s.hold_steps);
    case DisturbanceSignal::Kind::Constant: {
      std::string out = "const:";
      for (Eigen::Index i = 0; i < s.value.size(); ++i) out += (i ? "," : "") + format_double(s.value[i]);
      return out;
    }
  }
  return "zero";
}

}  // namespace cbfd
