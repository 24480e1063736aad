#include "xchain/scenario.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace xchain {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopFields = {
    "name",          "n",           "p_c",           "g",
    "num_blocks",    "block_interval", "seed",       "latency",
    "jitter",        "gossip_timer", "relay_on_update", "poll_interval",
    "expiry_factor", "expected_gap", "expiry_jitter", "patience",
    "dependency_rate", "offer_delay_max", "drain_cap", "topology",
    "defaults",      "systems",      "adversary",     "record_gap_samples",
    "sweep",         "max_runs"};

void check_fields(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown field in " + where + ": " + key);
  }
}

SystemConfig system_from_json(const json& j, SystemConfig base) {
  check_fields(j, {"id", "q", "r", "t", "f", "k"}, "system");
  base.q = j.value("q", base.q);
  base.r = j.value("r", base.r);
  base.t = j.value("t", base.t);
  base.f = j.value("f", base.f);
  base.k = j.value("k", base.k);
  return base;
}

json system_json(const SystemConfig& s) {
  return {{"q", s.q}, {"r", s.r}, {"t", s.t}, {"f", s.f}, {"k", s.k}};
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string short_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

ScenarioFile parse_scenario(const json& j, const std::string& fallback_name) {
  ScenarioFile s;
  try {
    check_fields(j, kTopFields, "scenario");
    SimConfig& c = s.base;
    c.name = j.value("name", fallback_name);
    c.n = j.value("n", c.n);
    c.p_c = j.value("p_c", c.p_c);
    c.g = j.value("g", c.g);
    c.num_blocks = j.value("num_blocks", c.num_blocks);
    c.block_interval = j.value("block_interval", c.block_interval);
    c.seed = j.value("seed", c.seed);
    c.latency = j.value("latency", c.latency);
    c.jitter = j.value("jitter", c.jitter);
    c.gossip_timer = j.value("gossip_timer", c.gossip_timer);
    c.relay_on_update = j.value("relay_on_update", c.relay_on_update);
    c.poll_interval = j.value("poll_interval", c.poll_interval);
    c.expiry_factor = j.value("expiry_factor", c.expiry_factor);
    c.expected_gap = j.value("expected_gap", c.expected_gap);
    c.expiry_jitter = j.value("expiry_jitter", c.expiry_jitter);
    c.patience = optional_field<Height>(j, "patience");
    c.dependency_rate = j.value("dependency_rate", c.dependency_rate);
    c.offer_delay_max = j.value("offer_delay_max", c.offer_delay_max);
    c.drain_cap = optional_field<Height>(j, "drain_cap");
    c.record_gap_samples = j.value("record_gap_samples", c.record_gap_samples);

    if (j.contains("topology")) {
      const json& t = j.at("topology");
      if (t.is_string()) {
        if (t.get<std::string>() != "full") throw ConfigError("topology must be \"full\" or {edges}");
      } else {
        check_fields(t, {"edges"}, "topology");
        for (const auto& e : t.at("edges")) {
          if (!e.is_array() || e.size() != 2) throw ConfigError("edge must be a pair");
          c.edges.emplace_back(SystemId(e[0].get<std::uint16_t>()), SystemId(e[1].get<std::uint16_t>()));
        }
      }
    }
    if (j.contains("defaults")) c.system_defaults = system_from_json(j.at("defaults"), c.system_defaults);
    if (j.contains("systems")) {
      for (const auto& e : j.at("systems")) {
        SystemConfig o = system_from_json(e, c.system_defaults);
        o.id = SystemId(e.at("id").get<std::uint16_t>());
        s.overrides.push_back(o);
      }
    }
    if (j.contains("adversary")) c.adversary = adversary_from_json(j.at("adversary"));
    if (j.contains("sweep")) {
      const json& sw = j.at("sweep");
      check_fields(sw, {"n", "p_c", "g"}, "sweep");
      if (sw.contains("n")) s.sweep_n = sw.at("n").get<std::vector<std::size_t>>();
      if (sw.contains("p_c")) s.sweep_p_c = sw.at("p_c").get<std::vector<double>>();
      if (sw.contains("g")) s.sweep_g = sw.at("g").get<std::vector<double>>();
    }
    s.max_runs = j.value("max_runs", s.max_runs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  // Surface value errors at load time rather than mid-sweep.
  s.expand();
  return s;
}

ScenarioFile load_scenario(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scenario " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("scenario " + path.string() + ": " + e.what());
  }
  return parse_scenario(j, path.stem().string());
}

std::vector<SimConfig> ScenarioFile::expand() const {
  const std::vector<std::size_t> ns = sweep_n.empty() ? std::vector{base.n} : sweep_n;
  const std::vector<double> pcs = sweep_p_c.empty() ? std::vector{base.p_c} : sweep_p_c;
  const std::vector<double> gs = sweep_g.empty() ? std::vector{base.g} : sweep_g;
  const std::size_t total = ns.size() * pcs.size() * gs.size();
  if (total > max_runs) {
    throw ConfigError("sweep has " + std::to_string(total) + " runs, cap is " +
                      std::to_string(max_runs));
  }
  std::vector<SimConfig> out;
  for (auto n : ns) {
    for (auto pc : pcs) {
      for (auto g : gs) {
        SimConfig c = base;
        c.n = n;
        c.p_c = pc;
        c.g = g;
        if (is_sweep()) c.name = point_name(n, pc, g);
        c.systems.clear();
        c.finalize();
        for (const auto& o : overrides) {
          if (o.id.value < c.systems.size()) c.systems[o.id.value] = o;
        }
        c.validate();
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

json scenario_to_json(const ScenarioFile& s) {
  json j = to_json(s.base);
  json systems = json::array();
  for (const auto& o : s.overrides) {
    json e = system_json(o);
    e["id"] = o.id.value;
    systems.push_back(e);
  }
  j["systems"] = systems;
  json sweep = json::object();
  if (!s.sweep_n.empty()) sweep["n"] = s.sweep_n;
  if (!s.sweep_p_c.empty()) sweep["p_c"] = s.sweep_p_c;
  if (!s.sweep_g.empty()) sweep["g"] = s.sweep_g;
  j["sweep"] = sweep;
  j["max_runs"] = s.max_runs;
  return j;
}

std::string point_name(std::size_t n, double p_c, double g) {
  auto part = [](double x) {
    const double tenths = x * 10.0;
    if (std::fabs(tenths - std::round(tenths)) < 1e-9) {
      return std::to_string(static_cast<long long>(std::llround(tenths)));
    }
    std::string s = short_number(x);
    for (auto& ch : s) {
      if (ch == '.') ch = 'p';
    }
    return s;
  };
  return std::to_string(n) + "_" + part(p_c) + "_" + part(g);
}

std::string metrics_csv_header() { return "n,p_c,g,requests,gossips,tasks,mean_gap,p99_gap\n"; }

std::string metrics_csv_row(const SimConfig& c, const Metrics& m) {
  std::ostringstream os;
  os << c.n << ',' << short_number(c.p_c) << ',' << short_number(c.g) << ',' << m.max_requests()
     << ',' << m.max_gossips() << ',' << m.tasks_started << ',' << fixed(m.mean_gap(), 6) << ','
     << m.gap_percentile(99.0) << '\n';
  return os.str();
}

std::string gaps_csv(const Metrics& m) {
  std::ostringstream os;
  os << "gap,frequency\n";
  for (const auto& [gap, f] : m.gap_histogram) os << gap << ',' << f << '\n';
  return os.str();
}

std::string transcript_text(const SimResult& r) {
  std::string s;
  for (const auto& line : r.transcript) {
    s += line;
    s += '\n';
  }
  return s;
}

namespace {

struct PointResult {
  SimConfig config;
  std::optional<SimResult> result;
  std::string error;
  bool config_error = false;
};

std::vector<PointResult> run_points(std::vector<SimConfig> configs, unsigned parallel) {
  std::vector<PointResult> results(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) results[i].config = configs[i];
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= results.size()) return;
      try {
        results[i].result = run(results[i].config);
      } catch (const ConfigError& e) {
        results[i].error = e.what();
        results[i].config_error = true;
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(parallel, configs.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

int cmd_run(const fs::path& scenario, const fs::path& out_dir, std::optional<std::uint64_t> seed,
            unsigned parallel, std::ostream& out, std::ostream& err) {
  ScenarioFile file;
  std::vector<SimConfig> points;
  try {
    file = load_scenario(scenario);
    if (seed) file.base.seed = *seed;
    points = file.expand();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    ensure_dir(out_dir);
    auto results = run_points(points, parallel);
    std::string combined = metrics_csv_header();
    int status = kExitOk;
    for (auto& pr : results) {
      if (!pr.result) {
        err << (pr.config_error ? "config error: " : "error: ") << pr.config.name << ": " << pr.error
            << '\n';
        status = std::max(status, kExitConfig);
        continue;
      }
      const SimResult& r = *pr.result;
      const std::string row = metrics_csv_row(pr.config, r.metrics);
      combined += row;
      write_file(out_dir / (pr.config.name + ".gaps.csv"), gaps_csv(r.metrics));
      write_file(out_dir / (pr.config.name + ".transcript.jsonl"), transcript_text(r));
      if (file.is_sweep()) {
        write_file(out_dir / (pr.config.name + ".metrics.csv"), metrics_csv_header() + row);
      }
      out << pr.config.name << ": " << row;
      for (const auto& v : r.violations) err << "invariant violated: " << pr.config.name << ": " << v << '\n';
      if (!r.violations.empty()) status = kExitInvariant;
    }
    write_file(out_dir / (file.base.name + ".metrics.csv"), combined);
    return status;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_attack(const fs::path& scenario, const fs::path& out_dir, std::ostream& out,
               std::ostream& err) {
  ScenarioFile file;
  std::vector<SimConfig> points;
  try {
    file = load_scenario(scenario);
    if (!file.base.adversary.active()) throw ConfigError("scenario has no adversary");
    points = file.expand();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    ensure_dir(out_dir);
    auto results = run_points(points, 1);
    json reports = json::array();
    std::string combined = metrics_csv_header();
    int status = kExitOk;
    for (auto& pr : results) {
      if (!pr.result) {
        err << (pr.config_error ? "config error: " : "error: ") << pr.config.name << ": " << pr.error
            << '\n';
        status = std::max(status, kExitConfig);
        continue;
      }
      const SimResult& r = *pr.result;
      json rep = to_json(r.attack);
      rep["name"] = pr.config.name;
      rep["adversary"] = to_json(pr.config.adversary);
      rep["g"] = pr.config.g;
      reports.push_back(rep);
      combined += metrics_csv_row(pr.config, r.metrics);
      write_file(out_dir / (pr.config.name + ".transcript.jsonl"), transcript_text(r));
      out << pr.config.name << ": detected=" << (r.attack.detected ? "true" : "false")
          << " evidence=" << r.attack.evidence_count
          << " double_completion=" << (r.attack.double_completion ? "true" : "false") << '\n';
      for (const auto& a : r.attack.adv1) {
        out << "  adv1 p=" << short_number(a.p) << " m=" << a.m << " rate=" << fixed(a.rate, 6)
            << " bound=" << fixed(a.bound, 6) << '\n';
      }
      for (const auto& v : r.violations) err << "invariant violated: " << pr.config.name << ": " << v << '\n';
      if (!r.violations.empty()) status = kExitInvariant;
    }
    const json report = reports.size() == 1 ? reports[0] : reports;
    write_file(out_dir / (file.base.name + ".attack.json"), report.dump(2) + "\n");
    write_file(out_dir / (file.base.name + ".metrics.csv"), combined);
    return status;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_print_config(const std::optional<fs::path>& scenario, std::ostream& out, std::ostream& err) {
  try {
    ScenarioFile file;
    if (scenario) {
      file = load_scenario(*scenario);
    } else {
      file.base.finalize();
    }
    out << scenario_to_json(file).dump(2) << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace xchain
