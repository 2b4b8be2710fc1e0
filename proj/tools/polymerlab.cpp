// polymerlab command-line front end.
//
//   polymerlab scan --config run.json [overrides]
//   polymerlab experiment canopy_L2 --set K=2000 --out results/
//   polymerlab probe-walk --family lattice --param d=2 --K 1024
//   polymerlab describe-graph --family canopy
//
// Exit codes: 0 success / predicate passed, 1 predicate failed or runtime
// error, 2 configuration error.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polymerlab/polymerlab.hpp"

using namespace polymerlab;
using nlohmann::json;

namespace {

// "key=value"; the value is read as JSON when it parses, else as a string.
std::pair<std::string, json> split_assignment(const std::string& s) {
  auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::ConfigError, "expected key=value, got '" + s + "'");
  auto key = s.substr(0, eq), raw = s.substr(eq + 1);
  auto v = json::parse(raw, nullptr, false);
  return {key, v.is_discarded() ? json(raw) : v};
}

json graph_json(const std::string& family, const std::vector<std::string>& params) {
  json g{{"family", family}};
  for (auto& p : params) {
    auto [k, v] = split_assignment(p);
    g[k] = v;
  }
  return g;
}

struct GraphOpts {
  std::string family = "lattice";
  std::vector<std::string> params;
  std::string vertex;  // JSON array of payload integers
};

void add_graph_opts(CLI::App* cmd, GraphOpts& o) {
  cmd->add_option("--family", o.family, "graph family (lattice, canopy, gw_tree, ...)");
  cmd->add_option("--param", o.params, "family parameter key=value (repeatable)");
  cmd->add_option("--vertex", o.vertex, "start vertex payload as a JSON array (default: root)");
}

int run_scan(const std::string& config_path, const GraphOpts& go, bool family_given, const json& overrides) {
  json j = config_path.empty() ? json::object() : read_json_file(config_path);
  if (family_given || !j.contains("graph")) j["graph"] = graph_json(go.family, go.params);
  if (!go.vertex.empty()) j["start"] = json::parse(go.vertex);
  for (auto& [k, v] : overrides.items()) j[k] = v;
  auto config = RunConfig::from_json(j);
  auto res = scan(config);
  emit(res);
  json summary{{"graph_hash", res.provenance.graph_hash}, {"rows", res.rows.size()}, {"verdicts", res.verdicts}};
  std::size_t errors = 0;
  for (auto& r : res.rows) errors += r.status != "ok";
  summary["error_rows"] = errors;
  if (config.csv_path.empty() && config.json_path.empty())
    std::cout << scan_csv(res);
  else
    std::cout << summary.dump(2) << "\n";
  return 0;
}

int run_experiment_cmd(const std::string& name, const std::vector<std::string>& sets, const std::string& out) {
  json overrides = json::object();
  for (auto& s : sets) {
    auto [k, v] = split_assignment(s);
    overrides[k] = v;
  }
  auto r = run_experiment(name, overrides);
  if (!out.empty()) emit(r, out);
  std::cout << json{{"experiment", r.name},
                    {"passed", r.passed},
                    {"gating", r.gating},
                    {"predicate", r.predicate},
                    {"measurements", r.measurements},
                    {"seconds", r.seconds}}
                   .dump(2)
            << "\n";
  if (r.exit_code() != 0) std::cerr << "predicate failed: " << r.predicate << "\n";
  return r.exit_code();
}

int run_probe(const GraphOpts& go, std::int64_t K, std::int64_t r_max, const std::string& measure,
              const std::string& json_out, const std::string& csv_out) {
  auto spec = GraphSpec::from_json(graph_json(go.family, go.params));
  auto g = make_graph(spec);
  auto x = go.vertex.empty() ? g->root() : parse_vertex(*g, json::parse(go.vertex));
  VolumeMeasure m = measure == "reversing" ? VolumeMeasure::Reversing : VolumeMeasure::Counting;
  if (measure != "reversing" && measure != "counting") fail(ErrorKind::ConfigError, "measure must be counting or reversing");
  auto p = kernel_profile(*g, x, K, r_max, m);
  json j{{"schema", kResultsSchema}, {"kind", "probe_walk"}, {"graph", spec.to_json()}, {"graph_hash", spec.hash()},
         {"commit", POLYMERLAB_COMMIT}, {"timestamp", utc_timestamp()}, {"profile", p}};
  if (!json_out.empty()) write_text_file(json_out, j.dump(2) + "\n");
  if (!csv_out.empty()) {
    std::ostringstream os;
    os << "k,return_probability,green_partial\n";
    for (std::size_t k = 0; k < p.return_probs.size(); ++k)
      os << k << ',' << detail::fmt(p.return_probs[k]) << ',' << detail::fmt(p.green_partial[k]) << "\n";
    write_text_file(csv_out, os.str());
  }
  json summary = j;
  summary["profile"].erase("return_probs");
  summary["profile"].erase("green_partial");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int run_describe(const GraphOpts& go) {
  auto spec = GraphSpec::from_json(graph_json(go.family, go.params));
  auto g = make_graph(spec);
  auto x = go.vertex.empty() ? g->root() : parse_vertex(*g, json::parse(go.vertex));
  json row = json::array();
  for (auto& e : g->transition_row(x).entries) row.push_back({{"to", e.to.to_string()}, {"p", e.prob}});
  auto h = g->safe_horizon(x);
  std::cout << json{{"graph", spec.to_json()},
                    {"graph_hash", spec.hash()},
                    {"metadata", g->metadata()},
                    {"vertex", x.to_string()},
                    {"safe_horizon", h ? json(*h) : json(nullptr)},
                    {"row", row}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polymerlab: directed polymers on graphs"};
  app.require_subcommand(1);

  // scan
  auto* scan_cmd = app.add_subcommand("scan", "run a (beta, n) grid and write CSV/JSON results");
  std::string config_path;
  GraphOpts scan_graph;
  std::vector<double> betas, thetas;
  std::vector<std::int64_t> ns;
  std::size_t replicas = 0, cap = 0;
  std::uint64_t env_seed = 0;
  std::int64_t collision_K = -1;
  std::string law, csv, json_path;
  bool no_second_moment = false;
  unsigned workers = 0;
  scan_cmd->add_option("--config", config_path, "run config (JSON)");
  add_graph_opts(scan_cmd, scan_graph);
  scan_cmd->add_option("--law", law, "disorder law: gaussian, rademacher, uniform");
  scan_cmd->add_option("--betas", betas, "beta grid")->delimiter(',');
  scan_cmd->add_option("--ns", ns, "n grid")->delimiter(',');
  scan_cmd->add_option("--thetas", thetas, "fractional moments")->delimiter(',');
  scan_cmd->add_option("--replicas", replicas, "environments per cell");
  scan_cmd->add_option("--env-seed", env_seed, "environment seed base");
  scan_cmd->add_option("--cap", cap, "front budget");
  scan_cmd->add_option("--collision-K", collision_K, "diagonal collision sum horizon");
  scan_cmd->add_flag("--no-second-moment", no_second_moment, "skip E[W_n^2]");
  scan_cmd->add_option("--csv", csv, "CSV output path");
  scan_cmd->add_option("--json", json_path, "JSON output path");
  scan_cmd->add_option("--workers", workers, "worker threads");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "run a named experiment and check its predicate");
  std::string exp_name, out_dir = "results";
  std::vector<std::string> sets;
  bool list = false;
  exp_cmd->add_option("name", exp_name, "experiment name");
  exp_cmd->add_option("--set", sets, "parameter override key=value (repeatable)");
  exp_cmd->add_option("--out", out_dir, "output directory for <name>.json and <name>.csv");
  exp_cmd->add_flag("--list", list, "list experiments and their default parameters");

  // probe-walk
  auto* probe_cmd = app.add_subcommand("probe-walk", "return probabilities, Green sums, spectral and volume fits");
  GraphOpts probe_graph;
  std::int64_t K = 1024, r_max = 0;
  std::string measure = "counting", probe_json, probe_csv;
  add_graph_opts(probe_cmd, probe_graph);
  probe_cmd->add_option("--K", K, "number of steps");
  probe_cmd->add_option("--r-max", r_max, "volume growth radius (0 = skip)");
  probe_cmd->add_option("--measure", measure, "volume measure: counting or reversing");
  probe_cmd->add_option("--json", probe_json, "JSON output path");
  probe_cmd->add_option("--csv", probe_csv, "CSV output path");

  // describe-graph
  auto* desc_cmd = app.add_subcommand("describe-graph", "print a graph's spec, hash, metadata and a transition row");
  GraphOpts desc_graph;
  add_graph_opts(desc_cmd, desc_graph);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*scan_cmd) {
      json o = json::object();
      if (!law.empty()) o["law"] = law;
      if (!betas.empty()) o["betas"] = betas;
      if (!ns.empty()) o["ns"] = ns;
      if (!thetas.empty()) o["thetas"] = thetas;
      if (replicas) o["replicas"] = replicas;
      if (env_seed) o["env_seed"] = env_seed;
      if (cap) o["front_cap"] = cap;
      if (collision_K >= 0) o["collision_K"] = collision_K;
      if (no_second_moment) o["second_moment"] = false;
      if (!csv.empty()) o["csv"] = csv;
      if (!json_path.empty()) o["json"] = json_path;
      if (workers) o["workers"] = workers;
      return run_scan(config_path, scan_graph, scan_cmd->count("--family") > 0, o);
    }
    if (*exp_cmd) {
      if (list) {
        json all = json::object();
        for (auto& n : experiment_names()) all[n] = experiment_defaults(n);
        std::cout << all.dump(2) << "\n";
        return 0;
      }
      if (exp_name.empty()) fail(ErrorKind::ConfigError, "experiment name required (see --list)");
      return run_experiment_cmd(exp_name, sets, out_dir);
    }
    if (*probe_cmd) return run_probe(probe_graph, K, r_max, measure, probe_json, probe_csv);
    if (*desc_cmd) return run_describe(desc_graph);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
