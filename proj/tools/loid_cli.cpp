#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "loid/montecarlo.hpp"

namespace fs = std::filesystem;
using namespace loid;

namespace {

constexpr const char* kVersion = "loid 1.0.0";
constexpr int kSchemaVersion = 1;

// exit codes: 0 ok/conclusive, 3 inconclusive, 4 usage or input error,
// 5 internal failure
constexpr int kExitInconclusive = 3;
constexpr int kExitUsage = 4;
constexpr int kExitInternal = 5;

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_double_list(text)) out.push_back(static_cast<int>(v));
  return out;
}

// "lo:hi:step" inclusive grid, or a plain comma list
std::vector<double> parse_epsilon_grid(const std::string& text) {
  if (text.find(':') == std::string::npos) return parse_double_list(text);
  std::vector<double> parts = parse_double_list([&] {
    std::string s = text;
    for (auto& c : s)
      if (c == ':') c = ',';
    return s;
  }());
  if (parts.size() != 3 || parts[2] <= 0.0 || parts[1] < parts[0])
    throw CLI::ValidationError("--epsilon-grid", "expected lo:hi:step with step > 0");
  std::vector<double> grid;
  for (double e = parts[0]; e <= parts[1] + parts[2] * 1e-9; e += parts[2]) grid.push_back(e);
  return grid;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

std::string manifest_text(const ExperimentConfig& cfg, const ExperimentResult& res) {
  std::ostringstream m;
  m.precision(6);
  m << "tool = " << kVersion << "\n"
    << "schema_version = " << kSchemaVersion << "\n"
    << "config_digest = " << res.table.config_digest << "\n"
    << "master_seed = " << res.table.master_seed << "\n"
    << "noise_seed = " << res.table.noise_seed << "\n"
    << "jobs = " << cfg.jobs << "\n"
    << "time_parse_s = " << res.timings.parse_s << "\n"
    << "time_base_solve_s = " << res.timings.base_solve_s << "\n"
    << "time_signatures_s = " << res.timings.signatures_s << "\n"
    << "time_trials_s = " << res.timings.trials_s << "\n";
  return m.str();
}

// observation CSV: bus,vm_pre,va_pre_deg,vm_post,va_post_deg (external bus ids)
Observation read_observation(const std::string& path, const Network& net) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open observation file " + path);
  Observation obs;
  std::vector<Complex> pre, post;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("bus", 0) == 0) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 5)
      throw std::runtime_error("observation line " + std::to_string(lineno) + ": want 5 columns");
    const int ext = static_cast<int>(vals[0]);
    auto it = net.internal_ids.find(ext);
    if (it == net.internal_ids.end())
      throw std::runtime_error("observation line " + std::to_string(lineno) + ": unknown bus " +
                               std::to_string(ext));
    const double deg = M_PI / 180.0;
    obs.placement.pmu_buses.push_back(it->second);
    pre.push_back(std::polar(vals[1], vals[2] * deg));
    post.push_back(std::polar(vals[3], vals[4] * deg));
  }
  if (pre.empty()) throw std::runtime_error("observation file is empty");
  const int p = static_cast<int>(pre.size());
  obs.v_pre.resize(p);
  obs.v_post.resize(p);
  obs.delta.resize(p);
  for (int i = 0; i < p; ++i) {
    obs.v_pre[i] = pre[i];
    obs.v_post[i] = post[i];
    obs.delta[i] = post[i] - pre[i];
  }
  return obs;
}

// plain key=value config, # comments; unknown keys are an error
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": want key = value");
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      const size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

struct SweepArgs {
  std::string config_path;
  std::string case_path;
  std::string mode = "ac";
  std::string coverage;
  std::string pmus;
  int placements = -1;
  int realizations = -1;
  std::string epsilon_grid;
  double sigma_v = -1.0;
  double sigma_theta = -1.0;
  std::uint64_t seed = 0;
  bool have_seed = false;
  int jobs = 0;
  std::string out_dir = ".";
  int include_transformers = -1;
};

ExperimentConfig resolve_sweep_config(const SweepArgs& a) {
  ExperimentConfig cfg;
  if (!a.config_path.empty()) {
    static const std::map<std::string, int> known = {
        {"case", 0},          {"mode", 0},        {"coverage", 0},
        {"pmus", 0},          {"placements", 0},  {"realizations", 0},
        {"epsilon-grid", 0},  {"sigma-v", 0},     {"sigma-theta", 0},
        {"seed", 0},          {"jobs", 0},        {"include-transformers", 0}};
    for (const auto& [k, v] : read_config(a.config_path)) {
      if (!known.count(k)) throw std::runtime_error("unknown config key '" + k + "'");
      if (k == "case") cfg.case_path = v;
      else if (k == "mode") cfg.mode = v == "dc" ? SignatureMode::Dc : SignatureMode::Ac;
      else if (k == "coverage") cfg.coverages = parse_double_list(v);
      else if (k == "pmus") cfg.pmu_counts = parse_int_list(v);
      else if (k == "placements") cfg.placements_per_p = std::stoi(v);
      else if (k == "realizations") cfg.realizations = std::stoi(v);
      else if (k == "epsilon-grid") cfg.epsilon_grid = parse_epsilon_grid(v);
      else if (k == "sigma-v") cfg.noise.sigma_v = std::stod(v);
      else if (k == "sigma-theta") cfg.noise.sigma_theta = std::stod(v);
      else if (k == "seed") cfg.master_seed = std::stoull(v);
      else if (k == "jobs") cfg.jobs = std::stoi(v);
      else if (k == "include-transformers") cfg.include_transformers = v == "1" || v == "true";
    }
  }
  // flags win over file values
  if (!a.case_path.empty()) cfg.case_path = a.case_path;
  if (a.mode == "dc") cfg.mode = SignatureMode::Dc;
  if (!a.coverage.empty()) cfg.coverages = parse_double_list(a.coverage);
  if (!a.pmus.empty()) cfg.pmu_counts = parse_int_list(a.pmus);
  if (a.placements >= 0) cfg.placements_per_p = a.placements;
  if (a.realizations >= 0) cfg.realizations = a.realizations;
  if (!a.epsilon_grid.empty()) cfg.epsilon_grid = parse_epsilon_grid(a.epsilon_grid);
  if (a.sigma_v >= 0.0) cfg.noise.sigma_v = a.sigma_v;
  if (a.sigma_theta >= 0.0) cfg.noise.sigma_theta = a.sigma_theta;
  if (a.have_seed) cfg.master_seed = a.seed;
  if (a.jobs > 0) cfg.jobs = a.jobs;
  if (a.include_transformers >= 0) cfg.include_transformers = a.include_transformers != 0;
  if (cfg.case_path.empty()) throw std::runtime_error("no case file given (--case or config)");
  if (cfg.coverages.empty() && cfg.pmu_counts.empty())
    throw std::runtime_error("no coverage levels or pmu counts given");
  return cfg;
}

int cmd_identify(const std::string& case_path, const std::string& mode, const std::string& pmus,
                 double coverage, int outage, const std::string& obs_path, double epsilon,
                 double sigma_v, double sigma_theta, std::uint64_t seed) {
  Network net = parse_case_file(case_path);
  PowerFlowSolution base = solve_ac(net);
  if (!base.converged) throw std::runtime_error("base case power flow did not converge");
  CandidateSet cands = candidate_outages(net);

  SignatureSet sigs = mode == "dc" ? build_dc_signatures(net, cands)
                                   : build_signatures(net, base, cands);
  if (sigs.mode == SignatureMode::Dc) sigs.base = base;

  Placement placement;
  if (!pmus.empty()) {
    for (int ext : parse_int_list(pmus)) {
      auto it = net.internal_ids.find(ext);
      if (it == net.internal_ids.end())
        throw std::runtime_error("unknown bus " + std::to_string(ext));
      placement.pmu_buses.push_back(it->second);
    }
  } else {
    const int p = coverage > 0.0
                      ? std::max(1, static_cast<int>(std::lround(coverage * net.bus_count())))
                      : net.bus_count();
    placement = sample_placements(net.bus_count(), p, 1, derive_seed(seed, 0x9C0000 + p))[0];
  }

  Observation obs;
  if (!obs_path.empty()) {
    obs = read_observation(obs_path, net);
  } else {
    // synthetic: noisy measurement of the requested outage
    if (outage < 1 || outage > static_cast<int>(net.branches.size()))
      throw std::runtime_error("--outage wants a line number in 1.." +
                               std::to_string(net.branches.size()));
    const int actual = outage - 1;
    SignatureSet truth = sigs.mode == SignatureMode::Ac ? sigs : build_signatures(net, base, cands);
    if (!truth.at(actual).solved)
      throw std::runtime_error("post-outage power flow did not converge for line " +
                               std::to_string(outage));
    PowerFlowSolution post;
    post.converged = true;
    const Eigen::VectorXcd v_post = base.phasors() + truth.at(actual).delta;
    post.vm = v_post.cwiseAbs();
    post.va.resize(net.bus_count());
    for (int k = 0; k < net.bus_count(); ++k) post.va[k] = std::arg(v_post[k]);
    NoiseModel nm;
    nm.sigma_v = sigma_v;
    nm.sigma_theta = sigma_theta;
    nm.seed = derive_seed(seed, 0xA11CE);
    NoiseTable noise = sample_noise(nm, net.bus_count(), 1);
    obs = synthesize_observation(base, post, noise, 0, placement);
  }

  Ranking rk = rank_candidates(sigs, obs);
  Verdict v = apply_filter(rk, epsilon);

  std::cout << "candidates: " << cands.size() << ", pmus: " << obs.placement.size() << ", mode: "
            << (sigs.mode == SignatureMode::Dc ? "dc" : "ac") << "\n";
  std::cout << "rank  line  E\n";
  for (size_t i = 0; i < rk.entries.size() && i < 5; ++i)
    std::cout << "  " << i + 1 << "     " << rk.entries[i].first + 1 << "     "
              << rk.entries[i].second << "\n";
  std::cout << "identified line: " << v.identified + 1 << "\n"
            << "E1 = " << v.e1 << ", E2 = " << v.e2 << ", dE = " << v.delta_e << "\n"
            << "conclusive (dE >= " << epsilon << "): " << (v.conclusive ? "yes" : "no") << "\n";
  return v.conclusive ? 0 : kExitInconclusive;
}

int cmd_sweep(const SweepArgs& args) {
  ExperimentConfig cfg = resolve_sweep_config(args);
  fs::create_directories(args.out_dir);
  ExperimentResult res = run_experiment(cfg);
  const fs::path dir(args.out_dir);
  write_file(dir / "results.csv", result_table_to_csv(res.table));
  for (const auto& cell : res.cells)
    write_file(dir / ("trials_P" + std::to_string(cell.pmu_count) + ".csv"), trials_to_csv(cell));
  write_file(dir / "manifest.txt", manifest_text(cfg, res));
  std::cout << "wrote " << (dir / "results.csv").string() << " (" << res.table.rows.size()
            << " rows, " << res.cells.size() << " coverage levels)\n"
            << "config digest: " << res.table.config_digest << "\n";
  return 0;
}

int cmd_demo4(const std::string& case_path, int realizations, double sigma_v, double sigma_theta,
              std::uint64_t seed, const std::string& out_path) {
  NoiseModel nm;
  nm.sigma_v = sigma_v;
  nm.sigma_theta = sigma_theta;
  nm.seed = seed;
  Demo4Result res = run_demo4(case_path, realizations, nm);

  std::ostringstream csv;
  csv.precision(17);
  csv << "kind,d_re,d_im,nearest_line\n";
  csv << "expected," << res.expected_line1.real() << "," << res.expected_line1.imag() << ",1\n";
  csv << "expected," << res.expected_line2.real() << "," << res.expected_line2.imag() << ",2\n";
  for (const auto& row : res.rows)
    csv << "obs," << row.d_re << "," << row.d_im << "," << row.nearest_line << "\n";
  if (out_path.empty() || out_path == "-") {
    std::cout << csv.str();
  } else {
    write_file(out_path, csv.str());
    std::cout << "wrote " << out_path << "\n";
  }
  std::cout << "misidentified " << res.misidentified_count << " / " << realizations
            << " realizations\n";
  return 0;
}

int cmd_bench(const std::string& case_path, int repetitions) {
  Network net = parse_case_file(case_path);
  PowerFlowSolution base = solve_ac(net);
  if (!base.converged) throw std::runtime_error("base case power flow did not converge");
  CandidateSet cands = candidate_outages(net);
  SignatureSet sigs = build_signatures(net, base, cands);

  Placement all;
  for (int k = 0; k < net.bus_count(); ++k) all.pmu_buses.push_back(k);
  Observation obs;
  obs.placement = all;
  obs.v_pre = base.phasors();
  obs.v_post = base.phasors() + sigs.at(cands.branch_ids[0]).delta;
  obs.delta = obs.v_post - obs.v_pre;

  std::vector<double> solve_t(repetitions), ident_t(repetitions);
  for (int i = 0; i < repetitions; ++i) {
    double t0 = now_s();
    PowerFlowSolution s = solve_ac(net);
    solve_t[i] = now_s() - t0;
    if (!s.converged) throw std::runtime_error("solver diverged during benchmark");
    t0 = now_s();
    Ranking rk = rank_candidates(sigs, obs);
    ident_t[i] = now_s() - t0;
    if (rk.entries.empty()) throw std::runtime_error("empty ranking during benchmark");
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  std::cout << "case: " << case_path << " (" << net.bus_count() << " buses, " << cands.size()
            << " candidates)\n"
            << "median ac solve:      " << median(solve_t) * 1e3 << " ms\n"
            << "median identification: " << median(ident_t) * 1e3 << " ms\n"
            << "repetitions: " << repetitions << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Line outage identification from PMU voltage phasors"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // identify
  std::string id_case, id_mode = "ac", id_pmus, id_obs;
  double id_coverage = 0.0, id_epsilon = 0.0;
  double id_sigma_v = 0.0, id_sigma_theta = 0.0;
  int id_outage = 0;
  std::uint64_t id_seed = 1;
  auto* identify = app.add_subcommand("identify", "Rank candidate outages for one observation");
  identify->add_option("--case", id_case, "case file")->required();
  identify->add_option("--mode", id_mode)->check(CLI::IsMember({"ac", "dc"}));
  identify->add_option("--pmus", id_pmus, "comma list of instrumented buses (external ids)");
  identify->add_option("--coverage", id_coverage, "PMU coverage fraction when --pmus is absent");
  identify->add_option("--outage", id_outage, "synthesize measurements for this line (1-based)");
  identify->add_option("--obs", id_obs, "observation CSV: bus,vm_pre,va_pre_deg,vm_post,va_post_deg");
  identify->add_option("--epsilon", id_epsilon, "rejection threshold");
  identify->add_option("--sigma-v", id_sigma_v, "magnitude noise sigma, pu (synthetic only)");
  identify->add_option("--sigma-theta", id_sigma_theta, "angle noise sigma, degrees (synthetic only)");
  identify->add_option("--seed", id_seed);

  // sweep
  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Monte Carlo accuracy experiment, CSV output");
  sweep->add_option("--config", sw.config_path, "key = value config file");
  sweep->add_option("--case", sw.case_path);
  sweep->add_option("--mode", sw.mode)->check(CLI::IsMember({"ac", "dc"}));
  sweep->add_option("--coverage", sw.coverage, "comma list of coverage fractions");
  sweep->add_option("--pmus", sw.pmus, "comma list of PMU counts");
  sweep->add_option("--placements", sw.placements, "random placements per coverage level");
  sweep->add_option("--realizations", sw.realizations, "noise realizations per outage");
  sweep->add_option("--epsilon-grid", sw.epsilon_grid, "lo:hi:step or comma list");
  sweep->add_option("--sigma-v", sw.sigma_v);
  sweep->add_option("--sigma-theta", sw.sigma_theta);
  auto* seed_opt = sweep->add_option("--seed", sw.seed);
  sweep->add_option("--jobs", sw.jobs, "worker threads; results are jobs-independent");
  sweep->add_option("--out-dir", sw.out_dir);
  sweep->add_flag("--include-transformers,!--no-include-transformers",
                  [&sw](std::int64_t n) { sw.include_transformers = n > 0 ? 1 : 0; },
                  "keep transformer branches in the candidate set");

  // demo4
  std::string d4_case, d4_out;
  int d4_realizations = 1000;
  double d4_sigma_v = 0.002 / std::sqrt(3.0);
  double d4_sigma_theta = 0.01 / std::sqrt(3.0);
  std::uint64_t d4_seed = 0xDE404;
  auto* demo4 = app.add_subcommand("demo4", "Two-hypothesis scatter on the 4-bus case");
  demo4->add_option("--case", d4_case, "4-bus case file")->required();
  demo4->add_option("--realizations", d4_realizations)->check(CLI::PositiveNumber);
  demo4->add_option("--sigma-v", d4_sigma_v);
  demo4->add_option("--sigma-theta", d4_sigma_theta);
  demo4->add_option("--seed", d4_seed);
  demo4->add_option("--out", d4_out, "CSV path, '-' for stdout");

  // bench
  std::string bn_case;
  int bn_reps = 25;
  auto* bench = app.add_subcommand("bench", "Time the solve and identification phases");
  bench->add_option("--case", bn_case)->required();
  bench->add_option("--repetitions", bn_reps)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*identify)
      return cmd_identify(id_case, id_mode, id_pmus, id_coverage, id_outage, id_obs, id_epsilon,
                          id_sigma_v, id_sigma_theta, id_seed);
    if (*sweep) {
      sw.have_seed = seed_opt->count() > 0;
      return cmd_sweep(sw);
    }
    if (*demo4)
      return cmd_demo4(d4_case, d4_realizations, d4_sigma_v, d4_sigma_theta, d4_seed, d4_out);
    if (*bench) return cmd_bench(bn_case, bn_reps);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
