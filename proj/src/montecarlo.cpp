#include "loid/montecarlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace loid {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// C(n, k), capped: returns cap + 1 as soon as the count exceeds cap.
unsigned long long binomial_capped(int n, int k, unsigned long long cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (int i = 1; i <= k; ++i) {
    c *= static_cast<double>(n - k + i) / i;
    if (c > static_cast<double>(cap)) return cap + 1;
  }
  return static_cast<unsigned long long>(std::llround(c));
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream));
}

std::vector<Placement> sample_placements(int buses, int pmu_count, int count,
                                         std::uint64_t seed) {
  if (pmu_count < 1 || pmu_count > buses)
    throw ValidationError("pmu count must be in [1, B]");
  std::vector<Placement> out;

  if (binomial_capped(buses, pmu_count, count) <= static_cast<unsigned long long>(count)) {
    // full lexicographic enumeration
    std::vector<int> comb(pmu_count);
    for (int i = 0; i < pmu_count; ++i) comb[i] = i;
    while (true) {
      out.push_back(Placement{comb});
      int i = pmu_count - 1;
      while (i >= 0 && comb[i] == buses - pmu_count + i) --i;
      if (i < 0) break;
      ++comb[i];
      for (int j = i + 1; j < pmu_count; ++j) comb[j] = comb[j - 1] + 1;
    }
    return out;
  }

  std::mt19937_64 rng(seed);
  std::set<std::vector<int>> seen;
  long long attempts = 0;
  const long long max_attempts = 1000LL + 100LL * count;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > max_attempts)
      throw ValidationError("placement sampling stalled (too many duplicate draws)");
    // Floyd's subset sampling
    std::set<int> subset;
    for (int j = buses - pmu_count; j < buses; ++j) {
      std::uniform_int_distribution<int> dist(0, j);
      int t = dist(rng);
      if (!subset.insert(t).second) subset.insert(j);
    }
    std::vector<int> ids(subset.begin(), subset.end());
    if (seen.insert(ids).second) out.push_back(Placement{std::move(ids)});
  }
  return out;
}

NoiseTable sample_noise(const NoiseModel& model, int buses, int realizations) {
  if (model.sigma_v < 0 || model.sigma_theta < 0)
    throw ValidationError("noise sigmas must be >= 0");
  NoiseTable table(realizations, buses);
  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int r = 0; r < realizations; ++r)
    for (int b = 0; b < buses; ++b)
      for (int epoch = 0; epoch < 2; ++epoch) {
        table.at(r, b, epoch, 0) = unit(rng) * model.sigma_v;
        table.at(r, b, epoch, 1) = unit(rng) * model.sigma_theta;
      }
  return table;
}

Observation synthesize_observation(const PowerFlowSolution& base, const PowerFlowSolution& post,
                                   const NoiseTable& noise, int realization,
                                   const Placement& placement) {
  if (!base.converged || !post.converged)
    throw SolverError("cannot synthesize observation from a non-converged solution");
  const int p = placement.size();
  Observation obs;
  obs.placement = placement;
  obs.v_pre.resize(p);
  obs.v_post.resize(p);
  obs.delta.resize(p);
  for (int i = 0; i < p; ++i) {
    const int bus = placement.pmu_buses[i];
    obs.v_pre[i] = std::polar(base.vm[bus] + noise.at(realization, bus, 0, 0),
                              base.va[bus] + noise.at(realization, bus, 0, 1) * kDegToRad);
    obs.v_post[i] = std::polar(post.vm[bus] + noise.at(realization, bus, 1, 0),
                               post.va[bus] + noise.at(realization, bus, 1, 1) * kDegToRad);
    obs.delta[i] = obs.v_post[i] - obs.v_pre[i];
  }
  return obs;
}

std::string config_digest(const ExperimentConfig& cfg) {
  std::vector<std::string> fields;
  auto add = [&](const std::string& k, const std::string& v) { fields.push_back(k + "=" + v); };
  std::ostringstream num;
  num.precision(17);
  auto fmt = [&](double v) {
    num.str("");
    num << v;
    return num.str();
  };
  add("case", cfg.case_path);
  add("mode", cfg.mode == SignatureMode::Ac ? "ac" : "dc");
  for (double c : cfg.coverages) add("coverage", fmt(c));
  for (int p : cfg.pmu_counts) add("pmus", std::to_string(p));
  add("placements", std::to_string(cfg.placements_per_p));
  add("realizations", std::to_string(cfg.realizations));
  for (double e : cfg.epsilon_grid) add("epsilon", fmt(e));
  add("sigma_v", fmt(cfg.noise.sigma_v));
  add("sigma_theta", fmt(cfg.noise.sigma_theta));
  add("noise_seed", std::to_string(cfg.noise.seed));
  add("include_transformers", cfg.include_transformers ? "1" : "0");
  add("seed", std::to_string(cfg.master_seed));
  // digest is order-insensitive over fields
  std::sort(fields.begin(), fields.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : fields) {
    for (unsigned char c : f) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::vector<ResultRow> sweep_threshold(const CoverageCell& cell,
                                       const std::vector<double>& epsilon_grid) {
  std::vector<ResultRow> rows;
  rows.reserve(epsilon_grid.size());
  for (double eps : epsilon_grid) {
    if (eps < 0) throw ValidationError("epsilon must be >= 0");
    ResultRow row;
    row.coverage = cell.coverage;
    row.pmu_count = cell.pmu_count;
    row.epsilon = eps;
    row.n_trials = static_cast<long>(cell.trials.size());
    long correct = 0, mis = 0, cf = 0, mf = 0;
    for (const auto& t : cell.trials) {
      const bool conclusive = t.delta_e >= eps;
      const bool hit = t.identified == t.actual_branch;
      if (conclusive)
        (hit ? correct : mis)++;
      else
        (hit ? cf : mf)++;
    }
    const double n = std::max<long>(row.n_trials, 1);
    row.rate_correct = correct / n;
    row.rate_misidentified = mis / n;
    row.rate_correct_filtered = cf / n;
    row.rate_misidentified_filtered = mf / n;
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.realizations < 1) throw ValidationError("realizations must be >= 1");
  using Clock = std::chrono::steady_clock;
  PhaseTimings timings;
  auto tick = Clock::now();
  auto lap = [&tick] {
    auto now = Clock::now();
    double s = std::chrono::duration<double>(now - tick).count();
    tick = now;
    return s;
  };

  const Network net = parse_case_file(cfg.case_path);
  const int n_bus = net.bus_count();
  timings.parse_s = lap();

  const PowerFlowSolution base = solve_ac(net);
  if (!base.converged) throw SolverError("base-case power flow did not converge");
  timings.base_solve_s = lap();

  const CandidateSet cands = candidate_outages(net, cfg.include_transformers);
  if (cands.size() == 0) throw ValidationError("no candidate outages");
  const SignatureSet ac_sigs = build_signatures(net, base, cands, {}, cfg.jobs);
  const SignatureSet* rank_sigs = &ac_sigs;
  SignatureSet dc_sigs;
  if (cfg.mode == SignatureMode::Dc) {
    dc_sigs = build_dc_signatures(net, cands);
    rank_sigs = &dc_sigs;
  }
  timings.signatures_s = lap();

  NoiseModel noise = cfg.noise;
  if (noise.seed == 0) noise.seed = derive_seed(cfg.master_seed, 0xA11CEULL);
  const NoiseTable noise_table = sample_noise(noise, n_bus, cfg.realizations);

  // post-outage truth states, from the AC signature bank
  const Eigen::VectorXcd v_base = base.phasors();
  std::vector<PowerFlowSolution> post_states(cands.size());
  for (int a = 0; a < cands.size(); ++a) {
    const int l = cands.branch_ids[a];
    const Signature& sig = ac_sigs.at(l);
    if (!sig.solved)
      throw SolverError("post-outage solve failed for actual outage branch " + std::to_string(l));
    PowerFlowSolution& ps = post_states[a];
    ps.vm.resize(n_bus);
    ps.va.resize(n_bus);
    for (int k = 0; k < n_bus; ++k) {
      const Complex v = v_base[k] + sig.delta[k];
      ps.vm[k] = std::abs(v);
      ps.va[k] = std::arg(v);
    }
    ps.converged = true;
  }

  // resolve P levels
  std::vector<std::pair<double, int>> levels;  // (coverage, P)
  for (double c : cfg.coverages) {
    if (c <= 0 || c > 1) throw ValidationError("coverage must be in (0, 1]");
    const int p = std::max(1, static_cast<int>(std::llround(c * n_bus)));
    levels.emplace_back(c, p);
  }
  for (int p : cfg.pmu_counts) {
    if (p < 1 || p > n_bus) throw ValidationError("pmu count must be in [1, B]");
    levels.emplace_back(static_cast<double>(p) / n_bus, p);
  }
  if (levels.empty()) throw ValidationError("no coverage levels or PMU counts configured");

  ExperimentResult result;
  result.table.master_seed = cfg.master_seed;
  result.table.noise_seed = noise.seed;
  result.table.config_digest = config_digest(cfg);

  const int n_l = cands.size();
  const int n_r = cfg.realizations;
  for (const auto& [coverage, pmu_count] : levels) {
    const auto placements = sample_placements(
        n_bus, pmu_count, cfg.placements_per_p,
        derive_seed(cfg.master_seed, 0x9C0000ULL + static_cast<std::uint64_t>(pmu_count)));
    const int n_p = static_cast<int>(placements.size());

    CoverageCell cell;
    cell.coverage = coverage;
    cell.pmu_count = pmu_count;
    cell.trials.resize(static_cast<size_t>(n_p) * n_l * n_r);

    // Trials are independent; workers stride over actual-outage indices and
    // write to disjoint, position-determined slots, so the result does not
    // depend on scheduling.
    auto run_actual = [&](int a) {
      const int actual = cands.branch_ids[a];
      for (int r = 0; r < n_r; ++r) {
        for (int p = 0; p < n_p; ++p) {
          const Observation obs =
              synthesize_observation(base, post_states[a], noise_table, r, placements[p]);
          const Ranking ranking = rank_candidates(*rank_sigs, obs);
          const Verdict v = apply_filter(ranking, 0.0);
          TrialRecord& t =
              cell.trials[(static_cast<size_t>(p) * n_l + a) * n_r + r];
          t.placement_idx = p;
          t.actual_branch = actual;
          t.realization = r;
          t.identified = v.identified;
          t.e1 = v.e1;
          t.e2 = v.e2;
          t.delta_e = v.delta_e;
        }
      }
    };

    if (cfg.jobs <= 1 || n_l < 2) {
      for (int a = 0; a < n_l; ++a) run_actual(a);
    } else {
      const int nw = std::min(cfg.jobs, n_l);
      std::vector<std::thread> workers;
      for (int w = 0; w < nw; ++w)
        workers.emplace_back([&, w] {
          for (int a = w; a < n_l; a += nw) run_actual(a);
        });
      for (auto& t : workers) t.join();
    }

    auto rows = sweep_threshold(cell, cfg.epsilon_grid);
    result.table.rows.insert(result.table.rows.end(), rows.begin(), rows.end());
    result.cells.push_back(std::move(cell));
  }
  timings.trials_s = lap();
  result.timings = timings;
  return result;
}

Demo4Result run_demo4(const std::string& case_path, int realizations, const NoiseModel& noise) {
  if (realizations < 1) throw ValidationError("realizations must be >= 1");
  const Network net = parse_case_file(case_path);
  if (net.branches.size() < 2) throw ValidationError("demo case needs at least two branches");
  auto it = net.internal_ids.find(2);
  if (it == net.internal_ids.end()) throw ValidationError("demo case has no bus 2");
  const int monitored = it->second;
  const int ref = net.slack_bus;

  const PowerFlowSolution base = solve_ac(net);
  if (!base.converged) throw SolverError("base-case power flow did not converge");

  CandidateSet two_lines;
  two_lines.branch_ids = {0, 1};
  for (int l : two_lines.branch_ids)
    if (is_islanding(net, l))
      throw ValidationError("demo line " + std::to_string(l + 1) + " would island the system");
  const SignatureSet sigs = build_signatures(net, base, two_lines);
  if (!sigs.at(0).solved || !sigs.at(1).solved)
    throw SolverError("demo post-outage solves did not converge");

  NoiseModel local = noise;
  if (local.seed == 0) local.seed = 0xDE404ULL;
  NoiseTable table = sample_noise(local, net.bus_count(), realizations);
  for (int r = 0; r < realizations; ++r)
    for (int epoch = 0; epoch < 2; ++epoch)
      for (int comp = 0; comp < 2; ++comp)
        table.at(r, ref, epoch, comp) = 0.0;  // exact measurement at the reference bus

  const Eigen::VectorXcd v_base = base.phasors();
  PowerFlowSolution post;
  post.vm.resize(net.bus_count());
  post.va.resize(net.bus_count());
  for (int k = 0; k < net.bus_count(); ++k) {
    const Complex v = v_base[k] + sigs.at(0).delta[k];
    post.vm[k] = std::abs(v);
    post.va[k] = std::arg(v);
  }
  post.converged = true;

  Placement placement{{std::min(ref, monitored), std::max(ref, monitored)}};
  const int mon_pos = placement.pmu_buses[0] == monitored ? 0 : 1;

  Demo4Result result;
  result.expected_line1 = sigs.at(0).delta[monitored];
  result.expected_line2 = sigs.at(1).delta[monitored];
  result.rows.reserve(realizations);
  for (int r = 0; r < realizations; ++r) {
    const Observation obs = synthesize_observation(base, post, table, r, placement);
    const double e1 = error_measure(sigs, 0, obs);
    const double e2 = error_measure(sigs, 1, obs);
    Demo4Row row;
    row.d_re = obs.delta[mon_pos].real();
    row.d_im = obs.delta[mon_pos].imag();
    row.nearest_line = e1 <= e2 ? 1 : 2;
    if (row.nearest_line == 2) ++result.misidentified_count;
    result.rows.push_back(row);
  }
  return result;
}

std::string result_table_to_csv(const ResultTable& table) {
  std::ostringstream os;
  os.precision(17);
  os << "coverage,P,epsilon,n_trials,rate_correct,rate_misidentified,"
        "rate_correct_filtered,rate_misidentified_filtered\n";
  for (const auto& r : table.rows)
    os << r.coverage << ',' << r.pmu_count << ',' << r.epsilon << ',' << r.n_trials << ','
       << r.rate_correct << ',' << r.rate_misidentified << ',' << r.rate_correct_filtered << ','
       << r.rate_misidentified_filtered << '\n';
  return os.str();
}

std::string trials_to_csv(const CoverageCell& cell) {
  std::ostringstream os;
  os.precision(17);
  os << "placement_idx,actual_branch,realization,identified_branch,E1,E2,delta_E\n";
  for (const auto& t : cell.trials)
    os << t.placement_idx << ',' << t.actual_branch << ',' << t.realization << ','
       << t.identified << ',' << t.e1 << ',' << t.e2 << ',' << t.delta_e << '\n';
  return os.str();
}

}  // namespace loid
