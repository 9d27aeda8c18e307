#pragma once

#include <cstdint>

#include "loid/identify.hpp"

namespace loid {

struct NoiseModel {
  double sigma_v = 0.002 / 1.7320508075688772;      // pu
  double sigma_theta = 0.01 / 1.7320508075688772;   // degrees
  std::uint64_t seed = 0;                            // 0: derive from the master seed
};

// Gaussian measurement-noise draws for every (realization, bus, epoch),
// shared by all placements that include a bus.
class NoiseTable {
 public:
  NoiseTable(int realizations, int buses)
      : realizations_(realizations), buses_(buses),
        data_(static_cast<size_t>(realizations) * buses * 4, 0.0) {}

  int realizations() const { return realizations_; }
  int buses() const { return buses_; }

  // epoch: 0 = pre, 1 = post; comp: 0 = magnitude (pu), 1 = angle (deg)
  double& at(int r, int bus, int epoch, int comp) {
    return data_[((static_cast<size_t>(r) * buses_ + bus) * 2 + epoch) * 2 + comp];
  }
  double at(int r, int bus, int epoch, int comp) const {
    return data_[((static_cast<size_t>(r) * buses_ + bus) * 2 + epoch) * 2 + comp];
  }

 private:
  int realizations_;
  int buses_;
  std::vector<double> data_;
};

struct ExperimentConfig {
  std::string case_path;
  SignatureMode mode = SignatureMode::Ac;
  std::vector<double> coverages;   // fractions in (0,1]; P = round(coverage * B), min 1
  std::vector<int> pmu_counts;     // explicit P values, used alongside coverages
  int placements_per_p = 1000;
  int realizations = 100;
  std::vector<double> epsilon_grid = {0.0};
  NoiseModel noise;
  bool include_transformers = true;
  std::uint64_t master_seed = 1;
  int jobs = 1;
};

struct TrialRecord {
  int placement_idx = 0;
  int actual_branch = -1;
  int realization = 0;
  int identified = -1;
  double e1 = 0.0;
  double e2 = 0.0;
  double delta_e = 0.0;
};

struct ResultRow {
  double coverage = 0.0;
  int pmu_count = 0;
  double epsilon = 0.0;
  long n_trials = 0;
  double rate_correct = 0.0;
  double rate_misidentified = 0.0;
  double rate_correct_filtered = 0.0;
  double rate_misidentified_filtered = 0.0;
};

struct CoverageCell {
  double coverage = 0.0;
  int pmu_count = 0;
  std::vector<TrialRecord> trials;  // ordered by (placement_idx, actual, realization)
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::uint64_t master_seed = 0;
  std::uint64_t noise_seed = 0;
  std::string config_digest;
};

struct PhaseTimings {
  double parse_s = 0.0;
  double base_solve_s = 0.0;
  double signatures_s = 0.0;
  double trials_s = 0.0;
};

struct ExperimentResult {
  ResultTable table;
  std::vector<CoverageCell> cells;  // per P level, same order as table blocks
  PhaseTimings timings;
};

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// Uniform P-subsets of 0..B-1 without replacement, distinct across draws.
// Falls back to full enumeration when C(B, P) <= count.
std::vector<Placement> sample_placements(int buses, int pmu_count, int count,
                                         std::uint64_t seed);

NoiseTable sample_noise(const NoiseModel& model, int buses, int realizations);

// Applies one epoch slice of noise to each solution and restricts to the
// placement: v = (Vm + n_mag) * exp(j (Va + n_ang * pi/180)).
Observation synthesize_observation(const PowerFlowSolution& base, const PowerFlowSolution& post,
                                   const NoiseTable& noise, int realization,
                                   const Placement& placement);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Re-aggregates stored trials over an epsilon grid (pure post-processing).
std::vector<ResultRow> sweep_threshold(const CoverageCell& cell,
                                       const std::vector<double>& epsilon_grid);

// Two-line demo on the 4-bus system: PMUs on the reference bus and bus 2
// (external numbering), actual outage of line 1, candidates lines 1 and 2.
// Reference-bus noise is forced to zero in this mode.
struct Demo4Row {
  double d_re = 0.0;  // observed bus-2 voltage change
  double d_im = 0.0;
  int nearest_line = 0;  // 1 or 2
};

struct Demo4Result {
  Complex expected_line1;  // bus-2 signature of the line-1 outage
  Complex expected_line2;
  std::vector<Demo4Row> rows;
  int misidentified_count = 0;  // realizations landing nearer line 2
};

Demo4Result run_demo4(const std::string& case_path, int realizations, const NoiseModel& noise);

std::string result_table_to_csv(const ResultTable& table);
std::string trials_to_csv(const CoverageCell& cell);
std::string config_digest(const ExperimentConfig& cfg);

}  // namespace loid
