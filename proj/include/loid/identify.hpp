#pragma once

#include "loid/scenario.hpp"

namespace loid {

struct Placement {
  std::vector<int> pmu_buses;  // ordered, no duplicates
  int size() const { return static_cast<int>(pmu_buses.size()); }
};

struct Observation {
  Placement placement;
  Eigen::VectorXcd v_pre;   // length P
  Eigen::VectorXcd v_post;
  Eigen::VectorXcd delta;   // v_post - v_pre
};

struct Ranking {
  std::vector<std::pair<int, double>> entries;  // (branch id, E), ascending E
  SignatureMode mode = SignatureMode::Ac;
};

struct Verdict {
  int identified = -1;  // best-ranked branch, regardless of conclusiveness
  double e1 = 0.0;
  double e2 = 0.0;
  double delta_e = 0.0;
  bool conclusive = false;
  double epsilon = 0.0;
};

enum class Category { Correct, Misidentified, CorrectFiltered, MisidentifiedFiltered };

const char* category_name(Category c);

// Distance between the candidate's expected voltage change and the observed
// one, over the placement buses. AC mode: Euclidean norm of the complex
// difference. DC mode: Euclidean norm of the angle difference. Unsolved
// candidates score +inf.
double error_measure(const SignatureSet& sigs, int branch_id, const Observation& obs);

// Ascending stable sort by E; exact ties broken by ascending branch id.
Ranking rank_candidates(const SignatureSet& sigs, const Observation& obs);

// delta_e = E2 - E1 (+inf for a single candidate); conclusive iff delta_e >= epsilon.
Verdict apply_filter(const Ranking& ranking, double epsilon);

Category categorize(const Verdict& verdict, int actual_branch);

}  // namespace loid
