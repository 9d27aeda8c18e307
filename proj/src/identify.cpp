#include "loid/identify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace loid {

const char* category_name(Category c) {
  switch (c) {
    case Category::Correct: return "correct";
    case Category::Misidentified: return "misidentified";
    case Category::CorrectFiltered: return "correct_filtered";
    case Category::MisidentifiedFiltered: return "misidentified_filtered";
  }
  return "?";
}

double error_measure(const SignatureSet& sigs, int branch_id, const Observation& obs) {
  const Signature& sig = sigs.at(branch_id);
  if (!sig.solved) return std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (int p = 0; p < obs.placement.size(); ++p) {
    const int bus = obs.placement.pmu_buses[p];
    if (bus < 0 || bus >= sig.delta.size())
      throw ValidationError("placement bus " + std::to_string(bus) + " out of range");
    if (sigs.mode == SignatureMode::Ac) {
      acc += std::norm(sig.delta[bus] - obs.delta[p]);
    } else {
      const double d_obs = std::arg(obs.v_post[p]) - std::arg(obs.v_pre[p]);
      const double d = sig.delta[bus].real() - d_obs;
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

Ranking rank_candidates(const SignatureSet& sigs, const Observation& obs) {
  if (sigs.per_candidate.empty()) throw ValidationError("empty candidate set");
  Ranking rk;
  rk.mode = sigs.mode;
  rk.entries.reserve(sigs.per_candidate.size());
  for (const auto& [l, sig] : sigs.per_candidate)
    rk.entries.emplace_back(l, error_measure(sigs, l, obs));
  std::stable_sort(rk.entries.begin(), rk.entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  return rk;
}

Verdict apply_filter(const Ranking& ranking, double epsilon) {
  if (ranking.entries.empty()) throw ValidationError("empty ranking");
  if (epsilon < 0) throw ValidationError("epsilon must be >= 0");
  Verdict v;
  v.epsilon = epsilon;
  v.identified = ranking.entries[0].first;
  v.e1 = ranking.entries[0].second;
  v.e2 = ranking.entries.size() > 1 ? ranking.entries[1].second
                                    : std::numeric_limits<double>::infinity();
  v.delta_e = v.e2 - v.e1;
  v.conclusive = v.delta_e >= epsilon;
  return v;
}

Category categorize(const Verdict& verdict, int actual_branch) {
  const bool hit = verdict.identified == actual_branch;
  if (verdict.conclusive) return hit ? Category::Correct : Category::Misidentified;
  return hit ? Category::CorrectFiltered : Category::MisidentifiedFiltered;
}

}  // namespace loid
