#pragma once

#include <map>

#include "loid/powerflow.hpp"

namespace loid {

// Ordered branch ids whose individual removal keeps the network connected.
struct CandidateSet {
  std::vector<int> branch_ids;  // ascending
  int size() const { return static_cast<int>(branch_ids.size()); }
};

struct Signature {
  Eigen::VectorXcd delta;  // expected complex voltage change, all B buses
  bool solved = false;
};

enum class SignatureMode { Ac, Dc };

struct SignatureSet {
  SignatureMode mode = SignatureMode::Ac;
  PowerFlowSolution base;              // pre-outage state
  std::map<int, Signature> per_candidate;
  std::string build_timestamp;

  const Signature& at(int branch_id) const;
};

// Candidate outages: in-service, non-islanding branches. Transformers
// (tap != 1 or phase shift != 0) are excluded when include_transformers
// is false.
CandidateSet candidate_outages(const Network& net, bool include_transformers = true);

// True iff removing branch l disconnects the in-service graph.
bool is_islanding(const Network& net, int branch_id);

// AC signature bank: one warm-started post-outage solve per candidate,
// with a flat-start retry on non-convergence.
SignatureSet build_signatures(const Network& net, const PowerFlowSolution& base,
                              const CandidateSet& cands, const SolverOptions& opts = {},
                              int jobs = 1);

// DC signature bank: angle-only deltas (stored in the real part).
SignatureSet build_dc_signatures(const Network& net, const CandidateSet& cands);

// CSV cache: branch_id,bus_id,d_re,d_im
std::string signatures_to_csv(const SignatureSet& sigs);
void load_signature_deltas(const std::string& csv, SignatureSet& sigs);

}  // namespace loid
