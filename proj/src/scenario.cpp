#include "loid/scenario.hpp"

#include <chrono>
#include <sstream>
#include <thread>

namespace loid {

const Signature& SignatureSet::at(int branch_id) const {
  auto it = per_candidate.find(branch_id);
  if (it == per_candidate.end())
    throw ValidationError("branch " + std::to_string(branch_id) + " is not a candidate");
  return it->second;
}

bool is_islanding(const Network& net, int branch_id) {
  const Branch& br = net.branch(branch_id);
  if (br.status != BranchStatus::InService)
    throw ValidationError("branch " + std::to_string(branch_id) + " is not in service");
  return !is_connected(remove_branch(net, branch_id));
}

CandidateSet candidate_outages(const Network& net, bool include_transformers) {
  CandidateSet cands;
  for (const auto& br : net.branches) {
    if (br.status != BranchStatus::InService) continue;
    if (!include_transformers && (br.tap != 1.0 || br.phase_shift != 0.0)) continue;
    if (!is_islanding(net, br.id)) cands.branch_ids.push_back(br.id);
  }
  return cands;
}

SignatureSet build_signatures(const Network& net, const PowerFlowSolution& base,
                              const CandidateSet& cands, const SolverOptions& opts, int jobs) {
  if (!base.converged) throw SolverError("base case did not converge");

  SignatureSet sigs;
  sigs.mode = SignatureMode::Ac;
  sigs.base = base;
  {
    std::ostringstream ts;
    ts << std::chrono::duration_cast<std::chrono::seconds>(
              std::chrono::system_clock::now().time_since_epoch())
              .count();
    sigs.build_timestamp = ts.str();
  }
  for (int l : cands.branch_ids) sigs.per_candidate[l] = Signature{};

  const Eigen::VectorXcd v_base = base.phasors();
  auto solve_one = [&](int l) {
    Signature sig;
    const Network outaged = remove_branch(net, l);
    SolverOptions warm = opts;
    warm.warm_start = base;
    PowerFlowSolution post;
    try {
      post = solve_ac(outaged, warm);
      if (!post.converged) {
        SolverOptions flat = opts;
        flat.warm_start.reset();
        post = solve_ac(outaged, flat);
      }
    } catch (const SolverError&) {
      post.converged = false;
    }
    if (post.converged) {
      sig.delta = post.phasors() - v_base;
      sig.solved = true;
    }
    return sig;
  };

  const auto& ids = cands.branch_ids;
  if (jobs <= 1 || ids.size() < 2) {
    for (int l : ids) sigs.per_candidate[l] = solve_one(l);
  } else {
    std::vector<Signature> results(ids.size());
    std::vector<std::thread> workers;
    const int nw = std::min<int>(jobs, static_cast<int>(ids.size()));
    for (int w = 0; w < nw; ++w) {
      workers.emplace_back([&, w] {
        for (size_t i = w; i < ids.size(); i += nw) results[i] = solve_one(ids[i]);
      });
    }
    for (auto& t : workers) t.join();
    for (size_t i = 0; i < ids.size(); ++i) sigs.per_candidate[ids[i]] = std::move(results[i]);
  }
  return sigs;
}

SignatureSet build_dc_signatures(const Network& net, const CandidateSet& cands) {
  SignatureSet sigs;
  sigs.mode = SignatureMode::Dc;
  const Eigen::VectorXd theta_base = solve_dc(net);
  sigs.base.va = theta_base;
  sigs.base.vm = Eigen::VectorXd::Ones(net.bus_count());
  sigs.base.converged = true;
  for (int l : cands.branch_ids) {
    Signature sig;
    try {
      const Eigen::VectorXd theta_post = solve_dc(remove_branch(net, l));
      sig.delta = (theta_post - theta_base).cast<Complex>();
      sig.solved = true;
    } catch (const SolverError&) {
      sig.solved = false;
    }
    sigs.per_candidate[l] = sig;
  }
  return sigs;
}

std::string signatures_to_csv(const SignatureSet& sigs) {
  std::ostringstream os;
  os.precision(17);
  os << "branch_id,bus_id,d_re,d_im\n";
  for (const auto& [l, sig] : sigs.per_candidate) {
    if (!sig.solved) continue;
    for (Eigen::Index k = 0; k < sig.delta.size(); ++k)
      os << l << ',' << k << ',' << sig.delta[k].real() << ',' << sig.delta[k].imag() << '\n';
  }
  return os.str();
}

void load_signature_deltas(const std::string& csv, SignatureSet& sigs) {
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);  // header
  const int n = static_cast<int>(sigs.base.vm.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string tok;
    std::vector<std::string> fields;
    while (std::getline(row, tok, ',')) fields.push_back(tok);
    if (fields.size() != 4) throw ParseError("bad signature CSV row: " + line);
    const int l = std::stoi(fields[0]);
    const int bus = std::stoi(fields[1]);
    auto& sig = sigs.per_candidate[l];
    if (sig.delta.size() != n) {
      sig.delta = Eigen::VectorXcd::Zero(n);
      sig.solved = true;
    }
    if (bus < 0 || bus >= n) throw ParseError("bus out of range in signature CSV: " + line);
    sig.delta[bus] = Complex(std::stod(fields[2]), std::stod(fields[3]));
  }
}

}  // namespace loid
