#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "loid/scenario.hpp"

using namespace loid;

namespace {

const std::string kCase30 = std::string(LOID_DATA_DIR) + "/case30.m";
const std::string kCase4 = std::string(LOID_DATA_DIR) + "/case4gs.m";

Network path3() {
  return parse_case(
      "baseMVA = 100;\n"
      "bus = [1 3 0 0 0 0 1 1 0 135 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 135 1 1.1 0.9;"
      " 3 1 0 0 0 0 1 1 0 135 1 1.1 0.9;];\n"
      "gen = [1 0 0 0 0 1 100 1 0 0;];\n"
      "branch = [1 2 0.01 0.1 0 0 0 0 0 0 1; 2 3 0.01 0.1 0 0 0 0 0 0 1;];\n");
}

Network ring3() {
  return parse_case(
      "baseMVA = 100;\n"
      "bus = [1 3 0 0 0 0 1 1 0 135 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 135 1 1.1 0.9;"
      " 3 1 0 0 0 0 1 1 0 135 1 1.1 0.9;];\n"
      "gen = [1 0 0 0 0 1 100 1 0 0;];\n"
      "branch = [1 2 0.01 0.1 0 0 0 0 0 0 1; 2 3 0.01 0.1 0 0 0 0 0 0 1;"
      " 1 3 0.01 0.1 0 0 0 0 0 0 1;];\n");
}

// Union-find connectivity check over in-service branches minus one, fully
// independent of the library's BFS.
bool removal_keeps_connected_oracle(const Network& net, int skip_branch) {
  const int n = net.bus_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  int components = n;
  for (const auto& br : net.branches) {
    if (br.status != BranchStatus::InService || br.id == skip_branch) continue;
    int a = find(br.from), b = find(br.to);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

}  // namespace

TEST_CASE("every edge of a tree is a bridge") {
  Network net = path3();
  CHECK(is_islanding(net, 0));
  CHECK(is_islanding(net, 1));
  CHECK(candidate_outages(net).size() == 0);
}

TEST_CASE("a cycle has no bridges") {
  Network net = ring3();
  CandidateSet c = candidate_outages(net);
  CHECK(c.branch_ids == std::vector<int>{0, 1, 2});
}

TEST_CASE("30-bus case: 38 candidates, 3 islanding branches") {
  Network net = parse_case_file(kCase30);
  CandidateSet c = candidate_outages(net);
  CHECK(c.size() == 38);
  int islanding = 0;
  for (const auto& br : net.branches) {
    const bool island = is_islanding(net, br.id);
    CHECK(island == !removal_keeps_connected_oracle(net, br.id));
    if (island) ++islanding;
  }
  CHECK(islanding == 3);
  // candidate set is exactly the non-islanding branches, ascending
  std::vector<int> want;
  for (const auto& br : net.branches)
    if (!is_islanding(net, br.id)) want.push_back(br.id);
  CHECK(c.branch_ids == want);
}

TEST_CASE("islanding oracle agreement on the 4-bus ring") {
  Network net = parse_case_file(kCase4);
  for (const auto& br : net.branches) {
    CHECK_FALSE(is_islanding(net, br.id));
    CHECK(removal_keeps_connected_oracle(net, br.id));
  }
  CHECK(candidate_outages(net).size() == 4);
  CHECK_THROWS_AS(is_islanding(net, 77), ValidationError);
}

TEST_CASE("transformer exclusion flag") {
  Network net = parse_case_file(kCase30);
  net.branches[10].tap = 0.978;  // mark one candidate branch as a transformer
  CandidateSet with = candidate_outages(net, true);
  CandidateSet without = candidate_outages(net, false);
  CHECK(with.size() == 38);
  CHECK(without.size() == 37);
}

TEST_CASE("signature bank on the 30-bus case") {
  Network net = parse_case_file(kCase30);
  PowerFlowSolution base = solve_ac(net);
  REQUIRE(base.converged);
  CandidateSet cands = candidate_outages(net);
  SignatureSet sigs = build_signatures(net, base, cands);

  int solved = 0;
  for (const auto& [l, sig] : sigs.per_candidate)
    if (sig.solved) ++solved;
  CHECK(solved == 38);

  // each signature matches an independent flat-started re-solve
  for (int l : {0, 9, 27}) {
    PowerFlowSolution post = solve_ac(remove_branch(net, l));
    REQUIRE(post.converged);
    Eigen::VectorXcd want = post.phasors() - base.phasors();
    CHECK((sigs.at(l).delta - want).cwiseAbs().maxCoeff() <= 1e-7);
  }

  // re-inserting the branch returns to base
  for (int l : cands.branch_ids) {
    Eigen::VectorXcd v_post = base.phasors() + sigs.at(l).delta;
    PowerFlowSolution warm;
    warm.vm = v_post.cwiseAbs();
    warm.va.resize(net.bus_count());
    for (int k = 0; k < net.bus_count(); ++k) warm.va[k] = std::arg(v_post[k]);
    warm.converged = true;
    SolverOptions opts;
    opts.warm_start = warm;
    PowerFlowSolution back = solve_ac(net, opts);
    REQUIRE(back.converged);
    CHECK((back.phasors() - base.phasors()).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("signatures are deterministic and thread-count independent") {
  Network net = parse_case_file(kCase30);
  PowerFlowSolution base = solve_ac(net);
  CandidateSet cands = candidate_outages(net);
  SignatureSet a = build_signatures(net, base, cands, {}, 1);
  SignatureSet b = build_signatures(net, base, cands, {}, 4);
  for (int l : cands.branch_ids) {
    REQUIRE(a.at(l).solved == b.at(l).solved);
    CHECK((a.at(l).delta - b.at(l).delta).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("outage with negligible effect has a near-zero signature") {
  // a very high impedance parallel path carries almost no flow
  Network net = parse_case(
      "baseMVA = 100;\n"
      "bus = [1 3 0 0 0 0 1 1 0 135 1 1.1 0.9; 2 1 2 0.2 0 0 1 1 0 135 1 1.1 0.9;];\n"
      "gen = [1 0 0 0 0 1 100 1 0 0;];\n"
      "branch = [1 2 0.01 0.1 0 0 0 0 0 0 1; 1 2 0.5 5 0 0 0 0 0 0 1;];\n");
  PowerFlowSolution base = solve_ac(net);
  REQUIRE(base.converged);
  CandidateSet cands = candidate_outages(net);
  REQUIRE(cands.size() == 2);  // parallel branches are separate candidates
  SignatureSet sigs = build_signatures(net, base, cands);
  REQUIRE(sigs.at(0).solved);
  REQUIRE(sigs.at(1).solved);
  CHECK(sigs.at(1).delta.cwiseAbs().maxCoeff() < 1e-4);
  CHECK(sigs.at(0).delta.cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("4-bus line 1 outage moves bus 2") {
  Network net = parse_case_file(kCase4);
  PowerFlowSolution base = solve_ac(net);
  REQUIRE(base.converged);
  CandidateSet cands = candidate_outages(net);
  SignatureSet sigs = build_signatures(net, base, cands);
  const int bus2 = net.internal_ids.at(2);
  // independent second solve
  PowerFlowSolution post = solve_ac(remove_branch(net, 0));
  REQUIRE(post.converged);
  Complex want = post.phasors()[bus2] - base.phasors()[bus2];
  CHECK(std::abs(sigs.at(0).delta[bus2] - want) <= 1e-8);
  CHECK(std::abs(want) > 1e-3);
  // slack phasor is pinned, so its delta is exactly zero
  CHECK(std::abs(sigs.at(0).delta[net.slack_bus]) == 0.0);
}

TEST_CASE("signature CSV cache round trip") {
  Network net = parse_case_file(kCase4);
  PowerFlowSolution base = solve_ac(net);
  CandidateSet cands = candidate_outages(net);
  SignatureSet sigs = build_signatures(net, base, cands);
  std::string csv = signatures_to_csv(sigs);

  SignatureSet loaded;
  loaded.mode = SignatureMode::Ac;
  loaded.base = base;
  load_signature_deltas(csv, loaded);
  for (int l : cands.branch_ids) {
    REQUIRE(loaded.at(l).solved);
    CHECK((loaded.at(l).delta - sigs.at(l).delta).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("dc signatures exist for all candidates") {
  Network net = parse_case_file(kCase30);
  CandidateSet cands = candidate_outages(net);
  SignatureSet sigs = build_dc_signatures(net, cands);
  CHECK(sigs.mode == SignatureMode::Dc);
  for (int l : cands.branch_ids) {
    REQUIRE(sigs.at(l).solved);
    CHECK(sigs.at(l).delta.imag().cwiseAbs().maxCoeff() == 0.0);
  }
  // removing a loaded line must shift some angle
  CHECK(sigs.at(0).delta.real().cwiseAbs().maxCoeff() > 1e-4);
}
