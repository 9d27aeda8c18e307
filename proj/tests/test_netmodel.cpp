#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "loid/netmodel.hpp"

using namespace loid;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::string kCase30 = std::string(LOID_DATA_DIR) + "/case30.m";
const std::string kCase4 = std::string(LOID_DATA_DIR) + "/case4gs.m";

// Straight-line Y-bus assembly oracle: dense, element by element, no reuse
// of the library's stamping code.
Eigen::MatrixXcd dense_ybus_oracle(const Network& net) {
  const int n = net.bus_count();
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& br : net.branches) {
    if (br.status != BranchStatus::InService) continue;
    Complex ys = 1.0 / Complex(br.r, br.x);
    Complex half_charge(0.0, br.b_charging / 2.0);
    Complex t = std::polar(br.tap, br.phase_shift);
    y(br.from, br.from) += (ys + half_charge) / (t * std::conj(t));
    y(br.to, br.to) += ys + half_charge;
    y(br.from, br.to) += -ys / std::conj(t);
    y(br.to, br.from) += -ys / t;
  }
  for (const auto& b : net.buses) y(b.id, b.id) += Complex(b.gs, b.bs);
  return y;
}

Network two_bus_net(double r, double x, double charging = 0.0) {
  Network net;
  net.base_mva = 100.0;
  Bus b0;
  b0.id = 0;
  b0.kind = BusKind::Slack;
  Bus b1;
  b1.id = 1;
  net.buses = {b0, b1};
  net.external_ids = {1, 2};
  net.internal_ids = {{1, 0}, {2, 1}};
  net.slack_bus = 0;
  Branch br;
  br.id = 0;
  br.from = 0;
  br.to = 1;
  br.r = r;
  br.x = x;
  br.b_charging = charging;
  net.branches = {br};
  return net;
}

}  // namespace

TEST_CASE("parse case30: bus/branch/gen counts") {
  Network net = parse_case_file(kCase30);
  CHECK(net.bus_count() == 30);
  CHECK(net.branches.size() == 41);
  CHECK(net.generators.size() == 6);
  CHECK(net.base_mva == 100.0);
  CHECK(net.buses[net.slack_bus].kind == BusKind::Slack);
  // loads are per-unit on baseMVA
  CHECK(net.buses[net.internal_ids.at(2)].pd == doctest::Approx(0.217));
  CHECK(net.buses[net.internal_ids.at(8)].qd == doctest::Approx(0.30));
}

TEST_CASE("parse case4gs: 4 buses and 4 branches") {
  Network net = parse_case_file(kCase4);
  CHECK(net.bus_count() == 4);
  CHECK(net.branches.size() == 4);
  CHECK(net.generators.size() == 2);
}

TEST_CASE("parser accepts semicolon-packed rows and % comments") {
  const std::string text =
      "% compact case\n"
      "baseMVA = 100;\n"
      "bus = [1 3 0 0 0 0 1 1 0 135 1 1.1 0.9; 2 1 10 5 0 0 1 1 0 135 1 1.1 0.9;];\n"
      "gen = [1 0 0 0 0 1 100 1 0 0;];\n"
      "branch = [1 2 0.01 0.1 0 0 0 0 0 0 1;];\n";
  Network net = parse_case(text);
  CHECK(net.bus_count() == 2);
  CHECK(net.branches.size() == 1);
  CHECK(net.buses[1].pd == doctest::Approx(0.10));
}

TEST_CASE("parser errors carry line numbers") {
  const std::string text =
      "baseMVA = 100;\n"
      "bus = [\n"
      "1 3 0 0 0 0 1 1 0 135 1 1.1 0.9;\n"
      "2 1 bogus 5 0 0 1 1 0 135 1 1.1 0.9;\n"
      "];\n";
  CHECK_THROWS_WITH_AS(parse_case(text), doctest::Contains("line 4"), ParseError);
}

TEST_CASE("dangling branch bus reference is a validation error") {
  const std::string text =
      "baseMVA = 100;\n"
      "bus = [1 3 0 0 0 0 1 1 0 135 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 135 1 1.1 0.9;];\n"
      "gen = [1 0 0 0 0 1 100 1 0 0;];\n"
      "branch = [1 99 0.01 0.1 0 0 0 0 0 0 1;];\n";
  CHECK_THROWS_AS(parse_case(text), ValidationError);
}

TEST_CASE("zero-impedance branch is rejected") {
  const std::string text =
      "baseMVA = 100;\n"
      "bus = [1 3 0 0 0 0 1 1 0 135 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 135 1 1.1 0.9;];\n"
      "gen = [1 0 0 0 0 1 100 1 0 0;];\n"
      "branch = [1 2 0 0 0 0 0 0 0 0 1;];\n";
  CHECK_THROWS_AS(parse_case(text), ValidationError);
}

TEST_CASE("admittance: no branches, no shunts -> zero matrix") {
  Network net = two_bus_net(0.0, 0.1);
  net.branches.clear();
  SparseComplex y = admittance_matrix(net);
  CHECK(Eigen::MatrixXcd(y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("admittance: single series element Y = 1/jx pattern") {
  Network net = two_bus_net(0.0, 0.1);
  Eigen::MatrixXcd y = admittance_matrix(net);
  CHECK(y(0, 0) == Complex(0.0, -10.0));
  CHECK(y(1, 1) == Complex(0.0, -10.0));
  CHECK(y(0, 1) == Complex(0.0, 10.0));
  CHECK(y(1, 0) == Complex(0.0, 10.0));
}

TEST_CASE("admittance matches dense assembly oracle") {
  for (const auto& path : {kCase4, kCase30}) {
    Network net = parse_case_file(path);
    Eigen::MatrixXcd got = admittance_matrix(net);
    Eigen::MatrixXcd want = dense_ybus_oracle(net);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("admittance row sums reduce to shunt + charging when taps are unity") {
  Network net = parse_case_file(kCase30);
  Eigen::MatrixXcd y = admittance_matrix(net);
  for (int i = 0; i < net.bus_count(); ++i) {
    Complex want(net.buses[i].gs, net.buses[i].bs);
    for (const auto& br : net.branches) {
      if (br.status != BranchStatus::InService) continue;
      if (br.from == i || br.to == i) want += Complex(0.0, br.b_charging / 2.0);
    }
    CHECK(std::abs(y.row(i).sum() - want) < 1e-12);
  }
}

TEST_CASE("remove_branch: value semantics and stamp difference") {
  Network net = parse_case_file(kCase30);
  const int l = 7;
  Network out = remove_branch(net, l);
  CHECK(net.in_service_branch_count() == 41);
  CHECK(out.in_service_branch_count() == 40);
  CHECK_THROWS_AS(remove_branch(out, l), ValidationError);
  CHECK_THROWS_AS(remove_branch(net, 999), ValidationError);

  // difference is exactly the branch stamp, nonzero only on its 2x2 block
  Eigen::MatrixXcd diff =
      Eigen::MatrixXcd(admittance_matrix(net)) - Eigen::MatrixXcd(admittance_matrix(out));
  const Branch& br = net.branch(l);
  Network lone = two_bus_net(0, 1);
  lone.branches = {br};
  lone.branches[0].from = br.from;
  lone.branches[0].to = br.to;
  for (int i = 0; i < net.bus_count(); ++i)
    for (int j = 0; j < net.bus_count(); ++j) {
      const bool on_block = (i == br.from || i == br.to) && (j == br.from || j == br.to);
      if (!on_block) CHECK(std::abs(diff(i, j)) == 0.0);
    }
  Complex ys = 1.0 / Complex(br.r, br.x);
  CHECK(std::abs(diff(br.from, br.to) + ys) < 1e-14);
}

TEST_CASE("serialize/parse round trip") {
  for (const auto& path : {kCase4, kCase30}) {
    Network a = parse_case(read_file(path));
    Network b = parse_case(serialize(a));
    REQUIRE(b.bus_count() == a.bus_count());
    REQUIRE(b.branches.size() == a.branches.size());
    REQUIRE(b.generators.size() == a.generators.size());
    CHECK(b.base_mva == a.base_mva);
    CHECK(b.slack_bus == a.slack_bus);
    CHECK(b.external_ids == a.external_ids);
    for (int i = 0; i < a.bus_count(); ++i) {
      CHECK(b.buses[i].kind == a.buses[i].kind);
      CHECK(b.buses[i].pd == a.buses[i].pd);
      CHECK(b.buses[i].qd == a.buses[i].qd);
      CHECK(b.buses[i].gs == a.buses[i].gs);
      CHECK(b.buses[i].bs == a.buses[i].bs);
      CHECK(b.buses[i].vm_init == a.buses[i].vm_init);
      CHECK(b.buses[i].va_init == doctest::Approx(a.buses[i].va_init).epsilon(1e-15));
      CHECK(b.buses[i].base_kv == a.buses[i].base_kv);
    }
    for (size_t i = 0; i < a.branches.size(); ++i) {
      CHECK(b.branches[i].from == a.branches[i].from);
      CHECK(b.branches[i].to == a.branches[i].to);
      CHECK(b.branches[i].r == a.branches[i].r);
      CHECK(b.branches[i].x == a.branches[i].x);
      CHECK(b.branches[i].b_charging == a.branches[i].b_charging);
      CHECK(b.branches[i].tap == a.branches[i].tap);
      CHECK(b.branches[i].status == a.branches[i].status);
    }
    for (size_t i = 0; i < a.generators.size(); ++i) {
      CHECK(b.generators[i].bus == a.generators[i].bus);
      CHECK(b.generators[i].pg == a.generators[i].pg);
      CHECK(b.generators[i].qg == a.generators[i].qg);
      CHECK(b.generators[i].vset == a.generators[i].vset);
    }
  }
}

TEST_CASE("disconnected case is rejected") {
  const std::string text =
      "baseMVA = 100;\n"
      "bus = [1 3 0 0 0 0 1 1 0 135 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 135 1 1.1 0.9;"
      " 3 1 0 0 0 0 1 1 0 135 1 1.1 0.9;];\n"
      "gen = [1 0 0 0 0 1 100 1 0 0;];\n"
      "branch = [1 2 0.01 0.1 0 0 0 0 0 0 1;];\n";
  CHECK_THROWS_AS(parse_case(text), ValidationError);
}
