#pragma once

#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace loid {

using Complex = std::complex<double>;
using SparseComplex = Eigen::SparseMatrix<Complex>;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BusKind { Slack, PV, PQ };

struct Bus {
  int id = 0;  // internal 0-based id
  BusKind kind = BusKind::PQ;
  double pd = 0.0;       // load, pu on base_mva
  double qd = 0.0;
  double gs = 0.0;       // shunt, pu
  double bs = 0.0;
  double vm_init = 1.0;  // pu
  double va_init = 0.0;  // rad
  double base_kv = 0.0;
};

enum class BranchStatus { InService, Out };

struct Branch {
  int id = 0;
  int from = 0;  // internal bus ids
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;  // total line charging, pu
  double tap = 1.0;         // off-nominal ratio
  double phase_shift = 0.0; // rad
  BranchStatus status = BranchStatus::InService;
};

enum class GenStatus { InService, Out };

struct Generator {
  int bus = 0;
  double pg = 0.0;  // pu
  double qg = 0.0;
  double vset = 1.0;
  GenStatus status = GenStatus::InService;
};

// Immutable after construction; safe to share across worker threads.
struct Network {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  int slack_bus = 0;

  // external (case file) bus numbering <-> internal dense ids
  std::vector<int> external_ids;      // internal -> external
  std::map<int, int> internal_ids;   // external -> internal

  int bus_count() const { return static_cast<int>(buses.size()); }

  const Branch& branch(int id) const;
  int in_service_branch_count() const;

  // Net injection Pg - Pd (and Qg - Qd) per bus, pu.
  std::vector<double> net_p() const;
  std::vector<double> net_q() const;

  // Voltage setpoint for PV/slack buses: Vset of an in-service generator
  // at the bus, falling back to vm_init.
  double voltage_setpoint(int bus) const;
  bool has_in_service_gen(int bus) const;
};

Network parse_case(const std::string& text);
Network parse_case_file(const std::string& path);
std::string serialize(const Network& net);

// Checks the invariants listed in the Network contract; throws ValidationError.
void validate(const Network& net);

SparseComplex admittance_matrix(const Network& net);

// Returns a copy with branch l switched out. The input is not modified.
Network remove_branch(const Network& net, int branch_id);

// Connectivity over in-service branches, by BFS from the slack bus.
bool is_connected(const Network& net);

}  // namespace loid
