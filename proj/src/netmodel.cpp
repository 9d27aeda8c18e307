#include "loid/netmodel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>

namespace loid {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Matrix {
  std::vector<std::vector<double>> rows;
  std::vector<int> line_numbers;  // source line of each row, for diagnostics
};

// Strips a '%' comment (MATLAB style) from a line.
std::string strip_comment(const std::string& line) {
  auto pos = line.find('%');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

bool parse_row(const std::string& text, std::vector<double>& out) {
  out.clear();
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    if (tok == "," || tok == ";") continue;
    // tolerate trailing commas within a row
    while (!tok.empty() && (tok.back() == ',' || tok.back() == ';')) tok.pop_back();
    if (tok.empty()) continue;
    try {
      size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) return false;
      out.push_back(v);
    } catch (const std::exception&) {
      return false;
    }
  }
  return true;
}

// Reads the text once and extracts the named numeric matrices plus baseMVA.
// Accepts `name = [ ... ];` with rows separated by newlines and/or semicolons,
// with or without an `mpc.` prefix.
class CaseReader {
 public:
  explicit CaseReader(const std::string& text) {
    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    std::string pending_name;
    std::ostringstream pending_body;
    int pending_start = 0;
    while (std::getline(is, raw)) {
      ++lineno;
      std::string line = strip_comment(raw);
      if (!pending_name.empty()) {
        auto close = line.find(']');
        if (close != std::string::npos) {
          pending_body << line.substr(0, close) << '\n';
          finish_matrix(pending_name, pending_body.str(), pending_start);
          pending_name.clear();
          pending_body.str("");
        } else {
          pending_body << line << '\n';
        }
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string name = trim(line.substr(0, eq));
      if (name.rfind("mpc.", 0) == 0) name = name.substr(4);
      std::string rhs = trim(line.substr(eq + 1));
      if (name == "baseMVA") {
        if (!rhs.empty() && rhs.back() == ';') rhs.pop_back();
        try {
          base_mva_ = std::stod(rhs);
          have_base_ = true;
        } catch (const std::exception&) {
          throw ParseError("line " + std::to_string(lineno) + ": bad baseMVA value '" + rhs + "'");
        }
      } else if (!rhs.empty() && rhs.front() == '[') {
        std::string body = rhs.substr(1);
        auto close = body.find(']');
        if (close != std::string::npos) {
          finish_matrix(name, body.substr(0, close), lineno);
        } else {
          pending_name = name;
          pending_start = lineno;
          pending_body.str("");
          pending_body << body << '\n';
        }
      }
    }
    if (!pending_name.empty())
      throw ParseError("unterminated matrix '" + pending_name + "' starting at line " +
                       std::to_string(pending_start));
  }

  bool have_base() const { return have_base_; }
  double base_mva() const { return base_mva_; }

  const Matrix* matrix(const std::string& name) const {
    auto it = matrices_.find(name);
    return it == matrices_.end() ? nullptr : &it->second;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  void finish_matrix(const std::string& name, const std::string& body, int start_line) {
    Matrix m;
    int lineno = start_line;
    std::istringstream is(body);
    std::string chunk_line;
    while (std::getline(is, chunk_line)) {
      // a physical line may hold several ';'-terminated rows
      std::istringstream rows(chunk_line);
      std::string row_text;
      while (std::getline(rows, row_text, ';')) {
        std::vector<double> vals;
        if (!parse_row(row_text, vals))
          throw ParseError("line " + std::to_string(lineno) + ": malformed row in matrix '" +
                           name + "': " + row_text);
        if (!vals.empty()) {
          m.rows.push_back(std::move(vals));
          m.line_numbers.push_back(lineno);
        }
      }
      ++lineno;
    }
    matrices_[name] = std::move(m);
  }

  std::map<std::string, Matrix> matrices_;
  double base_mva_ = 0.0;
  bool have_base_ = false;
};

void require_cols(const Matrix& m, size_t n, const std::string& name) {
  for (size_t i = 0; i < m.rows.size(); ++i)
    if (m.rows[i].size() < n)
      throw ParseError("line " + std::to_string(m.line_numbers[i]) + ": " + name +
                       " row has " + std::to_string(m.rows[i].size()) + " columns, need at least " +
                       std::to_string(n));
}

}  // namespace

const Branch& Network::branch(int id) const {
  for (const auto& br : branches)
    if (br.id == id) return br;
  throw ValidationError("unknown branch id " + std::to_string(id));
}

int Network::in_service_branch_count() const {
  return static_cast<int>(std::count_if(branches.begin(), branches.end(), [](const Branch& b) {
    return b.status == BranchStatus::InService;
  }));
}

std::vector<double> Network::net_p() const {
  std::vector<double> p(buses.size());
  for (const auto& b : buses) p[b.id] = -b.pd;
  for (const auto& g : generators)
    if (g.status == GenStatus::InService) p[g.bus] += g.pg;
  return p;
}

std::vector<double> Network::net_q() const {
  std::vector<double> q(buses.size());
  for (const auto& b : buses) q[b.id] = -b.qd;
  for (const auto& g : generators)
    if (g.status == GenStatus::InService) q[g.bus] += g.qg;
  return q;
}

double Network::voltage_setpoint(int bus) const {
  for (const auto& g : generators)
    if (g.bus == bus && g.status == GenStatus::InService) return g.vset;
  return buses[bus].vm_init;
}

bool Network::has_in_service_gen(int bus) const {
  for (const auto& g : generators)
    if (g.bus == bus && g.status == GenStatus::InService) return true;
  return false;
}

Network parse_case(const std::string& text) {
  CaseReader reader(text);
  if (!reader.have_base()) throw ParseError("missing baseMVA");
  const Matrix* bus = reader.matrix("bus");
  const Matrix* gen = reader.matrix("gen");
  const Matrix* branch = reader.matrix("branch");
  if (!bus) throw ParseError("missing bus matrix");
  if (!branch) throw ParseError("missing branch matrix");
  require_cols(*bus, 10, "bus");
  require_cols(*branch, 11, "branch");
  if (gen) require_cols(*gen, 8, "gen");

  Network net;
  net.base_mva = reader.base_mva();
  if (net.base_mva <= 0) throw ValidationError("baseMVA must be positive");

  net.buses.reserve(bus->rows.size());
  for (size_t i = 0; i < bus->rows.size(); ++i) {
    const auto& row = bus->rows[i];
    int ext = static_cast<int>(row[0]);
    if (net.internal_ids.count(ext))
      throw ValidationError("line " + std::to_string(bus->line_numbers[i]) +
                            ": duplicate bus id " + std::to_string(ext));
    Bus b;
    b.id = static_cast<int>(net.buses.size());
    int type = static_cast<int>(row[1]);
    switch (type) {
      case 1: b.kind = BusKind::PQ; break;
      case 2: b.kind = BusKind::PV; break;
      case 3: b.kind = BusKind::Slack; break;
      default:
        throw ValidationError("line " + std::to_string(bus->line_numbers[i]) +
                              ": bad bus type " + std::to_string(type));
    }
    b.pd = row[2] / net.base_mva;
    b.qd = row[3] / net.base_mva;
    b.gs = row[4] / net.base_mva;
    b.bs = row[5] / net.base_mva;
    b.vm_init = row[7];
    b.va_init = row[8] * kDegToRad;
    b.base_kv = row[9];
    net.internal_ids[ext] = b.id;
    net.external_ids.push_back(ext);
    net.buses.push_back(b);
  }

  int slack_count = 0;
  for (const auto& b : net.buses)
    if (b.kind == BusKind::Slack) {
      net.slack_bus = b.id;
      ++slack_count;
    }
  if (slack_count != 1)
    throw ValidationError("expected exactly one slack bus, found " + std::to_string(slack_count));

  if (gen) {
    for (size_t i = 0; i < gen->rows.size(); ++i) {
      const auto& row = gen->rows[i];
      int ext = static_cast<int>(row[0]);
      auto it = net.internal_ids.find(ext);
      if (it == net.internal_ids.end())
        throw ValidationError("line " + std::to_string(gen->line_numbers[i]) +
                              ": generator references unknown bus " + std::to_string(ext));
      Generator g;
      g.bus = it->second;
      g.pg = row[1] / net.base_mva;
      g.qg = row[2] / net.base_mva;
      g.vset = row[5];
      g.status = static_cast<int>(row[7]) > 0 ? GenStatus::InService : GenStatus::Out;
      net.generators.push_back(g);
    }
  }

  for (size_t i = 0; i < branch->rows.size(); ++i) {
    const auto& row = branch->rows[i];
    Branch br;
    br.id = static_cast<int>(i);
    auto fit = net.internal_ids.find(static_cast<int>(row[0]));
    auto tit = net.internal_ids.find(static_cast<int>(row[1]));
    if (fit == net.internal_ids.end() || tit == net.internal_ids.end())
      throw ValidationError("line " + std::to_string(branch->line_numbers[i]) +
                            ": branch references unknown bus");
    br.from = fit->second;
    br.to = tit->second;
    br.r = row[2];
    br.x = row[3];
    br.b_charging = row[4];
    br.tap = row[8] == 0.0 ? 1.0 : row[8];
    br.phase_shift = row[9] * kDegToRad;
    br.status = static_cast<int>(row[10]) > 0 ? BranchStatus::InService : BranchStatus::Out;
    if (br.r == 0.0 && br.x == 0.0)
      throw ValidationError("line " + std::to_string(branch->line_numbers[i]) +
                            ": branch " + std::to_string(br.id) + " has zero impedance");
    net.branches.push_back(br);
  }

  validate(net);
  return net;
}

Network parse_case_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open case file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_case(ss.str());
}

std::string serialize(const Network& net) {
  std::ostringstream os;
  os.precision(17);
  os << "baseMVA = " << net.base_mva << ";\n";
  os << "bus = [\n";
  for (const auto& b : net.buses) {
    int type = b.kind == BusKind::Slack ? 3 : b.kind == BusKind::PV ? 2 : 1;
    os << '\t' << net.external_ids[b.id] << '\t' << type << '\t' << b.pd * net.base_mva << '\t'
       << b.qd * net.base_mva << '\t' << b.gs * net.base_mva << '\t' << b.bs * net.base_mva
       << "\t1\t" << b.vm_init << '\t' << b.va_init / kDegToRad << '\t' << b.base_kv
       << "\t1\t1.1\t0.9;\n";
  }
  os << "];\ngen = [\n";
  for (const auto& g : net.generators) {
    os << '\t' << net.external_ids[g.bus] << '\t' << g.pg * net.base_mva << '\t'
       << g.qg * net.base_mva << "\t0\t0\t" << g.vset << '\t' << net.base_mva << '\t'
       << (g.status == GenStatus::InService ? 1 : 0) << "\t0\t0;\n";
  }
  os << "];\nbranch = [\n";
  for (const auto& br : net.branches) {
    os << '\t' << net.external_ids[br.from] << '\t' << net.external_ids[br.to] << '\t' << br.r
       << '\t' << br.x << '\t' << br.b_charging << "\t0\t0\t0\t" << (br.tap == 1.0 ? 0.0 : br.tap)
       << '\t' << br.phase_shift / kDegToRad << '\t'
       << (br.status == BranchStatus::InService ? 1 : 0) << ";\n";
  }
  os << "];\n";
  return os.str();
}

void validate(const Network& net) {
  if (net.base_mva <= 0) throw ValidationError("baseMVA must be positive");
  if (net.buses.empty()) throw ValidationError("no buses");
  for (const auto& b : net.buses) {
    if (b.vm_init <= 0) throw ValidationError("bus " + std::to_string(b.id) + ": Vm_init <= 0");
    if (b.kind == BusKind::Slack && b.id != net.slack_bus)
      throw ValidationError("multiple slack buses");
  }
  for (const auto& br : net.branches) {
    if (br.from == br.to) throw ValidationError("branch " + std::to_string(br.id) + ": self loop");
    if (br.tap <= 0) throw ValidationError("branch " + std::to_string(br.id) + ": tap <= 0");
    if (br.r == 0.0 && br.x == 0.0)
      throw ValidationError("branch " + std::to_string(br.id) + ": zero impedance");
    if (br.from < 0 || br.from >= net.bus_count() || br.to < 0 || br.to >= net.bus_count())
      throw ValidationError("branch " + std::to_string(br.id) + ": bus out of range");
  }
  for (const auto& g : net.generators) {
    if (g.bus < 0 || g.bus >= net.bus_count())
      throw ValidationError("generator references bus out of range");
    if (g.status == GenStatus::InService && g.vset <= 0)
      throw ValidationError("in-service generator with Vset <= 0");
  }
  if (!is_connected(net))
    throw ValidationError("in-service branch graph is not connected");
}

SparseComplex admittance_matrix(const Network& net) {
  const int n = net.bus_count();
  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(net.branches.size() * 4 + n);
  for (const auto& br : net.branches) {
    if (br.status != BranchStatus::InService) continue;
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex ysh(0.0, br.b_charging / 2.0);
    const Complex tap = std::polar(br.tap, br.phase_shift);
    const Complex yff = (ys + ysh) / (tap * std::conj(tap));
    const Complex yft = -ys / std::conj(tap);
    const Complex ytf = -ys / tap;
    const Complex ytt = ys + ysh;
    trips.emplace_back(br.from, br.from, yff);
    trips.emplace_back(br.from, br.to, yft);
    trips.emplace_back(br.to, br.from, ytf);
    trips.emplace_back(br.to, br.to, ytt);
  }
  for (const auto& b : net.buses)
    trips.emplace_back(b.id, b.id, Complex(b.gs, b.bs));
  SparseComplex y(n, n);
  y.setFromTriplets(trips.begin(), trips.end());
  return y;
}

Network remove_branch(const Network& net, int branch_id) {
  Network out = net;
  for (auto& br : out.branches) {
    if (br.id == branch_id) {
      if (br.status != BranchStatus::InService)
        throw ValidationError("branch " + std::to_string(branch_id) + " is not in service");
      br.status = BranchStatus::Out;
      return out;
    }
  }
  throw ValidationError("unknown branch id " + std::to_string(branch_id));
}

bool is_connected(const Network& net) {
  const int n = net.bus_count();
  if (n == 0) return false;
  std::vector<std::vector<int>> adj(n);
  for (const auto& br : net.branches) {
    if (br.status != BranchStatus::InService) continue;
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(net.slack_bus);
  seen[net.slack_bus] = 1;
  int count = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
  }
  return count == n;
}

}  // namespace loid
