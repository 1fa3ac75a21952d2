#include "guidance/scenario.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace guidance::scenario {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool valid_name(const std::string& s) {
  if (s.empty()) {
    return false;
  }
  for (const char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.' && c != '-') {
      return false;
    }
  }
  return true;
}

void write_node(std::ostream& os, const KvNode& node, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  for (const auto& [k, v] : node.values) {
    os << pad << k << " = " << v << "\n";
  }
  for (const auto& [name, child] : node.children) {
    os << pad << name << " {\n";
    write_node(os, child, depth + 1);
    os << pad << "}\n";
  }
}

}  // namespace

const KvNode* KvNode::child(const std::string& name) const {
  const auto it = children.find(name);
  return it == children.end() ? nullptr : &it->second;
}

KvNode parse_kv(const std::string& text) {
  KvNode root;
  std::vector<KvNode*> stack{&root};
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    if (line == "}") {
      if (stack.size() == 1) {
        throw ScenarioError("line " + std::to_string(line_no) + ": unmatched '}'");
      }
      stack.pop_back();
      continue;
    }
    if (line.back() == '{') {
      const std::string name = trim(line.substr(0, line.size() - 1));
      if (!valid_name(name)) {
        throw ScenarioError("line " + std::to_string(line_no) + ": bad section name '" + name +
                            "'");
      }
      KvNode& child = stack.back()->children[name];
      stack.push_back(&child);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ScenarioError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                          line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_name(key)) {
      throw ScenarioError("line " + std::to_string(line_no) + ": bad key '" + key + "'");
    }
    if (value.empty()) {
      throw ScenarioError("line " + std::to_string(line_no) + ": empty value for '" + key + "'");
    }
    stack.back()->values[key] = value;
  }
  if (stack.size() != 1) {
    throw ScenarioError("unterminated section (missing '}')");
  }
  return root;
}

KvNode load_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv(buf.str());
}

std::string serialize_kv(const KvNode& root) {
  std::ostringstream os;
  write_node(os, root, 0);
  return os.str();
}

void save_kv(const KvNode& root, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open '" + path + "' for writing");
  }
  out << serialize_kv(root);
  if (!out) {
    throw IoError("write failed for '" + path + "'");
  }
}

namespace {

class Reader {
 public:
  Reader(const KvNode& node, std::string prefix) : node_(node), prefix_(std::move(prefix)) {}

  double number(const std::string& key, double fallback) const {
    if (!node_.has(key)) {
      return fallback;
    }
    return parse_number(key);
  }

  double required(const std::string& key) const {
    if (!node_.has(key)) {
      throw ScenarioError(prefix_ + ": missing required key '" + key + "'");
    }
    return parse_number(key);
  }

  /// Angles must carry their unit in the key: either <base>_deg or
  /// <base>_rad. The stored result is radians.
  double angle(const std::string& base, double fallback_rad, bool* present = nullptr) const {
    const bool has_deg = node_.has(base + "_deg");
    const bool has_rad = node_.has(base + "_rad");
    if (has_deg && has_rad) {
      throw ScenarioError(prefix_ + ": both '" + base + "_deg' and '" + base + "_rad' given");
    }
    if (present) {
      *present = has_deg || has_rad;
    }
    if (has_deg) {
      return deg2rad(parse_number(base + "_deg"));
    }
    if (has_rad) {
      return parse_number(base + "_rad");
    }
    if (node_.has(base)) {
      throw ScenarioError(prefix_ + ": angle '" + base + "' needs an explicit unit key ('" +
                          base + "_deg' or '" + base + "_rad')");
    }
    return fallback_rad;
  }

  double required_angle(const std::string& base) const {
    bool present = false;
    const double val = angle(base, 0.0, &present);
    if (!present) {
      throw ScenarioError(prefix_ + ": missing required angle '" + base + "_deg' or '" + base +
                          "_rad'");
    }
    return val;
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!node_.has(key)) {
      return fallback;
    }
    const std::string& v = node_.values.at(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ScenarioError(prefix_ + ": key '" + key + "' is not a boolean: '" + v + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return node_.has(key) ? node_.values.at(key) : fallback;
  }

 private:
  double parse_number(const std::string& key) const {
    const std::string& v = node_.values.at(key);
    std::size_t pos = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw ScenarioError(prefix_ + ": key '" + key + "' is not a number: '" + v + "'");
    }
    if (pos != v.size()) {
      throw ScenarioError(prefix_ + ": key '" + key + "' has trailing characters: '" + v + "'");
    }
    return out;
  }

  const KvNode& node_;
  std::string prefix_;
};

Reader section(const KvNode& root, const std::string& name, bool required = false) {
  const KvNode* child = root.child(name);
  if (!child) {
    if (required) {
      throw ScenarioError("missing required section '" + name + "'");
    }
    static const KvNode empty;
    return Reader(empty, name);
  }
  return Reader(*child, name);
}

homotopy::ContinuationConfig continuation_from(const Reader& r,
                                               const homotopy::ContinuationConfig& dflt) {
  homotopy::ContinuationConfig c = dflt;
  c.delta_init = r.number("delta_init", c.delta_init);
  c.delta_min = r.number("delta_min", c.delta_min);
  c.delta_max = r.number("delta_max", c.delta_max);
  const std::string pred = r.text("predictor", c.linear_predictor ? "linear" : "none");
  if (pred == "linear") {
    c.linear_predictor = true;
  } else if (pred == "none") {
    c.linear_predictor = false;
  } else {
    throw ScenarioError("predictor must be 'linear' or 'none', got '" + pred + "'");
  }
  return c;
}

}  // namespace

void validate(const Scenario& s) {
  std::vector<std::string> errs;
  const auto positive = [&](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      errs.push_back(std::string(what) + " must be strictly positive");
    }
  };
  positive(s.vehicle.d, "vehicle.d");
  positive(s.vehicle.c_d0, "vehicle.c_d0");
  positive(s.vehicle.t_max, "vehicle.t_max");
  positive(s.vehicle.c_s, "vehicle.c_s");
  positive(s.vehicle.g, "vehicle.g");
  positive(s.vehicle.rho0, "vehicle.rho0");
  positive(s.vehicle.h_r, "vehicle.h_r");
  positive(s.vehicle.u_max, "vehicle.u_max");
  positive(s.vehicle.h_c, "vehicle.h_c");
  positive(s.bc.xi0.v, "boundary.initial.v");
  positive(s.bc.xi0.m, "boundary.initial.m");
  if (s.vehicle.k0 < 0.0 || s.vehicle.k1 < 0.0) {
    errs.push_back("cost weights k0, k1 must be nonnegative");
  }
  if (!(s.k_min > 0.0) || s.k_max < s.k_min) {
    errs.push_back("homotopy weights must satisfy 0 < k_min <= k_max");
  }
  positive(s.u_max_init, "homotopy.u_max_init");
  positive(s.phase1_init.h_c_i, "homotopy.phase1_init.h_c");
  positive(s.phase1_init.v0_i, "homotopy.phase1_init.v0");
  for (const auto* c : {&s.phase1_continuation, &s.phase2_continuation}) {
    if (!(c->delta_min > 0.0) || c->delta_min > c->delta_init || c->delta_init > c->delta_max ||
        c->delta_max > 1.0) {
      errs.push_back("continuation steps must satisfy 0 < delta_min <= delta_init <= delta_max <= 1");
    }
  }
  positive(s.solver.flow_rtol, "solver.flow_rtol");
  positive(s.solver.flow_atol, "solver.flow_atol");
  positive(s.solver.newton_tol_phase1, "solver.newton_tol_phase1");
  positive(s.solver.newton_tol_phase2, "solver.newton_tol_phase2");
  positive(s.solver.first_guess.t_f, "solver.guess.t_f");
  if (s.direct.n_ci < 10 || s.direct.n_reference < 10) {
    errs.push_back("direct grids need at least 10 steps");
  }
  if (s.output.samples < 1) {
    errs.push_back("output.samples must be at least 1");
  }
  if (!errs.empty()) {
    std::string msg = "scenario validation failed:";
    for (const auto& e : errs) {
      msg += "\n  - " + e;
    }
    throw ScenarioError(msg);
  }
}

Scenario scenario_from_kv(const KvNode& root) {
  Scenario s;
  Reader top(root, "top level");
  s.name = top.text("name", s.name);

  {
    Reader r = section(root, "vehicle");
    s.vehicle.d = r.number("d", s.vehicle.d);
    s.vehicle.c_d0 = r.number("c_d0", s.vehicle.c_d0);
    s.vehicle.t_max = r.number("t_max", s.vehicle.t_max);
    s.vehicle.c_s = r.number("c_s", s.vehicle.c_s);
    s.vehicle.g = r.number("g", s.vehicle.g);
    s.vehicle.rho0 = r.number("rho0", s.vehicle.rho0);
    s.vehicle.h_r = r.number("h_r", s.vehicle.h_r);
    s.vehicle.u_max = r.number("u_max", s.vehicle.u_max);
    s.vehicle.h_c = r.number("h_c", s.vehicle.h_c);
    s.vehicle.k0 = r.number("k0", s.vehicle.k0);
    s.vehicle.k1 = r.number("k1", s.vehicle.k1);
  }
  if (const KvNode* boundary = root.child("boundary")) {
    if (const KvNode* initial = boundary->child("initial")) {
      Reader r(*initial, "boundary.initial");
      s.bc.xi0.x = r.number("x", s.bc.xi0.x);
      s.bc.xi0.h = r.number("h", s.bc.xi0.h);
      s.bc.xi0.v = r.required("v");
      s.bc.xi0.gamma = r.required_angle("gamma");
      s.bc.xi0.m = r.required("m");
    }
    if (const KvNode* final_ = boundary->child("final")) {
      Reader r(*final_, "boundary.final");
      s.bc.target.x = r.required("x");
      s.bc.target.h = r.number("h", s.bc.target.h);
      s.bc.target.gamma = r.required_angle("gamma");
    }
  }
  if (const KvNode* hom = root.child("homotopy")) {
    Reader r(*hom, "homotopy");
    s.k_max = r.number("k_max", s.k_max);
    s.k_min = r.number("k_min", s.k_min);
    s.u_max_init = r.number("u_max_init", s.u_max_init);
    if (const KvNode* init = hom->child("phase1_init")) {
      Reader ri(*init, "homotopy.phase1_init");
      s.phase1_init.h_c_i = ri.number("h_c", s.phase1_init.h_c_i);
      s.phase1_init.x_m_i = ri.number("x_m", s.phase1_init.x_m_i);
      s.phase1_init.gamma0_i = ri.angle("gamma0", s.phase1_init.gamma0_i);
      s.phase1_init.gamma_m_i = ri.angle("gamma_m", s.phase1_init.gamma_m_i);
      s.phase1_init.v0_i = ri.number("v0", s.phase1_init.v0_i);
    }
    if (const KvNode* p1 = hom->child("phase1")) {
      s.phase1_continuation = continuation_from(Reader(*p1, "homotopy.phase1"), s.phase1_continuation);
    }
    if (const KvNode* p2 = hom->child("phase2")) {
      s.phase2_continuation = continuation_from(Reader(*p2, "homotopy.phase2"), s.phase2_continuation);
    }
  }
  if (const KvNode* solver = root.child("solver")) {
    Reader r(*solver, "solver");
    s.solver.flow_rtol = r.number("flow_rtol", s.solver.flow_rtol);
    s.solver.flow_atol = r.number("flow_atol", s.solver.flow_atol);
    s.solver.newton_tol_phase1 = r.number("newton_tol_phase1", s.solver.newton_tol_phase1);
    s.solver.newton_tol_phase2 = r.number("newton_tol_phase2", s.solver.newton_tol_phase2);
    s.solver.newton_max_iter = static_cast<int>(r.number("newton_max_iter", s.solver.newton_max_iter));
    s.solver.phase2_reduced = r.flag("phase2_reduced", s.solver.phase2_reduced);
    if (const KvNode* guess = solver->child("guess")) {
      Reader rg(*guess, "solver.guess");
      s.solver.first_guess.p0.p_x = rg.number("p_x", s.solver.first_guess.p0.p_x);
      s.solver.first_guess.p0.p_h = rg.number("p_h", s.solver.first_guess.p0.p_h);
      s.solver.first_guess.p0.p_v = rg.number("p_v", s.solver.first_guess.p0.p_v);
      s.solver.first_guess.p0.p_gamma = rg.number("p_gamma", s.solver.first_guess.p0.p_gamma);
      s.solver.first_guess.p0.p_m = rg.number("p_m", s.solver.first_guess.p0.p_m);
      s.solver.first_guess.t_f = rg.number("t_f", s.solver.first_guess.t_f);
    }
  }
  if (const KvNode* direct = root.child("direct")) {
    Reader r(*direct, "direct");
    s.direct.n_ci = static_cast<int>(r.number("n_ci", s.direct.n_ci));
    s.direct.n_reference = static_cast<int>(r.number("n_reference", s.direct.n_reference));
  }
  if (const KvNode* output = root.child("output")) {
    Reader r(*output, "output");
    s.output.samples = static_cast<int>(r.number("samples", s.output.samples));
    s.output.directory = r.text("directory", s.output.directory);
  }

  validate(s);
  return s;
}

KvNode scenario_to_kv(const Scenario& s) {
  KvNode root;
  root.values["name"] = s.name;

  KvNode& vehicle = root.children["vehicle"];
  vehicle.values["d"] = format_double(s.vehicle.d);
  vehicle.values["c_d0"] = format_double(s.vehicle.c_d0);
  vehicle.values["t_max"] = format_double(s.vehicle.t_max);
  vehicle.values["c_s"] = format_double(s.vehicle.c_s);
  vehicle.values["g"] = format_double(s.vehicle.g);
  vehicle.values["rho0"] = format_double(s.vehicle.rho0);
  vehicle.values["h_r"] = format_double(s.vehicle.h_r);
  vehicle.values["u_max"] = format_double(s.vehicle.u_max);
  vehicle.values["h_c"] = format_double(s.vehicle.h_c);
  vehicle.values["k0"] = format_double(s.vehicle.k0);
  vehicle.values["k1"] = format_double(s.vehicle.k1);

  KvNode& boundary = root.children["boundary"];
  KvNode& initial = boundary.children["initial"];
  initial.values["x"] = format_double(s.bc.xi0.x);
  initial.values["h"] = format_double(s.bc.xi0.h);
  initial.values["v"] = format_double(s.bc.xi0.v);
  initial.values["gamma_rad"] = format_double(s.bc.xi0.gamma);
  initial.values["m"] = format_double(s.bc.xi0.m);
  KvNode& final_ = boundary.children["final"];
  final_.values["x"] = format_double(s.bc.target.x);
  final_.values["h"] = format_double(s.bc.target.h);
  final_.values["gamma_rad"] = format_double(s.bc.target.gamma);

  KvNode& hom = root.children["homotopy"];
  hom.values["k_max"] = format_double(s.k_max);
  hom.values["k_min"] = format_double(s.k_min);
  hom.values["u_max_init"] = format_double(s.u_max_init);
  KvNode& init = hom.children["phase1_init"];
  init.values["h_c"] = format_double(s.phase1_init.h_c_i);
  init.values["x_m"] = format_double(s.phase1_init.x_m_i);
  init.values["gamma0_rad"] = format_double(s.phase1_init.gamma0_i);
  init.values["gamma_m_rad"] = format_double(s.phase1_init.gamma_m_i);
  init.values["v0"] = format_double(s.phase1_init.v0_i);
  const auto cont_to_kv = [](const homotopy::ContinuationConfig& c) {
    KvNode n;
    n.values["delta_init"] = format_double(c.delta_init);
    n.values["delta_min"] = format_double(c.delta_min);
    n.values["delta_max"] = format_double(c.delta_max);
    n.values["predictor"] = c.linear_predictor ? "linear" : "none";
    return n;
  };
  hom.children["phase1"] = cont_to_kv(s.phase1_continuation);
  hom.children["phase2"] = cont_to_kv(s.phase2_continuation);

  KvNode& solver = root.children["solver"];
  solver.values["flow_rtol"] = format_double(s.solver.flow_rtol);
  solver.values["flow_atol"] = format_double(s.solver.flow_atol);
  solver.values["newton_tol_phase1"] = format_double(s.solver.newton_tol_phase1);
  solver.values["newton_tol_phase2"] = format_double(s.solver.newton_tol_phase2);
  solver.values["newton_max_iter"] = std::to_string(s.solver.newton_max_iter);
  solver.values["phase2_reduced"] = s.solver.phase2_reduced ? "true" : "false";
  KvNode& guess = solver.children["guess"];
  guess.values["p_x"] = format_double(s.solver.first_guess.p0.p_x);
  guess.values["p_h"] = format_double(s.solver.first_guess.p0.p_h);
  guess.values["p_v"] = format_double(s.solver.first_guess.p0.p_v);
  guess.values["p_gamma"] = format_double(s.solver.first_guess.p0.p_gamma);
  guess.values["p_m"] = format_double(s.solver.first_guess.p0.p_m);
  guess.values["t_f"] = format_double(s.solver.first_guess.t_f);

  KvNode& direct = root.children["direct"];
  direct.values["n_ci"] = std::to_string(s.direct.n_ci);
  direct.values["n_reference"] = std::to_string(s.direct.n_reference);

  KvNode& output = root.children["output"];
  output.values["samples"] = std::to_string(s.output.samples);
  output.values["directory"] = s.output.directory;

  return root;
}

bool operator==(const Scenario& a, const Scenario& b) {
  return serialize_kv(scenario_to_kv(a)) == serialize_kv(scenario_to_kv(b));
}

Scenario load_scenario(const std::string& path) {
  return scenario_from_kv(load_kv(path));
}

void save_scenario(const Scenario& s, const std::string& path) {
  save_kv(scenario_to_kv(s), path);
}

}  // namespace guidance::scenario
