#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include "error.hpp"

namespace eqcausal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCommands[] = {"solve",     "grad-check",  "optimize", "pareto",
                                     "invariant", "compartment", "bench"};

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

[[noreturn]] void schema_error(const std::string& ptr, const std::string& what) {
  throw Error(ErrorCode::SchemaError, (ptr.empty() ? std::string("/") : ptr) + ": " + what);
}

// Strict view of one JSON object: every key must be consumed before finish().
class Obj {
 public:
  Obj(const json& j, std::string ptr) : j_(j), ptr_(std::move(ptr)) {
    if (!j_.is_object()) schema_error(ptr_, "expected an object");
  }

  const std::string& ptr() const { return ptr_; }
  std::string at(const std::string& key) const { return ptr_ + "/" + escape_pointer(key); }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* get(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  double number(const std::string& key, double def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number()) schema_error(at(key), "expected a number");
    return v->get<double>();
  }

  int integer(const std::string& key, int def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number_integer()) schema_error(at(key), "expected an integer");
    return v->get<int>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      schema_error(at(key), "expected a nonnegative integer");
    }
    return v->get<std::uint64_t>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_string()) schema_error(at(key), "expected a string");
    return v->get<std::string>();
  }

  // a number or an array of numbers
  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    const json* v = get(key);
    if (!v) return def;
    if (v->is_number()) return {v->get<double>()};
    if (!v->is_array()) schema_error(at(key), "expected a number or an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) schema_error(at(key) + "/" + std::to_string(i), "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& key, std::vector<int> def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_array()) schema_error(at(key), "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number_integer()) {
        schema_error(at(key) + "/" + std::to_string(i), "expected an integer");
      }
      out.push_back((*v)[i].get<int>());
    }
    return out;
  }

  std::optional<Obj> object(const std::string& key) {
    const json* v = get(key);
    if (!v) return std::nullopt;
    return Obj(*v, at(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!used_.count(key)) schema_error(at(key), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string ptr_;
  std::set<std::string> used_;
};

// Turns InvalidArgument from a validate() call into a SchemaError at ptr.
template <class Fn>
void check_section(const std::string& ptr, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InvalidArgument) throw;
    schema_error(ptr, e.what());
  }
}

SolverConfig parse_solver(Obj o, SolverConfig s) {
  const std::string method = o.string("method", std::string(to_string(s.method)));
  if (method != "forward" && method != "anderson") {
    schema_error(o.at("method"), "expected \"forward\" or \"anderson\"");
  }
  s.method = solver_method_from_string(method);
  s.history = o.integer("history", s.history);
  s.relaxation = o.number("relaxation", s.relaxation);
  s.tol = o.number("tol", s.tol);
  s.max_iter = o.integer("max_iter", s.max_iter);
  s.ridge = o.number("ridge", s.ridge);
  o.finish();
  check_section(o.ptr(), [&] { s.validate(); });
  return s;
}

json solver_json(const SolverConfig& s) {
  return {{"method", std::string(to_string(s.method))},
          {"history", s.history},
          {"relaxation", s.relaxation},
          {"tol", s.tol},
          {"max_iter", s.max_iter},
          {"ridge", s.ridge}};
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

std::string_view to_string(Command c) { return kCommands[static_cast<int>(c)]; }

Command command_from_string(std::string_view name) {
  for (int i = 0; i < 7; ++i) {
    if (name == kCommands[i]) return static_cast<Command>(i);
  }
  schema_error("/command", "unknown command '" + std::string(name) + "'");
}

int ModelSource::synthetic_dim() const {
  static const std::string prefix = "leontief-synthetic-";
  if (zoo.rfind(prefix, 0) != 0) return 0;
  int n = 0;
  const char* b = zoo.data() + prefix.size();
  const char* e = zoo.data() + zoo.size();
  auto [ptr, ec] = std::from_chars(b, e, n);
  if (ec != std::errc() || ptr != e || b == e || n < 1) return 0;
  return n;
}

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  ExperimentConfig cfg;
  Obj root(doc, "");
  const json* cmd = root.get("command");
  if (!cmd) schema_error("/command", "required field is missing");
  if (!cmd->is_string()) schema_error("/command", "expected a string");
  cfg.command = command_from_string(cmd->get<std::string>());
  cfg.seed = root.unsigned_integer("seed", 0);
  cfg.output = resolve(base_dir, root.string("output", "out"));

  // model
  const json* model = root.get("model");
  if (cfg.command == Command::Bench) {
    if (model) schema_error("/model", "bench generates its own matrices");
  } else if (!model) {
    schema_error("/model", "required field is missing");
  } else if (model->is_string()) {
    cfg.model.zoo = model->get<std::string>();
    static const std::set<std::string> zoo = {"motivating-example", "rebound-3sector",
                                              "two-compartment"};
    if (!zoo.count(cfg.model.zoo) && cfg.model.synthetic_dim() == 0) {
      schema_error("/model", "unknown zoo id '" + cfg.model.zoo + "'");
    }
  } else {
    Obj m(*model, "/model");
    IoTablePaths p;
    if (m.has("dir")) {
      p = IoTablePaths::in_directory(resolve(base_dir, m.string("dir", "")));
    } else {
      for (const char* key : {"A", "R", "y"}) {
        if (!m.has(key)) schema_error(m.at(key), "required field is missing");
      }
      p.A = resolve(base_dir, m.string("A", ""));
      p.R = resolve(base_dir, m.string("R", ""));
      p.y = resolve(base_dir, m.string("y", ""));
    }
    m.finish();
    for (const auto& [key, path] : {std::pair{"A", p.A}, {"R", p.R}, {"y", p.y}}) {
      if (!fs::exists(path)) schema_error("/model/" + std::string(key), "file " + path.string() + " does not exist");
    }
    cfg.model.csv = p;
  }

  if (auto o = root.object("solver")) cfg.solver = parse_solver(*o, cfg.solver);

  if (auto o = root.object("adam")) {
    AdamConfig& a = cfg.adam;
    a.lr = o->number("lr", a.lr);
    a.beta1 = o->number("beta1", a.beta1);
    a.beta2 = o->number("beta2", a.beta2);
    a.eps = o->number("eps", a.eps);
    a.iterations = o->integer("iterations", a.iterations);
    a.plateau_window = o->integer("plateau_window", a.plateau_window);
    a.plateau_tol = o->number("plateau_tol", a.plateau_tol);
    o->finish();
  }
  cfg.adam.seed = cfg.seed;
  check_section("/adam", [&] { cfg.adam.validate(); });

  if (auto o = root.object("sampling")) {
    SamplingConfig& s = cfg.sampling;
    s.theta_mean = to_vector(o->numbers("theta_mean", {}));
    s.theta_stddev = to_vector(o->numbers("theta_stddev", {}));
    cfg.u_range_given = o->has("u_lo") || o->has("u_hi");
    if (cfg.u_range_given && !(o->has("u_lo") && o->has("u_hi"))) {
      schema_error(o->ptr(), "u_lo and u_hi must be given together");
    }
    s.u_lo = o->number("u_lo", s.u_lo);
    s.u_hi = o->number("u_hi", s.u_hi);
    s.batch = o->integer("batch", s.batch);
    o->finish();
    if (s.batch < 1) schema_error(o->at("batch"), "must be >= 1");
    if (!(s.u_lo <= s.u_hi)) schema_error(o->at("u_lo"), "must be <= u_hi");
    if ((s.theta_stddev.array() <= 0.0).any()) schema_error(o->at("theta_stddev"), "must be > 0");
  }

  if (auto o = root.object("intervention")) {
    InterventionDecl& iv = cfg.intervention;
    const std::string group = o->string("group", "multiplicative");
    if (group != "multiplicative" && group != "additive") {
      schema_error(o->at("group"), "expected \"multiplicative\" or \"additive\"");
    }
    iv.group = lie_group_from_string(group);
    iv.targets = o->integers("targets", {});
    iv.lo = o->numbers("lo", {});
    iv.hi = o->numbers("hi", {});
    iv.initial = o->numbers("initial", {});
    o->finish();
    if (iv.group == LieGroup::Multiplicative) {
      for (double v : iv.initial) {
        if (!(v > 0.0)) schema_error(o->at("initial"), "multiplicative values must be > 0");
      }
      for (double v : iv.lo) {
        if (!(v > 0.0)) schema_error(o->at("lo"), "multiplicative bounds must be > 0");
      }
    }
  }

  if (auto o = root.object("loss")) {
    LossDecl& l = cfg.loss;
    l.objective = o->string("objective", l.objective);
    l.regularizer = o->string("regularizer", l.regularizer);
    if (cfg.command == Command::Pareto) {
      if (o->has("lambda")) schema_error(o->at("lambda"), "pareto takes a lambda list");
    } else if (o->has("lambdas")) {
      schema_error(o->at("lambdas"), "a lambda list is only valid for pareto");
    }
    l.lambda = o->number("lambda", l.lambda);
    l.lambdas = o->numbers("lambdas", {});
    o->finish();
    if (!(l.lambda >= 0.0)) schema_error(o->at("lambda"), "must be >= 0");
    for (double v : l.lambdas) {
      if (!(v >= 0.0)) schema_error(o->at("lambdas"), "values must be >= 0");
    }
  }
  if (cfg.command == Command::Pareto && cfg.loss.lambdas.empty()) {
    schema_error("/loss/lambdas", "pareto needs a nonempty lambda list");
  }

  if (auto o = root.object("grad_check")) {
    cfg.grad_check.step = o->number("step", cfg.grad_check.step);
    cfg.grad_check.tolerance = o->number("tolerance", cfg.grad_check.tolerance);
    o->finish();
    if (!(cfg.grad_check.step > 0.0)) schema_error(o->at("step"), "must be > 0");
  }

  if (auto o = root.object("invariant")) {
    InvariantSettings& s = cfg.invariant;
    s.hidden = o->integers("hidden", s.hidden);
    s.target_elasticity = o->number("target_elasticity", s.target_elasticity);
    s.eval_samples = o->integer("eval_samples", s.eval_samples);
    s.tolerance = o->number("tolerance", s.tolerance);
    s.elasticities = o->numbers("elasticities", s.elasticities);
    s.u_grid = o->numbers("u_grid", s.u_grid);
    o->finish();
    for (int h : s.hidden) {
      if (h < 1) schema_error(o->at("hidden"), "layer sizes must be positive");
    }
    if (s.eval_samples < 1) schema_error(o->at("eval_samples"), "must be >= 1");
    for (double u : s.u_grid) {
      if (!(u > 0.0)) schema_error(o->at("u_grid"), "values must be > 0");
    }
  }

  if (auto o = root.object("compartment")) {
    CompartmentSettings& s = cfg.compartment;
    s.hidden = o->integers("hidden", s.hidden);
    s.grid = o->numbers("grid", s.grid);
    s.theta_samples = o->integer("theta_samples", s.theta_samples);
    s.tolerance = o->number("tolerance", s.tolerance);
    s.min_own_variation = o->number("min_own_variation", s.min_own_variation);
    o->finish();
    for (int h : s.hidden) {
      if (h < 1) schema_error(o->at("hidden"), "layer sizes must be positive");
    }
    if (s.grid.empty()) schema_error(o->at("grid"), "must not be empty");
    for (double u : s.grid) {
      if (!(u > 0.0)) schema_error(o->at("grid"), "values must be > 0");
    }
    if (s.theta_samples < 1) schema_error(o->at("theta_samples"), "must be >= 1");
  }

  if (auto o = root.object("bench")) {
    BenchSettings& b = cfg.bench;
    b.dims = o->integers("dims", b.dims);
    b.seeds = o->integer("seeds", b.seeds);
    b.radius = o->number("radius", b.radius);
    if (const json* ms = o->get("methods")) {
      if (!ms->is_array()) schema_error(o->at("methods"), "expected an array");
      for (std::size_t i = 0; i < ms->size(); ++i) {
        Obj m((*ms)[i], o->at("methods") + "/" + std::to_string(i));
        BenchMethod bm;
        bm.label = m.string("label", "");
        bm.solver = parse_solver(m, cfg.solver);
        if (bm.label.empty()) schema_error(m.at("label"), "required field is missing");
        b.methods.push_back(bm);
      }
    }
    o->finish();
    for (int d : b.dims) {
      if (d < 1) schema_error(o->at("dims"), "dimensions must be positive");
    }
    if (b.seeds < 1) schema_error(o->at("seeds"), "must be >= 1");
    if (!(b.radius > 0.0 && b.radius < 1.0)) schema_error(o->at("radius"), "must lie in (0, 1)");
  }
  if (cfg.bench.methods.empty()) {
    SolverConfig fwd = cfg.solver;
    fwd.method = SolverMethod::Forward;
    SolverConfig a1 = cfg.solver;
    a1.method = SolverMethod::Anderson;
    a1.relaxation = 1.0;
    SolverConfig a2 = a1;
    a2.relaxation = 2.0;
    cfg.bench.methods = {{"forward", fwd}, {"anderson-b1", a1}, {"anderson-b2", a2}};
  }
  root.finish();

  // cross-field checks
  const Command c = cfg.command;
  if ((c == Command::Optimize || c == Command::Pareto) && !cfg.model.has_table()) {
    schema_error("/model", std::string(to_string(c)) + " needs an input-output table model");
  }
  if (c == Command::Invariant && cfg.model.zoo != "rebound-3sector" &&
      cfg.model.zoo != "motivating-example") {
    schema_error("/model", "invariant runs on \"rebound-3sector\" or \"motivating-example\"");
  }
  if (c == Command::Compartment && cfg.model.zoo != "two-compartment") {
    schema_error("/model", "compartment runs on \"two-compartment\"");
  }
  if (cfg.model.has_table()) {
    int d = cfg.model.synthetic_dim();
    std::vector<std::string> impacts = {"ghg", "employment"};
    if (cfg.model.csv) {
      const IoTable t = load_iotable_csv(*cfg.model.csv);
      d = t.dim();
      impacts = t.impacts;
    }
    if (c == Command::Optimize || c == Command::Pareto || c == Command::GradCheck) {
      auto known = [&](const std::string& row) {
        return std::find(impacts.begin(), impacts.end(), row) != impacts.end();
      };
      if (!known(cfg.loss.objective)) {
        schema_error("/loss/objective", "R has no row '" + cfg.loss.objective + "'");
      }
      if (c != Command::GradCheck && !known(cfg.loss.regularizer)) {
        schema_error("/loss/regularizer", "R has no row '" + cfg.loss.regularizer + "'");
      }
    }
    for (std::size_t i = 0; i < cfg.intervention.targets.size(); ++i) {
      const int k = cfg.intervention.targets[i];
      if (k < 0 || k >= d) {
        schema_error("/intervention/targets/" + std::to_string(i),
                     "node " + std::to_string(k) + " out of range");
      }
    }
    const std::size_t n = cfg.intervention.targets.empty()
                              ? static_cast<std::size_t>(d)
                              : cfg.intervention.targets.size();
    for (const auto& [key, v] : {std::pair{"lo", &cfg.intervention.lo},
                                 {"hi", &cfg.intervention.hi},
                                 {"initial", &cfg.intervention.initial}}) {
      if (v->size() > 1 && v->size() != n) {
        schema_error("/intervention/" + std::string(key),
                     "expected 1 or " + std::to_string(n) + " values");
      }
    }
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["command"] = std::string(to_string(cfg.command));
  j["seed"] = cfg.seed;
  if (cfg.command != Command::Bench) {
    if (cfg.model.csv) {
      j["model"] = {{"A", cfg.model.csv->A.string()},
                    {"R", cfg.model.csv->R.string()},
                    {"y", cfg.model.csv->y.string()}};
    } else {
      j["model"] = cfg.model.zoo;
    }
  }
  j["solver"] = solver_json(cfg.solver);
  const AdamConfig& a = cfg.adam;
  j["adam"] = {{"lr", a.lr},
               {"beta1", a.beta1},
               {"beta2", a.beta2},
               {"eps", a.eps},
               {"iterations", a.iterations},
               {"plateau_window", a.plateau_window},
               {"plateau_tol", a.plateau_tol}};
  json s = {{"batch", cfg.sampling.batch}};
  if (cfg.sampling.theta_mean.size()) s["theta_mean"] = vector_json(cfg.sampling.theta_mean);
  if (cfg.sampling.theta_stddev.size()) s["theta_stddev"] = vector_json(cfg.sampling.theta_stddev);
  if (cfg.u_range_given) {
    s["u_lo"] = cfg.sampling.u_lo;
    s["u_hi"] = cfg.sampling.u_hi;
  }
  j["sampling"] = s;
  const InterventionDecl& iv = cfg.intervention;
  json ij = {{"group", std::string(to_string(iv.group))}};
  if (!iv.targets.empty()) ij["targets"] = iv.targets;
  if (!iv.lo.empty()) ij["lo"] = iv.lo;
  if (!iv.hi.empty()) ij["hi"] = iv.hi;
  if (!iv.initial.empty()) ij["initial"] = iv.initial;
  j["intervention"] = ij;
  json lj = {{"objective", cfg.loss.objective}, {"regularizer", cfg.loss.regularizer}};
  if (cfg.command == Command::Pareto) {
    lj["lambdas"] = cfg.loss.lambdas;
  } else {
    lj["lambda"] = cfg.loss.lambda;
  }
  j["loss"] = lj;
  j["grad_check"] = {{"step", cfg.grad_check.step}, {"tolerance", cfg.grad_check.tolerance}};
  const InvariantSettings& in = cfg.invariant;
  j["invariant"] = {{"hidden", in.hidden},
                    {"target_elasticity", in.target_elasticity},
                    {"eval_samples", in.eval_samples},
                    {"tolerance", in.tolerance},
                    {"elasticities", in.elasticities},
                    {"u_grid", in.u_grid}};
  const CompartmentSettings& cs = cfg.compartment;
  j["compartment"] = {{"hidden", cs.hidden},
                      {"grid", cs.grid},
                      {"theta_samples", cs.theta_samples},
                      {"tolerance", cs.tolerance},
                      {"min_own_variation", cs.min_own_variation}};
  json methods = json::array();
  for (const BenchMethod& m : cfg.bench.methods) {
    json mj = solver_json(m.solver);
    mj["label"] = m.label;
    methods.push_back(mj);
  }
  j["bench"] = {{"dims", cfg.bench.dims},
                {"seeds", cfg.bench.seeds},
                {"radius", cfg.bench.radius},
                {"methods", methods}};
  return j;
}

}  // namespace eqcausal
