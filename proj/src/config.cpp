#include "mqs/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "mqs/csv.hpp"

namespace mqs {

MaterialMap RunConfig::material_map() const {
  MaterialMap mm;
  switch (law) {
    case LawKind::Linear:
      mm.grain_law = MagneticLawSpec::make_linear(linear_nu);
      break;
    case LawKind::Exponential:
      mm.grain_law = MagneticLawSpec::make_exp(exp);
      break;
    case LawKind::JilesAtherton:
      mm.grain_law = MagneticLawSpec::make_ja(ja);
      break;
  }
  mm.background_law = MagneticLawSpec::make_linear(NU0);
  mm.grain_sigma = sigma;
  return mm;
}

int RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(hw == 0 ? 1u : hw, 8u));
}

namespace {

struct KeyValue {
  std::string value;
  int line;
};

struct ParsedFile {
  std::map<std::string, KeyValue> entries;  // "section.key" -> value
  std::set<std::string> consumed;
};

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

ParsedFile tokenize(const std::string& text, const std::string& origin) {
  static const std::set<std::string> kSections = {"geometry", "material", "source", "discretization",
                                                  "output"};
  ParsedFile out;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, lineno, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(section)) fail(origin, lineno, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, lineno, "empty key");
    if (section.empty()) fail(origin, lineno, "key outside any section");
    const std::string full = section + "." + key;
    if (out.entries.count(full)) fail(origin, lineno, "duplicate key '" + full + "'");
    out.entries[full] = {value, lineno};
  }
  return out;
}

class Reader {
 public:
  Reader(ParsedFile& f, std::string origin) : file_(f), origin_(std::move(origin)) {}

  bool has(const std::string& key) const { return file_.entries.count(key) > 0; }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& [value, line] = take(key);
    double v = 0.0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
      fail(origin_, line, "value of '" + key + "' is not a plain SI number: '" + value + "'");
    return v;
  }

  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const auto& [value, line] = take(key);
    int v = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
      fail(origin_, line, "value of '" + key + "' is not an integer: '" + value + "'");
    return v;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& [value, line] = take(key);
    if (value == "true") return true;
    if (value == "false") return false;
    fail(origin_, line, "value of '" + key + "' must be true or false");
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    return take(key).value;
  }

  const KeyValue& take(const std::string& key) {
    file_.consumed.insert(key);
    return file_.entries.at(key);
  }

  void finish() const {
    for (const auto& [key, kv] : file_.entries)
      if (!file_.consumed.count(key)) fail(origin_, kv.line, "unknown key '" + key + "'");
  }

  const std::string& origin() const { return origin_; }

 private:
  ParsedFile& file_;
  std::string origin_;
};

std::vector<Eigen::Vector2d> parse_probes(const std::string& value, const std::string& origin, int line) {
  std::vector<Eigen::Vector2d> out;
  std::istringstream is(value);
  std::string item;
  while (std::getline(is, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto comma = item.find(',');
    if (comma == std::string::npos) fail(origin, line, "probe must be 'x,y': '" + item + "'");
    try {
      const double x = parse_double(trim(item.substr(0, comma)), "probe x");
      const double y = parse_double(trim(item.substr(comma + 1)), "probe y");
      out.push_back({x, y});
    } catch (const IoError& e) {
      fail(origin, line, e.what());
    }
  }
  return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  ParsedFile file = tokenize(text, origin);
  Reader r(file, origin);
  RunConfig cfg;

  cfg.geometry.side_length = r.number("geometry.smc_side_length", cfg.geometry.side_length);
  cfg.geometry.grains_per_side = r.integer("geometry.grains_per_side", cfg.geometry.grains_per_side);
  cfg.geometry.grain_diagonal = r.number("geometry.grain_diagonal", cfg.geometry.grain_diagonal);
  cfg.geometry.inductor_thickness =
      r.number("geometry.inductor_thickness", cfg.geometry.inductor_thickness);
  cfg.geometry.inductor_gap = r.number("geometry.inductor_gap", cfg.geometry.inductor_gap);
  cfg.geometry.air_margin = r.number("geometry.air_margin", cfg.geometry.air_margin);
  cfg.geometry.quarter_symmetry = r.boolean("geometry.quarter_symmetry", cfg.geometry.quarter_symmetry);
  cfg.macro_divisions = r.integer("geometry.macro_divisions", cfg.macro_divisions);
  cfg.cell_refine = r.integer("geometry.cell_refine", cfg.cell_refine);
  cfg.reference_refine = r.integer("geometry.reference_refine", cfg.reference_refine);

  if (r.has("material.law")) {
    const auto& [value, line] = r.take("material.law");
    if (value == "linear")
      cfg.law = LawKind::Linear;
    else if (value == "exponential")
      cfg.law = LawKind::Exponential;
    else if (value == "jiles_atherton")
      cfg.law = LawKind::JilesAtherton;
    else
      fail(origin, line, "material.law must be linear, exponential or jiles_atherton");
  }
  cfg.sigma = r.number("material.sigma", cfg.sigma);
  cfg.exp.alpha = r.number("material.exp_alpha", cfg.exp.alpha);
  cfg.exp.beta = r.number("material.exp_beta", cfg.exp.beta);
  cfg.exp.gamma = r.number("material.exp_gamma", cfg.exp.gamma);
  cfg.linear_nu = r.number("material.linear_nu", cfg.linear_nu);
  cfg.ja.Ms = r.number("material.ja_ms", cfg.ja.Ms);
  cfg.ja.a = r.number("material.ja_a", cfg.ja.a);
  cfg.ja.k = r.number("material.ja_k", cfg.ja.k);
  cfg.ja.c = r.number("material.ja_c", cfg.ja.c);
  cfg.ja.alpha = r.number("material.ja_alpha", cfg.ja.alpha);

  cfg.source.j_s0 = r.number("source.current_density", cfg.source.j_s0);
  cfg.source.frequency = r.number("source.frequency", cfg.source.frequency);

  cfg.steps_per_period = r.integer("discretization.steps_per_period", cfg.steps_per_period);
  cfg.n_periods = r.number("discretization.n_periods", cfg.n_periods);
  cfg.macro_tol = r.number("discretization.macro_tol", cfg.macro_tol);
  cfg.macro_max_iter = r.integer("discretization.macro_max_iter", cfg.macro_max_iter);
  cfg.cell_tol = r.number("discretization.cell_tol", cfg.cell_tol);
  cfg.cell_max_iter = r.integer("discretization.cell_max_iter", cfg.cell_max_iter);
  cfg.perturbation_b = r.number("discretization.perturbation_b", cfg.perturbation_b);
  if (r.has("discretization.macro_sigma_mode")) {
    const auto& [value, line] = r.take("discretization.macro_sigma_mode");
    if (value == "zero")
      cfg.macro_sigma_mode = MacroSigmaMode::Zero;
    else if (value == "computed")
      cfg.macro_sigma_mode = MacroSigmaMode::Computed;
    else
      fail(origin, line, "discretization.macro_sigma_mode must be zero or computed");
  }
  cfg.reference_grain_constraints =
      r.boolean("discretization.reference_grain_constraints", cfg.reference_grain_constraints);
  cfg.dt_halving = r.boolean("discretization.dt_halving", cfg.dt_halving);
  cfg.threads = r.integer("discretization.threads", cfg.threads);

  cfg.output_dir = r.text("output.directory", cfg.output_dir);
  cfg.dump_fields = r.boolean("output.dump_fields", cfg.dump_fields);
  cfg.dump_cell_gp = r.integer("output.dump_cell_gp", cfg.dump_cell_gp);
  if (r.has("output.probes")) {
    const auto& [value, line] = r.take("output.probes");
    cfg.probes = parse_probes(value, origin, line);
  }

  r.finish();

  cfg.geometry.validate_basic();
  if (cfg.source.frequency <= 0) throw ConfigError(origin + ": source.frequency must be positive");
  if (cfg.steps_per_period < 1 || cfg.n_periods <= 0)
    throw ConfigError(origin + ": discretization must give at least one time step");
  if (cfg.sigma < 0) throw ConfigError(origin + ": material.sigma must be non-negative");
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), path);
}

namespace {
std::string bool_str(bool v) { return v ? "true" : "false"; }
}  // namespace

std::string metadata_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "# run configuration echo; re-parse to reproduce the run\n";
  os << "[geometry]\n";
  os << "smc_side_length = " << format_double(cfg.geometry.side_length) << "\n";
  os << "grains_per_side = " << cfg.geometry.grains_per_side << "\n";
  os << "grain_diagonal = " << format_double(cfg.geometry.grain_diagonal) << "\n";
  os << "inductor_thickness = " << format_double(cfg.geometry.inductor_thickness) << "\n";
  os << "inductor_gap = " << format_double(cfg.geometry.inductor_gap) << "\n";
  os << "air_margin = " << format_double(cfg.geometry.air_margin) << "\n";
  os << "quarter_symmetry = " << bool_str(cfg.geometry.quarter_symmetry) << "\n";
  os << "macro_divisions = " << cfg.macro_divisions << "\n";
  os << "cell_refine = " << cfg.cell_refine << "\n";
  os << "reference_refine = " << cfg.reference_refine << "\n";
  os << "# derived: grain side " << format_double(cfg.geometry.grain_side()) << " m (axis-aligned square),"
     << " pitch " << format_double(cfg.geometry.pitch()) << " m,"
     << " fill factor " << format_double(cfg.geometry.fill_factor()) << "\n";
  os << "[material]\n";
  os << "law = "
     << (cfg.law == LawKind::Linear ? "linear"
                                    : cfg.law == LawKind::Exponential ? "exponential" : "jiles_atherton")
     << "\n";
  os << "sigma = " << format_double(cfg.sigma) << "\n";
  os << "exp_alpha = " << format_double(cfg.exp.alpha) << "\n";
  os << "exp_beta = " << format_double(cfg.exp.beta) << "\n";
  os << "exp_gamma = " << format_double(cfg.exp.gamma) << "\n";
  os << "linear_nu = " << format_double(cfg.linear_nu) << "\n";
  os << "ja_ms = " << format_double(cfg.ja.Ms) << "\n";
  os << "ja_a = " << format_double(cfg.ja.a) << "\n";
  os << "ja_k = " << format_double(cfg.ja.k) << "\n";
  os << "ja_c = " << format_double(cfg.ja.c) << "\n";
  os << "ja_alpha = " << format_double(cfg.ja.alpha) << "\n";
  os << "# vector Jiles-Atherton: isotropic, scalar quantities on |h_e|, b-driven inversion\n";
  os << "[source]\n";
  os << "current_density = " << format_double(cfg.source.j_s0) << "\n";
  os << "frequency = " << format_double(cfg.source.frequency) << "\n";
  os << "[discretization]\n";
  os << "steps_per_period = " << cfg.steps_per_period << "\n";
  os << "n_periods = " << format_double(cfg.n_periods) << "\n";
  os << "macro_tol = " << format_double(cfg.macro_tol) << "\n";
  os << "macro_max_iter = " << cfg.macro_max_iter << "\n";
  os << "cell_tol = " << format_double(cfg.cell_tol) << "\n";
  os << "cell_max_iter = " << cfg.cell_max_iter << "\n";
  os << "perturbation_b = " << format_double(cfg.perturbation_b) << "\n";
  os << "macro_sigma_mode = " << (cfg.macro_sigma_mode == MacroSigmaMode::Zero ? "zero" : "computed")
     << "\n";
  os << "reference_grain_constraints = " << bool_str(cfg.reference_grain_constraints) << "\n";
  os << "dt_halving = " << bool_str(cfg.dt_halving) << "\n";
  os << "threads = " << cfg.threads << "\n";
  os << "# P1 triangles, 3-point degree-2 quadrature\n";
  os << "[output]\n";
  os << "directory = " << cfg.output_dir << "\n";
  os << "dump_fields = " << bool_str(cfg.dump_fields) << "\n";
  os << "dump_cell_gp = " << cfg.dump_cell_gp << "\n";
  if (!cfg.probes.empty()) {
    os << "probes = ";
    for (size_t i = 0; i < cfg.probes.size(); ++i) {
      if (i) os << "; ";
      os << format_double(cfg.probes[i].x()) << "," << format_double(cfg.probes[i].y());
    }
    os << "\n";
  }
  return os.str();
}

void write_metadata(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << metadata_text(cfg);
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace mqs
