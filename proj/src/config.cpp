#include "gmwb/config.hpp"

#include <cmath>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace gmwb {

namespace {

// bp value that parses back (x 1e-4) to exactly this fee
double to_bp(double phi) {
  const double b = phi * 1e4;
  double up = b, down = b;
  for (int k = 0; k < 4; ++k) {
    if (up * 1e-4 == phi) return up;
    if (down * 1e-4 == phi) return down;
    up = std::nextafter(up, HUGE_VAL);
    down = std::nextafter(down, -HUGE_VAL);
  }
  return b;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

class Reader {
 public:
  Reader(std::string source, int line, std::string key) : source_(std::move(source)), line_(line), key_(std::move(key)) {}

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream os;
    os << source_ << ":" << line_ << ": " << key_ << ": " << what;
    throw ConfigError(os.str());
  }

  double number(const std::string& s) const {
    double v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("expected a number, got '" + s + "'");
    return v;
  }

  int integer(const std::string& s) const {
    int v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("expected an integer, got '" + s + "'");
    return v;
  }

  bool flag(const std::string& s) const {
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    fail("expected 0/1, got '" + s + "'");
  }

 private:
  std::string source_;
  int line_;
  std::string key_;
};

std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig c;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) Reader(source, line_no, line).fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const Reader r(source, line_no, key);
    if (seen.count(key)) r.fail("duplicate key (first set on line " + std::to_string(seen[key]) + ")");
    seen[key] = line_no;

    if (key == "age") c.contract.age0 = r.integer(val);
    else if (key == "maturity") c.contract.maturity = r.integer(val);
    else if (key == "net_premium") c.contract.premium = r.number(val);
    else if (key == "premium_tax") c.contract.premium_tax = r.number(val);
    else if (key == "g_w") c.contract.g_w = r.number(val);
    else if (key == "s_schedule") {
      c.contract.surrender.clear();
      for (const auto& s : split(val, ',')) c.contract.surrender.push_back(r.number(s));
    }
    else if (key == "s_g") c.contract.s_g = r.number(val);
    else if (key == "tau") c.contract.tau = r.number(val);
    else if (key == "kappa") c.contract.kappa = r.number(val);
    else if (key == "phi_bp") c.contract.phi = r.number(val) * 1e-4;
    else if (key == "s0") c.market.s0 = r.number(val);
    else if (key == "sigma") c.market.sigma = r.number(val);
    else if (key == "r0") c.market.r0 = r.number(val);
    else if (key == "k") c.market.k = r.number(val);
    else if (key == "omega") c.market.omega = r.number(val);
    else if (key == "rho") c.market.rho = r.number(val);
    else if (key == "n_t") c.numerics.n_t = r.integer(val);
    else if (key == "n_x1") c.numerics.grid.n_x1 = r.integer(val);
    else if (key == "n_x2") c.numerics.grid.n_x2 = r.integer(val);
    else if (key == "n_g") c.numerics.grid.n_g = r.integer(val);
    else if (key == "n_h") c.numerics.grid.n_h = r.integer(val);
    else if (key == "delta_w") c.numerics.delta_w = r.number(val);
    else if (key == "mortality_file") c.mortality_file = val;
    else if (key == "sweep") {
      c.sweep.clear();
      for (const auto& cell : split(val, ',')) {
        const auto parts = split(cell, ':');
        if (parts.size() != 3) r.fail("sweep cells are r0:sigma:omega, got '" + cell + "'");
        c.sweep.push_back({r.number(parts[0]), r.number(parts[1]), r.number(parts[2])});
      }
    }
    else if (key == "sweep_tax") {
      c.sweep_tax.clear();
      for (const auto& s : split(val, ',')) c.sweep_tax.push_back(r.flag(s));
    }
    else if (key == "phi_lo_bp") c.phi_lo_bp = r.number(val);
    else if (key == "phi_hi_bp") c.phi_hi_bp = r.number(val);
    else if (key == "warm_start_grid") {
      const auto parts = split(val, ':');
      if (parts.empty()) c.warm_start.reset();
      else if (parts.size() != 4) r.fail("expected n_x1:n_x2:n_g:n_h, got '" + val + "'");
      else c.warm_start = GridSpec{0, r.integer(parts[0]), r.integer(parts[1]), r.integer(parts[2]), r.integer(parts[3])};
    }
    else if (key == "policy_x_columns") c.policy_x_columns = r.integer(val);
    else r.fail("unknown key");
  }
  c.numerics.grid.premium = c.contract.premium;
  if (c.warm_start) c.warm_start->premium = c.contract.premium;
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse(ss.str(), path.string());
  c.base_dir = path.parent_path();
  return c;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << "\n"; };
  auto num = [&](const char* k, double v) { kv(k, format_double(v)); };
  kv("age", std::to_string(contract.age0));
  kv("maturity", std::to_string(contract.maturity));
  num("net_premium", contract.premium);
  num("premium_tax", contract.premium_tax);
  num("g_w", contract.g_w);
  kv("s_schedule", join_numbers(contract.surrender));
  num("s_g", contract.s_g);
  num("tau", contract.tau);
  num("kappa", contract.kappa);
  num("phi_bp", to_bp(contract.phi));
  num("s0", market.s0);
  num("sigma", market.sigma);
  num("r0", market.r0);
  num("k", market.k);
  num("omega", market.omega);
  num("rho", market.rho);
  kv("n_t", std::to_string(numerics.n_t));
  kv("n_x1", std::to_string(numerics.grid.n_x1));
  kv("n_x2", std::to_string(numerics.grid.n_x2));
  kv("n_g", std::to_string(numerics.grid.n_g));
  kv("n_h", std::to_string(numerics.grid.n_h));
  num("delta_w", numerics.delta_w);
  kv("mortality_file", mortality_file);
  std::string cells;
  for (std::size_t i = 0; i < sweep.size(); ++i)
    cells += (i ? "," : "") + format_double(sweep[i].r0) + ":" + format_double(sweep[i].sigma) + ":" +
             format_double(sweep[i].omega);
  kv("sweep", cells);
  std::string flags;
  for (std::size_t i = 0; i < sweep_tax.size(); ++i) flags += (i ? "," : "") + std::string(sweep_tax[i] ? "1" : "0");
  kv("sweep_tax", flags);
  num("phi_lo_bp", phi_lo_bp);
  num("phi_hi_bp", phi_hi_bp);
  kv("warm_start_grid", warm_start ? std::to_string(warm_start->n_x1) + ":" + std::to_string(warm_start->n_x2) + ":" +
                                         std::to_string(warm_start->n_g) + ":" + std::to_string(warm_start->n_h)
                                   : std::string());
  kv("policy_x_columns", std::to_string(policy_x_columns));
  return os.str();
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  try {
    contract.validate();
    market.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  need(numerics.n_t >= 1, "n_t must be >= 1");
  need(numerics.grid.n_x1 >= 1 && numerics.grid.n_x2 >= 1, "n_x1 and n_x2 must be >= 1");
  need(numerics.grid.n_g >= 1 && numerics.grid.n_h >= 1, "n_g and n_h must be >= 1");
  need(numerics.delta_w > 0, "delta_w must be > 0");
  need(phi_lo_bp < phi_hi_bp, "phi_lo_bp must be below phi_hi_bp");
  need(policy_x_columns >= 2, "policy_x_columns must be >= 2");
  need(!mortality_file.empty(), "mortality_file must be set");
  if (warm_start)
    need(warm_start->n_x1 >= 1 && warm_start->n_x2 >= 1 && warm_start->n_g >= 1 && warm_start->n_h >= 1,
         "warm_start_grid counts must be >= 1");
  for (const auto& s : sweep) {
    MarketParams m = market;
    m.r0 = s.r0;
    m.sigma = s.sigma;
    m.omega = s.omega;
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: sweep: ") + e.what());
    }
  }
}

std::filesystem::path RunConfig::mortality_path() const {
  const std::filesystem::path p(mortality_file);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

bool RunConfig::operator==(const RunConfig& o) const {
  // base_dir is where the text came from, not part of the configuration
  return serialize() == o.serialize();
}

}  // namespace gmwb
