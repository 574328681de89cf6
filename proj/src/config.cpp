#include "ergot/config.hpp"

#include "ergot/errors.hpp"
#include "ergot/smoothing.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/program_options.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace po = boost::program_options;

namespace ergot {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& text, const char* sep) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(sep));
  for (auto& p : parts) boost::trim(p);
  parts.erase(std::remove(parts.begin(), parts.end(), std::string()), parts.end());
  return parts;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& key) {
  std::vector<double> out;
  for (const auto& p : split(text, ", ")) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(p, &used));
      if (used != p.size()) throw std::invalid_argument(p);
    } catch (const std::exception&) {
      throw InvalidArgument("config: " + key + " has a non-numeric entry '" + p + "'");
    }
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

Parity parse_parity(const std::string& word, const std::string& key) {
  if (word == "cos") return Parity::Cos;
  if (word == "sin") return Parity::Sin;
  throw InvalidArgument("config: " + key + " expects cos or sin, got '" + word + "'");
}

Eigen::VectorXi parse_wave(const std::vector<std::string>& words, std::size_t from, int d, const std::string& key) {
  if (words.size() != from + std::size_t(d)) throw InvalidArgument("config: " + key + " needs " + std::to_string(d) + " wave components");
  Eigen::VectorXi k(d);
  for (int j = 0; j < d; ++j) k[j] = std::stoi(words[from + std::size_t(j)]);
  return k;
}

}  // namespace

std::vector<ScalarTerm> parse_scalar_terms(const std::string& text, int d) {
  std::vector<ScalarTerm> terms;
  for (const auto& item : split(text, ";")) {
    const auto words = split(item, " \t");
    if (words.size() < 2) throw InvalidArgument("config: drift.potential term '" + item + "' is malformed");
    terms.push_back({parse_wave(words, 2, d, "drift.potential"), parse_parity(words[1], "drift.potential"),
                     parse_doubles(words[0], "drift.potential").at(0)});
  }
  return terms;
}

namespace {

std::vector<VectorTerm> parse_field(const std::string& text, int d) {
  std::vector<VectorTerm> terms;
  for (const auto& item : split(text, ";")) {
    const auto halves = split(item, ":");
    if (halves.size() != 2) throw InvalidArgument("config: drift.field term '" + item + "' needs 'parity k : a'");
    const auto words = split(halves[0], " \t");
    if (words.empty()) throw InvalidArgument("config: drift.field term '" + item + "' is malformed");
    const auto amp = parse_doubles(halves[1], "drift.field");
    if (int(amp.size()) != d) throw InvalidArgument("config: drift.field amplitude needs " + std::to_string(d) + " entries");
    terms.push_back({parse_wave(words, 1, d, "drift.field"), parse_parity(words[0], "drift.field"),
                     Eigen::Map<const Eigen::VectorXd>(amp.data(), d)});
  }
  return terms;
}

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

void ExperimentConfig::validate() const {
  if (d < 1 || d > 4) throw InvalidArgument("config: torus.d must be in 1..4");
  if (!(L > 0.0)) throw InvalidArgument("config: torus.L must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("config: sim.dt must be positive");
  if (!(lambda_max > 0.0)) throw InvalidArgument("config: modes.lambda_max must be positive");
  if (dt * lambda_max > 0.1 * (1 + 1e-12)) {
    throw InvalidArgument("config: sim.dt * modes.lambda_max must not exceed 0.1");
  }
  if (T.empty()) throw InvalidArgument("config: sim.T must list at least one horizon");
  for (std::size_t i = 0; i < T.size(); ++i) {
    if (!(T[i] > 1.0)) throw InvalidArgument("config: every sim.T must exceed 1");
    if (i && !(T[i] > T[i - 1])) throw InvalidArgument("config: sim.T must be strictly increasing");
    const double n = std::round(T[i] / dt);
    if (std::abs(n * dt - T[i]) > 1e-9 * T[i]) throw InvalidArgument("config: sim.T must be multiples of sim.dt");
  }
  if (replicas < 1) throw InvalidArgument("config: sim.replicas must be positive");
  if (!(gamma > 3.0)) {
    throw InvalidArgument("config: smoothing.gamma must exceed 3 for the schedule eps = (log T)^gamma / T");
  }
  if (eps && !(*eps >= 0.0)) throw InvalidArgument("config: smoothing.eps must be nonnegative");
  if (!(tail_tol > 0.0)) throw InvalidArgument("config: smoothing.tail_tol must be positive");
  if (!power_of_two(grid_n)) throw InvalidArgument("config: ot.grid_n must be a power of two");
  if (!power_of_two(flatness_grid_n)) throw InvalidArgument("config: concentration.flatness_grid_n must be a power of two");
  if (reg < 0.0) throw InvalidArgument("config: ot.reg must be nonnegative (0 selects 2 h^2)");
  if (max_iters < 1 || !(tol > 0.0)) throw InvalidArgument("config: ot.max_iters and ot.tol must be positive");
  if (ot_replicas < 0 || ot_replicas > replicas) throw InvalidArgument("config: ot.replicas must be in [0, sim.replicas]");
  for (double x : xi) {
    if (!(x > 0.0)) throw InvalidArgument("config: concentration.xi entries must be positive");
  }
  if (!(bernstein_c > 0.0)) throw InvalidArgument("config: concentration.c must be positive");
  for (const auto& f : formats) {
    if (f != "csv" && f != "json") throw InvalidArgument("config: output.formats accepts csv and json");
  }
  drift();
}

DriftSpec ExperimentConfig::drift() const {
  const TorusGeometry g = geometry();
  Eigen::VectorXd zv;
  if (!z.empty()) {
    const auto v = parse_doubles(z, "drift.z");
    if (int(v.size()) != d) throw InvalidArgument("config: drift.z needs " + std::to_string(d) + " entries");
    zv = Eigen::Map<const Eigen::VectorXd>(v.data(), d);
  }
  return DriftSpec(g, parse_scalar_terms(potential, d), zv, parse_field(field, d), weighted);
}

double ExperimentConfig::eps_for(double horizon) const {
  return eps ? *eps : smoothing_schedule(horizon, gamma);
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> kv{
      {"torus.d", std::to_string(d)},
      {"torus.L", fmt(L)},
      {"drift.potential", potential},
      {"drift.z", z},
      {"drift.field", field},
      {"drift.weighted", weighted ? "true" : "false"},
      {"sim.dt", fmt(dt)},
      {"sim.T", join(T)},
      {"sim.replicas", std::to_string(replicas)},
      {"sim.seed", std::to_string(seed)},
      {"smoothing.gamma", fmt(gamma)},
      {"smoothing.eps", eps ? fmt(*eps) : ""},
      {"smoothing.tail_tol", fmt(tail_tol)},
      {"modes.lambda_max", fmt(lambda_max)},
      {"ot.grid_n", std::to_string(grid_n)},
      {"ot.reg", fmt(reg)},
      {"ot.max_iters", std::to_string(max_iters)},
      {"ot.tol", fmt(tol)},
      {"ot.replicas", std::to_string(ot_replicas)},
      {"concentration.xi", join(xi)},
      {"concentration.c", fmt(bernstein_c)},
      {"concentration.flatness_grid_n", std::to_string(flatness_grid_n)},
      {"output.dir", out_dir},
      {"output.formats", boost::join(formats, ",")},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string ExperimentConfig::hash() const { return sha256_hex(canonical()); }

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::string T, xi, formats, eps;
  bool weighted = false;
  po::options_description desc;
  desc.add_options()
      ("torus.d", po::value(&c.d))
      ("torus.L", po::value(&c.L))
      ("drift.potential", po::value(&c.potential))
      ("drift.z", po::value(&c.z))
      ("drift.field", po::value(&c.field))
      ("drift.weighted", po::value(&weighted))
      ("sim.dt", po::value(&c.dt))
      ("sim.T", po::value(&T))
      ("sim.replicas", po::value(&c.replicas))
      ("sim.seed", po::value(&c.seed))
      ("smoothing.gamma", po::value(&c.gamma))
      ("smoothing.eps", po::value(&eps))
      ("smoothing.tail_tol", po::value(&c.tail_tol))
      ("modes.lambda_max", po::value(&c.lambda_max))
      ("ot.grid_n", po::value(&c.grid_n))
      ("ot.reg", po::value(&c.reg))
      ("ot.max_iters", po::value(&c.max_iters))
      ("ot.tol", po::value(&c.tol))
      ("ot.replicas", po::value(&c.ot_replicas))
      ("concentration.xi", po::value(&xi))
      ("concentration.c", po::value(&c.bernstein_c))
      ("concentration.flatness_grid_n", po::value(&c.flatness_grid_n))
      ("output.dir", po::value(&c.out_dir))
      ("output.formats", po::value(&formats));
  po::variables_map vm;
  try {
    std::istringstream is(text);
    po::store(po::parse_config_file(is, desc, false), vm);
    po::notify(vm);
  } catch (const po::error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  auto unquote = [](std::string& s) {
    boost::trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  };
  for (auto* s : {&c.potential, &c.z, &c.field, &c.out_dir, &T, &xi, &formats, &eps}) unquote(*s);
  if (vm.count("drift.weighted")) c.weighted = weighted;
  if (vm.count("sim.T")) c.T = parse_doubles(T, "sim.T");
  if (vm.count("concentration.xi")) c.xi = parse_doubles(xi, "concentration.xi");
  if (vm.count("output.formats")) c.formats = split(formats, ", ");
  if (!eps.empty()) c.eps = parse_doubles(eps, "smoothing.eps").at(0);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace ergot
