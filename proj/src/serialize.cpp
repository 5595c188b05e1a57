#include "pstrata/serialize.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pstrata {

namespace {

void write_vec(std::ostream& os, const std::string& key,
               const Eigen::VectorXd& v) {
  os << key << ":";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << " " << v[i];
  os << "\n";
}

Eigen::VectorXd parse_vec(const std::string& s) {
  std::istringstream in(s);
  std::vector<double> vals;
  double x;
  while (in >> x) vals.push_back(x);
  Eigen::VectorXd v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

// header line first, then "key: value" lines
std::map<std::string, std::string> read_kv(std::istream& is,
                                           const std::string& magic) {
  std::string line;
  if (!std::getline(is, line) || line != magic)
    throw std::runtime_error("bad model file header (expected " + magic + ")");
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto pos = line.find(':');
    if (pos == std::string::npos)
      throw std::runtime_error("malformed model line: " + line);
    std::string key = line.substr(0, pos);
    std::string val = line.substr(pos + 1);
    if (!val.empty() && val.front() == ' ') val.erase(0, 1);
    kv[key] = val;
  }
  return kv;
}

const std::string& need(const std::map<std::string, std::string>& kv,
                        const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end())
    throw std::runtime_error("model file missing field: " + key);
  return it->second;
}

}  // namespace

void save_strata_model(std::ostream& os, const StrataProbabilityModel& m) {
  os << std::setprecision(17);
  os << "pstrata-strata v1\n";
  os << "kind: "
     << (m.kind == StrataProbabilityModel::Kind::ClosedForm ? "closed-form"
                                                            : "multinomial")
     << "\n";
  os << "a_dim: " << m.a_dim << "\n";
  os << "c_dim: " << m.c_dim << "\n";
  os << "eta: "
     << (m.kind == StrataProbabilityModel::Kind::ClosedForm ? m.odds.eta
                                                            : m.mn.eta)
     << "\n";
  if (m.kind == StrataProbabilityModel::Kind::ClosedForm) {
    write_vec(os, "coef0", m.rates.coef0);
    write_vec(os, "coef1", m.rates.coef1);
  } else {
    write_vec(os, "iota01", m.mn.iota01);
    write_vec(os, "iota10", m.mn.iota10);
  }
}

StrataProbabilityModel load_strata_model(std::istream& is) {
  auto kv = read_kv(is, "pstrata-strata v1");
  StrataProbabilityModel m;
  m.a_dim = std::stoi(need(kv, "a_dim"));
  m.c_dim = std::stoi(need(kv, "c_dim"));
  double eta = std::stod(need(kv, "eta"));
  const std::string& kind = need(kv, "kind");
  if (kind == "closed-form") {
    m.kind = StrataProbabilityModel::Kind::ClosedForm;
    m.odds.eta = eta;
    m.rates.coef0 = parse_vec(need(kv, "coef0"));
    m.rates.coef1 = parse_vec(need(kv, "coef1"));
  } else if (kind == "multinomial") {
    m.kind = StrataProbabilityModel::Kind::Multinomial;
    m.mn.eta = eta;
    m.odds.eta = eta;
    m.mn.iota01 = parse_vec(need(kv, "iota01"));
    m.mn.iota10 = parse_vec(need(kv, "iota10"));
  } else {
    throw std::runtime_error("unknown strata model kind: " + kind);
  }
  return m;
}

void save_outcome_model(std::ostream& os, const OutcomeModel& m) {
  os << std::setprecision(17);
  os << "pstrata-outcome v1\n";
  os << "family: " << family_name(m.family) << "\n";
  os << "a_dim: " << m.a_dim << "\n";
  os << "c_dim: " << m.c_dim << "\n";
  write_vec(os, "beta_1_11", m.beta_1_11);
  write_vec(os, "beta_1_01", m.beta_1_01);
  write_vec(os, "beta_0_11", m.beta_0_11);
  write_vec(os, "beta_0_10", m.beta_0_10);
}

OutcomeModel load_outcome_model(std::istream& is) {
  auto kv = read_kv(is, "pstrata-outcome v1");
  OutcomeModel m;
  m.family = family_from_name(need(kv, "family"));
  m.a_dim = std::stoi(need(kv, "a_dim"));
  m.c_dim = std::stoi(need(kv, "c_dim"));
  m.beta_1_11 = parse_vec(need(kv, "beta_1_11"));
  m.beta_1_01 = parse_vec(need(kv, "beta_1_01"));
  m.beta_0_11 = parse_vec(need(kv, "beta_0_11"));
  m.beta_0_10 = parse_vec(need(kv, "beta_0_10"));
  return m;
}

namespace {

template <typename T, typename Saver>
void save_to(const std::string& path, const T& m, Saver s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  s(out, m);
  if (!out) throw std::runtime_error("write failed: " + path);
}

template <typename Loader>
auto load_from(const std::string& path, Loader l) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  return l(in);
}

}  // namespace

void save_strata_model(const std::string& path,
                       const StrataProbabilityModel& m) {
  save_to(path, m,
          [](std::ostream& os, const StrataProbabilityModel& x) {
            save_strata_model(os, x);
          });
}

StrataProbabilityModel load_strata_model(const std::string& path) {
  return load_from(path,
                   [](std::istream& is) { return load_strata_model(is); });
}

void save_outcome_model(const std::string& path, const OutcomeModel& m) {
  save_to(path, m, [](std::ostream& os, const OutcomeModel& x) {
    save_outcome_model(os, x);
  });
}

OutcomeModel load_outcome_model(const std::string& path) {
  return load_from(path,
                   [](std::istream& is) { return load_outcome_model(is); });
}

}  // namespace pstrata
