#include "pstrata/types.hpp"

#include <cmath>
#include <sstream>

namespace pstrata {

StratumLabel stratum_from_name(const std::string& s) {
  if (s == "00") return StratumLabel::NeverBuyer;
  if (s == "01") return StratumLabel::Persuadable;
  if (s == "10") return StratumLabel::Discouraged;
  if (s == "11") return StratumLabel::AlwaysBuyer;
  throw std::invalid_argument("unknown stratum label: " + s);
}

double OddsRatioSpec::theta() const { return std::exp(eta); }

double AffineCost::operator()(const std::vector<double>& a,
                              const std::vector<double>& c) const {
  double v = intercept;
  for (std::size_t i = 0; i < wa.size() && i < a.size(); ++i) v += wa[i] * a[i];
  for (std::size_t i = 0; i < wc.size() && i < c.size(); ++i) v += wc[i] * c[i];
  return v;
}

ValidationReport validate_dataset(const Dataset& d) {
  ValidationReport rep;
  auto fatal = [&rep](const std::string& m) {
    rep.issues.push_back({true, m});
  };

  if (d.rows.empty()) {
    fatal("empty dataset");
    return rep;
  }
  if (d.a_dim < 0 || d.c_dim < 0 || d.a_dim + d.c_dim == 0)
    fatal("covariate dimensions must be positive");

  bool has_z0 = false, has_z1 = false;
  bool has_s1_z0 = false, has_s1_z1 = false;
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    const Observation& o = d.rows[i];
    std::ostringstream where;
    where << "row " << i << ": ";
    if (o.z != 0 && o.z != 1) fatal(where.str() + "treatment not binary");
    if (o.s != 0 && o.s != 1) fatal(where.str() + "response not binary");
    if (!std::isfinite(o.y)) fatal(where.str() + "revenue must be finite");
    // negative revenue is suspicious but not structurally impossible
    // (e.g. refunds), so it only warns
    if (o.y < 0.0) rep.issues.push_back({false, where.str() + "negative revenue"});
    if (o.s == 0 && o.y != 0.0) fatal(where.str() + "revenue without response");
    if (static_cast<int>(o.a.size()) != d.a_dim ||
        static_cast<int>(o.c.size()) != d.c_dim)
      fatal(where.str() + "covariate dimension mismatch");
    for (double v : o.a)
      if (!std::isfinite(v)) fatal(where.str() + "non-finite covariate");
    for (double v : o.c)
      if (!std::isfinite(v)) fatal(where.str() + "non-finite covariate");
    if (o.z == 0) {
      has_z0 = true;
      if (o.s == 1) has_s1_z0 = true;
    } else if (o.z == 1) {
      has_z1 = true;
      if (o.s == 1) has_s1_z1 = true;
    }
  }
  if (!has_z0) fatal("control arm absent");
  if (!has_z1) fatal("treatment arm absent");
  if (has_z0 && !has_s1_z0) fatal("no responders in control arm");
  if (has_z1 && !has_s1_z1) fatal("no responders in treatment arm");
  return rep;
}

void require_valid(const Dataset& d) {
  ValidationReport rep = validate_dataset(d);
  for (const auto& i : rep.issues)
    if (i.fatal) throw std::runtime_error("invalid dataset: " + i.message);
}

}  // namespace pstrata
