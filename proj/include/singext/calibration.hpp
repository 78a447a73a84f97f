#pragma once

#include <array>

#include "config.hpp"
#include "cube_extension.hpp"

namespace singext {

// Constants measured on a calibration suite and frozen for every later run.
struct Calibration {
  double C_dist = 0.0;     // dist(V, N)^p <= C_dist (mo + delta^p)
  double C_grad = 0.0;     // (x_{m+1} |DV|)^p <= C_grad (mo + delta^p)
  double C_long = 0.0;     // longitudinal skeleton functional <= C_long * truncated energy at delta
  double C_trans = 0.0;    // transversal skeleton functional <= C_trans * truncated energy at delta/2
  double C_count = 0.0;    // counting functional <= C_count / delta^{m+1} * truncated energy at eta delta
  double C_S = 0.0;        // #bad cubes <= C_S exp(B_hat gap) energy
  double C_ext = 0.0;      // good cubes: integral of |DW|^{m+1} <= C_ext rho * boundary integral of |Dw|^{m+1}
  double B_lambda = 0.02;  // lambda = max(2, exp(B_lambda gap))
  double C_mu = 2.0;
  double eta = 0.5;
  double A_hat = 0.0;      // euclidean weak-type constant
  double A_hat_hyperbolic = 0.0;
  double A_hat_ball = 0.0;
  double B_hat = 0.0;
  double delta_cal = 0.125;
  std::vector<std::string> provenance;  // comment lines, written verbatim

  static constexpr std::array<const char*, 15> kKeys{"C_dist", "C_grad", "C_long", "C_trans", "C_count",
                                                     "C_S", "C_ext", "B_lambda", "C_mu", "eta",
                                                     "A_hat", "A_hat_hyperbolic", "A_hat_ball", "B_hat", "delta_cal"};

  double& at(const std::string& key) {
    static_assert(kKeys.size() == 15);
    double* slots[] = {&C_dist, &C_grad, &C_long, &C_trans, &C_count, &C_S, &C_ext, &B_lambda,
                       &C_mu, &eta, &A_hat, &A_hat_hyperbolic, &A_hat_ball, &B_hat, &delta_cal};
    for (std::size_t i = 0; i < kKeys.size(); ++i)
      if (key == kKeys[i]) return *slots[i];
    throw ConfigError("unknown calibration key '" + key + "'");
  }
  double get(const std::string& key) const { return const_cast<Calibration*>(this)->at(key); }

  double A_for(Weight w) const {
    switch (w) {
      case Weight::euclidean: return A_hat;
      case Weight::hyperbolic: return A_hat_hyperbolic;
      case Weight::ball: return A_hat_ball;
    }
    return A_hat;
  }

  CalibrationConstants constants(const RunConfig& cfg) const {
    CalibrationConstants c;
    c.B_lambda = B_lambda;
    c.eta = eta;
    c.C_mu = C_mu;
    c.selection_budget = cfg.selection_budget;
    c.h_candidates = cfg.h_candidates;
    c.lambda_max = cfg.lambda_max;
    c.validate();
    return c;
  }

  // Right-hand side of the weak-type bound for one weight.
  double weak_type_rhs(Weight w, double gap, double energy) const { return A_for(w) * std::exp(B_hat * gap) * energy; }

  void validate(const std::string& where) const {
    for (const char* k : kKeys) {
      double v = get(k);
      if (!std::isfinite(v) || v < 0.0) throw ConfigError(where + ": calibration value '" + k + "' must be finite and >= 0");
    }
    if (!(B_lambda > 0) || !(C_mu > 0) || !(eta > 0 && eta < 1) || !(delta_cal > 0))
      throw ConfigError(where + ": calibration needs B_lambda, C_mu, delta_cal > 0 and 0 < eta < 1");
  }

  void write(std::ostream& out) const {
    for (const auto& p : provenance) out << "# " << p << "\n";
    for (const char* k : kKeys) out << k << " = " << detail::format_double(get(k)) << "\n";
  }

  static Calibration read(const std::string& path) {
    KeyValueFile f = KeyValueFile::load(path);
    std::set<std::string> known(kKeys.begin(), kKeys.end());
    f.reject_unknown(known);
    Calibration c;
    for (const char* k : kKeys) {
      if (!f.has(k)) throw ConfigError(path + ": corrupted calibration file, missing key '" + std::string(k) + "'");
      c.at(k) = f.number(k);
    }
    c.validate(path);
    return c;
  }
};

}  // namespace singext
