#ifndef GEOPULSE_IGMN_HPP
#define GEOPULSE_IGMN_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geopulse/time.hpp"
#include "json.hpp"

namespace geopulse {

struct IgmnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteInput : IgmnError {
  using IgmnError::IgmnError;
};
struct EmptyModel : IgmnError {
  using IgmnError::IgmnError;
};
struct SingularCovariance : IgmnError {
  using IgmnError::IgmnError;
};
struct CorruptCheckpoint : IgmnError {
  using IgmnError::IgmnError;
};

using Vec = std::vector<double>;
// Row-major square matrix.
using Mat = std::vector<double>;

namespace linalg {

// Cholesky factor L (lower) of a symmetric PD matrix; nullopt if not PD.
inline std::optional<Mat> cholesky(const Mat& a, size_t d) {
  Mat l(d * d, 0.0);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      double sum = a[i * d + j];
      for (size_t k = 0; k < j; ++k) sum -= l[i * d + k] * l[j * d + k];
      if (i == j) {
        if (sum <= 0.0 || !std::isfinite(sum)) return std::nullopt;
        l[i * d + i] = std::sqrt(sum);
      } else {
        l[i * d + j] = sum / l[j * d + j];
      }
    }
  }
  return l;
}

// Solves L y = b (forward substitution).
inline Vec forward_solve(const Mat& l, size_t d, const Vec& b) {
  Vec y(d);
  for (size_t i = 0; i < d; ++i) {
    double sum = b[i];
    for (size_t k = 0; k < i; ++k) sum -= l[i * d + k] * y[k];
    y[i] = sum / l[i * d + i];
  }
  return y;
}

// Solves Lᵀ x = y (back substitution).
inline Vec backward_solve(const Mat& l, size_t d, const Vec& y) {
  Vec x(d);
  for (size_t i = d; i-- > 0;) {
    double sum = y[i];
    for (size_t k = i + 1; k < d; ++k) sum -= l[k * d + i] * x[k];
    x[i] = sum / l[i * d + i];
  }
  return x;
}

// Solves A x = b via a precomputed Cholesky factor of A.
inline Vec chol_solve(const Mat& l, size_t d, const Vec& b) {
  return backward_solve(l, d, forward_solve(l, d, b));
}

inline double sqrt_det_from_chol(const Mat& l, size_t d) {
  double p = 1.0;
  for (size_t i = 0; i < d; ++i) p *= l[i * d + i];
  return p;
}

}  // namespace linalg

// One mixture component: posterior accumulator, mean, full covariance.
struct Component {
  double sp = 0.0;
  Vec mean;
  Mat cov;
};

// Multivariate normal density N(x; mean, cov).
inline double component_density(const Component& c, const Vec& x) {
  size_t d = c.mean.size();
  auto l = linalg::cholesky(c.cov, d);
  if (!l) throw SingularCovariance("covariance is not positive-definite");
  Vec diff(d);
  for (size_t i = 0; i < d; ++i) diff[i] = x[i] - c.mean[i];
  Vec y = linalg::forward_solve(*l, d, diff);
  double quad = 0.0;
  for (double v : y) quad += v * v;
  double norm = std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(d)) *
                linalg::sqrt_det_from_chol(*l, d);
  return std::exp(-0.5 * quad) / norm;
}

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// One-pass incremental Gaussian mixture over joint (input..., target)
// vectors. Components are born from a novelty test and updated with
// posterior-weighted recursive mean/covariance estimates; conditional
// regression of the last dimension given the rest.
class IgmnModel {
 public:
  static constexpr int kCheckpointVersion = 1;

  IgmnModel() = default;
  IgmnModel(Vec sigma_ini, double tau_nov = 0.01)
      : sigma_ini_(std::move(sigma_ini)), tau_nov_(tau_nov) {
    var_floor_.reserve(sigma_ini_.size());
    for (double s : sigma_ini_) {
      double f = 1e-3 * s;
      var_floor_.push_back(f * f);
    }
  }

  size_t dim() const { return sigma_ini_.size(); }
  size_t component_count() const { return components_.size(); }
  const std::vector<Component>& components() const { return components_; }
  std::int64_t points_seen() const { return points_seen_; }
  const Vec& var_floor() const { return var_floor_; }

  double prior(size_t j) const {
    double total = 0.0;
    for (const auto& c : components_) total += c.sp;
    return components_[j].sp / total;
  }

  void learn(const Vec& x) {
    if (x.size() != dim()) throw NonFiniteInput("dimension mismatch");
    for (double v : x)
      if (!std::isfinite(v)) throw NonFiniteInput("non-finite input");

    size_t d = dim();
    bool novel = true;
    std::vector<double> dens(components_.size());
    for (size_t j = 0; j < components_.size(); ++j) {
      dens[j] = component_density(components_[j], x);
      if (dens[j] >= tau_nov_ * peak_density(components_[j])) novel = false;
    }

    if (components_.empty() || novel) {
      Component c;
      c.sp = 1.0;
      c.mean = x;
      c.cov.assign(d * d, 0.0);
      for (size_t i = 0; i < d; ++i)
        c.cov[i * d + i] = sigma_ini_[i] * sigma_ini_[i];
      components_.push_back(std::move(c));
      ++points_seen_;
      return;
    }

    // Posteriors p(j|x) over all components.
    double total_sp = 0.0;
    for (const auto& c : components_) total_sp += c.sp;
    std::vector<double> post(components_.size());
    double norm = 0.0;
    for (size_t j = 0; j < components_.size(); ++j) {
      post[j] = dens[j] * (components_[j].sp / total_sp);
      norm += post[j];
    }
    if (norm <= 0.0) {
      // All densities underflowed; fall back to priors.
      for (size_t j = 0; j < components_.size(); ++j)
        post[j] = components_[j].sp / total_sp;
      norm = 1.0;
    }

    for (size_t j = 0; j < components_.size(); ++j) {
      double p = post[j] / norm;
      Component& c = components_[j];
      c.sp += p;
      double omega = p / c.sp;
      Vec e(d), delta(d);
      for (size_t i = 0; i < d; ++i) {
        e[i] = x[i] - c.mean[i];
        delta[i] = omega * e[i];
        c.mean[i] += delta[i];
      }
      // cov <- (1-ω)·cov + ω·e·e*ᵀ with e* = x - new mean = (1-ω)·e.
      // This is the exact recursive ML estimator and keeps the matrix
      // positive-definite for any ω in (0,1); the e*e*ᵀ - ΔμΔμᵀ variant
      // can underflow to non-PD when ω nears 1/2.
      double coeff = omega * (1.0 - omega);
      for (size_t r = 0; r < d; ++r)
        for (size_t col = 0; col < d; ++col)
          c.cov[r * d + col] =
              (1.0 - omega) * c.cov[r * d + col] + coeff * e[r] * e[col];
      floor_and_symmetrize(c);
    }
    ++points_seen_;
  }

  // Conditional regression of the last dimension given input dims z.
  Prediction predict(const Vec& z) const {
    if (components_.empty()) throw EmptyModel("predict on empty model");
    size_t d = dim();
    size_t di = d - 1;  // input block
    if (z.size() != di) throw NonFiniteInput("query dimension mismatch");

    double total_sp = 0.0;
    for (const auto& c : components_) total_sp += c.sp;

    std::vector<double> w(components_.size());
    std::vector<double> cond_mean(components_.size());
    std::vector<double> cond_var(components_.size());
    double wsum = 0.0;
    for (size_t j = 0; j < components_.size(); ++j) {
      const Component& c = components_[j];
      // Input-block marginal.
      Mat cii(di * di);
      Vec cti(di), diff(di);
      for (size_t r = 0; r < di; ++r) {
        for (size_t col = 0; col < di; ++col) cii[r * di + col] = c.cov[r * d + col];
        cti[r] = c.cov[(d - 1) * d + r];
        diff[r] = z[r] - c.mean[r];
      }
      auto l = linalg::cholesky(cii, di);
      if (!l) throw SingularCovariance("input-block covariance not PD");
      Vec y = linalg::forward_solve(*l, di, diff);
      double quad = 0.0;
      for (double v : y) quad += v * v;
      double marg = std::exp(-0.5 * quad) /
                    (std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(di)) *
                     linalg::sqrt_det_from_chol(*l, di));
      Vec sol = linalg::chol_solve(*l, di, diff);  // C_ii⁻¹ (z - μ_i)
      double m = c.mean[d - 1];
      for (size_t r = 0; r < di; ++r) m += cti[r] * sol[r];
      Vec sol2 = linalg::chol_solve(*l, di, cti);  // C_ii⁻¹ C_it
      double v = c.cov[(d - 1) * d + (d - 1)];
      for (size_t r = 0; r < di; ++r) v -= cti[r] * sol2[r];
      cond_mean[j] = m;
      cond_var[j] = std::max(v, var_floor_[d - 1]);
      w[j] = (c.sp / total_sp) * marg;
      wsum += w[j];
    }
    if (wsum <= 0.0) {
      for (size_t j = 0; j < components_.size(); ++j) w[j] = components_[j].sp / total_sp;
      wsum = 1.0;
    }

    Prediction p;
    double second = 0.0;
    for (size_t j = 0; j < components_.size(); ++j) {
      double wj = w[j] / wsum;
      p.mean += wj * cond_mean[j];
      second += wj * (cond_var[j] + cond_mean[j] * cond_mean[j]);
    }
    p.variance = std::max(second - p.mean * p.mean, var_floor_[d - 1]);
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = kCheckpointVersion;
    j["sigma_ini"] = sigma_ini_;
    j["tau_nov"] = tau_nov_;
    j["var_floor"] = var_floor_;
    j["points_seen"] = points_seen_;
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : components_) {
      nlohmann::json cj;
      cj["sp"] = c.sp;
      cj["mean"] = c.mean;
      cj["cov"] = c.cov;
      comps.push_back(cj);
    }
    j["components"] = comps;
    return j;
  }

  std::string serialize() const { return to_json().dump(); }

  static IgmnModel from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("version"))
      throw CorruptCheckpoint("model blob missing version");
    if (j["version"].get<int>() != kCheckpointVersion)
      throw CorruptCheckpoint("unsupported model checkpoint version");
    try {
      IgmnModel m;
      m.sigma_ini_ = j.at("sigma_ini").get<Vec>();
      m.tau_nov_ = j.at("tau_nov").get<double>();
      m.var_floor_ = j.at("var_floor").get<Vec>();
      m.points_seen_ = j.at("points_seen").get<std::int64_t>();
      for (const auto& cj : j.at("components")) {
        Component c;
        c.sp = cj.at("sp").get<double>();
        c.mean = cj.at("mean").get<Vec>();
        c.cov = cj.at("cov").get<Mat>();
        if (c.cov.size() != c.mean.size() * c.mean.size())
          throw CorruptCheckpoint("component shape mismatch");
        m.components_.push_back(std::move(c));
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw CorruptCheckpoint(std::string("bad model blob: ") + e.what());
    }
  }

  static IgmnModel deserialize(const std::string& bytes) {
    nlohmann::json j = nlohmann::json::parse(bytes, nullptr, false);
    if (j.is_discarded()) throw CorruptCheckpoint("unparseable model blob");
    return from_json(j);
  }

 private:
  // Highest attainable density of a component: N(mean; mean, cov).
  double peak_density(const Component& c) const {
    size_t d = c.mean.size();
    auto l = linalg::cholesky(c.cov, d);
    if (!l) throw SingularCovariance("covariance is not positive-definite");
    return 1.0 / (std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(d)) *
                  linalg::sqrt_det_from_chol(*l, d));
  }

  void floor_and_symmetrize(Component& c) {
    size_t d = c.mean.size();
    for (size_t r = 0; r < d; ++r)
      for (size_t col = r + 1; col < d; ++col) {
        double avg = 0.5 * (c.cov[r * d + col] + c.cov[col * d + r]);
        c.cov[r * d + col] = avg;
        c.cov[col * d + r] = avg;
      }
    for (size_t i = 0; i < d; ++i)
      c.cov[i * d + i] = std::max(c.cov[i * d + i], var_floor_[i]);
  }

  Vec sigma_ini_;
  double tau_nov_ = 0.01;
  Vec var_floor_;
  std::vector<Component> components_;
  std::int64_t points_seen_ = 0;
};

// Joint feature vector for one bin: daily phase encoded on the unit circle
// plus the observed value.
inline Vec encode_input(Timestamp bin_start, double value) {
  double phi = day_phase(bin_start);
  return {std::sin(2.0 * std::numbers::pi * phi),
          std::cos(2.0 * std::numbers::pi * phi), value};
}

// Time-only features for prediction queries.
inline Vec encode_time(Timestamp bin_start) {
  double phi = day_phase(bin_start);
  return {std::sin(2.0 * std::numbers::pi * phi),
          std::cos(2.0 * std::numbers::pi * phi)};
}

}  // namespace geopulse

#endif  // GEOPULSE_IGMN_HPP
