#include "evsched/risk.hpp"

#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "evsched/errors.hpp"
#include "evsched/rng.hpp"
#include "json.hpp"

namespace evsched {

double laxity(double energy_requested_kwh, double demand_rate_kw, double energy_delivered_kwh,
              double delivery_rate_kw) {
  if (!(demand_rate_kw > 0.0)) throw std::domain_error("laxity: demand rate must be positive");
  if (!(delivery_rate_kw > 0.0)) throw std::domain_error("laxity: delivery rate must be positive");
  return std::abs(energy_requested_kwh / demand_rate_kw - energy_delivered_kwh / delivery_rate_kw);
}

LaxitySampleSet laxity_samples(const SessionBatch& batch) {
  LaxitySampleSet out;
  out.batch_id = batch.id();
  out.samples.reserve(batch.size());
  for (const auto& [evse, group] : batch.groups()) {
    const double demand = demand_rate_kw(group);
    const double delivery = delivery_rate_kw(group);
    for (const auto& s : group)
      out.samples.push_back(laxity(s.energy_requested_kwh, demand, s.energy_delivered_kwh, delivery));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Densities

namespace {

void check_shape(double dof, double scale) {
  if (!(dof > 0.0)) throw std::invalid_argument("student-t: degrees of freedom must be positive");
  if (!(scale > 0.0)) throw std::invalid_argument("student-t: scale must be positive");
}

double log_norm_const(double dof) {
  return std::lgamma((dof + 1.0) / 2.0) - std::lgamma(dof / 2.0) - 0.5 * std::log(dof * std::numbers::pi);
}

}  // namespace

double standardized_pdf(double xi, double dof) {
  check_shape(dof, 1.0);
  return std::exp(log_norm_const(dof) - (dof + 1.0) / 2.0 * std::log1p(xi * xi / dof));
}

double student_t_pdf(double d, double dof, double location, double scale) {
  check_shape(dof, scale);
  return standardized_pdf((d - location) / scale, dof) / scale;
}

double log_likelihood(std::span<const double> samples, double dof, double location, double scale) {
  if (samples.empty()) throw std::invalid_argument("log-likelihood of an empty sample set");
  check_shape(dof, scale);
  const double n = static_cast<double>(samples.size());
  double tail = 0.0;
  for (double d : samples) {
    const double z = (d - location) / scale;
    tail += std::log(dof + z * z);
  }
  return n * std::lgamma((dof + 1.0) / 2.0) + n * dof / 2.0 * std::log(dof) - n * std::lgamma(dof / 2.0) -
         n * std::log(scale) - (dof + 1.0) / 2.0 * tail - n / 2.0 * std::log(std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Fit

namespace {

struct Vertex {
  std::array<double, 3> x;
  double f;
  double dof;
};

class FitObjective {
 public:
  explicit FitObjective(std::span<const double> samples) : samples_(samples) {}

  static double dof_of(const std::array<double, 3>& x) {
    return std::clamp(1.0 + std::exp(x[0]), kMinFitDof, kMaxFitDof);
  }
  static double scale_of(const std::array<double, 3>& x) {
    return std::clamp(std::exp(x[2]), kMinFitScale, kMaxFitScale);
  }

  Vertex eval(const std::array<double, 3>& x) {
    ++evaluations;
    const double dof = dof_of(x);
    const double ll = log_likelihood(samples_, dof, x[1], scale_of(x));
    double f = -ll / static_cast<double>(samples_.size());
    if (!std::isfinite(f)) f = std::numeric_limits<double>::infinity();
    return {x, f, dof};
  }

  long evaluations = 0;

 private:
  std::span<const double> samples_;
};

bool vertex_less(const Vertex& a, const Vertex& b) {
  if (a.f != b.f) return a.f < b.f;
  return a.dof < b.dof;
}

struct SimplexResult {
  Vertex best;
  int iterations;
  bool converged;
};

SimplexResult nelder_mead(FitObjective& objective, const std::array<double, 3>& start,
                          const std::array<double, 3>& step, const FitOptions& opt) {
  std::array<Vertex, 4> v;
  v[0] = objective.eval(start);
  for (int i = 0; i < 3; ++i) {
    auto x = start;
    x[i] += step[i];
    v[i + 1] = objective.eval(x);
  }

  auto combine = [](const std::array<double, 3>& a, const std::array<double, 3>& b, double t) {
    std::array<double, 3> out;
    for (int i = 0; i < 3; ++i) out[i] = a[i] + t * (b[i] - a[i]);
    return out;
  };

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    std::sort(v.begin(), v.end(), vertex_less);
    double spread_x = 0.0;
    for (int k = 1; k < 4; ++k)
      for (int i = 0; i < 3; ++i) spread_x = std::max(spread_x, std::abs(v[k].x[i] - v[0].x[i]));
    if (std::abs(v[3].f - v[0].f) <= opt.tolerance * (1.0 + std::abs(v[0].f)) && spread_x <= 1e-7)
      return {v[0], it, true};

    std::array<double, 3> centroid{};
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i) centroid[i] += v[k].x[i] / 3.0;

    Vertex reflected = objective.eval(combine(centroid, v[3].x, -1.0));
    if (vertex_less(reflected, v[0])) {
      Vertex expanded = objective.eval(combine(centroid, v[3].x, -2.0));
      v[3] = vertex_less(expanded, reflected) ? expanded : reflected;
      continue;
    }
    if (vertex_less(reflected, v[2])) {
      v[3] = reflected;
      continue;
    }
    const bool outside = vertex_less(reflected, v[3]);
    Vertex contracted = objective.eval(combine(centroid, outside ? reflected.x : v[3].x, 0.5));
    if (vertex_less(contracted, outside ? reflected : v[3])) {
      v[3] = contracted;
      continue;
    }
    for (int k = 1; k < 4; ++k) v[k] = objective.eval(combine(v[0].x, v[k].x, 0.5));
  }
  std::sort(v.begin(), v.end(), vertex_less);
  return {v[0], it, false};
}

}  // namespace

StudentTFit fit_student_t(std::span<const double> samples, const FitOptions& options) {
  const std::size_t n = samples.size();
  if (n < kMinFitSamples)
    throw std::invalid_argument("student-t fit needs at least " + std::to_string(kMinFitSamples) + " samples, got " +
                                std::to_string(n));
  for (double d : samples)
    if (!std::isfinite(d)) throw std::invalid_argument("student-t fit: non-finite sample");

  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double d : samples) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
    throw std::domain_error("student-t fit: samples have zero variance");

  const double dof0 = std::clamp(static_cast<double>(n) - 1.0, 2.0, kMaxFitDof);
  const std::array<double, 3> start{std::log(dof0 - 1.0), mean, std::log(std::clamp(sd, kMinFitScale, kMaxFitScale))};

  FitObjective objective(samples);
  SimplexResult run = nelder_mead(objective, start, {-2.0, 0.25 * sd, 0.3}, options);
  int iterations = run.iterations;
  bool converged = run.converged;
  Vertex best = run.best;
  for (int r = 0; r < options.max_restarts; ++r) {
    SimplexResult again = nelder_mead(objective, best.x, {-0.5, 0.05 * sd, 0.1}, options);
    iterations += again.iterations;
    converged = again.converged;
    const bool improved = best.f - again.best.f > options.tolerance * (1.0 + std::abs(best.f));
    if (vertex_less(again.best, best)) best = again.best;
    if (converged && !improved) break;
  }
  if (!converged)
    throw ConvergenceError("student-t fit did not converge after " + std::to_string(iterations) + " iterations");

  StudentTFit fit;
  fit.dof = FitObjective::dof_of(best.x);
  fit.location = best.x[1];
  fit.scale = FitObjective::scale_of(best.x);
  fit.log_likelihood_at_optimum = log_likelihood(samples, fit.dof, fit.location, fit.scale);
  fit.iterations = iterations;
  return fit;
}

// ---------------------------------------------------------------------------
// CDF / PPF

double standardized_cdf(double x, double dof) {
  check_shape(dof, 1.0);
  if (std::isnan(x)) throw std::invalid_argument("cdf of NaN");
  if (x == 0.0) return 0.5;
  const double c = log_norm_const(dof);
  auto pdf = [c, dof](double t) { return std::exp(c - (dof + 1.0) / 2.0 * std::log1p(t * t / dof)); };
  using Quad = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double ax = std::abs(x);
  // Tolerance is relative to a mass <= 0.5. Asking for much less than 1e-10
  // drops under the error estimate's round-off floor, and the recursion then
  // splits every subinterval down to max depth.
  constexpr unsigned kDepth = 15;
  constexpr double kTol = 1e-10;
  double upper_mass;  // P(T > |x|)
  if (ax <= 8.0) {
    upper_mass = 0.5 - Quad::integrate(pdf, 0.0, ax, kDepth, kTol);
  } else {
    upper_mass = Quad::integrate(pdf, ax, std::numeric_limits<double>::infinity(), kDepth, kTol);
  }
  upper_mass = std::clamp(upper_mass, 0.0, 0.5);
  return x > 0.0 ? 1.0 - upper_mass : upper_mass;
}

double standardized_ppf(double alpha, double dof) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ppf: alpha must lie in (0, 1)");
  check_shape(dof, 1.0);
  double lo = -1.0, hi = 1.0;
  while (standardized_cdf(hi, dof) < alpha) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw NumericalError("ppf: bracket expansion overflowed");
  }
  while (standardized_cdf(lo, dof) > alpha) {
    hi = lo;
    lo *= 2.0;
    if (!std::isfinite(lo)) throw NumericalError("ppf: bracket expansion overflowed");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double c = standardized_cdf(mid, dof);
    if (c == alpha) return mid;
    (c < alpha ? lo : hi) = mid;
    if (hi - lo <= 1e-13 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

double ppf(const StudentTFit& fit, double alpha) {
  check_shape(fit.dof, fit.scale);
  return fit.location + fit.scale * standardized_ppf(alpha, fit.dof);
}

// ---------------------------------------------------------------------------
// CVaR

std::string_view to_string(CvarVariant v) { return v == CvarVariant::Paper ? "paper" : "standard"; }

CvarVariant cvar_variant_from_string(std::string_view s) {
  if (s == "paper") return CvarVariant::Paper;
  if (s == "standard") return CvarVariant::Standard;
  throw std::invalid_argument("unknown CVaR variant '" + std::string(s) + "' (expected paper or standard)");
}

double cvar_closed_form(const StudentTFit& fit, double alpha, double xi, CvarVariant variant) {
  if (!(fit.dof > 1.0)) throw std::domain_error("CVaR closed form needs more than one degree of freedom");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("CVaR: alpha must lie in (0, 1)");
  check_shape(fit.dof, fit.scale);
  const double w = fit.dof;
  const double p = standardized_pdf(xi, w);
  if (variant == CvarVariant::Paper) {
    if (fit.location == 0.0) throw std::domain_error("paper CVaR form is singular at zero location");
    return -1.0 / (alpha * (1.0 - w) * (w + xi * xi) * p * fit.scale * fit.location);
  }
  return fit.location + fit.scale * (w + xi * xi) / (w - 1.0) * p / (1.0 - alpha);
}

std::size_t tail_count(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("tail: alpha must lie in (0, 1)");
  const double t = (1.0 - alpha) * static_cast<double>(n);
  // (1 - 0.9) * 100 is 10.000000000000002 in binary; don't let that round up.
  auto k = static_cast<std::size_t>(std::ceil(t - 1e-9 * std::max(1.0, t)));
  return std::min(n, std::max<std::size_t>(k, 1));
}

namespace {

std::vector<double> upper_tail(std::span<const double> samples, double alpha, std::size_t min_tail) {
  if (samples.empty()) throw std::invalid_argument("tail of an empty sample set");
  const std::size_t k = tail_count(samples.size(), alpha);
  if (k < min_tail)
    throw std::invalid_argument("tail holds " + std::to_string(k) + " samples, need at least " +
                                std::to_string(min_tail));
  std::vector<double> v(samples.begin(), samples.end());
  auto cut = v.begin() + static_cast<std::ptrdiff_t>(v.size() - k);
  std::nth_element(v.begin(), cut, v.end());
  std::sort(cut, v.end());
  return {cut, v.end()};
}

}  // namespace

double var_empirical(std::span<const double> samples, double alpha) { return upper_tail(samples, alpha, 1).front(); }

double cvar_empirical(std::span<const double> samples, double alpha, std::size_t min_tail) {
  auto tail = upper_tail(samples, alpha, min_tail);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size());
}

double normalize_risk(double raw_cvar, double reference_scale) {
  if (!(reference_scale > 0.0)) throw std::invalid_argument("risk normalization: reference scale must be positive");
  if (std::isnan(raw_cvar)) throw std::invalid_argument("risk normalization: NaN CVaR");
  return std::clamp(raw_cvar / reference_scale, 0.0, 1.0 - 1e-9);
}

// ---------------------------------------------------------------------------
// Pipeline

RiskEstimate estimate_risk(const SessionBatch& batch, double alpha, const RiskOptions& options) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("risk: alpha must lie in (0, 1)");
  if (batch.empty()) throw std::invalid_argument("risk: empty session batch");
  if (!(options.reference_hours >= 0.0)) throw std::invalid_argument("risk: reference_hours must be >= 0");
  const auto lax = laxity_samples(batch);
  const auto& d = lax.samples;

  RiskEstimate r;
  r.alpha = alpha;
  r.sample_count = d.size();
  double minutes = 0.0;
  for (const auto& [id, group] : batch.groups())
    for (const auto& s : group) minutes += s.minutes_available;
  r.reference_scale = options.reference_hours > 0.0 ? options.reference_hours
                                                     : minutes / static_cast<double>(batch.size()) / 60.0;

  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = d.size() > 1 ? std::sqrt(ss / static_cast<double>(d.size() - 1)) : 0.0;

  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
    diagnostic("laxity samples of batch '" + batch.id() + "' are constant; using a point-mass risk estimate");
    r.degenerate = true;
    r.fit = {kMaxFitDof, mean, kMinFitScale, 0.0, 0};
    r.fit.log_likelihood_at_optimum = log_likelihood(d, r.fit.dof, r.fit.location, r.fit.scale);
    r.cutoff = 0.0;
    r.var = mean;
    r.cvar_standard = mean;
    r.cvar_empirical = mean;
    r.cvar_normalized = normalize_risk(mean, r.reference_scale);
    return r;
  }

  r.fit = fit_student_t(d, options.fit);
  r.cutoff = standardized_ppf(alpha, r.fit.dof);
  r.var = r.fit.location + r.fit.scale * r.cutoff;
  r.cvar_standard = cvar_closed_form(r.fit, alpha, r.cutoff, CvarVariant::Standard);
  if (r.fit.location != 0.0) r.cvar_paper = cvar_closed_form(r.fit, alpha, r.cutoff, CvarVariant::Paper);
  r.cvar_empirical = cvar_empirical(d, alpha, options.min_tail);

  double selected = r.cvar_standard;
  if (options.variant == CvarVariant::Paper) {
    if (!r.cvar_paper) throw std::domain_error("paper CVaR form is singular at zero location");
    selected = *r.cvar_paper;
  }
  r.cvar_normalized = normalize_risk(selected, r.reference_scale);
  return r;
}

RiskEstimate zero_risk(double alpha) {
  RiskEstimate r;
  r.alpha = alpha;
  r.fit = {kMaxFitDof, 0.0, kMinFitScale, 0.0, 0};
  r.degenerate = true;
  r.reference_scale = 1.0;
  return r;
}

std::string risk_to_json(const RiskEstimate& r) {
  nlohmann::ordered_json j;
  j["alpha"] = r.alpha;
  j["dof"] = r.fit.dof;
  j["location"] = r.fit.location;
  j["scale"] = r.fit.scale;
  j["cutoff"] = r.cutoff;
  j["var"] = r.var;
  j["cvar_paper"] = r.cvar_paper ? nlohmann::ordered_json(*r.cvar_paper) : nlohmann::ordered_json(nullptr);
  j["cvar_standard"] = r.cvar_standard;
  j["cvar_empirical"] = r.cvar_empirical;
  j["cvar_normalized"] = r.cvar_normalized;
  j["log_likelihood"] = r.fit.log_likelihood_at_optimum;
  j["reference_scale"] = r.reference_scale;
  j["sample_count"] = r.sample_count;
  j["degenerate"] = r.degenerate;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Monte-Carlo

MonteCarloTail monte_carlo_tail(double dof, double location, double scale, double alpha, std::size_t samples,
                                std::uint64_t seed, unsigned workers) {
  check_shape(dof, scale);
  if (samples == 0) throw std::invalid_argument("Monte-Carlo tail: zero samples");
  workers = std::max(1u, workers);
  std::vector<double> draws(samples);
  const std::size_t chunk = samples / workers;

  auto fill = [&](unsigned w) {
    std::mt19937_64 rng(split_seed(seed, w));
    std::student_t_distribution<double> t(dof);
    const std::size_t begin = w * chunk;
    const std::size_t end = w + 1 == workers ? samples : begin + chunk;
    for (std::size_t i = begin; i < end; ++i) draws[i] = location + scale * t(rng);
  };
  if (workers == 1) {
    fill(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(fill, w);
    for (auto& th : pool) th.join();
  }
  auto tail = upper_tail(draws, alpha, 1);
  return {tail.front(), std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size())};
}

}  // namespace evsched
