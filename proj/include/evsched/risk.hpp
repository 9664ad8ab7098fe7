#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evsched/session.hpp"

namespace evsched {

/// Laxity samples in hours, one per contributing session.
struct LaxitySampleSet {
  std::vector<double> samples;
  std::string batch_id;
};

/// |e_req / rate_req - e_act / rate_act| in hours (energies in kWh, rates in kW).
double laxity(double energy_requested_kwh, double demand_rate_kw, double energy_delivered_kwh,
              double delivery_rate_kw);

/// One sample per session; rates are taken per EVSE group.
LaxitySampleSet laxity_samples(const SessionBatch& batch);

struct StudentTFit {
  double dof;       ///< omega, > 1
  double location;  ///< mu, hours
  double scale;     ///< sigma, hours
  double log_likelihood_at_optimum;
  int iterations = 0;
};

inline constexpr double kMinFitDof = 1.001;
inline constexpr double kMaxFitDof = 1e6;
inline constexpr double kMinFitScale = 1e-6;
inline constexpr double kMaxFitScale = 1e6;
inline constexpr std::size_t kMinFitSamples = 8;

double student_t_pdf(double d, double dof, double location, double scale);
/// Location 0, scale 1.
double standardized_pdf(double xi, double dof);

/// Closed-form sum of log densities:
///   D lgamma((w+1)/2) + (D w / 2) log w - D lgamma(w/2) - D log s
///   - ((w+1)/2) sum log(w + z_j^2) - (D/2) log pi,   z_j = (d_j - mu) / s
double log_likelihood(std::span<const double> samples, double dof, double location, double scale);

struct FitOptions {
  int max_iterations = 4000;  ///< per simplex run
  int max_restarts = 8;
  double tolerance = 1e-10;   ///< on the per-sample objective spread
};

/// Maximum likelihood by Nelder-Mead over (log(w - 1), mu, log s), started
/// from the sample moments and w0 = n - 1 (capped at the upper bound).
/// Throws std::invalid_argument below kMinFitSamples, std::domain_error on
/// zero sample variance and ConvergenceError when the simplex never settles.
StudentTFit fit_student_t(std::span<const double> samples, const FitOptions& options = {});

/// P(T <= x) for the standardized t, by adaptive quadrature of the density.
double standardized_cdf(double x, double dof);
/// Bisection inverse of standardized_cdf.
double standardized_ppf(double alpha, double dof);
/// mu + s * standardized_ppf(alpha, w). Throws std::invalid_argument unless 0 < alpha < 1.
double ppf(const StudentTFit& fit, double alpha);

enum class CvarVariant { Paper, Standard };
std::string_view to_string(CvarVariant v);
CvarVariant cvar_variant_from_string(std::string_view s);

/// `xi` is the standardized cutoff, standardized_ppf(alpha, w).
///
/// Standard: upper-tail expectation E[L | L >= mu + s xi]
///   = mu + s (w + xi^2) / (w - 1) * P_w(xi) / (1 - alpha).
/// Paper: -1 / (alpha (1 - w) (w + xi^2) P_w(xi) s mu), evaluated as printed.
/// It is singular at mu = 0 and throws std::domain_error there.
double cvar_closed_form(const StudentTFit& fit, double alpha, double xi, CvarVariant variant);

/// Number of upper-tail samples used at level alpha: ceil((1 - alpha) n).
std::size_t tail_count(std::size_t n, double alpha);
/// Smallest sample in the upper tail.
double var_empirical(std::span<const double> samples, double alpha);
/// Mean of the worst (1 - alpha) fraction of samples. Throws
/// std::invalid_argument if fewer than `min_tail` samples fall in the tail.
double cvar_empirical(std::span<const double> samples, double alpha, std::size_t min_tail = 10);

/// clamp(raw / reference_scale, 0, 1 - 1e-9)
double normalize_risk(double raw_cvar, double reference_scale);

struct RiskOptions {
  /// Which closed form feeds cvar_normalized.
  CvarVariant variant = CvarVariant::Standard;
  /// Tail floor for the empirical estimate. Small batches at alpha = 0.99
  /// have a single tail sample, so the pipeline accepts that.
  std::size_t min_tail = 1;
  FitOptions fit;
  /// Hours dividing the raw CVaR; 0 = mean requested charging hours of the batch.
  double reference_hours = 0.0;
};

struct RiskEstimate {
  double alpha = 0.0;
  StudentTFit fit{};
  double cutoff = 0.0;  ///< standardized xi
  double var = 0.0;     ///< mu + s xi, hours
  std::optional<double> cvar_paper;
  double cvar_standard = 0.0;
  double cvar_empirical = 0.0;
  double cvar_normalized = 0.0;
  double reference_scale = 0.0;  ///< hours; mean requested charging hours unless overridden
  std::size_t sample_count = 0;
  bool degenerate = false;  ///< laxity was (near) constant; point-mass estimate
};

/// laxity_samples -> fit_student_t -> ppf -> CVaR variants -> normalization.
RiskEstimate estimate_risk(const SessionBatch& batch, double alpha, const RiskOptions& options = {});

/// A fixed, zero risk for ablations.
RiskEstimate zero_risk(double alpha);

/// JSON object {alpha, dof, location, scale, cutoff, var, cvar_paper,
/// cvar_standard, cvar_empirical, cvar_normalized}; cvar_paper is null
/// where undefined.
std::string risk_to_json(const RiskEstimate& r);

struct MonteCarloTail {
  double var;
  double cvar;
};

/// Upper-tail VaR and tail mean of `samples` draws from t(w, mu, s).
/// Each worker draws from its own seeded stream; results are reproducible
/// for a fixed (seed, workers) pair.
MonteCarloTail monte_carlo_tail(double dof, double location, double scale, double alpha, std::size_t samples,
                                std::uint64_t seed, unsigned workers = 1);

}  // namespace evsched
