#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "evsched/errors.hpp"
#include "evsched/risk.hpp"
#include "helpers.hpp"

using namespace evsched;
using evsched::test::exact;
using evsched::test::make_session;

namespace {

// Composite Simpson over the density, independent of the library's quadrature.
double simpson_cdf(double x, double dof) {
  const int n = 20000;
  const double h = x / n;
  double sum = standardized_pdf(0.0, dof) + standardized_pdf(x, dof);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * standardized_pdf(i * h, dof);
  return 0.5 + sum * h / 3.0;
}

// log pdf written out from the textbook density.
double textbook_log_pdf(double d, double w, double mu, double s) {
  const double z = (d - mu) / s;
  return std::lgamma((w + 1) / 2) - std::lgamma(w / 2) - 0.5 * std::log(w * std::numbers::pi) - std::log(s) -
         (w + 1) / 2 * std::log1p(z * z / w);
}

std::vector<double> t_draws(double w, double mu, double s, std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::student_t_distribution<double> t(w);
  std::vector<double> out(n);
  for (auto& x : out) x = mu + s * t(rng);
  return out;
}

SessionBatch mixed_batch(double cv_request_factor) {
  std::vector<ChargingSession> v;
  for (int i = 0; i < 40; ++i) {
    const std::string id = "s" + std::to_string(i);
    const std::string evse = i % 2 ? "e1" : "e0";
    const double kwh = 4.0 + (i % 7);
    const int minutes = 40 + 10 * (i % 5);
    if (i % 3 == 0)
      v.push_back(exact(id, evse, kwh, i * 300, minutes));
    else
      v.push_back(make_session(id, evse, VehicleClass::CV, kwh * cv_request_factor, minutes * cv_request_factor,
                               i * 300, minutes, minutes + 5 * (i % 4), kwh));
  }
  return SessionBatch(v);
}

}  // namespace

TEST(Laxity, HandExample) {
  EXPECT_DOUBLE_EQ(laxity(10, 10, 5, 10), 0.5);
  // Same numbers through a batch: rates are 10 kW on both sides.
  const SessionBatch b({make_session("a", "e", VehicleClass::CV, 10, 60, 0, 30, 60, 5)});
  const auto lax = laxity_samples(b);
  ASSERT_EQ(lax.samples.size(), 1u);
  EXPECT_DOUBLE_EQ(lax.samples[0], 0.5);
}

TEST(Laxity, ExactSessionsHaveNone) {
  const SessionBatch b({exact("a", "e", 10, 0, 60), exact("b", "e", 20, 100, 120), exact("c", "f", 3, 0, 18)});
  for (double x : laxity_samples(b).samples) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(Density, CauchyAndNormalLimits) {
  EXPECT_NEAR(student_t_pdf(0, 1, 0, 1), 1 / std::numbers::pi, 1e-12);
  EXPECT_NEAR(standardized_pdf(0, 1), 1 / std::numbers::pi, 1e-12);
  EXPECT_NEAR(student_t_pdf(0, 1e6, 0, 1), 0.39894, 1e-3);
  for (double x : {-3.0, -0.4, 0.0, 1.7}) {
    EXPECT_DOUBLE_EQ(standardized_pdf(x, 4.5), student_t_pdf(x, 4.5, 0, 1));
    EXPECT_DOUBLE_EQ(standardized_pdf(x, 4.5), standardized_pdf(-x, 4.5));
  }
}

TEST(Density, PeakAtLocation) {
  const double peak = student_t_pdf(2.0, 3.0, 2.0, 0.7);
  for (double d = -3.0; d <= 7.0; d += 0.01) EXPECT_LE(student_t_pdf(d, 3.0, 2.0, 0.7), peak + 1e-15);
}

TEST(LogLikelihood, MatchesSumOfLogDensities) {
  const auto d = t_draws(3.5, 1.0, 0.8, 1000, 1);
  for (auto [w, mu, s] : {std::tuple{3.5, 1.0, 0.8}, std::tuple{1.2, -0.5, 2.0}, std::tuple{40.0, 1.3, 0.3}}) {
    double oracle = 0.0;
    for (double x : d) oracle += textbook_log_pdf(x, w, mu, s);
    EXPECT_NEAR(log_likelihood(d, w, mu, s), oracle, 1e-8 * std::abs(oracle));
  }
  const std::vector<double> one{2.0};
  EXPECT_NEAR(log_likelihood(one, 5, 2.0, 0.5), std::log(student_t_pdf(2.0, 5, 2.0, 0.5)), 1e-12);
}

TEST(Cdf, AgreesWithTwoIndependentOracles) {
  for (double w : {1.001, 1.26, 2.0, 5.0, 30.0, 1e4}) {
    boost::math::students_t_distribution<double> t(w);
    for (double x : {-40.0, -3.0, -0.5, 0.0, 0.25, 1.0, 2.5, 7.9, 8.1, 100.0, 1e4}) {
      EXPECT_NEAR(standardized_cdf(x, w), boost::math::cdf(t, x), 1e-9) << "w=" << w << " x=" << x;
      if (std::abs(x) <= 10) EXPECT_NEAR(standardized_cdf(x, w), x >= 0 ? simpson_cdf(x, w) : 1 - simpson_cdf(-x, w), 1e-8);
    }
  }
}

TEST(Ppf, ReferenceQuantiles) {
  EXPECT_NEAR(standardized_ppf(0.95, 5), 2.0150, 1e-3);
  EXPECT_NEAR(standardized_ppf(0.95, 1e6), 1.6449, 1e-3);
  EXPECT_NEAR(ppf({3.0, 4.2, 0.3, 0.0, 0}, 0.5), 4.2, 1e-9);
  EXPECT_NEAR(standardized_ppf(0.05, 5), -standardized_ppf(0.95, 5), 1e-9);
  EXPECT_THROW(ppf({3.0, 0.0, 1.0, 0.0, 0}, 1.0), std::invalid_argument);
  boost::math::students_t_distribution<double> t(2.5);
  for (double a : {0.01, 0.3, 0.9, 0.99, 0.999}) EXPECT_NEAR(standardized_ppf(a, 2.5), boost::math::quantile(t, a), 1e-7);
}

TEST(Fit, RecoversParametersOnLargeSample) {
  const auto d = t_draws(5.0, 2.0, 0.5, 100000, 7);
  const auto f = fit_student_t(d);
  EXPECT_NEAR(f.dof, 5.0, 0.25);
  EXPECT_NEAR(f.location, 2.0, 0.1);
  EXPECT_NEAR(f.scale, 0.5, 0.025);
  EXPECT_NEAR(f.log_likelihood_at_optimum, log_likelihood(d, f.dof, f.location, f.scale), 1e-6);
}

TEST(Fit, IsALocalMaximum) {
  const auto d = t_draws(2.5, 0.0, 1.5, 2000, 3);
  const auto f = fit_student_t(d);
  const double best = log_likelihood(d, f.dof, f.location, f.scale);
  for (double e : {-1e-3, 1e-3}) {
    EXPECT_LE(log_likelihood(d, f.dof * (1 + e), f.location, f.scale), best + 1e-7);
    EXPECT_LE(log_likelihood(d, f.dof, f.location + e, f.scale), best + 1e-7);
    EXPECT_LE(log_likelihood(d, f.dof, f.location, f.scale * (1 + e)), best + 1e-7);
  }
}

TEST(Fit, OrderDoesNotMatter) {
  auto d = t_draws(4.0, 1.0, 1.0, 500, 9);
  const auto a = fit_student_t(d);
  std::reverse(d.begin(), d.end());
  std::shuffle(d.begin(), d.end(), std::mt19937(2));
  const auto b = fit_student_t(d);
  EXPECT_NEAR(a.dof, b.dof, 1e-3 * a.dof);
  EXPECT_NEAR(a.location, b.location, 1e-4);
  EXPECT_NEAR(a.scale, b.scale, 1e-4);
}

TEST(Fit, DegenerateInputs) {
  const std::vector<double> few{1, 2, 3};
  EXPECT_THROW(fit_student_t(few), std::invalid_argument);
  const std::vector<double> flat(20, 3.0);
  EXPECT_THROW(fit_student_t(flat), std::domain_error);
}

TEST(Cvar, EmpiricalEnumeration) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_EQ(tail_count(100, 0.9), 10u);
  EXPECT_DOUBLE_EQ(cvar_empirical(v, 0.9), 95.5);
  EXPECT_DOUBLE_EQ(var_empirical(v, 0.9), 91.0);
  const std::vector<double> flat(50, 2.5);
  EXPECT_DOUBLE_EQ(cvar_empirical(flat, 0.9, 1), 2.5);
  EXPECT_THROW(cvar_empirical(v, 0.99), std::invalid_argument);  // one tail sample, default floor 10
  EXPECT_DOUBLE_EQ(cvar_empirical(v, 0.99, 1), 100.0);
}

TEST(Cvar, EmpiricalNonDecreasingInAlpha) {
  const auto d = t_draws(3.0, 0.0, 1.0, 5000, 4);
  double prev = -1e300;
  for (double a : {0.5, 0.8, 0.9, 0.95, 0.99}) {
    const double c = cvar_empirical(d, a, 1);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Cvar, StandardFormMatchesMonteCarlo) {
  const StudentTFit fit{5.0, 0.0, 1.0, 0.0, 0};
  const double xi = standardized_ppf(0.95, 5.0);
  EXPECT_NEAR(xi, 2.0150, 1e-3);
  const double closed = cvar_closed_form(fit, 0.95, xi, CvarVariant::Standard);
  const auto mc = monte_carlo_tail(5.0, 0.0, 1.0, 0.95, 1000000, 17, 4);
  EXPECT_NEAR(closed, mc.cvar, 0.02 * std::abs(mc.cvar));
  EXPECT_NEAR(mc.var, xi, 0.02 * xi);
  // Lower tail at 0.05 by symmetry: -(upper tail at 0.95).
  auto draws = t_draws(5.0, 0.0, 1.0, 1000000, 5);
  for (auto& x : draws) x = -x;
  EXPECT_NEAR(-closed, -cvar_empirical(draws, 0.95), 0.02 * closed);
}

TEST(Cvar, MonteCarloIsReproducible) {
  const auto a = monte_carlo_tail(3.0, 1.0, 2.0, 0.9, 20000, 5, 3);
  const auto b = monte_carlo_tail(3.0, 1.0, 2.0, 0.9, 20000, 5, 3);
  EXPECT_EQ(a.var, b.var);
  EXPECT_EQ(a.cvar, b.cvar);
}

TEST(Cvar, PaperFormIsSingularAtZeroLocation) {
  const StudentTFit zero{5.0, 0.0, 1.0, 0.0, 0};
  EXPECT_THROW(cvar_closed_form(zero, 0.95, 2.015, CvarVariant::Paper), std::domain_error);
  const StudentTFit fit{5.0, 1.0, 1.0, 0.0, 0};
  const double xi = 2.015;
  const double printed = -1.0 / (0.95 * (1 - 5.0) * (5.0 + xi * xi) * standardized_pdf(xi, 5.0) * 1.0 * 1.0);
  EXPECT_NEAR(cvar_closed_form(fit, 0.95, xi, CvarVariant::Paper), printed, 1e-12 * std::abs(printed));
}

TEST(Normalize, Examples) {
  EXPECT_DOUBLE_EQ(normalize_risk(0.0, 4.0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_risk(4.0, 4.0), 1.0 - 1e-9);
  EXPECT_DOUBLE_EQ(normalize_risk(40.0, 4.0), 1.0 - 1e-9);
  EXPECT_NEAR(normalize_risk(0.067 * 4.0, 4.0), 0.067, 1e-12);
  EXPECT_DOUBLE_EQ(normalize_risk(-1.0, 4.0), 0.0);
}

TEST(EstimateRisk, ZeroLaxityBatchHasZeroRisk) {
  const SessionBatch b({exact("a", "e", 10, 0, 60), exact("b", "e", 20, 100, 120), exact("c", "f", 3, 0, 18)});
  const auto r = estimate_risk(b, 0.99);
  EXPECT_TRUE(r.degenerate);
  EXPECT_NEAR(r.cvar_normalized, 0.0, 1e-9);
}

TEST(EstimateRisk, OverRequestingRaisesRisk) {
  RiskOptions o;
  o.reference_hours = 100.0;  // keep both batches off the clamp
  const auto low = estimate_risk(mixed_batch(1.2), 0.95, o);
  const auto high = estimate_risk(mixed_batch(2.0), 0.95, o);
  EXPECT_GT(high.cvar_normalized, low.cvar_normalized);
  EXPECT_GT(high.cvar_empirical, low.cvar_empirical);
}

TEST(EstimateRisk, EmpiricalCvarNonDecreasingInAlpha) {
  const auto b = mixed_batch(1.8);
  double prev = -1.0;
  for (double a : {0.90, 0.95, 0.99}) {
    const double c = estimate_risk(b, a).cvar_empirical;
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(EstimateRisk, ReferenceOverrideAndErrors) {
  const auto b = mixed_batch(1.5);
  const auto def = estimate_risk(b, 0.9);
  double minutes = 0.0;
  for (const auto& s : b.flatten()) minutes += s.minutes_available;
  EXPECT_NEAR(def.reference_scale, minutes / 40.0 / 60.0, 1e-12);
  RiskOptions o;
  o.reference_hours = 50.0;
  const auto r = estimate_risk(b, 0.9, o);
  EXPECT_DOUBLE_EQ(r.reference_scale, 50.0);
  EXPECT_NEAR(r.cvar_normalized, std::min(r.cvar_standard / 50.0, 1 - 1e-9), 1e-12);
  o.reference_hours = -1.0;
  EXPECT_THROW(estimate_risk(b, 0.9, o), std::invalid_argument);
  EXPECT_THROW(estimate_risk(b, 1.0), std::invalid_argument);
  EXPECT_THROW(estimate_risk(SessionBatch{}, 0.9), std::invalid_argument);
}

TEST(EstimateRisk, JsonHasNullPaperFormWhenUndefined) {
  auto r = zero_risk(0.99);
  const auto j = risk_to_json(r);
  EXPECT_NE(j.find("\"cvar_paper\""), std::string::npos);
  EXPECT_NE(j.find("null"), std::string::npos);
  EXPECT_DOUBLE_EQ(r.cvar_normalized, 0.0);
}
