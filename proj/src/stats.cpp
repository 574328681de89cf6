#include "ergot/stats.hpp"

#include "ergot/errors.hpp"

#include <boost/math/distributions/beta.hpp>

#include <cmath>

namespace ergot {

SampleSummary summarize(const Eigen::Ref<const Eigen::VectorXd>& samples) {
  SampleSummary s;
  s.n = static_cast<std::size_t>(samples.size());
  if (s.n < 2) throw InvalidArgument("summarize: need at least two samples");
  const double n = double(s.n);
  s.mean = samples.mean();
  const Eigen::ArrayXd c = samples.array() - s.mean;
  const double m2 = c.square().mean();
  const double m3 = c.cube().mean();
  const double m4 = c.square().square().mean();
  s.variance = m2 * n / (n - 1.0);
  s.mean_stderr = std::sqrt(s.variance / n);
  s.variance_stderr = std::sqrt(std::max(0.0, (m4 - (n - 3.0) / (n - 1.0) * s.variance * s.variance) / n));
  s.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  s.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  return s;
}

NormalityReport normality_report(const Eigen::Ref<const Eigen::VectorXd>& samples, double predicted_variance,
                                 std::size_t min_samples) {
  if (std::size_t(samples.size()) < min_samples) {
    throw InvalidArgument("normality_report: insufficient replicas (" + std::to_string(samples.size()) + " < " +
                          std::to_string(min_samples) + ")");
  }
  NormalityReport r;
  r.summary = summarize(samples);
  r.predicted_variance = predicted_variance;
  r.variance_zscore = (r.summary.variance - predicted_variance) / r.summary.variance_stderr;
  const double n = double(r.summary.n);
  r.jarque_bera = n / 6.0 * (r.summary.skewness * r.summary.skewness +
                             r.summary.excess_kurtosis * r.summary.excess_kurtosis / 4.0);
  // Chi-square with two degrees of freedom.
  r.p_value = std::exp(-r.jarque_bera / 2.0);
  return r;
}

BinomialInterval clopper_pearson(std::size_t successes, std::size_t trials, double confidence) {
  if (trials == 0 || successes > trials) throw InvalidArgument("clopper_pearson: invalid counts");
  const double alpha = 1.0 - confidence;
  const double k = double(successes), n = double(trials);
  BinomialInterval ci;
  if (successes > 0) ci.lower = boost::math::quantile(boost::math::beta_distribution<>(k, n - k + 1), alpha / 2);
  if (successes < trials) {
    ci.upper = boost::math::quantile(boost::math::beta_distribution<>(k + 1, n - k), 1 - alpha / 2);
  }
  return ci;
}

LogFit fit_log_log(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("fit_log_log: need matching vectors of length >= 2");
  if ((x.array() <= 0).any() || (y.array() <= 0).any()) throw InvalidArgument("fit_log_log: values must be positive");
  const Eigen::ArrayXd lx = x.array().log(), ly = y.array().log();
  const double mx = lx.mean(), my = ly.mean();
  LogFit f;
  f.slope = ((lx - mx) * (ly - my)).sum() / (lx - mx).square().sum();
  f.intercept = my - f.slope * mx;
  f.max_residual = (ly - f.intercept - f.slope * lx).abs().maxCoeff();
  return f;
}

}  // namespace ergot
