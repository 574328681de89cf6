#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace ergot {

/// Sample moments of one scalar statistic over replicas.
struct SampleSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double mean_stderr = 0.0;
  /// Standard error of the sample variance, from the fourth central moment.
  double variance_stderr = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

SampleSummary summarize(const Eigen::Ref<const Eigen::VectorXd>& samples);

struct NormalityReport {
  SampleSummary summary;
  double predicted_variance = 0.0;
  /// (variance - predicted) / variance_stderr.
  double variance_zscore = 0.0;
  double jarque_bera = 0.0;
  double p_value = 0.0;
};

/// Compares samples with N(0, predicted_variance); throws InvalidArgument
/// below `min_samples`.
NormalityReport normality_report(const Eigen::Ref<const Eigen::VectorXd>& samples, double predicted_variance,
                                 std::size_t min_samples = 512);

/// Two-sided Clopper-Pearson interval at the given confidence.
struct BinomialInterval {
  double lower = 0.0;
  double upper = 1.0;
};
BinomialInterval clopper_pearson(std::size_t successes, std::size_t trials, double confidence = 0.99);

/// Least-squares slope and the max abs residual of log y against log x.
struct LogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;
};
LogFit fit_log_log(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y);

}  // namespace ergot
