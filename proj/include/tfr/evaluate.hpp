#pragma once

#include <map>
#include <string>
#include <vector>

#include "tfr/matrix.hpp"

namespace tfr::evaluate {

/// Per-country, per-model metric row. rmsse is NaN when the country's
/// training series is constant (excluded from rmsse summaries).
struct CountryScores {
    std::string country_code;
    std::string model;
    double rmse = 0.0;
    double smape = 0.0;       // percent, 0..200 convention
    double rmsse = 0.0;
    double crps = 0.0;
    double coverage90 = 0.0;  // percent
    double mpiw90 = 0.0;
    double mis90 = 0.0;

    double metric(const std::string& name) const;
};

double rmse(const std::vector<double>& actual, const std::vector<double>& forecast);
double smape(const std::vector<double>& actual, const std::vector<double>& forecast);
/// Scaled by the in-sample RMS of one-step differences of the training
/// series; throws std::domain_error when that denominator is zero.
double rmsse(const std::vector<double>& actual, const std::vector<double>& forecast,
             const std::vector<double>& training_series);

/// Quantile-average CRPS approximation: (2/|Q|) * sum of pinball losses.
double crps_q(double actual, const std::vector<double>& quantiles, const std::vector<double>& levels);

double coverage90(const std::vector<double>& actual, const std::vector<double>& q05,
                  const std::vector<double>& q95);
double mpiw90(const std::vector<double>& q05, const std::vector<double>& q95);
/// Mean interval score at alpha = 0.10.
double mis90(const std::vector<double>& actual, const std::vector<double>& q05,
             const std::vector<double>& q95);

/// Two-sided paired signed-rank test. Zero differences are dropped, ties take
/// average ranks; exact enumeration for n <= 20, normal approximation with tie
/// and continuity corrections beyond. All-zero differences give p = 1.
double wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                            std::vector<std::string>* warnings = nullptr);

/// All seven metrics for one country-model pair. Forecast rows are the five
/// quantile values per evaluated year, natural TFR units.
CountryScores score_country(const std::string& country, const std::string& model,
                            const std::vector<double>& actual,
                            const std::vector<std::vector<double>>& quantile_rows,
                            const std::vector<double>& training_series);

struct SummaryRow {
    std::string metric;
    std::string model;
    double median = 0.0, q1 = 0.0, q3 = 0.0;
    int n_countries = 0;
};

struct PairTest {
    std::string metric;
    std::string model_a, model_b;  // best and second-best median
    double p_value = 1.0;
};

struct MetricReport {
    std::vector<SummaryRow> summaries;
    std::vector<PairTest> tests;
};

/// Median/Q1/Q3 per metric per model over countries, plus a Wilcoxon test
/// between the two models with the most favorable medians per metric
/// (for coverage90, closest to the nominal 90).
MetricReport summarize(const std::vector<CountryScores>& scores, std::vector<std::string>* warnings = nullptr);

inline const std::vector<std::string> kMetricNames = {"rmse",       "smape",  "rmsse", "crps",
                                                      "coverage90", "mpiw90", "mis90"};

void write_scores(const std::vector<CountryScores>& scores, const std::string& path);
void write_summary(const MetricReport& report, const std::string& path);

}  // namespace tfr::evaluate
