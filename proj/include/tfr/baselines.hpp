#pragma once

#include <string>
#include <vector>

namespace tfr::baselines {

/// Positivity floor applied to drift extrapolations (births per woman).
inline constexpr double kTfrFloor = 0.05;

struct DriftForecast {
    std::string country_code;
    int origin_year = 0;
    std::vector<double> values;  // natural TFR units, horizon h = 1..H
};

/// Random walk with drift: d = (y_T - y_first) / (T - first), forecast
/// y_T + h*d clamped below at the positivity floor. Needs >= 2 observations.
std::vector<double> naive_drift(const std::vector<double>& series, int horizon);

}  // namespace tfr::baselines
