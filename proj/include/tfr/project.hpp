#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "tfr/model.hpp"
#include "tfr/transform.hpp"

namespace tfr::project {

/// One projected (country, year) row in natural TFR units.
struct ForecastRecord {
    std::string country_code;
    int year = 0;
    std::string model;
    double q05 = 0.0, q10 = 0.0, q50 = 0.0, q90 = 0.0, q95 = 0.0;

    bool monotone() const { return q05 <= q10 && q10 <= q50 && q50 <= q90 && q90 <= q95; }
};

using PopulationWeights = std::map<std::string, double>;  // country -> positive weight
using RegionMap = std::map<std::string, std::string>;     // country -> region label

/// Autoregressive forward projection per country from its last observed year.
/// Horizons beyond L_pred chain decode passes by feeding the first-pass median
/// predictions back as pseudo-observations (re-anchoring). Countries too short
/// for a window are skipped with a warning.
std::vector<ForecastRecord> forecast_forward(const std::vector<model::Checkpoint>& members,
                                             const transform::StandardizedPanel& panel, int end_year,
                                             const std::string& model_tag = "neural",
                                             std::vector<std::string>* warnings = nullptr);

/// Population-weighted mean of per-country interval-mean medians over the
/// given years (inclusive range). Countries without a weight are excluded
/// with a warning.
double weighted_tfr(const std::vector<ForecastRecord>& records, const PopulationWeights& weights,
                    int year_lo, int year_hi, const std::string& model,
                    std::vector<std::string>* warnings = nullptr);

/// Shares over the bands (<1.3), [1.3,1.5), [1.5,2.1), >=2.1 of each
/// country's endpoint median (endpoint_year or last projected year).
std::vector<double> threshold_shares(const std::vector<ForecastRecord>& records, const std::string& model,
                                     int endpoint_year);

inline const std::vector<std::string> kBandNames = {"<1.3", "[1.3,1.5)", "[1.5,2.1)", ">=2.1"};
std::string band_label(double tfr);

struct EndpointRow {
    std::string region;
    std::string country_code;
    std::string model;
    int year = 0;
    double q50 = 0.0;
    std::string band;
};

/// One row per (country, model) over the intersection sample: countries that
/// have records from every compared model and a region assignment.
std::vector<EndpointRow> regional_endpoint_table(const std::vector<ForecastRecord>& records,
                                                 const RegionMap& regions, int endpoint_year,
                                                 std::vector<std::string>* warnings = nullptr);

/// Forecast CSV schema: `country_code,year,model,q05,q10,q50,q90,q95`.
/// Rows with schema violations or non-monotone quantiles are rejected with
/// their line number reported via warnings.
std::vector<ForecastRecord> load_comparators(const std::vector<std::string>& paths,
                                             std::vector<std::string>* warnings = nullptr);

void write_forecast(const std::vector<ForecastRecord>& records, const std::string& path);

PopulationWeights load_weights(const std::string& path);  // `country_code,weight`
RegionMap load_regions(const std::string& path);          // `country_code,region`

struct AggregateReport {
    // interval label -> model -> weighted tfr
    std::vector<std::tuple<std::string, std::string, double>> weighted;
    // model -> band shares (kBandNames order)
    std::map<std::string, std::vector<double>> shares;
};

AggregateReport build_aggregate_report(const std::vector<ForecastRecord>& records,
                                       const PopulationWeights& weights,
                                       const std::vector<std::pair<int, int>>& intervals, int endpoint_year,
                                       std::vector<std::string>* warnings = nullptr);

void write_aggregate_report(const AggregateReport& report, const std::string& csv_path,
                            const std::string& json_path);
void write_endpoint_table(const std::vector<EndpointRow>& rows, const std::string& path);

}  // namespace tfr::project
