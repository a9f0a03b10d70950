#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace tfr::ingest {

/// One raw country-year observation from one source.
struct RawReport {
    std::string country_code;
    int year = 0;
    double tfr = 0.0;  // births per woman, > 0
    std::string source_id;
};

enum class CellFlag { Observed, Interpolated };

/// Contiguous annual series for one country after harmonization.
struct AnnualSeries {
    std::string country_code;
    int first_year = 0;
    int last_year = 0;
    std::vector<double> values;  // births per woman, index 0 = first_year
    std::vector<CellFlag> flags;
    bool smoothed = false;

    int n_years() const { return static_cast<int>(values.size()); }
    double at_year(int year) const { return values[year - first_year]; }
};

/// Series-level quality diagnostics, computed before any smoothing.
struct SeriesDiagnostics {
    double gap_fraction = 0.0;      // missing interior years / interior span
    double source_dispersion = 0.0; // median over years of within-year SD across reports
    double volatility = 0.0;        // SD of first differences of the annual median series
};

struct PanelMetadata {
    int interpolated_cells = 0;
    int flagged_series = 0;
    int dropped_countries = 0;  // single-observation or modeled-only
};

struct HarmonizedPanel {
    std::map<std::string, AnnualSeries> series;  // keyed by country code
    PanelMetadata metadata;
};

/// Parse the raw reports file (`country_code,year,tfr,source_id`). Malformed
/// rows (bad field count, non-numeric or non-positive tfr, year outside
/// [1900, 2100]) raise with the offending line number. Exact duplicate rows
/// are dropped with a warning.
std::vector<RawReport> parse_raw(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Per-country map year -> median tfr over all reports for that country-year.
/// Even report counts take the mean of the two middle order statistics.
std::map<std::string, std::map<int, double>> aggregate_medians(const std::vector<RawReport>& reports);

/// Fill interior gaps linearly between nearest observed neighbours; the series
/// is trimmed to the observed span, never extrapolated. Requires >= 2 observed
/// years.
AnnualSeries interpolate_gaps(const std::string& country, const std::map<int, double>& yearly);

SeriesDiagnostics compute_diagnostics(const std::vector<RawReport>& reports, const AnnualSeries& series);

/// Two-part quality flag rule over the cross-country diagnostic
/// distributions: any diagnostic above its Q3 + 1.5*IQR fence, or at least two
/// diagnostics above their 75th percentiles. Quartiles use linear
/// interpolation of order statistics. Fewer than 4 countries yields no flags.
std::set<std::string> flag_outliers(const std::map<std::string, SeriesDiagnostics>& diagnostics,
                                    std::vector<std::string>* warnings = nullptr);

/// Bidirectional EWMA with span 5 (alpha = 1/3): mean of a forward and a
/// backward pass, each initialised at its first element.
AnnualSeries smooth_series(const AnnualSeries& series);

/// Full harmonization driver: medians -> interpolation -> diagnostics ->
/// outlier flags -> smoothing of flagged series. Countries whose reports are
/// all tagged with source_id "modeled" are dropped, as are single-observation
/// countries.
HarmonizedPanel harmonize(const std::vector<RawReport>& reports,
                          std::map<std::string, SeriesDiagnostics>* diagnostics_out = nullptr,
                          std::set<std::string>* flagged_out = nullptr,
                          std::vector<std::string>* warnings = nullptr);

/// Panel file i/o: `country_code,year,tfr,flag` with flag in {observed, interpolated}.
void write_panel(const HarmonizedPanel& panel, const std::string& path);
HarmonizedPanel read_panel(const std::string& path);

/// Diagnostics file: `country_code,gap_fraction,source_dispersion,volatility,flagged,smoothed`.
void write_diagnostics(const std::map<std::string, SeriesDiagnostics>& diagnostics,
                       const std::set<std::string>& flagged, const HarmonizedPanel& panel,
                       const std::string& path);

/// Quantile of a sample by linear interpolation of order statistics.
double quantile_linear(std::vector<double> values, double p);

}  // namespace tfr::ingest
