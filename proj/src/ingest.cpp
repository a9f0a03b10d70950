#include "tfr/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "tfr/csv.hpp"

namespace tfr::ingest {

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n == 0) throw std::invalid_argument("median of empty set");
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void warn(std::vector<std::string>* warnings, const std::string& msg) {
    if (warnings) warnings->push_back(msg);
}

}  // namespace

double quantile_linear(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile of empty set");
    std::sort(values.begin(), values.end());
    double pos = p * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<RawReport> parse_raw(const std::string& path, std::vector<std::string>* warnings) {
    auto lines = csv::read_lines(path);
    if (lines.empty()) throw std::runtime_error("empty raw reports file: " + path);
    if (lines[0] != "country_code,year,tfr,source_id")
        throw std::runtime_error("bad header in " + path + ": expected country_code,year,tfr,source_id");

    std::vector<RawReport> out;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty()) continue;
        auto fields = csv::split(line);
        std::size_t lineno = i + 1;
        if (fields.size() != 4)
            throw std::runtime_error("malformed row at line " + std::to_string(lineno) + ": expected 4 fields");
        RawReport r;
        r.country_code = fields[0];
        if (r.country_code.empty() || !csv::parse_int(fields[1], r.year) || !csv::parse_double(fields[2], r.tfr))
            throw std::runtime_error("malformed row at line " + std::to_string(lineno));
        if (r.tfr <= 0.0)
            throw std::runtime_error("non-positive tfr at line " + std::to_string(lineno));
        if (r.year < 1900 || r.year > 2100)
            throw std::runtime_error("year out of range at line " + std::to_string(lineno));
        r.source_id = fields[3];
        if (!seen.insert(line).second) {
            warn(warnings, "duplicate row at line " + std::to_string(lineno) + " dropped");
            continue;
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::map<std::string, std::map<int, double>> aggregate_medians(const std::vector<RawReport>& reports) {
    std::map<std::string, std::map<int, std::vector<double>>> grouped;
    for (const RawReport& r : reports) grouped[r.country_code][r.year].push_back(r.tfr);
    std::map<std::string, std::map<int, double>> out;
    for (auto& [country, years] : grouped)
        for (auto& [year, vals] : years) out[country][year] = median_of(vals);
    return out;
}

AnnualSeries interpolate_gaps(const std::string& country, const std::map<int, double>& yearly) {
    if (yearly.size() < 2) throw std::invalid_argument("interpolate_gaps: need >= 2 observed years for " + country);
    AnnualSeries s;
    s.country_code = country;
    s.first_year = yearly.begin()->first;
    s.last_year = yearly.rbegin()->first;
    s.values.resize(s.last_year - s.first_year + 1);
    s.flags.resize(s.values.size(), CellFlag::Interpolated);

    for (const auto& [year, v] : yearly) {
        s.values[year - s.first_year] = v;
        s.flags[year - s.first_year] = CellFlag::Observed;
    }
    // fill interior runs linearly between observed neighbours
    auto it = yearly.begin();
    auto next = std::next(it);
    for (; next != yearly.end(); ++it, ++next) {
        int y0 = it->first, y1 = next->first;
        for (int y = y0 + 1; y < y1; ++y) {
            double t = static_cast<double>(y - y0) / static_cast<double>(y1 - y0);
            s.values[y - s.first_year] = it->second + t * (next->second - it->second);
        }
    }
    return s;
}

SeriesDiagnostics compute_diagnostics(const std::vector<RawReport>& reports, const AnnualSeries& series) {
    SeriesDiagnostics d;

    // gap fraction: missing interior years over interior span, before interpolation
    std::set<int> observed_years;
    std::map<int, std::vector<double>> per_year;
    for (const RawReport& r : reports) {
        if (r.country_code != series.country_code) continue;
        observed_years.insert(r.year);
        per_year[r.year].push_back(r.tfr);
    }
    int interior_span = series.last_year - series.first_year - 1;
    if (interior_span > 0) {
        int missing = 0;
        for (int y = series.first_year + 1; y < series.last_year; ++y)
            if (!observed_years.count(y)) ++missing;
        d.gap_fraction = static_cast<double>(missing) / static_cast<double>(interior_span);
    }

    // within-year dispersion across reports: median over years; 1-report years contribute 0
    std::vector<double> sds;
    for (const auto& [year, vals] : per_year) sds.push_back(sample_sd(vals));
    if (!sds.empty()) d.source_dispersion = median_of(sds);

    // volatility: SD of first differences of the annual median series
    if (series.n_years() >= 3) {
        std::vector<double> diffs;
        for (int i = 1; i < series.n_years(); ++i) diffs.push_back(series.values[i] - series.values[i - 1]);
        d.volatility = sample_sd(diffs);
    }
    return d;
}

std::set<std::string> flag_outliers(const std::map<std::string, SeriesDiagnostics>& diagnostics,
                                    std::vector<std::string>* warnings) {
    std::set<std::string> flagged;
    if (diagnostics.size() < 4) {
        warn(warnings, "flag_outliers: fewer than 4 countries, no flags applied");
        return flagged;
    }
    std::vector<double> g, s, v;
    for (const auto& [c, d] : diagnostics) {
        g.push_back(d.gap_fraction);
        s.push_back(d.source_dispersion);
        v.push_back(d.volatility);
    }
    auto fences = [](const std::vector<double>& x) {
        double q1 = quantile_linear(x, 0.25);
        double q3 = quantile_linear(x, 0.75);
        return std::pair<double, double>{q3, q3 + 1.5 * (q3 - q1)};
    };
    auto [p75_g, fence_g] = fences(g);
    auto [p75_s, fence_s] = fences(s);
    auto [p75_v, fence_v] = fences(v);

    for (const auto& [c, d] : diagnostics) {
        bool iqr_hit = d.gap_fraction > fence_g || d.source_dispersion > fence_s || d.volatility > fence_v;
        int above_p75 = (d.gap_fraction > p75_g ? 1 : 0) + (d.source_dispersion > p75_s ? 1 : 0) +
                        (d.volatility > p75_v ? 1 : 0);
        if (iqr_hit || above_p75 >= 2) flagged.insert(c);
    }
    return flagged;
}

AnnualSeries smooth_series(const AnnualSeries& series) {
    const double alpha = 1.0 / 3.0;  // span 5
    AnnualSeries out = series;
    int n = series.n_years();
    if (n > 0) {
        std::vector<double> fwd(n), bwd(n);
        fwd[0] = series.values[0];
        for (int i = 1; i < n; ++i) fwd[i] = alpha * series.values[i] + (1.0 - alpha) * fwd[i - 1];
        bwd[n - 1] = series.values[n - 1];
        for (int i = n - 2; i >= 0; --i) bwd[i] = alpha * series.values[i] + (1.0 - alpha) * bwd[i + 1];
        for (int i = 0; i < n; ++i) out.values[i] = 0.5 * (fwd[i] + bwd[i]);
    }
    out.smoothed = true;
    return out;
}

HarmonizedPanel harmonize(const std::vector<RawReport>& reports,
                          std::map<std::string, SeriesDiagnostics>* diagnostics_out,
                          std::set<std::string>* flagged_out, std::vector<std::string>* warnings) {
    HarmonizedPanel panel;

    // countries with only modeled values carry no empirical information
    std::map<std::string, bool> any_empirical;
    for (const RawReport& r : reports)
        if (r.source_id != "modeled") any_empirical[r.country_code] = true;

    auto medians = aggregate_medians(reports);
    for (const auto& [country, yearly] : medians) {
        if (!any_empirical[country]) {
            warn(warnings, "country " + country + " has only modeled values, dropped");
            ++panel.metadata.dropped_countries;
            continue;
        }
        if (yearly.size() < 2) {
            warn(warnings, "country " + country + " has a single observation, dropped");
            ++panel.metadata.dropped_countries;
            continue;
        }
        AnnualSeries s = interpolate_gaps(country, yearly);
        for (CellFlag f : s.flags)
            if (f == CellFlag::Interpolated) ++panel.metadata.interpolated_cells;
        panel.series.emplace(country, std::move(s));
    }

    std::map<std::string, SeriesDiagnostics> diagnostics;
    for (const auto& [country, s] : panel.series) diagnostics[country] = compute_diagnostics(reports, s);

    std::set<std::string> flagged = flag_outliers(diagnostics, warnings);
    for (const std::string& c : flagged) {
        panel.series[c] = smooth_series(panel.series[c]);
        ++panel.metadata.flagged_series;
    }

    if (diagnostics_out) *diagnostics_out = std::move(diagnostics);
    if (flagged_out) *flagged_out = std::move(flagged);
    return panel;
}

void write_panel(const HarmonizedPanel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "country_code,year,tfr,flag\n";
    for (const auto& [country, s] : panel.series)
        for (int i = 0; i < s.n_years(); ++i)
            out << country << ',' << (s.first_year + i) << ',' << csv::fmt(s.values[i]) << ','
                << (s.flags[i] == CellFlag::Observed ? "observed" : "interpolated") << '\n';
}

HarmonizedPanel read_panel(const std::string& path) {
    auto lines = csv::read_lines(path);
    if (lines.empty() || lines[0] != "country_code,year,tfr,flag")
        throw std::runtime_error("bad panel header in " + path);
    std::map<std::string, std::map<int, std::pair<double, CellFlag>>> cells;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = csv::split(lines[i]);
        if (f.size() != 4) throw std::runtime_error("malformed panel row at line " + std::to_string(i + 1));
        int year;
        double tfr;
        if (!csv::parse_int(f[1], year) || !csv::parse_double(f[2], tfr) || tfr <= 0.0)
            throw std::runtime_error("malformed panel row at line " + std::to_string(i + 1));
        CellFlag flag = f[3] == "interpolated" ? CellFlag::Interpolated : CellFlag::Observed;
        cells[f[0]][year] = {tfr, flag};
    }
    HarmonizedPanel panel;
    for (const auto& [country, years] : cells) {
        AnnualSeries s;
        s.country_code = country;
        s.first_year = years.begin()->first;
        s.last_year = years.rbegin()->first;
        int expected = s.first_year;
        for (const auto& [year, cell] : years) {
            if (year != expected) throw std::runtime_error("panel series not contiguous for " + country);
            ++expected;
            s.values.push_back(cell.first);
            s.flags.push_back(cell.second);
            if (cell.second == CellFlag::Interpolated) ++panel.metadata.interpolated_cells;
        }
        panel.series.emplace(country, std::move(s));
    }
    return panel;
}

void write_diagnostics(const std::map<std::string, SeriesDiagnostics>& diagnostics,
                       const std::set<std::string>& flagged, const HarmonizedPanel& panel,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "country_code,gap_fraction,source_dispersion,volatility,flagged,smoothed\n";
    for (const auto& [country, d] : diagnostics) {
        bool is_flagged = flagged.count(country) > 0;
        bool smoothed = panel.series.count(country) && panel.series.at(country).smoothed;
        out << country << ',' << csv::fmt(d.gap_fraction) << ',' << csv::fmt(d.source_dispersion) << ','
            << csv::fmt(d.volatility) << ',' << (is_flagged ? 1 : 0) << ',' << (smoothed ? 1 : 0) << '\n';
    }
}

}  // namespace tfr::ingest
