#include "tfr/project.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "tfr/csv.hpp"
#include "tfr/train.hpp"

namespace tfr::project {

std::vector<ForecastRecord> forecast_forward(const std::vector<model::Checkpoint>& members,
                                             const transform::StandardizedPanel& panel, int end_year,
                                             const std::string& model_tag,
                                             std::vector<std::string>* warnings) {
    if (members.empty()) throw std::invalid_argument("forecast_forward: no ensemble members");
    const model::ModelConfig& mc = members.front().params.config;
    const transform::GlobalScaler& scaler = members.front().scaler;

    std::vector<ForecastRecord> out;
    for (const auto& s : panel.series) {
        transform::StandardizedSeries extended = s;  // grows with pseudo-observations
        int origin = s.last_year();
        while (origin < end_year) {
            auto window = transform::window_at(extended, mc.l_enc, origin);
            if (!window) {
                if (warnings)
                    warnings->push_back("forecast_forward: " + s.country_code +
                                        " too short for a window, skipped");
                break;
            }
            num::Matrix grid = train::ensemble_forecast(members, *window);
            for (int k = 0; k < grid.rows && origin + 1 + k <= end_year; ++k) {
                ForecastRecord r;
                r.country_code = s.country_code;
                r.year = origin + 1 + k;
                r.model = model_tag;
                r.q05 = transform::invert(grid(k, 0), scaler);
                r.q10 = transform::invert(grid(k, 1), scaler);
                r.q50 = transform::invert(grid(k, 2), scaler);
                r.q90 = transform::invert(grid(k, 3), scaler);
                r.q95 = transform::invert(grid(k, 4), scaler);
                out.push_back(r);
            }
            // re-anchor: medians become pseudo-observations for the next pass
            for (int k = 0; k < grid.rows; ++k) extended.z.push_back(grid(k, model::kMedianIndex));
            origin += grid.rows;
        }
    }
    return out;
}

double weighted_tfr(const std::vector<ForecastRecord>& records, const PopulationWeights& weights,
                    int year_lo, int year_hi, const std::string& model,
                    std::vector<std::string>* warnings) {
    if (year_lo > year_hi) throw std::invalid_argument("weighted_tfr: empty interval");
    std::map<std::string, std::pair<double, int>> per_country;  // sum of q50, count
    for (const auto& r : records) {
        if (r.model != model || r.year < year_lo || r.year > year_hi) continue;
        auto& acc = per_country[r.country_code];
        acc.first += r.q50;
        acc.second += 1;
    }
    double num = 0.0, denom = 0.0;
    for (const auto& [country, acc] : per_country) {
        auto it = weights.find(country);
        if (it == weights.end()) {
            if (warnings) warnings->push_back("weighted_tfr: no weight for " + country + ", excluded");
            continue;
        }
        num += it->second * (acc.first / acc.second);
        denom += it->second;
    }
    if (denom == 0.0) throw std::runtime_error("weighted_tfr: no weighted countries in interval");
    return num / denom;
}

std::string band_label(double tfr) {
    if (tfr < 1.3) return kBandNames[0];
    if (tfr < 1.5) return kBandNames[1];
    if (tfr < 2.1) return kBandNames[2];
    return kBandNames[3];
}

namespace {

/// country -> (year, q50) at the endpoint rule (endpoint_year or last
/// available projected year) for one model.
std::map<std::string, std::pair<int, double>> endpoints(const std::vector<ForecastRecord>& records,
                                                        const std::string& model, int endpoint_year) {
    std::map<std::string, std::pair<int, double>> best;
    for (const auto& r : records) {
        if (r.model != model || r.year > endpoint_year) continue;
        auto it = best.find(r.country_code);
        if (it == best.end() || r.year > it->second.first) best[r.country_code] = {r.year, r.q50};
    }
    return best;
}

}  // namespace

std::vector<double> threshold_shares(const std::vector<ForecastRecord>& records, const std::string& model,
                                     int endpoint_year) {
    auto ends = endpoints(records, model, endpoint_year);
    std::vector<double> shares(4, 0.0);
    if (ends.empty()) return shares;
    for (const auto& [country, yr_val] : ends) {
        double v = yr_val.second;
        int bin = v < 1.3 ? 0 : (v < 1.5 ? 1 : (v < 2.1 ? 2 : 3));
        shares[bin] += 1.0;
    }
    for (double& s : shares) s /= static_cast<double>(ends.size());
    return shares;
}

std::vector<EndpointRow> regional_endpoint_table(const std::vector<ForecastRecord>& records,
                                                 const RegionMap& regions, int endpoint_year,
                                                 std::vector<std::string>* warnings) {
    std::set<std::string> models;
    for (const auto& r : records) models.insert(r.model);

    std::map<std::string, std::map<std::string, std::pair<int, double>>> per_model;
    for (const std::string& m : models) per_model[m] = endpoints(records, m, endpoint_year);

    // intersection sample: countries present in every compared model
    std::set<std::string> countries;
    bool first = true;
    for (const auto& [m, ends] : per_model) {
        std::set<std::string> here;
        for (const auto& [c, _] : ends) here.insert(c);
        if (first) {
            countries = here;
            first = false;
        } else {
            std::set<std::string> keep;
            std::set_intersection(countries.begin(), countries.end(), here.begin(), here.end(),
                                  std::inserter(keep, keep.begin()));
            if (warnings) {
                for (const auto& c : countries)
                    if (!keep.count(c))
                        warnings->push_back("regional_endpoint_table: " + c + " missing from " + m +
                                            ", dropped from intersection");
                for (const auto& c : here)
                    if (!keep.count(c))
                        warnings->push_back("regional_endpoint_table: " + c +
                                            " missing from an earlier model, dropped from intersection");
            }
            countries = std::move(keep);
        }
    }

    std::vector<EndpointRow> rows;
    for (const std::string& country : countries) {
        auto rit = regions.find(country);
        if (rit == regions.end()) {
            if (warnings) warnings->push_back("regional_endpoint_table: no region for " + country);
            continue;
        }
        for (const std::string& m : models) {
            const auto& [year, q50] = per_model[m][country];
            rows.push_back({rit->second, country, m, year, q50, band_label(q50)});
        }
    }
    std::sort(rows.begin(), rows.end(), [](const EndpointRow& a, const EndpointRow& b) {
        return std::tie(a.region, a.country_code, a.model) < std::tie(b.region, b.country_code, b.model);
    });
    return rows;
}

std::vector<ForecastRecord> load_comparators(const std::vector<std::string>& paths,
                                             std::vector<std::string>* warnings) {
    std::vector<ForecastRecord> out;
    for (const std::string& path : paths) {
        auto lines = csv::read_lines(path);
        if (lines.empty() || lines[0] != "country_code,year,model,q05,q10,q50,q90,q95")
            throw std::runtime_error("bad forecast header in " + path);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto f = csv::split(lines[i]);
            std::string where = path + ":" + std::to_string(i + 1);
            if (f.size() != 8) {
                if (warnings) warnings->push_back("rejected row (field count) at " + where);
                continue;
            }
            ForecastRecord r;
            r.country_code = f[0];
            r.model = f[2];
            double q[5];
            bool ok = csv::parse_int(f[1], r.year);
            for (int k = 0; k < 5 && ok; ++k) ok = csv::parse_double(f[3 + k], q[k]);
            if (!ok || r.country_code.empty() || r.model.empty()) {
                if (warnings) warnings->push_back("rejected row (malformed) at " + where);
                continue;
            }
            r.q05 = q[0];
            r.q10 = q[1];
            r.q50 = q[2];
            r.q90 = q[3];
            r.q95 = q[4];
            if (!r.monotone()) {
                if (warnings) warnings->push_back("rejected row (non-monotone quantiles) at " + where);
                continue;
            }
            out.push_back(std::move(r));
        }
    }
    return out;
}

void write_forecast(const std::vector<ForecastRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "country_code,year,model,q05,q10,q50,q90,q95\n";
    for (const auto& r : records)
        out << r.country_code << ',' << r.year << ',' << r.model << ',' << csv::fmt(r.q05) << ','
            << csv::fmt(r.q10) << ',' << csv::fmt(r.q50) << ',' << csv::fmt(r.q90) << ','
            << csv::fmt(r.q95) << '\n';
}

PopulationWeights load_weights(const std::string& path) {
    auto lines = csv::read_lines(path);
    if (lines.empty() || lines[0] != "country_code,weight")
        throw std::runtime_error("bad weights header in " + path);
    PopulationWeights w;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = csv::split(lines[i]);
        double v;
        if (f.size() != 2 || !csv::parse_double(f[1], v) || v <= 0.0)
            throw std::runtime_error("bad weights row at line " + std::to_string(i + 1));
        w[f[0]] = v;
    }
    return w;
}

RegionMap load_regions(const std::string& path) {
    auto lines = csv::read_lines(path);
    if (lines.empty() || lines[0] != "country_code,region")
        throw std::runtime_error("bad regions header in " + path);
    RegionMap m;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = csv::split(lines[i]);
        if (f.size() != 2 || f[0].empty() || f[1].empty())
            throw std::runtime_error("bad regions row at line " + std::to_string(i + 1));
        m[f[0]] = f[1];
    }
    return m;
}

AggregateReport build_aggregate_report(const std::vector<ForecastRecord>& records,
                                       const PopulationWeights& weights,
                                       const std::vector<std::pair<int, int>>& intervals, int endpoint_year,
                                       std::vector<std::string>* warnings) {
    std::set<std::string> models;
    for (const auto& r : records) models.insert(r.model);

    AggregateReport report;
    for (const auto& [lo, hi] : intervals) {
        std::string label = std::to_string(lo) + "-" + std::to_string(hi);
        for (const std::string& m : models) {
            try {
                report.weighted.emplace_back(label, m, weighted_tfr(records, weights, lo, hi, m, warnings));
            } catch (const std::runtime_error&) {
                if (warnings) warnings->push_back("no data for model " + m + " in interval " + label);
            }
        }
    }
    for (const std::string& m : models) report.shares[m] = threshold_shares(records, m, endpoint_year);
    return report;
}

void write_aggregate_report(const AggregateReport& report, const std::string& csv_path,
                            const std::string& json_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path);
    out << "interval,model,weighted_tfr\n";
    for (const auto& [interval, model, value] : report.weighted)
        out << interval << ',' << model << ',' << csv::fmt(value) << '\n';
    out << "\nmodel,band,share\n";
    for (const auto& [model, shares] : report.shares)
        for (std::size_t b = 0; b < shares.size(); ++b)
            out << model << ',' << kBandNames[b] << ',' << csv::fmt(shares[b]) << '\n';

    nlohmann::ordered_json j;
    for (const auto& [interval, model, value] : report.weighted)
        j["weighted_tfr"].push_back({{"interval", interval}, {"model", model}, {"value", value}});
    for (const auto& [model, shares] : report.shares) {
        nlohmann::ordered_json bands;
        for (std::size_t b = 0; b < shares.size(); ++b) bands[kBandNames[b]] = shares[b];
        j["threshold_shares"][model] = bands;
    }
    std::ofstream jout(json_path);
    if (!jout) throw std::runtime_error("cannot write " + json_path);
    jout << j.dump(2) << '\n';
}

void write_endpoint_table(const std::vector<EndpointRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "region,country_code,model,endpoint_year,q50,band\n";
    for (const auto& r : rows)
        out << r.region << ',' << r.country_code << ',' << r.model << ',' << r.year << ','
            << csv::fmt(r.q50) << ',' << r.band << '\n';
}

}  // namespace tfr::project
