#include "tfr/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "tfr/csv.hpp"
#include "tfr/ingest.hpp"
#include "tfr/train.hpp"

namespace tfr::evaluate {

namespace {

void check_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string("misaligned vectors in ") + what);
    if (a == 0) throw std::invalid_argument(std::string("empty input in ") + what);
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

double CountryScores::metric(const std::string& name) const {
    if (name == "rmse") return rmse;
    if (name == "smape") return smape;
    if (name == "rmsse") return rmsse;
    if (name == "crps") return crps;
    if (name == "coverage90") return coverage90;
    if (name == "mpiw90") return mpiw90;
    if (name == "mis90") return mis90;
    throw std::invalid_argument("unknown metric " + name);
}

double rmse(const std::vector<double>& actual, const std::vector<double>& forecast) {
    check_aligned(actual.size(), forecast.size(), "rmse");
    double ss = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        double d = actual[i] - forecast[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(actual.size()));
}

double smape(const std::vector<double>& actual, const std::vector<double>& forecast) {
    check_aligned(actual.size(), forecast.size(), "smape");
    double sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        double denom = std::abs(actual[i]) + std::abs(forecast[i]);
        if (denom > 0.0) sum += 2.0 * std::abs(actual[i] - forecast[i]) / denom;
    }
    return 100.0 * sum / static_cast<double>(actual.size());
}

double rmsse(const std::vector<double>& actual, const std::vector<double>& forecast,
             const std::vector<double>& training_series) {
    check_aligned(actual.size(), forecast.size(), "rmsse");
    if (training_series.size() < 2) throw std::domain_error("rmsse: training series too short");
    double denom = 0.0;
    for (std::size_t i = 1; i < training_series.size(); ++i) {
        double d = training_series[i] - training_series[i - 1];
        denom += d * d;
    }
    denom /= static_cast<double>(training_series.size() - 1);
    if (denom == 0.0) throw std::domain_error("rmsse: constant training series");
    double num = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        double d = actual[i] - forecast[i];
        num += d * d;
    }
    num /= static_cast<double>(actual.size());
    return std::sqrt(num / denom);
}

double crps_q(double actual, const std::vector<double>& quantiles, const std::vector<double>& levels) {
    check_aligned(quantiles.size(), levels.size(), "crps_q");
    double sum = 0.0;
    for (std::size_t i = 0; i < quantiles.size(); ++i) sum += train::pinball(actual, quantiles[i], levels[i]);
    return 2.0 * sum / static_cast<double>(quantiles.size());
}

double coverage90(const std::vector<double>& actual, const std::vector<double>& q05,
                  const std::vector<double>& q95) {
    check_aligned(actual.size(), q05.size(), "coverage90");
    check_aligned(actual.size(), q95.size(), "coverage90");
    int hits = 0;
    for (std::size_t i = 0; i < actual.size(); ++i)
        if (q05[i] <= actual[i] && actual[i] <= q95[i]) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(actual.size());
}

double mpiw90(const std::vector<double>& q05, const std::vector<double>& q95) {
    check_aligned(q05.size(), q95.size(), "mpiw90");
    double sum = 0.0;
    for (std::size_t i = 0; i < q05.size(); ++i) sum += q95[i] - q05[i];
    return sum / static_cast<double>(q05.size());
}

double mis90(const std::vector<double>& actual, const std::vector<double>& q05,
             const std::vector<double>& q95) {
    check_aligned(actual.size(), q05.size(), "mis90");
    check_aligned(actual.size(), q95.size(), "mis90");
    const double alpha = 0.10;
    double sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        double l = q05[i], u = q95[i], y = actual[i];
        double score = u - l;
        if (y < l) score += (2.0 / alpha) * (l - y);
        if (y > u) score += (2.0 / alpha) * (y - u);
        sum += score;
    }
    return sum / static_cast<double>(actual.size());
}

double wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                            std::vector<std::string>* warnings) {
    check_aligned(a.size(), b.size(), "wilcoxon");
    std::vector<double> abs_d;
    std::vector<int> sign;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        if (d == 0.0) continue;
        abs_d.push_back(std::abs(d));
        sign.push_back(d > 0.0 ? 1 : -1);
    }
    std::size_t n = abs_d.size();
    if (n == 0) {
        if (warnings) warnings->push_back("wilcoxon: all differences zero, p = 1");
        return 1.0;
    }

    // average ranks over tied |d|
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return abs_d[x] < abs_d[y]; });
    std::vector<double> rank(n);
    std::vector<std::size_t> tie_sizes;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && abs_d[idx[j]] == abs_d[idx[i]]) ++j;
        double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) rank[idx[k]] = avg;
        tie_sizes.push_back(j - i);
        i = j;
    }

    double w_plus = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (sign[k] > 0) w_plus += rank[k];

    if (n <= 20) {
        // exact distribution by enumeration of all sign assignments
        const double eps = 1e-9;
        std::uint64_t total = 1ULL << n;
        std::uint64_t le = 0, ge = 0;
        for (std::uint64_t mask = 0; mask < total; ++mask) {
            double w = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                if (mask & (1ULL << k)) w += rank[k];
            if (w <= w_plus + eps) ++le;
            if (w >= w_plus - eps) ++ge;
        }
        double p_le = static_cast<double>(le) / static_cast<double>(total);
        double p_ge = static_cast<double>(ge) / static_cast<double>(total);
        return std::min(1.0, 2.0 * std::min(p_le, p_ge));
    }

    double dn = static_cast<double>(n);
    double mean = dn * (dn + 1.0) / 4.0;
    double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
    for (std::size_t t : tie_sizes) {
        double td = static_cast<double>(t);
        var -= (td * td * td - td) / 48.0;
    }
    double diff = w_plus - mean;
    double cc = diff > 0.0 ? -0.5 : (diff < 0.0 ? 0.5 : 0.0);  // continuity correction toward the mean
    double z = (diff + cc) / std::sqrt(var);
    return std::min(1.0, 2.0 * normal_sf(std::abs(z)));
}

CountryScores score_country(const std::string& country, const std::string& model,
                            const std::vector<double>& actual,
                            const std::vector<std::vector<double>>& quantile_rows,
                            const std::vector<double>& training_series) {
    check_aligned(actual.size(), quantile_rows.size(), "score_country");
    static const std::vector<double> levels = {0.05, 0.10, 0.50, 0.90, 0.95};

    std::vector<double> q05, q95, median;
    double crps_sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const auto& row = quantile_rows[i];
        if (row.size() != 5) throw std::invalid_argument("score_country: expected 5 quantiles per year");
        q05.push_back(row[0]);
        median.push_back(row[2]);
        q95.push_back(row[4]);
        crps_sum += crps_q(actual[i], row, levels);
    }

    CountryScores s;
    s.country_code = country;
    s.model = model;
    s.rmse = rmse(actual, median);
    s.smape = smape(actual, median);
    try {
        s.rmsse = rmsse(actual, median, training_series);
    } catch (const std::domain_error&) {
        s.rmsse = std::numeric_limits<double>::quiet_NaN();
    }
    s.crps = crps_sum / static_cast<double>(actual.size());
    s.coverage90 = coverage90(actual, q05, q95);
    s.mpiw90 = mpiw90(q05, q95);
    s.mis90 = mis90(actual, q05, q95);
    return s;
}

MetricReport summarize(const std::vector<CountryScores>& scores, std::vector<std::string>* warnings) {
    if (scores.empty()) throw std::invalid_argument("summarize: no scores");
    MetricReport report;

    std::vector<std::string> models;
    for (const auto& s : scores)
        if (std::find(models.begin(), models.end(), s.model) == models.end()) models.push_back(s.model);

    for (const std::string& metric : kMetricNames) {
        std::map<std::string, double> medians;
        for (const std::string& model : models) {
            std::vector<double> vals;
            for (const auto& s : scores)
                if (s.model == model && std::isfinite(s.metric(metric))) vals.push_back(s.metric(metric));
            if (vals.empty()) continue;
            SummaryRow row;
            row.metric = metric;
            row.model = model;
            row.median = ingest::quantile_linear(vals, 0.5);
            row.q1 = ingest::quantile_linear(vals, 0.25);
            row.q3 = ingest::quantile_linear(vals, 0.75);
            row.n_countries = static_cast<int>(vals.size());
            report.summaries.push_back(row);
            medians[model] = row.median;
        }
        if (medians.size() < 2) continue;

        // rank models by favorability of the median
        auto favor = [&metric](double median) {
            return metric == "coverage90" ? std::abs(median - 90.0) : median;
        };
        std::vector<std::pair<std::string, double>> ranked(medians.begin(), medians.end());
        std::sort(ranked.begin(), ranked.end(),
                  [&](const auto& x, const auto& y) { return favor(x.second) < favor(y.second); });

        const std::string& ma = ranked[0].first;
        const std::string& mb = ranked[1].first;
        std::vector<double> va, vb;
        for (const auto& sa : scores) {
            if (sa.model != ma) continue;
            for (const auto& sb : scores) {
                if (sb.model != mb || sb.country_code != sa.country_code) continue;
                double xa = sa.metric(metric), xb = sb.metric(metric);
                if (std::isfinite(xa) && std::isfinite(xb)) {
                    va.push_back(xa);
                    vb.push_back(xb);
                }
            }
        }
        if (va.size() < 2) {
            if (warnings) warnings->push_back("summarize: too few paired countries for " + metric);
            continue;
        }
        report.tests.push_back({metric, ma, mb, wilcoxon_signed_rank(va, vb, warnings)});
    }
    return report;
}

void write_scores(const std::vector<CountryScores>& scores, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "country,model,rmse,smape,rmsse,crps,coverage90,mpiw90,mis90\n";
    for (const auto& s : scores) {
        out << s.country_code << ',' << s.model;
        for (const std::string& m : kMetricNames) {
            double v = s.metric(m);
            out << ',' << (std::isfinite(v) ? csv::fmt(v) : "NA");
        }
        out << '\n';
    }
}

void write_summary(const MetricReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "metric,model,median,q1,q3,n_countries\n";
    for (const auto& r : report.summaries)
        out << r.metric << ',' << r.model << ',' << csv::fmt(r.median) << ',' << csv::fmt(r.q1) << ','
            << csv::fmt(r.q3) << ',' << r.n_countries << '\n';
    out << "\nmetric,model_best,model_second,wilcoxon_p\n";
    for (const auto& t : report.tests)
        out << t.metric << ',' << t.model_a << ',' << t.model_b << ',' << csv::fmt(t.p_value) << '\n';
}

}  // namespace tfr::evaluate
