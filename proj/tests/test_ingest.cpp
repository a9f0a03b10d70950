#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tfr/ingest.hpp"
#include "tfr/rng.hpp"

using namespace tfr;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

double sample_sd_oracle(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (v.size() - 1));
}

}  // namespace

TEST_CASE("parse_raw reads rows, rejects malformed ones, dedups duplicates") {
    auto path = write_temp("tfr_raw_ok.csv",
                           "country_code,year,tfr,source_id\n"
                           "KOR,2015,1.24,wpp\n"
                           "FRA,2015,1.96,wpp\n"
                           "FRA,2016,1.92,hfd\n");
    auto rows = ingest::parse_raw(path);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].country_code == "KOR");
    CHECK(rows[0].year == 2015);
    CHECK(rows[0].tfr == doctest::Approx(1.24));
    CHECK(rows[0].source_id == "wpp");

    auto bad = write_temp("tfr_raw_bad.csv", "country_code,year,tfr,source_id\nKOR,2015,-1.0,wpp\n");
    CHECK_THROWS_WITH_AS(ingest::parse_raw(bad), doctest::Contains("line 2"), std::runtime_error);

    auto badyear = write_temp("tfr_raw_year.csv", "country_code,year,tfr,source_id\nKOR,1492,2.0,wpp\n");
    CHECK_THROWS_AS(ingest::parse_raw(badyear), std::runtime_error);

    auto dup = write_temp("tfr_raw_dup.csv",
                          "country_code,year,tfr,source_id\nKOR,2015,1.24,wpp\nKOR,2015,1.24,wpp\n");
    std::vector<std::string> warnings;
    auto rows2 = ingest::parse_raw(dup, &warnings);
    CHECK(rows2.size() == 1);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("duplicate") != std::string::npos);

    CHECK_THROWS_AS(ingest::parse_raw("/nonexistent/raw.csv"), std::runtime_error);
}

TEST_CASE("aggregate_medians per country-year") {
    std::vector<ingest::RawReport> reports = {
        {"A", 2000, 2.0, "s1"},
        {"B", 2000, 1.0, "s1"},
        {"B", 2000, 3.0, "s2"},
        {"C", 2000, 1.2, "s1"},
        {"C", 2000, 1.5, "s2"},
        {"C", 2000, 9.0, "s3"},
    };
    auto m = ingest::aggregate_medians(reports);
    CHECK(m["A"][2000] == doctest::Approx(2.0));
    CHECK(m["B"][2000] == doctest::Approx(2.0));
    CHECK(m["C"][2000] == doctest::Approx(1.5));
}

TEST_CASE("interpolate_gaps fills interior years linearly") {
    std::map<int, double> yearly = {{2000, 2.0}, {2003, 3.5}};
    auto s = ingest::interpolate_gaps("X", yearly);
    CHECK(s.first_year == 2000);
    CHECK(s.last_year == 2003);
    CHECK(s.at_year(2001) == doctest::Approx(2.5));
    CHECK(s.at_year(2002) == doctest::Approx(3.0));
    CHECK(s.flags[0] == ingest::CellFlag::Observed);
    CHECK(s.flags[1] == ingest::CellFlag::Interpolated);
    CHECK(s.flags[3] == ingest::CellFlag::Observed);

    std::map<int, double> single = {{2000, 2.0}};
    CHECK_THROWS_AS(ingest::interpolate_gaps("X", single), std::invalid_argument);
}

TEST_CASE("interpolate_gaps matches an independent piecewise-linear oracle") {
    // two separate gaps
    std::map<int, double> yearly = {{1990, 5.0}, {1993, 3.5}, {1994, 3.0}, {1998, 2.0}};
    auto s = ingest::interpolate_gaps("X", yearly);
    auto oracle = [&](int y) {
        auto hi = yearly.lower_bound(y);
        if (hi->first == y) return hi->second;
        auto lo = std::prev(hi);
        double t = double(y - lo->first) / double(hi->first - lo->first);
        return lo->second + t * (hi->second - lo->second);
    };
    for (int y = 1990; y <= 1998; ++y) CHECK(s.at_year(y) == doctest::Approx(oracle(y)).epsilon(1e-14));
    // observed cells are never altered
    for (const auto& [y, v] : yearly) CHECK(s.at_year(y) == v);
}

TEST_CASE("compute_diagnostics matches brute force on a random fixture") {
    num::RngStream rng(31);
    std::vector<ingest::RawReport> reports;
    std::set<int> years_used;
    for (int y = 2000; y <= 2020; ++y) {
        if (y != 2000 && y != 2020 && rng.uniform() < 0.25) continue;  // gap
        years_used.insert(y);
        int k = 1 + static_cast<int>(rng.uniform_int(3));
        for (int j = 0; j < k; ++j)
            reports.push_back({"Z", y, 2.0 + rng.uniform(-0.5, 0.5), "s" + std::to_string(j)});
    }
    auto medians = ingest::aggregate_medians(reports);
    auto series = ingest::interpolate_gaps("Z", medians["Z"]);
    auto d = ingest::compute_diagnostics(reports, series);

    // gap fraction
    int missing = 0, span = series.last_year - series.first_year - 1;
    for (int y = series.first_year + 1; y < series.last_year; ++y)
        if (!years_used.count(y)) ++missing;
    CHECK(d.gap_fraction == doctest::Approx(double(missing) / span).epsilon(1e-14));

    // dispersion: median over years of within-year sample SDs
    std::vector<double> sds;
    for (int y : years_used) {
        std::vector<double> vals;
        for (const auto& r : reports)
            if (r.year == y) vals.push_back(r.tfr);
        sds.push_back(sample_sd_oracle(vals));
    }
    std::sort(sds.begin(), sds.end());
    double med = sds.size() % 2 ? sds[sds.size() / 2] : 0.5 * (sds[sds.size() / 2 - 1] + sds[sds.size() / 2]);
    CHECK(d.source_dispersion == doctest::Approx(med).epsilon(1e-14));

    // volatility: sample SD of first differences of the interpolated series
    std::vector<double> diffs;
    for (int i = 1; i < series.n_years(); ++i) diffs.push_back(series.values[i] - series.values[i - 1]);
    CHECK(d.volatility == doctest::Approx(sample_sd_oracle(diffs)).epsilon(1e-12));
}

TEST_CASE("compute_diagnostics degenerate cases") {
    std::vector<ingest::RawReport> reports;
    for (int y = 2000; y <= 2010; ++y) reports.push_back({"A", y, 2.0, "s1"});
    auto series = ingest::interpolate_gaps("A", ingest::aggregate_medians(reports)["A"]);
    auto d = ingest::compute_diagnostics(reports, series);
    CHECK(d.gap_fraction == 0.0);
    CHECK(d.source_dispersion == 0.0);
    CHECK(d.volatility == 0.0);  // constant series
}

TEST_CASE("quantile_linear interpolates order statistics") {
    std::vector<double> v = {1, 2, 3, 4};
    CHECK(ingest::quantile_linear(v, 0.0) == doctest::Approx(1.0));
    CHECK(ingest::quantile_linear(v, 1.0) == doctest::Approx(4.0));
    CHECK(ingest::quantile_linear(v, 0.5) == doctest::Approx(2.5));
    CHECK(ingest::quantile_linear(v, 0.25) == doctest::Approx(1.75));
    CHECK(ingest::quantile_linear(v, 0.75) == doctest::Approx(3.25));
}

TEST_CASE("flag_outliers rules") {
    std::map<std::string, ingest::SeriesDiagnostics> diag;
    SUBCASE("identical diagnostics flag nothing") {
        for (int i = 0; i < 6; ++i) diag["C" + std::to_string(i)] = {0.1, 0.02, 0.05};
        CHECK(ingest::flag_outliers(diag).empty());
    }
    SUBCASE("single extreme diagnostic flags via the IQR fence") {
        for (int i = 0; i < 7; ++i)
            diag["C" + std::to_string(i)] = {0.05 + 0.01 * i, 0.02, 0.05};
        diag["X"] = {10.0 * 0.11, 0.02, 0.05};
        auto flagged = ingest::flag_outliers(diag);
        CHECK(flagged.count("X") == 1);
        // brute-force oracle over all countries
        std::vector<double> g;
        for (const auto& [c, d] : diag) g.push_back(d.gap_fraction);
        double q1 = ingest::quantile_linear(g, 0.25), q3 = ingest::quantile_linear(g, 0.75);
        double fence = q3 + 1.5 * (q3 - q1);
        std::set<std::string> oracle;
        for (const auto& [c, d] : diag)
            if (d.gap_fraction > fence) oracle.insert(c);
        CHECK(flagged == oracle);
    }
    SUBCASE("two diagnostics above P75 flag via the two-of-three rule") {
        // eight countries; Y sits above P75 on gap and volatility but inside both fences;
        // gap ascends while volatility descends so no other country crosses both
        for (int i = 0; i < 7; ++i)
            diag["C" + std::to_string(i)] = {0.10 + 0.02 * i, 0.02, 0.074 - 0.004 * i};
        diag["Y"] = {0.23, 0.02, 0.0755};
        auto flagged = ingest::flag_outliers(diag);
        CHECK(flagged.count("Y") == 1);
        CHECK(flagged.size() == 1);
    }
    SUBCASE("fewer than 4 countries yields no flags with a warning") {
        diag["A"] = {0.9, 0.9, 0.9};
        diag["B"] = {0.0, 0.0, 0.0};
        std::vector<std::string> warnings;
        CHECK(ingest::flag_outliers(diag, &warnings).empty());
        CHECK(warnings.size() == 1);
    }
}

TEST_CASE("flag_outliers matches brute-force oracle on random panels") {
    num::RngStream rng(37);
    for (int trial = 0; trial < 50; ++trial) {
        std::map<std::string, ingest::SeriesDiagnostics> diag;
        int n = 4 + static_cast<int>(rng.uniform_int(20));
        for (int i = 0; i < n; ++i)
            diag["C" + std::to_string(i)] = {rng.uniform(0, 0.5), rng.uniform(0, 0.1), rng.uniform(0, 0.3)};

        std::vector<double> g, s, v;
        for (const auto& [c, d] : diag) {
            g.push_back(d.gap_fraction);
            s.push_back(d.source_dispersion);
            v.push_back(d.volatility);
        }
        auto p75 = [](std::vector<double> x) { return ingest::quantile_linear(x, 0.75); };
        auto fence = [](std::vector<double> x) {
            double q1 = ingest::quantile_linear(x, 0.25), q3 = ingest::quantile_linear(x, 0.75);
            return q3 + 1.5 * (q3 - q1);
        };
        std::set<std::string> oracle;
        for (const auto& [c, d] : diag) {
            bool iqr = d.gap_fraction > fence(g) || d.source_dispersion > fence(s) || d.volatility > fence(v);
            int hits = (d.gap_fraction > p75(g)) + (d.source_dispersion > p75(s)) + (d.volatility > p75(v));
            if (iqr || hits >= 2) oracle.insert(c);
        }
        CHECK(ingest::flag_outliers(diag) == oracle);
    }
}

TEST_CASE("flag_outliers is invariant to country ordering") {
    // map keys already canonicalize order; verify by inserting in two orders
    std::map<std::string, ingest::SeriesDiagnostics> a, b;
    num::RngStream rng(41);
    std::vector<std::pair<std::string, ingest::SeriesDiagnostics>> rows;
    for (int i = 0; i < 9; ++i)
        rows.push_back({"C" + std::to_string(i),
                        {rng.uniform(0, 0.5), rng.uniform(0, 0.1), rng.uniform(0, 0.3)}});
    for (const auto& r : rows) a.insert(r);
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) b.insert(*it);
    CHECK(ingest::flag_outliers(a) == ingest::flag_outliers(b));
}

TEST_CASE("smooth_series matches a scalar two-pass EWMA oracle") {
    ingest::AnnualSeries s;
    s.country_code = "X";
    s.first_year = 2000;
    s.last_year = 2004;
    s.values = {1.0, 4.0, 2.0, 5.0, 3.0};
    s.flags.assign(5, ingest::CellFlag::Observed);
    auto out = ingest::smooth_series(s);
    CHECK(out.smoothed);

    const double a = 1.0 / 3.0;
    std::vector<double> fwd(5), bwd(5);
    fwd[0] = s.values[0];
    for (int i = 1; i < 5; ++i) fwd[i] = a * s.values[i] + (1 - a) * fwd[i - 1];
    bwd[4] = s.values[4];
    for (int i = 3; i >= 0; --i) bwd[i] = a * s.values[i] + (1 - a) * bwd[i + 1];
    for (int i = 0; i < 5; ++i) CHECK(out.values[i] == doctest::Approx(0.5 * (fwd[i] + bwd[i])).epsilon(1e-12));

    // convexity: smoothed values stay within the input range
    double lo = *std::min_element(s.values.begin(), s.values.end());
    double hi = *std::max_element(s.values.begin(), s.values.end());
    for (double v : out.values) {
        CHECK(v >= lo);
        CHECK(v <= hi);
    }
}

TEST_CASE("smooth_series fixed points") {
    ingest::AnnualSeries s;
    s.country_code = "X";
    s.first_year = 2000;
    s.last_year = 2002;
    s.values = {2.0, 2.0, 2.0};
    s.flags.assign(3, ingest::CellFlag::Observed);
    auto out = ingest::smooth_series(s);
    for (double v : out.values) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("harmonize drops modeled-only and single-observation countries") {
    std::vector<ingest::RawReport> reports = {
        {"A", 2000, 2.0, "wpp"}, {"A", 2001, 2.1, "wpp"}, {"A", 2002, 2.2, "wpp"},
        {"M", 2000, 1.5, "modeled"}, {"M", 2001, 1.4, "modeled"},
        {"S", 2000, 3.0, "wpp"},
    };
    std::vector<std::string> warnings;
    auto panel = ingest::harmonize(reports, nullptr, nullptr, &warnings);
    CHECK(panel.series.count("A") == 1);
    CHECK(panel.series.count("M") == 0);
    CHECK(panel.series.count("S") == 0);
    CHECK(panel.metadata.dropped_countries == 2);
}

TEST_CASE("panel write/read round trip preserves values and flags") {
    std::vector<ingest::RawReport> reports;
    for (int y = 2000; y <= 2012; ++y) {
        if (y == 2005) continue;
        reports.push_back({"A", y, 2.0 + 0.1 * (y - 2000), "wpp"});
        reports.push_back({"B", y, 1.5, "wpp"});
    }
    auto panel = ingest::harmonize(reports);
    auto path = write_temp("tfr_panel_rt.csv", "");
    ingest::write_panel(panel, path);
    auto back = ingest::read_panel(path);
    REQUIRE(back.series.size() == panel.series.size());
    for (const auto& [c, s] : panel.series) {
        const auto& t = back.series.at(c);
        CHECK(t.first_year == s.first_year);
        REQUIRE(t.values.size() == s.values.size());
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            CHECK(t.values[i] == doctest::Approx(s.values[i]).epsilon(1e-12));
            CHECK(t.flags[i] == s.flags[i]);
        }
    }
    CHECK(back.metadata.interpolated_cells == panel.metadata.interpolated_cells);
}
