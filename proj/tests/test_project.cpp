#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tfr/project.hpp"
#include "tfr/train.hpp"

using namespace tfr;

namespace {

project::ForecastRecord rec(const std::string& c, int year, const std::string& model, double q50) {
    project::ForecastRecord r;
    r.country_code = c;
    r.year = year;
    r.model = model;
    r.q05 = q50 - 0.2;
    r.q10 = q50 - 0.1;
    r.q50 = q50;
    r.q90 = q50 + 0.1;
    r.q95 = q50 + 0.2;
    return r;
}

std::string write_temp(const std::string& name, const std::string& body) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream(path) << body;
    return path;
}

std::vector<model::Checkpoint> tiny_members(int n, std::uint64_t seed) {
    model::ModelConfig mc;
    mc.l_enc = 8;
    mc.l_pred = 3;
    mc.hidden_dim = 5;
    mc.n_layers = 1;
    mc.d_emb = 2;
    mc.n_countries = 1;
    num::RngStream rng(seed);
    std::vector<model::Checkpoint> out;
    for (int i = 0; i < n; ++i) {
        model::Checkpoint c;
        c.params = model::init_params(mc, rng);
        c.scaler = {0.4, 0.25, true};
        c.country_index = {{"AAA", 0}};
        out.push_back(std::move(c));
    }
    return out;
}

transform::StandardizedPanel tiny_panel() {
    transform::StandardizedPanel p;
    p.scaler = {0.4, 0.25, true};
    transform::StandardizedSeries s;
    s.country_code = "AAA";
    s.country_id = 0;
    s.first_year = 2000;
    for (int i = 0; i < 20; ++i) s.z.push_back(0.3 * std::sin(0.4 * i) - 0.02 * i);
    p.series.push_back(s);
    return p;
}

}  // namespace

TEST_CASE("weighted_tfr") {
    std::vector<project::ForecastRecord> recs = {rec("A", 2050, "neural", 2.0), rec("B", 2050, "neural", 1.0)};
    project::PopulationWeights w = {{"A", 1.0}, {"B", 1.0}};
    CHECK(project::weighted_tfr(recs, w, 2050, 2050, "neural") == doctest::Approx(1.5));

    project::PopulationWeights w2 = {{"A", 1.0}, {"B", 3.0}};
    CHECK(project::weighted_tfr(recs, w2, 2050, 2050, "neural") == doctest::Approx(1.25));

    // rescaling all weights changes nothing
    project::PopulationWeights w3 = {{"A", 7.0}, {"B", 21.0}};
    CHECK(project::weighted_tfr(recs, w3, 2050, 2050, "neural") == doctest::Approx(1.25));

    // per-country interval mean before weighting
    std::vector<project::ForecastRecord> multi = {rec("A", 2050, "neural", 2.0), rec("A", 2051, "neural", 3.0)};
    CHECK(project::weighted_tfr(multi, w, 2050, 2051, "neural") == doctest::Approx(2.5));

    // unweighted country is excluded with a warning
    std::vector<std::string> warnings;
    project::PopulationWeights only_a = {{"A", 2.0}};
    CHECK(project::weighted_tfr(recs, only_a, 2050, 2050, "neural", &warnings) == doctest::Approx(2.0));
    CHECK(warnings.size() == 1);

    CHECK_THROWS_AS(project::weighted_tfr(recs, w, 2051, 2050, "neural"), std::invalid_argument);
    CHECK_THROWS_AS(project::weighted_tfr(recs, project::PopulationWeights{}, 2050, 2050, "neural"),
                    std::runtime_error);
}

TEST_CASE("band_label boundaries") {
    CHECK(project::band_label(1.29) == "<1.3");
    CHECK(project::band_label(1.3) == "[1.3,1.5)");
    CHECK(project::band_label(1.49) == "[1.3,1.5)");
    CHECK(project::band_label(1.5) == "[1.5,2.1)");
    CHECK(project::band_label(2.09) == "[1.5,2.1)");
    CHECK(project::band_label(2.1) == ">=2.1");
}

TEST_CASE("threshold_shares") {
    std::vector<project::ForecastRecord> recs = {rec("A", 2055, "neural", 1.0), rec("B", 2055, "neural", 1.4),
                                                 rec("C", 2055, "neural", 1.8), rec("D", 2055, "neural", 2.5)};
    auto shares = project::threshold_shares(recs, "neural", 2055);
    REQUIRE(shares.size() == 4);
    double sum = 0.0;
    for (double s : shares) {
        CHECK(s == doctest::Approx(0.25));
        sum += s;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<project::ForecastRecord> same = {rec("A", 2055, "neural", 2.5), rec("B", 2055, "neural", 2.5)};
    auto s2 = project::threshold_shares(same, "neural", 2055);
    CHECK(s2[0] == doctest::Approx(0.0));
    CHECK(s2[3] == doctest::Approx(1.0));

    // endpoint rule: latest year not exceeding endpoint_year
    std::vector<project::ForecastRecord> timed = {rec("A", 2050, "neural", 2.5), rec("A", 2055, "neural", 1.0)};
    auto s3 = project::threshold_shares(timed, "neural", 2052);
    CHECK(s3[3] == doctest::Approx(1.0));  // the 2050 value wins
    auto s4 = project::threshold_shares(timed, "neural", 2055);
    CHECK(s4[0] == doctest::Approx(1.0));
}

TEST_CASE("regional_endpoint_table intersection and ordering") {
    std::vector<project::ForecastRecord> recs;
    for (const char* c : {"AAA", "BBB", "CCC"}) {
        recs.push_back(rec(c, 2055, "neural", 1.4));
        if (std::string(c) != "CCC") recs.push_back(rec(c, 2055, "drift", 2.2));
    }
    project::RegionMap regions = {{"AAA", "South"}, {"BBB", "North"}, {"CCC", "North"}};
    std::vector<std::string> warnings;
    auto rows = project::regional_endpoint_table(recs, regions, 2055, &warnings);

    // CCC lacks a drift endpoint: dropped from every model with a warning
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) CHECK(r.country_code != "CCC");
    CHECK(!warnings.empty());

    // sorted by region, country, model
    CHECK(rows[0].region == "North");
    CHECK(rows[0].country_code == "BBB");
    CHECK(rows[0].model == "drift");
    CHECK(rows[1].model == "neural");
    CHECK(rows[2].region == "South");
    CHECK(rows[0].band == ">=2.1");
    CHECK(rows[1].band == "[1.3,1.5)");
    CHECK(rows[0].q50 == doctest::Approx(2.2));

    // a country without a region assignment is skipped
    project::RegionMap partial = {{"AAA", "South"}};
    std::vector<std::string> w2;
    auto rows2 = project::regional_endpoint_table(recs, partial, 2055, &w2);
    for (const auto& r : rows2) CHECK(r.country_code == "AAA");
    CHECK(!w2.empty());
}

TEST_CASE("comparator files are validated row by row") {
    std::string body =
        "country_code,year,model,q05,q10,q50,q90,q95\n"
        "AAA,2050,wpp,1.0,1.1,1.2,1.3,1.4\n"
        "BBB,2050,wpp,1.0,1.1\n"
        "CCC,2050,wpp,1.4,1.3,1.2,1.1,1.0\n"
        "DDD,notayear,wpp,1.0,1.1,1.2,1.3,1.4\n";
    auto path = write_temp("tfr_comp.csv", body);
    std::vector<std::string> warnings;
    auto recs = project::load_comparators({path}, &warnings);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].country_code == "AAA");
    CHECK(recs[0].model == "wpp");
    CHECK(recs[0].q50 == doctest::Approx(1.2));
    REQUIRE(warnings.size() == 3);
    CHECK(warnings[0].find(":3") != std::string::npos);   // field count
    CHECK(warnings[1].find(":4") != std::string::npos);   // non-monotone
    CHECK(warnings[2].find(":5") != std::string::npos);   // malformed year

    auto bad = write_temp("tfr_comp_bad.csv", "wrong,header\n");
    CHECK_THROWS_AS(project::load_comparators({bad}), std::runtime_error);
}

TEST_CASE("forecast write and reload round trip") {
    std::vector<project::ForecastRecord> recs = {rec("AAA", 2050, "neural", 1.7), rec("BBB", 2051, "neural", 2.3)};
    auto path = (std::filesystem::temp_directory_path() / "tfr_fc_rt.csv").string();
    project::write_forecast(recs, path);
    auto back = project::load_comparators({path});
    REQUIRE(back.size() == 2);
    CHECK(back[0].country_code == "AAA");
    CHECK(back[0].year == 2050);
    CHECK(back[0].q05 == doctest::Approx(recs[0].q05).epsilon(1e-12));
    CHECK(back[1].q95 == doctest::Approx(recs[1].q95).epsilon(1e-12));
}

TEST_CASE("weight and region file parsing") {
    auto wpath = write_temp("tfr_w.csv", "country_code,weight\nAAA,12.5\nBBB,3\n");
    auto w = project::load_weights(wpath);
    CHECK(w.size() == 2);
    CHECK(w["AAA"] == doctest::Approx(12.5));

    auto bad_w = write_temp("tfr_w_bad.csv", "country_code,weight\nAAA,-1\n");
    CHECK_THROWS_AS(project::load_weights(bad_w), std::runtime_error);
    auto bad_h = write_temp("tfr_w_badh.csv", "code,w\n");
    CHECK_THROWS_AS(project::load_weights(bad_h), std::runtime_error);

    auto rpath = write_temp("tfr_r.csv", "country_code,region\nAAA,South\nBBB,North\n");
    auto r = project::load_regions(rpath);
    CHECK(r["BBB"] == "North");
    auto bad_r = write_temp("tfr_r_bad.csv", "country_code,region\nAAA,\n");
    CHECK_THROWS_AS(project::load_regions(bad_r), std::runtime_error);
}

TEST_CASE("aggregate report combines weighted means and shares") {
    std::vector<project::ForecastRecord> recs = {rec("A", 2050, "neural", 2.0), rec("B", 2050, "neural", 1.0),
                                                 rec("A", 2055, "neural", 1.8), rec("B", 2055, "neural", 0.9)};
    project::PopulationWeights w = {{"A", 1.0}, {"B", 1.0}};
    std::vector<std::pair<int, int>> intervals = {{2050, 2050}, {2055, 2055}};
    auto rep = project::build_aggregate_report(recs, w, intervals, 2055);
    REQUIRE(rep.weighted.size() == 2);
    CHECK(std::get<2>(rep.weighted[0]) == doctest::Approx(1.5));
    CHECK(std::get<2>(rep.weighted[1]) == doctest::Approx(1.35));
    REQUIRE(rep.shares.count("neural") == 1);
    CHECK(rep.shares["neural"][0] == doctest::Approx(0.5));  // B at 0.9
    CHECK(rep.shares["neural"][2] == doctest::Approx(0.5));  // A at 1.8
}

TEST_CASE("forward projection") {
    auto members = tiny_members(2, 211);
    auto panel = tiny_panel();
    const auto& s = panel.series[0];

    SUBCASE("no years to project yields no records") {
        CHECK(project::forecast_forward(members, panel, s.last_year()).empty());
    }

    SUBCASE("short horizon truncates one decode pass") {
        auto recs = project::forecast_forward(members, panel, s.last_year() + 2);
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].year == 2020);
        CHECK(recs[1].year == 2021);
        for (const auto& r : recs) CHECK(r.monotone());
    }

    SUBCASE("long horizon chains passes through re-anchored medians") {
        int end_year = s.last_year() + 7;  // l_pred 3: three passes, last truncated
        auto recs = project::forecast_forward(members, panel, end_year);
        REQUIRE(recs.size() == 7);
        for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].year == 2020 + static_cast<int>(i));

        // manual oracle: decode, append medians as pseudo-observations, repeat
        transform::StandardizedSeries ext = s;
        std::vector<project::ForecastRecord> manual;
        int origin = s.last_year();
        while (origin < end_year) {
            auto w = transform::window_at(ext, members[0].params.config.l_enc, origin);
            REQUIRE(w.has_value());
            num::Matrix grid = train::ensemble_forecast(members, *w);
            for (int k = 0; k < grid.rows && origin + 1 + k <= end_year; ++k) {
                project::ForecastRecord r;
                r.year = origin + 1 + k;
                r.q05 = transform::invert(grid(k, 0), panel.scaler);
                r.q50 = transform::invert(grid(k, 2), panel.scaler);
                r.q95 = transform::invert(grid(k, 4), panel.scaler);
                manual.push_back(r);
            }
            for (int k = 0; k < grid.rows; ++k) ext.z.push_back(grid(k, model::kMedianIndex));
            origin += grid.rows;
        }
        REQUIRE(manual.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(recs[i].q05 == manual[i].q05);
            CHECK(recs[i].q50 == manual[i].q50);
            CHECK(recs[i].q95 == manual[i].q95);
        }
    }

    SUBCASE("a series too short for a window is skipped with a warning") {
        transform::StandardizedPanel shorty = panel;
        shorty.series[0].z.resize(5);
        std::vector<std::string> warnings;
        auto recs = project::forecast_forward(members, shorty, 2030, "neural", &warnings);
        CHECK(recs.empty());
        CHECK(!warnings.empty());
    }
}
