#include <doctest.h>

#include <cmath>
#include <map>
#include <stdexcept>

#include "tfr/synth.hpp"

using namespace tfr;

TEST_CASE("noise-free panel reproduces the logistic curves exactly") {
    synth::SynthConfig cfg;
    cfg.n_countries = 5;
    cfg.n_years = 30;
    cfg.seed = 7;
    cfg.noise_sigma = 0.0;
    cfg.gap_prob = 0.0;
    cfg.dup_prob = 0.0;
    auto reports = synth::synth_panel(cfg);
    REQUIRE(reports.size() == 5u * 30u);
    std::map<std::string, int> country_ids;
    int next = 0;
    for (const auto& r : reports) {
        if (!country_ids.count(r.country_code)) country_ids[r.country_code] = next++;
        int c = country_ids[r.country_code];
        CHECK(r.tfr == doctest::Approx(synth::logistic_value(cfg, c, r.year)).epsilon(1e-14));
        CHECK(r.source_id == "src_a");
    }
}

TEST_CASE("curves are monotone declining between plausible bounds") {
    synth::SynthConfig cfg;
    cfg.seed = 19;
    for (int c = 0; c < 10; ++c) {
        double prev = synth::logistic_value(cfg, c, 1944);
        CHECK(prev < 8.0 + 1e-9);
        for (int year = 1945; year <= 2023; ++year) {
            double v = synth::logistic_value(cfg, c, year);
            CHECK(v < prev);
            CHECK(v > 1.1 - 1e-9);
            prev = v;
        }
    }
}

TEST_CASE("every observation is positive") {
    synth::SynthConfig cfg;
    cfg.n_countries = 10;
    cfg.n_years = 60;
    cfg.seed = 23;
    cfg.noise_sigma = 2.0;  // exaggerated noise to stress the floor
    for (const auto& r : synth::synth_panel(cfg)) CHECK(r.tfr >= 0.05);
}

TEST_CASE("gap and duplicate rates are near their configured probabilities") {
    synth::SynthConfig cfg;
    cfg.n_countries = 150;
    cfg.n_years = 70;
    cfg.seed = 29;
    cfg.gap_prob = 0.08;
    cfg.dup_prob = 0.15;
    auto reports = synth::synth_panel(cfg);

    // count primary-source rows and duplicates
    long primary = 0, dup = 0;
    for (const auto& r : reports) {
        if (r.source_id == "src_a") ++primary;
        else ++dup;
    }
    long cells = static_cast<long>(cfg.n_countries) * cfg.n_years;
    long interior = static_cast<long>(cfg.n_countries) * (cfg.n_years - 2);
    long gaps = cells - primary;

    // binomial three-sigma bands
    double g_mean = interior * cfg.gap_prob;
    double g_sd = std::sqrt(interior * cfg.gap_prob * (1 - cfg.gap_prob));
    CHECK(std::abs(gaps - g_mean) < 3 * g_sd);

    double d_mean = primary * cfg.dup_prob;
    double d_sd = std::sqrt(primary * cfg.dup_prob * (1 - cfg.dup_prob));
    CHECK(std::abs(dup - d_mean) < 3 * d_sd);

    // endpoints are never dropped
    std::map<std::string, std::pair<bool, bool>> seen;
    int first = cfg.last_year - cfg.n_years + 1;
    for (const auto& r : reports) {
        if (r.year == first) seen[r.country_code].first = true;
        if (r.year == cfg.last_year) seen[r.country_code].second = true;
    }
    CHECK(seen.size() == static_cast<std::size_t>(cfg.n_countries));
    for (const auto& [c, ends] : seen) {
        CHECK(ends.first);
        CHECK(ends.second);
    }
}

TEST_CASE("same seed gives an identical panel") {
    synth::SynthConfig cfg;
    cfg.n_countries = 8;
    cfg.n_years = 40;
    cfg.seed = 31;
    auto a = synth::synth_panel(cfg);
    auto b = synth::synth_panel(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].country_code == b[i].country_code);
        CHECK(a[i].year == b[i].year);
        CHECK(a[i].tfr == b[i].tfr);
        CHECK(a[i].source_id == b[i].source_id);
    }
    cfg.seed = 32;
    auto c = synth::synth_panel(cfg);
    bool any_diff = c.size() != a.size();
    for (std::size_t i = 0; !any_diff && i < a.size(); ++i) any_diff = a[i].tfr != c[i].tfr;
    CHECK(any_diff);

    CHECK_THROWS_AS(synth::synth_panel({0, 10}), std::invalid_argument);
}
