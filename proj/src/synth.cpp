#include "tfr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "tfr/rng.hpp"

namespace tfr::synth {

namespace {

struct CountryCurve {
    double start, floor, k, t0;
};

CountryCurve curve_params(const SynthConfig& config, int country) {
    num::RngStream rng = num::RngStream(config.seed).split("curve" + std::to_string(country));
    CountryCurve c;
    c.start = rng.uniform(4.0, 8.0);
    c.floor = rng.uniform(1.1, 1.9);
    c.k = rng.uniform(0.08, 0.25);
    int first = config.last_year - config.n_years + 1;
    c.t0 = rng.uniform(first + 0.25 * config.n_years, first + 0.75 * config.n_years);
    return c;
}

std::string country_code(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "C%03d", i);
    return buf;
}

}  // namespace

double logistic_value(const SynthConfig& config, int country, int year) {
    CountryCurve c = curve_params(config, country);
    return c.floor + (c.start - c.floor) / (1.0 + std::exp(c.k * (static_cast<double>(year) - c.t0)));
}

std::vector<ingest::RawReport> synth_panel(const SynthConfig& config) {
    if (config.n_countries < 1 || config.n_years < 2) throw std::invalid_argument("synth_panel: bad size");
    std::vector<ingest::RawReport> out;
    int first = config.last_year - config.n_years + 1;
    for (int i = 0; i < config.n_countries; ++i) {
        CountryCurve c = curve_params(config, i);
        num::RngStream rng = num::RngStream(config.seed).split("obs" + std::to_string(i));
        std::string code = country_code(i);
        for (int year = first; year <= config.last_year; ++year) {
            double base = c.floor + (c.start - c.floor) / (1.0 + std::exp(c.k * (year - c.t0)));
            bool interior = year != first && year != config.last_year;
            // draw order is fixed per year so gap/dup decisions stay stable
            double gap_u = rng.uniform();
            double dup_u = rng.uniform();
            double n1 = rng.normal();
            double n2 = rng.normal();
            if (interior && gap_u < config.gap_prob) continue;
            ingest::RawReport r;
            r.country_code = code;
            r.year = year;
            r.tfr = std::max(0.05, base + config.noise_sigma * n1);
            r.source_id = "src_a";
            out.push_back(r);
            if (dup_u < config.dup_prob) {
                r.tfr = std::max(0.05, base + config.noise_sigma * n2);
                r.source_id = "src_b";
                out.push_back(r);
            }
        }
    }
    return out;
}

void write_raw_reports(const std::vector<ingest::RawReport>& reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "country_code,year,tfr,source_id\n";
    char buf[64];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.12g,%s\n", r.country_code.c_str(), r.year, r.tfr,
                      r.source_id.c_str());
        out << buf;
    }
}

}  // namespace tfr::synth
