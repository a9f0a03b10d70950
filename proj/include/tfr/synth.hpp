#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfr/ingest.hpp"

namespace tfr::synth {

struct SynthConfig {
    int n_countries = 20;
    int n_years = 80;
    int last_year = 2023;
    std::uint64_t seed = 1;
    double noise_sigma = 0.05;   // observation noise, births per woman
    double gap_prob = 0.08;      // interior year dropped from the primary source
    double dup_prob = 0.15;      // second source report for the year
};

/// Synthetic fertility panel: each country follows a logistic transition
/// y(t) = floor + (start - floor) / (1 + exp(k (t - t0))) with seeded
/// per-country parameters, plus observation noise, occasional duplicate
/// sources, and interior gaps, so every ingest path is exercised.
std::vector<ingest::RawReport> synth_panel(const SynthConfig& config);

/// Noise-free curve value for country `c` at year `year` under the same seed.
double logistic_value(const SynthConfig& config, int country, int year);

void write_raw_reports(const std::vector<ingest::RawReport>& reports, const std::string& path);

}  // namespace tfr::synth
