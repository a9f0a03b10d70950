#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tfr/ingest.hpp"
#include "tfr/matrix.hpp"
#include "tfr/rng.hpp"

namespace tfr::transform {

/// Global log-space standardizer: z = (ln(tfr) - mu) / sigma, one pair for the
/// whole panel, fitted only on cells before the split cutoff.
struct GlobalScaler {
    double mu = 0.0;
    double sigma = 1.0;
    bool fitted = false;
};

/// Per-country standardized series.
struct StandardizedSeries {
    std::string country_code;
    int country_id = 0;  // dense index into embedding table
    int first_year = 0;
    std::vector<double> z;

    int last_year() const { return first_year + static_cast<int>(z.size()) - 1; }
    double at_year(int year) const { return z[year - first_year]; }
};

struct StandardizedPanel {
    std::vector<StandardizedSeries> series;  // sorted by country code
    GlobalScaler scaler;

    const StandardizedSeries* find(const std::string& code) const;
};

/// One supervised training instance. Encoder rows cover origin years
/// t-L_enc+1 .. t; columns are z at the year and at lags 2, 4, 6. `recent`
/// holds z at years t-6 .. t for seeding the decoder's lag buffer.
struct WindowSample {
    int country_id = 0;
    int origin_year = 0;
    num::Matrix encoder_input;    // L_enc x 4
    std::vector<double> target;   // L_pred values, years t+1 .. t+L_pred
    std::vector<double> recent;   // 7 values, years t-6 .. t
    bool augmented = false;
};

struct SplitSpec {
    int train_cutoff_year = 2009;  // exclusive upper bound for training data
    int validation_origin_years = 10;
};

struct WindowSet {
    std::vector<WindowSample> windows;
    int l_enc = 24;
    int l_pred = 15;
};

struct SplitWindows {
    WindowSet train;
    WindowSet validation;
    WindowSet test;  // one window per country at origin cutoff-1, where available
};

/// Fit mu/sigma on all training cells (year < cutoff) of the log panel.
/// Population standard deviation; zero variance is an error.
GlobalScaler fit_scaler(const ingest::HarmonizedPanel& panel, const SplitSpec& split);

/// Apply the global log standardization to every cell of the panel.
StandardizedPanel log_standardize(const ingest::HarmonizedPanel& panel, const GlobalScaler& scaler);

double standardize_value(double tfr, const GlobalScaler& scaler);
double invert(double z, const GlobalScaler& scaler);

/// Closed-form usable window count for a series of n years.
int window_count(int n_years, int l_enc, int l_pred);

/// All windows for one series, optionally bounded so that no target year
/// exceeds max_target_year.
std::vector<WindowSample> make_windows(const StandardizedSeries& series, int l_enc, int l_pred,
                                       std::optional<int> max_target_year = std::nullopt);

/// Windows for the whole panel.
WindowSet make_windows(const StandardizedPanel& panel, int l_enc, int l_pred,
                       std::optional<int> max_target_year = std::nullopt);

/// Inference window (empty target) at a specific origin year; nullopt when
/// the series lacks the history to resolve every encoder lag.
std::optional<WindowSample> window_at(const StandardizedSeries& series, int l_enc, int origin_year);

/// Duplicate the 10 most recent training windows of every country whose
/// training-partition tfr reaches 1.3 or lower, adding i.i.d. Gaussian noise
/// (sigma_noise, standardized space) to inputs and targets.
WindowSet augment_low_fertility(const WindowSet& training, const ingest::HarmonizedPanel& panel,
                                const SplitSpec& split, double sigma_noise, num::RngStream& rng);

/// Leakage-free chronological partition: train/validation target years all
/// below the cutoff, validation drawn from the last V eligible origin years,
/// test = one window per country at origin cutoff-1.
SplitWindows temporal_split(const StandardizedPanel& panel, const SplitSpec& split, int l_enc, int l_pred,
                            std::vector<std::string>* warnings = nullptr);

/// Binary window cache with version tag; load returns nullopt when the stored
/// panel hash or window config differs.
void save_window_cache(const WindowSet& set, std::uint64_t panel_hash, const std::string& path);
std::optional<WindowSet> load_window_cache(std::uint64_t panel_hash, int l_enc, int l_pred,
                                           const std::string& path);

}  // namespace tfr::transform
