#include "tfr/transform.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tfr::transform {

const StandardizedSeries* StandardizedPanel::find(const std::string& code) const {
    for (const auto& s : series)
        if (s.country_code == code) return &s;
    return nullptr;
}

GlobalScaler fit_scaler(const ingest::HarmonizedPanel& panel, const SplitSpec& split) {
    double sum = 0.0, sumsq = 0.0;
    long n = 0;
    for (const auto& [country, s] : panel.series) {
        for (int i = 0; i < s.n_years(); ++i) {
            int year = s.first_year + i;
            if (year >= split.train_cutoff_year) continue;
            if (s.values[i] <= 0.0) throw std::domain_error("fit_scaler: non-positive tfr for " + country);
            double lx = std::log(s.values[i]);
            sum += lx;
            sumsq += lx * lx;
            ++n;
        }
    }
    if (n == 0) throw std::runtime_error("fit_scaler: empty training partition");
    GlobalScaler sc;
    sc.mu = sum / static_cast<double>(n);
    double var = sumsq / static_cast<double>(n) - sc.mu * sc.mu;
    if (var <= 0.0) throw std::runtime_error("fit_scaler: zero variance in training cells");
    sc.sigma = std::sqrt(var);
    sc.fitted = true;
    return sc;
}

double standardize_value(double tfr, const GlobalScaler& scaler) {
    if (tfr <= 0.0) throw std::domain_error("standardize_value: tfr must be positive");
    return (std::log(tfr) - scaler.mu) / scaler.sigma;
}

double invert(double z, const GlobalScaler& scaler) { return std::exp(z * scaler.sigma + scaler.mu); }

StandardizedPanel log_standardize(const ingest::HarmonizedPanel& panel, const GlobalScaler& scaler) {
    if (!scaler.fitted) throw std::runtime_error("log_standardize: scaler not fitted");
    StandardizedPanel out;
    out.scaler = scaler;
    int id = 0;
    for (const auto& [country, s] : panel.series) {
        StandardizedSeries z;
        z.country_code = country;
        z.country_id = id++;
        z.first_year = s.first_year;
        z.z.reserve(s.values.size());
        for (double v : s.values) z.z.push_back(standardize_value(v, scaler));
        out.series.push_back(std::move(z));
    }
    return out;
}

int window_count(int n_years, int l_enc, int l_pred) {
    int c = n_years - (l_enc + 6) - l_pred + 1;
    return c > 0 ? c : 0;
}

std::vector<WindowSample> make_windows(const StandardizedSeries& series, int l_enc, int l_pred,
                                       std::optional<int> max_target_year) {
    if (l_enc < 7) throw std::invalid_argument("make_windows: l_enc must be >= 7 so lags resolve");
    if (l_pred < 1) throw std::invalid_argument("make_windows: l_pred must be >= 1");
    std::vector<WindowSample> out;
    int bound = series.last_year();
    if (max_target_year) bound = std::min(bound, *max_target_year);
    // earliest origin needs lag 6 at the first encoder row
    int first_origin = series.first_year + l_enc + 5;
    int last_origin = bound - l_pred;
    for (int t = first_origin; t <= last_origin; ++t) {
        WindowSample w;
        w.country_id = series.country_id;
        w.origin_year = t;
        w.encoder_input = num::Matrix(l_enc, 4);
        for (int j = 0; j < l_enc; ++j) {
            int year = t - l_enc + 1 + j;
            w.encoder_input(j, 0) = series.at_year(year);
            w.encoder_input(j, 1) = series.at_year(year - 2);
            w.encoder_input(j, 2) = series.at_year(year - 4);
            w.encoder_input(j, 3) = series.at_year(year - 6);
        }
        for (int k = 1; k <= l_pred; ++k) w.target.push_back(series.at_year(t + k));
        for (int y = t - 6; y <= t; ++y) w.recent.push_back(series.at_year(y));
        out.push_back(std::move(w));
    }
    return out;
}

WindowSet make_windows(const StandardizedPanel& panel, int l_enc, int l_pred,
                       std::optional<int> max_target_year) {
    WindowSet set;
    set.l_enc = l_enc;
    set.l_pred = l_pred;
    for (const auto& s : panel.series) {
        auto w = make_windows(s, l_enc, l_pred, max_target_year);
        set.windows.insert(set.windows.end(), w.begin(), w.end());
    }
    return set;
}

WindowSet augment_low_fertility(const WindowSet& training, const ingest::HarmonizedPanel& panel,
                                const SplitSpec& split, double sigma_noise, num::RngStream& rng) {
    // country ids follow sorted panel order, matching log_standardize
    std::vector<bool> qualifies;
    for (const auto& [country, s] : panel.series) {
        bool low = false;
        for (int i = 0; i < s.n_years(); ++i)
            if (s.first_year + i < split.train_cutoff_year && s.values[i] <= 1.3) low = true;
        qualifies.push_back(low);
    }

    WindowSet out = training;
    std::vector<std::vector<const WindowSample*>> per_country(qualifies.size());
    for (const WindowSample& w : training.windows)
        if (w.country_id >= 0 && w.country_id < static_cast<int>(qualifies.size()) && qualifies[w.country_id])
            per_country[w.country_id].push_back(&w);

    for (auto& windows : per_country) {
        std::sort(windows.begin(), windows.end(),
                  [](const WindowSample* a, const WindowSample* b) { return a->origin_year > b->origin_year; });
        std::size_t take = std::min<std::size_t>(10, windows.size());
        for (std::size_t i = 0; i < take; ++i) {
            WindowSample dup = *windows[i];
            dup.augmented = true;
            for (double& x : dup.encoder_input.data) x += sigma_noise * rng.normal();
            for (double& x : dup.target) x += sigma_noise * rng.normal();
            for (double& x : dup.recent) x += sigma_noise * rng.normal();
            out.windows.push_back(std::move(dup));
        }
    }
    return out;
}

std::optional<WindowSample> window_at(const StandardizedSeries& series, int l_enc, int origin_year) {
    if (series.first_year > origin_year - l_enc - 5 || series.last_year() < origin_year) return std::nullopt;
    WindowSample w;
    w.country_id = series.country_id;
    w.origin_year = origin_year;
    w.encoder_input = num::Matrix(l_enc, 4);
    for (int j = 0; j < l_enc; ++j) {
        int year = origin_year - l_enc + 1 + j;
        w.encoder_input(j, 0) = series.at_year(year);
        w.encoder_input(j, 1) = series.at_year(year - 2);
        w.encoder_input(j, 2) = series.at_year(year - 4);
        w.encoder_input(j, 3) = series.at_year(year - 6);
    }
    for (int y = origin_year - 6; y <= origin_year; ++y) w.recent.push_back(series.at_year(y));
    return w;
}

SplitWindows temporal_split(const StandardizedPanel& panel, const SplitSpec& split, int l_enc, int l_pred,
                            std::vector<std::string>* warnings) {
    SplitWindows out;
    out.train.l_enc = out.validation.l_enc = out.test.l_enc = l_enc;
    out.train.l_pred = out.validation.l_pred = out.test.l_pred = l_pred;

    int max_target = split.train_cutoff_year - 1;
    WindowSet all = make_windows(panel, l_enc, l_pred, max_target);

    int max_origin = 0;
    bool any = false;
    for (const WindowSample& w : all.windows) {
        max_origin = any ? std::max(max_origin, w.origin_year) : w.origin_year;
        any = true;
    }
    int v = split.validation_origin_years;
    if (v == 0 && warnings) warnings->push_back("temporal_split: V=0, empty validation set");
    for (WindowSample& w : all.windows) {
        if (any && v > 0 && w.origin_year > max_origin - v)
            out.validation.windows.push_back(std::move(w));
        else
            out.train.windows.push_back(std::move(w));
    }

    // one inference window per country at origin cutoff-1
    int origin = split.train_cutoff_year - 1;
    for (const auto& s : panel.series) {
        auto w = window_at(s, l_enc, origin);
        if (!w) {
            if (warnings)
                warnings->push_back("temporal_split: " + s.country_code + " has no test window at origin " +
                                    std::to_string(origin));
            continue;
        }
        out.test.windows.push_back(std::move(*w));
    }
    return out;
}

namespace {
constexpr char kCacheMagic[8] = {'T', 'F', 'R', 'W', 'I', 'N', '0', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
bool get(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(in);
}
}  // namespace

void save_window_cache(const WindowSet& set, std::uint64_t panel_hash, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kCacheMagic, sizeof(kCacheMagic));
    put(out, panel_hash);
    put(out, static_cast<std::int32_t>(set.l_enc));
    put(out, static_cast<std::int32_t>(set.l_pred));
    put(out, static_cast<std::int64_t>(set.windows.size()));
    for (const WindowSample& w : set.windows) {
        put(out, static_cast<std::int32_t>(w.country_id));
        put(out, static_cast<std::int32_t>(w.origin_year));
        put(out, static_cast<std::int8_t>(w.augmented ? 1 : 0));
        put(out, static_cast<std::int32_t>(w.target.size()));
        out.write(reinterpret_cast<const char*>(w.encoder_input.data.data()),
                  static_cast<std::streamsize>(w.encoder_input.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(w.target.data()),
                  static_cast<std::streamsize>(w.target.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(w.recent.data()),
                  static_cast<std::streamsize>(w.recent.size() * sizeof(double)));
    }
}

std::optional<WindowSet> load_window_cache(std::uint64_t panel_hash, int l_enc, int l_pred,
                                           const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) return std::nullopt;
    std::uint64_t stored_hash;
    std::int32_t stored_enc, stored_pred;
    std::int64_t n;
    if (!get(in, stored_hash) || !get(in, stored_enc) || !get(in, stored_pred) || !get(in, n))
        return std::nullopt;
    if (stored_hash != panel_hash || stored_enc != l_enc || stored_pred != l_pred) return std::nullopt;

    WindowSet set;
    set.l_enc = l_enc;
    set.l_pred = l_pred;
    for (std::int64_t i = 0; i < n; ++i) {
        WindowSample w;
        std::int32_t cid, origin, tlen;
        std::int8_t aug;
        if (!get(in, cid) || !get(in, origin) || !get(in, aug) || !get(in, tlen)) return std::nullopt;
        w.country_id = cid;
        w.origin_year = origin;
        w.augmented = aug != 0;
        w.encoder_input = num::Matrix(l_enc, 4);
        w.target.resize(tlen);
        w.recent.resize(7);
        in.read(reinterpret_cast<char*>(w.encoder_input.data.data()),
                static_cast<std::streamsize>(w.encoder_input.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(w.target.data()),
                static_cast<std::streamsize>(w.target.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(w.recent.data()), static_cast<std::streamsize>(7 * sizeof(double)));
        if (!in) return std::nullopt;
        set.windows.push_back(std::move(w));
    }
    return set;
}

}  // namespace tfr::transform
