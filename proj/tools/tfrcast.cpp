// Command-line pipeline driver: synth | ingest | train | evaluate | forecast |
// report | gradcheck. All randomness derives from a single --seed; sequential
// execution is the bit-exact reference mode.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfr/baselines.hpp"
#include "tfr/csv.hpp"
#include "tfr/evaluate.hpp"
#include "tfr/ingest.hpp"
#include "tfr/model.hpp"
#include "tfr/project.hpp"
#include "tfr/synth.hpp"
#include "tfr/train.hpp"
#include "tfr/transform.hpp"

namespace fs = std::filesystem;
using namespace tfr;

namespace {

constexpr const char* kVersion = "tfrcast 1.0.0 (panel schema 1, checkpoint schema 1, forecast schema 1)";

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void write_manifest(const std::string& path, const nlohmann::ordered_json& extra,
                    const std::vector<std::string>& outputs) {
    nlohmann::ordered_json j = extra;
    j["artifact_version"] = kVersion;
    j["timestamp"] = static_cast<long>(std::time(nullptr));
    j["outputs"] = outputs;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

train::TrainConfig load_train_config(const std::string& config_path) {
    if (config_path.empty()) return train::TrainConfig{};
    return train::read_config(config_path);
}

/// Reassign country ids in a standardized panel to a checkpoint's table;
/// countries unknown to the checkpoint are dropped.
transform::StandardizedPanel align_ids(const transform::StandardizedPanel& panel,
                                       const std::map<std::string, int>& index,
                                       std::vector<std::string>* warnings) {
    transform::StandardizedPanel out;
    out.scaler = panel.scaler;
    for (const auto& s : panel.series) {
        auto it = index.find(s.country_code);
        if (it == index.end()) {
            if (warnings) warnings->push_back("country " + s.country_code + " unknown to checkpoint, dropped");
            continue;
        }
        transform::StandardizedSeries copy = s;
        copy.country_id = it->second;
        out.series.push_back(std::move(copy));
    }
    return out;
}

std::vector<model::Checkpoint> load_members(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string name = e.path().filename().string();
        if (name.rfind("member_", 0) == 0 && e.path().extension() == ".ckpt") paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error("no member_*.ckpt files in " + dir);
    std::vector<model::Checkpoint> members;
    for (const auto& p : paths) members.push_back(model::load_checkpoint(p));
    return members;
}

std::map<std::string, int> country_index_of(const transform::StandardizedPanel& panel) {
    std::map<std::string, int> idx;
    for (const auto& s : panel.series) idx[s.country_code] = s.country_id;
    return idx;
}

int cmd_synth(const synth::SynthConfig& cfg, const std::string& out_path) {
    auto reports = synth::synth_panel(cfg);
    synth::write_raw_reports(reports, out_path);
    write_manifest(out_path + ".manifest.json",
                   {{"command", "synth"}, {"seed", cfg.seed}, {"countries", cfg.n_countries},
                    {"years", cfg.n_years}},
                   {out_path});
    std::cout << "wrote " << reports.size() << " raw reports to " << out_path << '\n';
    return 0;
}

int cmd_ingest(const std::string& raw, const std::string& panel_path, const std::string& diag_path) {
    std::vector<std::string> warnings;
    auto reports = ingest::parse_raw(raw, &warnings);
    std::map<std::string, ingest::SeriesDiagnostics> diagnostics;
    std::set<std::string> flagged;
    auto panel = ingest::harmonize(reports, &diagnostics, &flagged, &warnings);
    print_warnings(warnings);
    ingest::write_panel(panel, panel_path);
    std::vector<std::string> outputs = {panel_path};
    if (!diag_path.empty()) {
        ingest::write_diagnostics(diagnostics, flagged, panel, diag_path);
        outputs.push_back(diag_path);
    }
    write_manifest(panel_path + ".manifest.json",
                   {{"command", "ingest"}, {"data_hash", csv::hash_file(raw)},
                    {"countries", panel.series.size()}, {"interpolated_cells", panel.metadata.interpolated_cells},
                    {"flagged_series", panel.metadata.flagged_series}},
                   outputs);
    std::cout << "harmonized " << panel.series.size() << " countries ("
              << panel.metadata.interpolated_cells << " interpolated cells, " << panel.metadata.flagged_series
              << " smoothed series)\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& panel_path, const std::string& out_dir,
              std::uint64_t seed_override, bool has_seed, int members, bool full_sample, int search_budget) {
    train::TrainConfig cfg = load_train_config(config_path);
    if (has_seed) cfg.seed = seed_override;

    auto panel = ingest::read_panel(panel_path);
    int last_year = 0;
    for (const auto& [c, s] : panel.series) last_year = std::max(last_year, s.last_year);
    transform::SplitSpec split;
    split.train_cutoff_year = full_sample ? last_year + 1 : cfg.cutoff_year;
    split.validation_origin_years = cfg.validation_origin_years;

    auto scaler = transform::fit_scaler(panel, split);
    auto std_panel = transform::log_standardize(panel, scaler);

    std::vector<std::string> warnings;
    auto windows = transform::temporal_split(std_panel, split, cfg.l_enc, cfg.l_pred, &warnings);
    num::RngStream aug_rng = num::RngStream(cfg.seed).split("augment");
    windows.train = transform::augment_low_fertility(windows.train, panel, split, cfg.sigma_noise, aug_rng);
    print_warnings(warnings);
    std::cout << "windows: train " << windows.train.windows.size() << ", validation "
              << windows.validation.windows.size() << ", test " << windows.test.windows.size() << '\n';

    int n_countries = static_cast<int>(std_panel.series.size());
    if (search_budget > 0) {
        train::SearchSpace space;
        cfg = train::random_search(space, search_budget, cfg.seed, cfg, n_countries, windows.train,
                                   windows.validation);
        std::cout << "search selected lr=" << cfg.lr << " hidden=" << cfg.hidden_dim
                  << " layers=" << cfg.n_layers << " batch=" << cfg.batch_size << '\n';
    }

    auto spec = train::train_ensemble(cfg, n_countries, windows.train, windows.validation, scaler,
                                      country_index_of(std_panel), members);

    fs::create_directories(out_dir);
    std::vector<std::string> outputs;
    for (std::size_t i = 0; i < spec.members.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "member_%02zu.ckpt", i);
        std::string ckpt_path = (fs::path(out_dir) / name).string();
        model::save_checkpoint(spec.members[i], ckpt_path);
        outputs.push_back(ckpt_path);
        std::snprintf(name, sizeof(name), "history_%02zu.csv", i);
        std::string hist_path = (fs::path(out_dir) / name).string();
        train::write_history(spec.histories[i], hist_path);
        outputs.push_back(hist_path);
    }
    std::string cfg_path = (fs::path(out_dir) / "config.txt").string();
    train::write_config(cfg, cfg_path);
    outputs.push_back(cfg_path);
    write_manifest((fs::path(out_dir) / "manifest.json").string(),
                   {{"command", "train"}, {"seed", cfg.seed}, {"data_hash", csv::hash_file(panel_path)},
                    {"config_hash", csv::hash_file(cfg_path)}, {"members", members},
                    {"full_sample", full_sample}},
                   outputs);
    std::cout << "trained " << spec.members.size() << " members into " << out_dir << '\n';
    return 0;
}

int cmd_evaluate(const std::string& panel_path, const std::string& models_dir,
                 const std::vector<std::string>& comparators, const std::string& out_dir, int cutoff) {
    auto panel = ingest::read_panel(panel_path);
    auto members = load_members(models_dir);
    const auto& scaler = members.front().scaler;
    const int l_pred = members.front().params.config.l_pred;
    const int l_enc = members.front().params.config.l_enc;

    std::vector<std::string> warnings;
    auto std_panel = align_ids(transform::log_standardize(panel, scaler), members.front().country_index,
                               &warnings);

    transform::SplitSpec split;
    split.train_cutoff_year = cutoff;
    auto windows = transform::temporal_split(std_panel, split, l_enc, l_pred, &warnings);

    // neural + drift forecasts over the held-out years
    std::vector<project::ForecastRecord> records;
    for (const auto& w : windows.test.windows) {
        const transform::StandardizedSeries* s = nullptr;
        for (const auto& cand : std_panel.series)
            if (cand.country_id == w.country_id && cand.last_year() >= w.origin_year) s = &cand;
        if (!s) continue;
        const auto& natural = panel.series.at(s->country_code);
        int horizon = std::min(l_pred, natural.last_year - w.origin_year);
        if (horizon < 1) continue;

        num::Matrix grid = train::ensemble_forecast(members, w);
        for (int k = 0; k < horizon; ++k) {
            project::ForecastRecord r;
            r.country_code = s->country_code;
            r.year = w.origin_year + 1 + k;
            r.model = "neural";
            r.q05 = transform::invert(grid(k, 0), scaler);
            r.q10 = transform::invert(grid(k, 1), scaler);
            r.q50 = transform::invert(grid(k, 2), scaler);
            r.q90 = transform::invert(grid(k, 3), scaler);
            r.q95 = transform::invert(grid(k, 4), scaler);
            records.push_back(r);
        }

        std::vector<double> history;
        for (int y = natural.first_year; y <= w.origin_year; ++y) history.push_back(natural.at_year(y));
        auto drift = baselines::naive_drift(history, horizon);
        for (int k = 0; k < horizon; ++k) {
            project::ForecastRecord r;
            r.country_code = s->country_code;
            r.year = w.origin_year + 1 + k;
            r.model = "drift";
            r.q05 = r.q10 = r.q50 = r.q90 = r.q95 = drift[k];
            records.push_back(r);
        }
    }
    auto comp = project::load_comparators(comparators, &warnings);
    records.insert(records.end(), comp.begin(), comp.end());

    std::set<std::string> models;
    for (const auto& r : records) models.insert(r.model);

    // score on the per-country year set common to the actuals and all models
    std::vector<evaluate::CountryScores> scores;
    for (const auto& [country, natural] : panel.series) {
        std::map<std::string, std::map<int, std::vector<double>>> by_model;
        for (const auto& r : records)
            if (r.country_code == country) by_model[r.model][r.year] = {r.q05, r.q10, r.q50, r.q90, r.q95};
        if (by_model.size() != models.size()) continue;

        std::vector<int> years;
        for (int y = std::max(cutoff, natural.first_year); y <= natural.last_year; ++y) {
            bool everywhere = true;
            for (const auto& [m, rows] : by_model)
                if (!rows.count(y)) everywhere = false;
            if (everywhere) years.push_back(y);
        }
        if (years.empty()) continue;

        std::vector<double> actual, training;
        for (int y : years) actual.push_back(natural.at_year(y));
        for (int y = natural.first_year; y < cutoff && y <= natural.last_year; ++y)
            training.push_back(natural.at_year(y));
        if (training.size() < 2) continue;

        for (const auto& [m, rows] : by_model) {
            std::vector<std::vector<double>> qrows;
            for (int y : years) qrows.push_back(rows.at(y));
            scores.push_back(evaluate::score_country(country, m, actual, qrows, training));
        }
    }
    if (scores.empty()) throw std::runtime_error("evaluate: no scorable countries");
    auto report = evaluate::summarize(scores, &warnings);
    print_warnings(warnings);

    fs::create_directories(out_dir);
    std::string scores_path = (fs::path(out_dir) / "scores.csv").string();
    std::string summary_path = (fs::path(out_dir) / "summary.csv").string();
    std::string fc_path = (fs::path(out_dir) / "holdout_forecasts.csv").string();
    evaluate::write_scores(scores, scores_path);
    evaluate::write_summary(report, summary_path);
    project::write_forecast(records, fc_path);
    write_manifest((fs::path(out_dir) / "manifest.json").string(),
                   {{"command", "evaluate"}, {"data_hash", csv::hash_file(panel_path)}, {"cutoff", cutoff}},
                   {scores_path, summary_path, fc_path});

    for (const auto& row : report.summaries)
        std::cout << row.metric << ' ' << row.model << " median=" << csv::fmt(row.median) << '\n';
    return 0;
}

int cmd_forecast(const std::string& panel_path, const std::string& models_dir, int end_year,
                 const std::string& out_path) {
    auto panel = ingest::read_panel(panel_path);
    auto members = load_members(models_dir);
    std::vector<std::string> warnings;
    auto std_panel = align_ids(transform::log_standardize(panel, members.front().scaler),
                               members.front().country_index, &warnings);
    auto records = project::forecast_forward(members, std_panel, end_year, "neural", &warnings);
    print_warnings(warnings);
    project::write_forecast(records, out_path);
    write_manifest(out_path + ".manifest.json",
                   {{"command", "forecast"}, {"data_hash", csv::hash_file(panel_path)},
                    {"end_year", end_year}},
                   {out_path});
    std::cout << "wrote " << records.size() << " forecast rows to " << out_path << '\n';
    return 0;
}

int cmd_report(const std::vector<std::string>& forecast_files, const std::string& weights_path,
               const std::string& regions_path, int end_year, const std::string& out_dir) {
    std::vector<std::string> warnings;
    auto records = project::load_comparators(forecast_files, &warnings);
    auto weights = project::load_weights(weights_path);

    std::vector<std::pair<int, int>> intervals = {
        {end_year - 14, end_year - 10}, {end_year - 9, end_year - 5}, {end_year - 4, end_year}};
    auto agg = project::build_aggregate_report(records, weights, intervals, end_year, &warnings);

    fs::create_directories(out_dir);
    std::string agg_csv = (fs::path(out_dir) / "aggregate_report.csv").string();
    std::string agg_json = (fs::path(out_dir) / "aggregate_report.json").string();
    project::write_aggregate_report(agg, agg_csv, agg_json);
    std::vector<std::string> outputs = {agg_csv, agg_json};

    if (!regions_path.empty()) {
        auto regions = project::load_regions(regions_path);
        auto rows = project::regional_endpoint_table(records, regions, end_year, &warnings);
        std::string table_path = (fs::path(out_dir) / "regional_endpoints.csv").string();
        project::write_endpoint_table(rows, table_path);
        outputs.push_back(table_path);
    }
    print_warnings(warnings);
    write_manifest((fs::path(out_dir) / "manifest.json").string(),
                   {{"command", "report"}, {"end_year", end_year}}, outputs);
    std::cout << "report written to " << out_dir << '\n';
    return 0;
}

int cmd_gradcheck(int samples, double tolerance, std::uint64_t seed) {
    auto report = train::gradcheck_tiny(samples, tolerance, seed);
    std::cout << "gradcheck: " << report.n_checked << " coordinates, max rel error "
              << csv::fmt(report.max_rel_error) << '\n';
    for (const auto& f : report.failures)
        std::cerr << "  param " << f.param << " index " << f.index << " analytic " << f.analytic
                  << " numeric " << f.numeric << " rel " << f.rel_error << '\n';
    return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Global TFR forecasting pipeline"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic raw reports fixture");
    synth::SynthConfig synth_cfg;
    std::string synth_out = "raw_reports.csv";
    synth_cmd->add_option("--countries", synth_cfg.n_countries);
    synth_cmd->add_option("--years", synth_cfg.n_years);
    synth_cmd->add_option("--last-year", synth_cfg.last_year);
    synth_cmd->add_option("--seed", synth_cfg.seed);
    synth_cmd->add_option("--noise", synth_cfg.noise_sigma);
    synth_cmd->add_option("--gap-prob", synth_cfg.gap_prob);
    synth_cmd->add_option("--dup-prob", synth_cfg.dup_prob);
    synth_cmd->add_option("--out", synth_out);

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Harmonize raw reports into an annual panel");
    std::string raw_path, panel_out = "panel.csv", diag_out;
    ingest_cmd->add_option("--raw", raw_path)->required();
    ingest_cmd->add_option("--panel", panel_out);
    ingest_cmd->add_option("--diagnostics", diag_out);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the quantile seq2seq ensemble");
    std::string train_config, train_panel, train_out = "models";
    std::uint64_t train_seed = 0;
    int train_members = 10, search_budget = 0;
    bool full_sample = false;
    train_cmd->add_option("--config", train_config);
    train_cmd->add_option("--panel", train_panel)->required();
    train_cmd->add_option("--out", train_out);
    auto* seed_opt = train_cmd->add_option("--seed", train_seed);
    train_cmd->add_option("--members", train_members);
    train_cmd->add_option("--search", search_budget);
    train_cmd->add_flag("--full-sample", full_sample);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Score models on the held-out period");
    std::string eval_panel, eval_models, eval_out = "evaluation";
    std::vector<std::string> eval_comparators;
    int eval_cutoff = 2009;
    eval_cmd->add_option("--panel", eval_panel)->required();
    eval_cmd->add_option("--models", eval_models)->required();
    eval_cmd->add_option("--comparators", eval_comparators);
    eval_cmd->add_option("--cutoff", eval_cutoff);
    eval_cmd->add_option("--out", eval_out);

    // forecast
    auto* fc_cmd = app.add_subcommand("forecast", "Forward projections from the last observed year");
    std::string fc_panel, fc_models, fc_out = "forecast.csv";
    int fc_end_year = 2040;
    fc_cmd->add_option("--panel", fc_panel)->required();
    fc_cmd->add_option("--models", fc_models)->required();
    fc_cmd->add_option("--end-year", fc_end_year);
    fc_cmd->add_option("--out", fc_out);

    // report
    auto* rep_cmd = app.add_subcommand("report", "Aggregation reports over forecast files");
    std::vector<std::string> rep_forecasts, rep_comparators;
    std::string rep_weights, rep_regions, rep_out = "report";
    int rep_end_year = 2040;
    rep_cmd->add_option("--forecast", rep_forecasts)->required();
    rep_cmd->add_option("--comparators", rep_comparators);
    rep_cmd->add_option("--weights", rep_weights)->required();
    rep_cmd->add_option("--regions", rep_regions);
    rep_cmd->add_option("--end-year", rep_end_year);
    rep_cmd->add_option("--out", rep_out);

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the seq2seq gradient");
    int gc_samples = 200;
    double gc_tol = 1e-4;
    std::uint64_t gc_seed = 42;
    gc_cmd->add_option("--samples", gc_samples);
    gc_cmd->add_option("--tolerance", gc_tol);
    gc_cmd->add_option("--seed", gc_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) return cmd_synth(synth_cfg, synth_out);
        if (*ingest_cmd) return cmd_ingest(raw_path, panel_out, diag_out);
        if (*train_cmd)
            return cmd_train(train_config, train_panel, train_out, train_seed, seed_opt->count() > 0,
                             train_members, full_sample, search_budget);
        if (*eval_cmd) return cmd_evaluate(eval_panel, eval_models, eval_comparators, eval_out, eval_cutoff);
        if (*fc_cmd) return cmd_forecast(fc_panel, fc_models, fc_end_year, fc_out);
        if (*rep_cmd) {
            auto files = rep_forecasts;
            files.insert(files.end(), rep_comparators.begin(), rep_comparators.end());
            return cmd_report(files, rep_weights, rep_regions, rep_end_year, rep_out);
        }
        if (*gc_cmd) return cmd_gradcheck(gc_samples, gc_tol, gc_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error:usage: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error:runtime: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
