#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfr/model.hpp"
#include "tfr/optim.hpp"
#include "tfr/transform.hpp"

namespace tfr::train {

struct TrainConfig {
    double lr = 1e-3;
    int hidden_dim = 64;
    int n_layers = 2;
    int batch_size = 64;
    double weight_decay = 1e-5;
    int max_epochs = 100;
    int patience = 8;
    int lr_step_size = 10;
    double lr_gamma = 0.5;
    int e_decay = 20;  // teacher-forcing probability reaches 0 at this epoch
    std::uint64_t seed = 1;
    int l_enc = 24;
    int l_pred = 15;
    int d_emb = 8;
    double sigma_noise = 0.01;
    int cutoff_year = 2009;
    int validation_origin_years = 10;
};

/// Plain key=value config file; unknown keys are an error, missing keys keep
/// their defaults.
TrainConfig read_config(const std::string& path);
void write_config(const TrainConfig& config, const std::string& path);

/// Quantile (pinball) loss for one prediction.
double pinball(double y, double yhat, double tau);

/// Sum of pinball losses over all steps and quantile levels of one grid.
double total_loss(const std::vector<double>& targets, const num::Matrix& grid);

/// Tape version of total_loss over decoder outputs, for training.
ad::Var total_loss(ad::Tape& tape, const model::DecodeResult& dec, const std::vector<double>& targets);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double tf_prob = 0.0;
};

struct TrainResult {
    model::ModelParams params;  // best-validation parameters
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val = 0.0;
};

/// Minibatch Adam training with step LR, teacher-forcing decay and early
/// stopping on the validation loss (train loss when validation is empty).
TrainResult train_model(const TrainConfig& config, int n_countries, const transform::WindowSet& train_set,
                        const transform::WindowSet& val_set);

void write_history(const std::vector<EpochRecord>& history, const std::string& path);

/// Deterministic member jitter: seed base+i, lr x{1.0, 0.8, 1.25} cycling,
/// hidden +{0, +8, -8} cycling (floored at 4).
std::vector<TrainConfig> member_configs(const TrainConfig& base, int n_members = 10);

struct EnsembleSpec {
    std::vector<TrainConfig> configs;
    std::vector<model::Checkpoint> members;
    std::vector<std::vector<EpochRecord>> histories;
};

EnsembleSpec train_ensemble(const TrainConfig& base, int n_countries, const transform::WindowSet& train_set,
                            const transform::WindowSet& val_set, const transform::GlobalScaler& scaler,
                            const std::map<std::string, int>& country_index, int n_members = 10);

/// Per-cell median of member quantile grids (mean of middle two for even
/// counts), then quantile rearrangement. Standardized space.
num::Matrix ensemble_forecast(const std::vector<model::Checkpoint>& members,
                              const transform::WindowSample& window);

struct SearchSpace {
    double lr_min = 1e-4;
    double lr_max = 1e-2;
    std::vector<int> hidden = {32, 64, 128};
    std::vector<int> layers = {1, 2, 3};
    std::vector<int> batch = {32, 64, 128};
};

struct SearchTrial {
    TrainConfig config;
    double val_loss = 0.0;
};

/// Seeded uniform random search; returns the argmin-validation-loss config
/// with ties broken by trial index.
TrainConfig random_search(const SearchSpace& space, int budget, std::uint64_t seed, const TrainConfig& base,
                          int n_countries, const transform::WindowSet& train_set,
                          const transform::WindowSet& val_set, std::vector<SearchTrial>* trials_out = nullptr);

/// Finite-difference check of the full seq2seq multi-quantile loss gradient
/// on a tiny configuration (hidden 8, L_enc 6, L_pred 3, d_emb 2, 3
/// countries) with mixed teacher forcing.
num::GradCheckReport gradcheck_tiny(int n_samples, double tolerance, std::uint64_t seed = 42);

}  // namespace tfr::train
