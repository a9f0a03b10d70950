#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tfr/autodiff.hpp"
#include "tfr/matrix.hpp"
#include "tfr/rng.hpp"
#include "tfr/transform.hpp"

namespace tfr::model {

using num::Matrix;

/// Quantile levels emitted by the output head, ascending.
inline const std::vector<double> kQuantiles = {0.05, 0.10, 0.50, 0.90, 0.95};
inline constexpr int kMedianIndex = 2;

struct GruLayerParams {
    Matrix W_xu, W_hu, b_u;  // update gate
    Matrix W_xr, W_hr, b_r;  // reset gate
    Matrix W_xh, W_hh, b_h;  // candidate state
    int input_dim = 0;
    int hidden_dim = 0;
};

struct ModelConfig {
    int l_enc = 24;
    int l_pred = 15;
    int hidden_dim = 64;
    int n_layers = 2;
    int d_emb = 8;
    int n_countries = 0;

    int input_dim() const { return 4 + d_emb; }  // lag features + country embedding
};

struct ModelParams {
    ModelConfig config;
    std::vector<GruLayerParams> encoder;
    std::vector<GruLayerParams> decoder;
    Matrix country_embeddings;  // n_countries x d_emb
    Matrix head_w;              // Q x hidden
    Matrix head_b;              // Q x 1

    /// All trainable matrices in declared (checkpoint) order.
    std::vector<Matrix*> flatten();
    std::vector<const Matrix*> flatten() const;
};

/// Seeded initialization: uniform(-k, k) with k = 1/sqrt(fan_in), zero biases.
ModelParams init_params(const ModelConfig& config, num::RngStream& rng);

/// Plain (non-tape) GRU cell step; reference path for tests.
Matrix gru_cell(const Matrix& x, const Matrix& h_prev, const GruLayerParams& layer);

/// Parameter handles for one forward pass on a tape.
struct TapeLayer {
    ad::Var W_xu, W_hu, b_u, W_xr, W_hr, b_r, W_xh, W_hh, b_h;
};

struct TapeModel {
    std::vector<TapeLayer> encoder;
    std::vector<TapeLayer> decoder;
    ad::Var embeddings, head_w, head_b;

    /// Handles in the same order as ModelParams::flatten(), for gradient reads.
    std::vector<ad::Var> param_vars() const;
};

/// Record every parameter as a tape input.
TapeModel stage(ad::Tape& tape, const ModelParams& params);

ad::Var gru_cell(ad::Tape& tape, const TapeLayer& layer, ad::Var x, ad::Var h_prev);

/// Run the encoder over an L_enc x 4 window; returns the final hidden state of
/// each layer.
std::vector<ad::Var> encode(ad::Tape& tape, const TapeModel& tm, const ModelConfig& config,
                            const Matrix& encoder_input, int country_id);

struct DecodeResult {
    std::vector<ad::Var> step_outputs;  // L_pred entries, each Q x 1
};

/// Autoregressive decode from the encoder state. Per step the scalar feedback
/// is the true target with probability tf_prob (one Bernoulli draw per step),
/// otherwise the previous step's median output; step 1 feeds the last observed
/// value. Lag features come from a rolling buffer of observed values and
/// fed-back scalars. targets must be present whenever tf_prob > 0.
DecodeResult decode(ad::Tape& tape, const TapeModel& tm, const ModelConfig& config,
                    std::vector<ad::Var> h_enc, const std::vector<double>& recent, int country_id,
                    const std::vector<double>* targets, double tf_prob, num::RngStream* rng);

/// Inference forward pass (tf_prob = 0): raw L_pred x Q quantile grid in
/// standardized space, before rearrangement.
Matrix forward_grid(const ModelParams& params, const transform::WindowSample& window);

/// Sort each step's quantile values ascending to repair crossings; idempotent.
Matrix rearrange_quantiles(const Matrix& grid);

/// Versioned checkpoint: config, parameters, scaler, country table.
struct Checkpoint {
    ModelParams params;
    transform::GlobalScaler scaler;
    std::map<std::string, int> country_index;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tfr::model
