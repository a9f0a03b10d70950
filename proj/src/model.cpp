#include "tfr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tfr::model {

namespace {

GruLayerParams init_layer(int input_dim, int hidden_dim, num::RngStream& rng) {
    GruLayerParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    auto uniform_mat = [&rng](int rows, int cols) {
        Matrix m(rows, cols);
        double k = 1.0 / std::sqrt(static_cast<double>(cols));
        for (double& x : m.data) x = rng.uniform(-k, k);
        return m;
    };
    p.W_xu = uniform_mat(hidden_dim, input_dim);
    p.W_hu = uniform_mat(hidden_dim, hidden_dim);
    p.b_u = Matrix(hidden_dim, 1);
    p.W_xr = uniform_mat(hidden_dim, input_dim);
    p.W_hr = uniform_mat(hidden_dim, hidden_dim);
    p.b_r = Matrix(hidden_dim, 1);
    p.W_xh = uniform_mat(hidden_dim, input_dim);
    p.W_hh = uniform_mat(hidden_dim, hidden_dim);
    p.b_h = Matrix(hidden_dim, 1);
    return p;
}

void flatten_layer(std::vector<Matrix*>& out, GruLayerParams& l) {
    out.insert(out.end(), {&l.W_xu, &l.W_hu, &l.b_u, &l.W_xr, &l.W_hr, &l.b_r, &l.W_xh, &l.W_hh, &l.b_h});
}

}  // namespace

std::vector<Matrix*> ModelParams::flatten() {
    std::vector<Matrix*> out;
    for (auto& l : encoder) flatten_layer(out, l);
    for (auto& l : decoder) flatten_layer(out, l);
    out.push_back(&country_embeddings);
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
}

std::vector<const Matrix*> ModelParams::flatten() const {
    auto mut = const_cast<ModelParams*>(this)->flatten();
    return {mut.begin(), mut.end()};
}

ModelParams init_params(const ModelConfig& config, num::RngStream& rng) {
    if (config.n_countries <= 0) throw std::invalid_argument("init_params: n_countries must be positive");
    ModelParams p;
    p.config = config;
    for (int l = 0; l < config.n_layers; ++l)
        p.encoder.push_back(init_layer(l == 0 ? config.input_dim() : config.hidden_dim, config.hidden_dim, rng));
    for (int l = 0; l < config.n_layers; ++l)
        p.decoder.push_back(init_layer(l == 0 ? config.input_dim() : config.hidden_dim, config.hidden_dim, rng));
    {
        Matrix e(config.n_countries, config.d_emb);
        double k = 1.0 / std::sqrt(static_cast<double>(config.d_emb));
        for (double& x : e.data) x = rng.uniform(-k, k);
        p.country_embeddings = std::move(e);
    }
    {
        Matrix w(static_cast<int>(kQuantiles.size()), config.hidden_dim);
        double k = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
        for (double& x : w.data) x = rng.uniform(-k, k);
        p.head_w = std::move(w);
        p.head_b = Matrix(static_cast<int>(kQuantiles.size()), 1);
    }
    return p;
}

Matrix gru_cell(const Matrix& x, const Matrix& h_prev, const GruLayerParams& layer) {
    using namespace num;
    Matrix u = sigmoid(add(add(matmul(layer.W_xu, x), matmul(layer.W_hu, h_prev)), layer.b_u));
    Matrix r = sigmoid(add(add(matmul(layer.W_xr, x), matmul(layer.W_hr, h_prev)), layer.b_r));
    Matrix hc = tanh(add(add(matmul(layer.W_xh, x), matmul(layer.W_hh, hadamard(r, h_prev))), layer.b_h));
    Matrix one_minus_u = u;
    for (double& e : one_minus_u.data) e = 1.0 - e;
    return add(hadamard(u, h_prev), hadamard(one_minus_u, hc));
}

std::vector<ad::Var> TapeModel::param_vars() const {
    std::vector<ad::Var> out;
    auto push_layer = [&out](const TapeLayer& l) {
        out.insert(out.end(), {l.W_xu, l.W_hu, l.b_u, l.W_xr, l.W_hr, l.b_r, l.W_xh, l.W_hh, l.b_h});
    };
    for (const auto& l : encoder) push_layer(l);
    for (const auto& l : decoder) push_layer(l);
    out.push_back(embeddings);
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
}

TapeModel stage(ad::Tape& tape, const ModelParams& params) {
    TapeModel tm;
    auto stage_layer = [&tape](const GruLayerParams& l) {
        TapeLayer tl;
        tl.W_xu = tape.input(l.W_xu);
        tl.W_hu = tape.input(l.W_hu);
        tl.b_u = tape.input(l.b_u);
        tl.W_xr = tape.input(l.W_xr);
        tl.W_hr = tape.input(l.W_hr);
        tl.b_r = tape.input(l.b_r);
        tl.W_xh = tape.input(l.W_xh);
        tl.W_hh = tape.input(l.W_hh);
        tl.b_h = tape.input(l.b_h);
        return tl;
    };
    for (const auto& l : params.encoder) tm.encoder.push_back(stage_layer(l));
    for (const auto& l : params.decoder) tm.decoder.push_back(stage_layer(l));
    tm.embeddings = tape.input(params.country_embeddings);
    tm.head_w = tape.input(params.head_w);
    tm.head_b = tape.input(params.head_b);
    return tm;
}

ad::Var gru_cell(ad::Tape& tape, const TapeLayer& layer, ad::Var x, ad::Var h_prev) {
    ad::Var u = tape.sigmoid(tape.add3(tape.matmul(layer.W_xu, x), tape.matmul(layer.W_hu, h_prev), layer.b_u));
    ad::Var r = tape.sigmoid(tape.add3(tape.matmul(layer.W_xr, x), tape.matmul(layer.W_hr, h_prev), layer.b_r));
    ad::Var hc = tape.tanh(
        tape.add3(tape.matmul(layer.W_xh, x), tape.matmul(layer.W_hh, tape.hadamard(r, h_prev)), layer.b_h));
    return tape.add(tape.hadamard(u, h_prev), tape.hadamard(tape.affine(u, -1.0, 1.0), hc));
}

static ad::Var gather_embedding(ad::Tape& tape, ad::Var embeddings, const ModelConfig& config, int country_id) {
    if (country_id < 0 || country_id >= config.n_countries)
        throw std::out_of_range("unknown country id " + std::to_string(country_id));
    return tape.row(embeddings, country_id);  // d_emb x 1
}

std::vector<ad::Var> encode(ad::Tape& tape, const TapeModel& tm, const ModelConfig& config,
                            const Matrix& encoder_input, int country_id) {
    num::require_shape(encoder_input.rows == config.l_enc && encoder_input.cols == 4, "encode window");
    ad::Var emb = gather_embedding(tape, tm.embeddings, config, country_id);
    std::vector<ad::Var> h;
    for (int l = 0; l < config.n_layers; ++l) h.push_back(tape.input(Matrix(config.hidden_dim, 1)));

    for (int j = 0; j < config.l_enc; ++j) {
        Matrix feats(4, 1);
        for (int c = 0; c < 4; ++c) feats(c, 0) = encoder_input(j, c);
        ad::Var x = tape.concat({tape.input(feats), emb});
        for (int l = 0; l < config.n_layers; ++l) {
            h[l] = gru_cell(tape, tm.encoder[l], x, h[l]);
            x = h[l];
        }
    }
    return h;
}

DecodeResult decode(ad::Tape& tape, const TapeModel& tm, const ModelConfig& config,
                    std::vector<ad::Var> h_enc, const std::vector<double>& recent, int country_id,
                    const std::vector<double>* targets, double tf_prob, num::RngStream* rng) {
    if (recent.size() != 7) throw std::invalid_argument("decode: recent buffer must hold 7 values");
    if (tf_prob > 0.0 && targets == nullptr)
        throw std::invalid_argument("decode: teacher targets required when tf_prob > 0");
    if (tf_prob > 0.0 && rng == nullptr)
        throw std::invalid_argument("decode: rng required when tf_prob > 0");

    ad::Var emb = gather_embedding(tape, tm.embeddings, config, country_id);

    // rolling buffer of scalar vars covering years t-6 .. t, extended per step
    std::vector<ad::Var> buffer;
    for (double v : recent) buffer.push_back(tape.input(Matrix(1, 1, v)));

    DecodeResult result;
    std::vector<ad::Var>& h = h_enc;
    ad::Var prev_median;
    for (int k = 1; k <= config.l_pred; ++k) {
        ad::Var feedback;
        if (k == 1) {
            feedback = buffer.back();  // last observed value
        } else {
            bool teach = tf_prob > 0.0 && rng->bernoulli(tf_prob);
            feedback = teach ? tape.input(Matrix(1, 1, (*targets)[k - 2])) : prev_median;
            buffer.push_back(feedback);
        }
        // lag features at years (t+k-1) - {2,4,6}; buffer index 0 is year t-6
        ad::Var lag2 = buffer[k + 3];
        ad::Var lag4 = buffer[k + 1];
        ad::Var lag6 = buffer[k - 1];
        ad::Var x = tape.concat({feedback, lag2, lag4, lag6, emb});
        for (int l = 0; l < config.n_layers; ++l) {
            h[l] = gru_cell(tape, tm.decoder[l], x, h[l]);
            x = h[l];
        }
        ad::Var out = tape.add(tape.matmul(tm.head_w, h.back()), tm.head_b);
        prev_median = tape.element(out, kMedianIndex);
        result.step_outputs.push_back(out);
    }
    return result;
}

Matrix forward_grid(const ModelParams& params, const transform::WindowSample& window) {
    ad::Tape tape;
    TapeModel tm = stage(tape, params);
    auto h = encode(tape, tm, params.config, window.encoder_input, window.country_id);
    DecodeResult dec = decode(tape, tm, params.config, std::move(h), window.recent, window.country_id,
                              nullptr, 0.0, nullptr);
    Matrix grid(params.config.l_pred, static_cast<int>(kQuantiles.size()));
    for (int k = 0; k < params.config.l_pred; ++k) {
        const Matrix& out = tape.value(dec.step_outputs[k]);
        for (int q = 0; q < grid.cols; ++q) grid(k, q) = out(q, 0);
    }
    return grid;
}

Matrix rearrange_quantiles(const Matrix& grid) {
    Matrix out = grid;
    std::vector<double> row(grid.cols);
    for (int i = 0; i < grid.rows; ++i) {
        for (int j = 0; j < grid.cols; ++j) row[j] = grid(i, j);
        std::sort(row.begin(), row.end());
        for (int j = 0; j < grid.cols; ++j) out(i, j) = row[j];
    }
    return out;
}

namespace {

constexpr char kCkptMagic[8] = {'T', 'F', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::int32_t kCkptVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void get(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("truncated checkpoint");
}

void put_matrix(std::ofstream& out, const Matrix& m) {
    put(out, static_cast<std::int32_t>(m.rows));
    put(out, static_cast<std::int32_t>(m.cols));
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix get_matrix(std::ifstream& in) {
    std::int32_t r, c;
    get(in, r);
    get(in, c);
    Matrix m(r, c);
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint matrix");
    return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    put(out, kCkptVersion);
    const ModelConfig& c = ckpt.params.config;
    put(out, static_cast<std::int32_t>(c.l_enc));
    put(out, static_cast<std::int32_t>(c.l_pred));
    put(out, static_cast<std::int32_t>(c.hidden_dim));
    put(out, static_cast<std::int32_t>(c.n_layers));
    put(out, static_cast<std::int32_t>(c.d_emb));
    put(out, static_cast<std::int32_t>(c.n_countries));
    put(out, static_cast<std::int32_t>(kQuantiles.size()));
    for (double q : kQuantiles) put(out, q);
    put(out, ckpt.scaler.mu);
    put(out, ckpt.scaler.sigma);
    put(out, static_cast<std::int32_t>(ckpt.country_index.size()));
    for (const auto& [code, idx] : ckpt.country_index) {
        put(out, static_cast<std::int32_t>(code.size()));
        out.write(code.data(), static_cast<std::streamsize>(code.size()));
        put(out, static_cast<std::int32_t>(idx));
    }
    for (const Matrix* m : ckpt.params.flatten()) put_matrix(out, *m);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    std::int32_t version;
    get(in, version);
    if (version != kCkptVersion) throw std::runtime_error("unsupported checkpoint version");

    Checkpoint ckpt;
    ModelConfig c;
    std::int32_t v;
    get(in, v); c.l_enc = v;
    get(in, v); c.l_pred = v;
    get(in, v); c.hidden_dim = v;
    get(in, v); c.n_layers = v;
    get(in, v); c.d_emb = v;
    get(in, v); c.n_countries = v;
    std::int32_t nq;
    get(in, nq);
    if (nq != static_cast<std::int32_t>(kQuantiles.size()))
        throw std::runtime_error("checkpoint quantile count mismatch");
    for (int i = 0; i < nq; ++i) {
        double q;
        get(in, q);
        if (std::abs(q - kQuantiles[i]) > 1e-12) throw std::runtime_error("checkpoint quantile level mismatch");
    }
    get(in, ckpt.scaler.mu);
    get(in, ckpt.scaler.sigma);
    ckpt.scaler.fitted = true;
    std::int32_t n_countries;
    get(in, n_countries);
    for (int i = 0; i < n_countries; ++i) {
        std::int32_t len;
        get(in, len);
        std::string code(static_cast<std::size_t>(len), '\0');
        in.read(code.data(), len);
        std::int32_t idx;
        get(in, idx);
        ckpt.country_index[code] = idx;
    }

    ckpt.params.config = c;
    ckpt.params.encoder.resize(c.n_layers);
    ckpt.params.decoder.resize(c.n_layers);
    for (int l = 0; l < c.n_layers; ++l) {
        ckpt.params.encoder[l].input_dim = l == 0 ? c.input_dim() : c.hidden_dim;
        ckpt.params.encoder[l].hidden_dim = c.hidden_dim;
        ckpt.params.decoder[l].input_dim = l == 0 ? c.input_dim() : c.hidden_dim;
        ckpt.params.decoder[l].hidden_dim = c.hidden_dim;
    }
    for (Matrix* m : ckpt.params.flatten()) *m = get_matrix(in);
    return ckpt;
}

}  // namespace tfr::model
