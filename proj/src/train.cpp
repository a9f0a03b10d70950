#include "tfr/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tfr/csv.hpp"
#include "tfr/optim.hpp"

namespace tfr::train {

using num::Matrix;

TrainConfig read_config(const std::string& path) {
    TrainConfig c;
    for (const std::string& line : csv::read_lines(path)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad config line: " + line);
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        if (key == "lr") c.lr = std::stod(val);
        else if (key == "hidden_dim") c.hidden_dim = std::stoi(val);
        else if (key == "n_layers") c.n_layers = std::stoi(val);
        else if (key == "batch_size") c.batch_size = std::stoi(val);
        else if (key == "weight_decay") c.weight_decay = std::stod(val);
        else if (key == "max_epochs") c.max_epochs = std::stoi(val);
        else if (key == "patience") c.patience = std::stoi(val);
        else if (key == "lr_step_size") c.lr_step_size = std::stoi(val);
        else if (key == "lr_gamma") c.lr_gamma = std::stod(val);
        else if (key == "e_decay") c.e_decay = std::stoi(val);
        else if (key == "seed") c.seed = std::stoull(val);
        else if (key == "l_enc") c.l_enc = std::stoi(val);
        else if (key == "l_pred") c.l_pred = std::stoi(val);
        else if (key == "d_emb") c.d_emb = std::stoi(val);
        else if (key == "sigma_noise") c.sigma_noise = std::stod(val);
        else if (key == "cutoff_year") c.cutoff_year = std::stoi(val);
        else if (key == "validation_origin_years") c.validation_origin_years = std::stoi(val);
        else throw std::runtime_error("unknown config key: " + key);
    }
    if (c.patience < 1) throw std::runtime_error("config: patience must be >= 1");
    if (c.batch_size < 1) throw std::runtime_error("config: batch_size must be >= 1");
    return c;
}

void write_config(const TrainConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "lr=" << csv::fmt(c.lr) << '\n'
        << "hidden_dim=" << c.hidden_dim << '\n'
        << "n_layers=" << c.n_layers << '\n'
        << "batch_size=" << c.batch_size << '\n'
        << "weight_decay=" << csv::fmt(c.weight_decay) << '\n'
        << "max_epochs=" << c.max_epochs << '\n'
        << "patience=" << c.patience << '\n'
        << "lr_step_size=" << c.lr_step_size << '\n'
        << "lr_gamma=" << csv::fmt(c.lr_gamma) << '\n'
        << "e_decay=" << c.e_decay << '\n'
        << "seed=" << c.seed << '\n'
        << "l_enc=" << c.l_enc << '\n'
        << "l_pred=" << c.l_pred << '\n'
        << "d_emb=" << c.d_emb << '\n'
        << "sigma_noise=" << csv::fmt(c.sigma_noise) << '\n'
        << "cutoff_year=" << c.cutoff_year << '\n'
        << "validation_origin_years=" << c.validation_origin_years << '\n';
}

double pinball(double y, double yhat, double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("pinball: tau must be in (0, 1)");
    double d = y - yhat;
    return std::max(tau * d, (tau - 1.0) * d);
}

double total_loss(const std::vector<double>& targets, const Matrix& grid) {
    num::require_shape(grid.rows == static_cast<int>(targets.size()) &&
                           grid.cols == static_cast<int>(model::kQuantiles.size()),
                       "total_loss grid");
    double loss = 0.0;
    for (int k = 0; k < grid.rows; ++k)
        for (int q = 0; q < grid.cols; ++q) loss += pinball(targets[k], grid(k, q), model::kQuantiles[q]);
    return loss;
}

ad::Var total_loss(ad::Tape& tape, const model::DecodeResult& dec, const std::vector<double>& targets) {
    std::vector<ad::Var> terms;
    for (std::size_t k = 0; k < dec.step_outputs.size(); ++k)
        for (std::size_t q = 0; q < model::kQuantiles.size(); ++q)
            terms.push_back(tape.pinball(targets[k], tape.element(dec.step_outputs[k], static_cast<int>(q)),
                                         model::kQuantiles[q]));
    return tape.add_many(terms);
}

namespace {

double evaluate_loss(const model::ModelParams& params, const transform::WindowSet& set) {
    if (set.windows.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& w : set.windows) sum += total_loss(w.target, model::forward_grid(params, w));
    return sum / static_cast<double>(set.windows.size());
}

}  // namespace

TrainResult train_model(const TrainConfig& config, int n_countries, const transform::WindowSet& train_set,
                        const transform::WindowSet& val_set) {
    if (train_set.windows.empty()) throw std::runtime_error("train_model: empty training set");

    model::ModelConfig mc;
    mc.l_enc = train_set.l_enc;
    mc.l_pred = train_set.l_pred;
    mc.hidden_dim = config.hidden_dim;
    mc.n_layers = config.n_layers;
    mc.d_emb = config.d_emb;
    mc.n_countries = n_countries;

    num::RngStream root(config.seed);
    num::RngStream init_rng = root.split("init");
    num::RngStream shuffle_rng = root.split("shuffle");
    num::RngStream teacher_rng = root.split("teacher");

    model::ModelParams params = model::init_params(mc, init_rng);
    num::AdamState adam;
    adam.weight_decay = config.weight_decay;
    {
        std::vector<Matrix*> ps = params.flatten();
        std::vector<Matrix> shapes;
        for (Matrix* p : ps) shapes.push_back(*p);
        adam.init(shapes);
    }

    TrainResult result;
    model::ModelParams best = params;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int stale = 0;
    const bool have_val = !val_set.windows.empty();

    std::vector<std::size_t> order(train_set.windows.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        double lr = num::step_lr(epoch, config.lr, config.lr_step_size, config.lr_gamma);
        double tf_prob =
            config.e_decay > 0 ? std::max(0.0, 1.0 - static_cast<double>(epoch) / config.e_decay) : 0.0;

        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t at = 0;
        while (at < order.size()) {
            std::size_t n = std::min<std::size_t>(config.batch_size, order.size() - at);
            ad::Tape tape;
            model::TapeModel tm = model::stage(tape, params);
            std::vector<ad::Var> losses;
            for (std::size_t b = 0; b < n; ++b) {
                const transform::WindowSample& w = train_set.windows[order[at + b]];
                auto h = model::encode(tape, tm, mc, w.encoder_input, w.country_id);
                auto dec = model::decode(tape, tm, mc, std::move(h), w.recent, w.country_id, &w.target,
                                         tf_prob, &teacher_rng);
                losses.push_back(total_loss(tape, dec, w.target));
            }
            ad::Var batch_loss = tape.affine(tape.add_many(losses), 1.0 / static_cast<double>(n), 0.0);
            double lv = tape.value(batch_loss)(0, 0);
            if (!std::isfinite(lv))
                throw std::runtime_error("train_model: divergence (non-finite loss) at epoch " +
                                         std::to_string(epoch));
            epoch_loss += lv * static_cast<double>(n);
            tape.backward(batch_loss);

            std::vector<Matrix> grads;
            for (ad::Var v : tm.param_vars()) grads.push_back(tape.grad(v));
            std::vector<Matrix*> ps = params.flatten();
            std::vector<Matrix> values;
            for (Matrix* p : ps) values.push_back(std::move(*p));
            num::adam_step(values, grads, adam, lr);
            for (std::size_t i = 0; i < ps.size(); ++i) *ps[i] = std::move(values[i]);
            at += n;
        }
        epoch_loss /= static_cast<double>(order.size());

        double val_loss = have_val ? evaluate_loss(params, val_set) : epoch_loss;
        if (!std::isfinite(val_loss))
            throw std::runtime_error("train_model: divergence (non-finite validation loss)");
        result.history.push_back({epoch, epoch_loss, val_loss, lr, tf_prob});

        if (val_loss < best_val) {
            best_val = val_loss;
            best = params;
            best_epoch = epoch;
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
    }

    result.params = std::move(best);
    result.best_epoch = best_epoch;
    result.best_val = best_val;
    return result;
}

void write_history(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,train_loss,val_loss,lr,tf_prob\n";
    for (const EpochRecord& r : history)
        out << r.epoch << ',' << csv::fmt(r.train_loss) << ',' << csv::fmt(r.val_loss) << ','
            << csv::fmt(r.lr) << ',' << csv::fmt(r.tf_prob) << '\n';
}

std::vector<TrainConfig> member_configs(const TrainConfig& base, int n_members) {
    static const double kLrMult[] = {1.0, 0.8, 1.25};
    static const int kHiddenOff[] = {0, 8, -8};
    std::vector<TrainConfig> out;
    for (int i = 0; i < n_members; ++i) {
        TrainConfig c = base;
        c.seed = base.seed + static_cast<std::uint64_t>(i);
        c.lr = base.lr * kLrMult[i % 3];
        c.hidden_dim = std::max(4, base.hidden_dim + kHiddenOff[i % 3]);
        out.push_back(c);
    }
    return out;
}

EnsembleSpec train_ensemble(const TrainConfig& base, int n_countries, const transform::WindowSet& train_set,
                            const transform::WindowSet& val_set, const transform::GlobalScaler& scaler,
                            const std::map<std::string, int>& country_index, int n_members) {
    EnsembleSpec spec;
    spec.configs = member_configs(base, n_members);
    for (int i = 0; i < n_members; ++i) {
        try {
            TrainResult r = train_model(spec.configs[i], n_countries, train_set, val_set);
            spec.histories.push_back(std::move(r.history));
            model::Checkpoint ckpt;
            ckpt.params = std::move(r.params);
            ckpt.scaler = scaler;
            ckpt.country_index = country_index;
            spec.members.push_back(std::move(ckpt));
        } catch (const std::exception& e) {
            throw std::runtime_error("ensemble member " + std::to_string(i) + " failed: " + e.what());
        }
    }
    return spec;
}

num::Matrix ensemble_forecast(const std::vector<model::Checkpoint>& members,
                              const transform::WindowSample& window) {
    if (members.empty()) throw std::invalid_argument("ensemble_forecast: no members");
    std::vector<Matrix> grids;
    for (const auto& m : members) grids.push_back(model::forward_grid(m.params, window));

    Matrix out(grids[0].rows, grids[0].cols);
    std::vector<double> cell(members.size());
    for (int i = 0; i < out.rows; ++i) {
        for (int j = 0; j < out.cols; ++j) {
            for (std::size_t m = 0; m < members.size(); ++m) cell[m] = grids[m](i, j);
            std::sort(cell.begin(), cell.end());
            std::size_t n = cell.size();
            out(i, j) = n % 2 == 1 ? cell[n / 2] : 0.5 * (cell[n / 2 - 1] + cell[n / 2]);
        }
    }
    return model::rearrange_quantiles(out);
}

TrainConfig random_search(const SearchSpace& space, int budget, std::uint64_t seed, const TrainConfig& base,
                          int n_countries, const transform::WindowSet& train_set,
                          const transform::WindowSet& val_set, std::vector<SearchTrial>* trials_out) {
    if (budget < 1) throw std::invalid_argument("random_search: budget must be >= 1");
    num::RngStream rng(seed);
    TrainConfig best_config = base;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int t = 0; t < budget; ++t) {
        TrainConfig c = base;
        c.lr = std::exp(rng.uniform(std::log(space.lr_min), std::log(space.lr_max)));
        c.hidden_dim = space.hidden[rng.uniform_int(space.hidden.size())];
        c.n_layers = space.layers[rng.uniform_int(space.layers.size())];
        c.batch_size = space.batch[rng.uniform_int(space.batch.size())];
        c.seed = seed + static_cast<std::uint64_t>(t) + 1;
        TrainResult r = train_model(c, n_countries, train_set, val_set);
        if (trials_out) trials_out->push_back({c, r.best_val});
        if (r.best_val < best_loss) {  // strict: ties keep the earlier trial
            best_loss = r.best_val;
            best_config = c;
        }
    }
    return best_config;
}

num::GradCheckReport gradcheck_tiny(int n_samples, double tolerance, std::uint64_t seed) {
    model::ModelConfig mc;
    mc.l_enc = 6;
    mc.l_pred = 3;
    mc.hidden_dim = 8;
    mc.n_layers = 2;
    mc.d_emb = 2;
    mc.n_countries = 3;

    num::RngStream rng(seed);
    model::ModelParams base = model::init_params(mc, rng);

    // fixed random windows, one per country
    std::vector<transform::WindowSample> windows;
    for (int c = 0; c < mc.n_countries; ++c) {
        transform::WindowSample w;
        w.country_id = c;
        w.encoder_input = Matrix(mc.l_enc, 4);
        for (double& x : w.encoder_input.data) x = rng.uniform(-1.5, 1.5);
        for (int k = 0; k < mc.l_pred; ++k) w.target.push_back(rng.uniform(-1.5, 1.5));
        for (int i = 0; i < 7; ++i) w.recent.push_back(rng.uniform(-1.5, 1.5));
        windows.push_back(std::move(w));
    }

    const double tf_prob = 0.5;
    auto assign = [&base](const std::vector<Matrix>& values) {
        model::ModelParams p = base;
        std::vector<Matrix*> slots = p.flatten();
        for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = values[i];
        return p;
    };

    auto loss_fn = [&](const std::vector<Matrix>& values) {
        model::ModelParams p = assign(values);
        // fresh teacher rng per call keeps the Bernoulli draws identical
        num::RngStream teacher(seed ^ 0xFEEDULL);
        double total = 0.0;
        for (const auto& w : windows) {
            ad::Tape tape;
            model::TapeModel tm = model::stage(tape, p);
            auto h = model::encode(tape, tm, mc, w.encoder_input, w.country_id);
            auto dec = model::decode(tape, tm, mc, std::move(h), w.recent, w.country_id, &w.target, tf_prob,
                                     &teacher);
            total += tape.value(total_loss(tape, dec, w.target))(0, 0);
        }
        return total;
    };

    auto grads_fn = [&](const std::vector<Matrix>& values) {
        model::ModelParams p = assign(values);
        std::vector<Matrix> grads;
        num::RngStream teacher(seed ^ 0xFEEDULL);
        ad::Tape tape;
        model::TapeModel tm = model::stage(tape, p);
        std::vector<ad::Var> losses;
        for (const auto& w : windows) {
            auto h = model::encode(tape, tm, mc, w.encoder_input, w.country_id);
            auto dec = model::decode(tape, tm, mc, std::move(h), w.recent, w.country_id, &w.target, tf_prob,
                                     &teacher);
            losses.push_back(total_loss(tape, dec, w.target));
        }
        tape.backward(tape.add_many(losses));
        for (ad::Var v : tm.param_vars()) grads.push_back(tape.grad(v));
        return grads;
    };

    std::vector<Matrix> values;
    for (const Matrix* m : static_cast<const model::ModelParams&>(base).flatten()) values.push_back(*m);
    num::RngStream coord_rng(seed ^ 0xC0FFEEULL);
    return num::grad_check(loss_fn, grads_fn, std::move(values), tolerance, n_samples, coord_rng);
}

}  // namespace tfr::train
