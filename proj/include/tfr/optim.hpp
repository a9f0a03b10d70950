#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tfr/matrix.hpp"
#include "tfr/rng.hpp"

namespace tfr::num {

/// Adam accumulator state over a flat list of parameter matrices.
struct AdamState {
    std::vector<Matrix> m;  // first moments, shapes match params
    std::vector<Matrix> v;  // second moments
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    void init(const std::vector<Matrix>& params) {
        m.clear();
        v.clear();
        for (const Matrix& p : params) {
            m.emplace_back(p.rows, p.cols);
            v.emplace_back(p.rows, p.cols);
        }
        step = 0;
    }
};

/// One Adam update with bias correction. Weight decay is coupled into the
/// gradient as lambda*theta before the moment updates (classic L2).
void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state, double lr);

/// Step decay schedule: lr = base * gamma^floor(epoch / step_size).
double step_lr(int epoch, double base_lr, int step_size, double gamma);

/// Gradient-check report for one sampled coordinate.
struct GradCheckEntry {
    int param = 0;
    int index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    int n_checked = 0;
    std::vector<GradCheckEntry> failures;  // entries exceeding tolerance
    bool ok() const { return failures.empty(); }
};

/// Compare analytic gradients with central finite differences on a random
/// sample of parameter coordinates. `loss` must be deterministic in params;
/// `analytic_grads` returns d loss / d params at the given point.
GradCheckReport grad_check(const std::function<double(const std::vector<Matrix>&)>& loss,
                           const std::function<std::vector<Matrix>(const std::vector<Matrix>&)>& analytic_grads,
                           std::vector<Matrix> params, double tolerance, int n_samples, RngStream& rng,
                           double fd_step = 1e-5);

}  // namespace tfr::num
