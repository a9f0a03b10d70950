#include "tfr/optim.hpp"

#include <algorithm>

namespace tfr::num {

void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state, double lr) {
    require_shape(params.size() == grads.size() && params.size() == state.m.size(), "adam_step");
    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        require_shape(params[p].same_shape(grads[p]), "adam_step param/grad");
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            double g = grads[p].data[i] + state.weight_decay * params[p].data[i];
            double& m = state.m[p].data[i];
            double& v = state.v[p].data[i];
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            double mhat = m / bc1;
            double vhat = v / bc2;
            params[p].data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double step_lr(int epoch, double base_lr, int step_size, double gamma) {
    if (step_size < 1) throw std::invalid_argument("step_lr: step_size must be >= 1");
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("step_lr: gamma must be in (0, 1]");
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
}

GradCheckReport grad_check(const std::function<double(const std::vector<Matrix>&)>& loss,
                           const std::function<std::vector<Matrix>(const std::vector<Matrix>&)>& analytic_grads,
                           std::vector<Matrix> params, double tolerance, int n_samples, RngStream& rng,
                           double fd_step) {
    GradCheckReport report;
    std::vector<Matrix> grads = analytic_grads(params);

    std::size_t total = 0;
    for (const Matrix& p : params) total += p.size();
    if (total == 0) return report;

    for (int s = 0; s < n_samples; ++s) {
        std::size_t flat = rng.uniform_int(total);
        int pi = 0;
        while (flat >= params[pi].size()) {
            flat -= params[pi].size();
            ++pi;
        }
        double saved = params[pi].data[flat];
        params[pi].data[flat] = saved + fd_step;
        double lp = loss(params);
        params[pi].data[flat] = saved - fd_step;
        double lm = loss(params);
        params[pi].data[flat] = saved;

        double numeric = (lp - lm) / (2.0 * fd_step);
        double analytic = grads[pi].data[flat];
        double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ++report.n_checked;
        if (rel >= tolerance)
            report.failures.push_back({pi, static_cast<int>(flat), analytic, numeric, rel});
    }
    return report;
}

}  // namespace tfr::num
