#include "tfr/baselines.hpp"

#include <algorithm>
#include <stdexcept>

namespace tfr::baselines {

std::vector<double> naive_drift(const std::vector<double>& series, int horizon) {
    if (series.size() < 2) throw std::invalid_argument("naive_drift: need >= 2 observations");
    if (horizon < 0) throw std::invalid_argument("naive_drift: negative horizon");
    double last = series.back();
    double drift = (last - series.front()) / static_cast<double>(series.size() - 1);
    std::vector<double> out;
    out.reserve(horizon);
    for (int h = 1; h <= horizon; ++h)
        out.push_back(std::max(kTfrFloor, last + static_cast<double>(h) * drift));
    return out;
}

}  // namespace tfr::baselines
