#include "siftlab/powerlaw.hpp"

#include "siftlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace siftlab {
namespace {

void check_range(const QuantileSeries& series, StepRange range, const char* who) {
    if (range.first < 1 || range.last < range.first) {
        throw InvalidInput(std::string(who) + ": empty or zero-based step range");
    }
    if (range.last > series.size()) {
        throw InvalidInput(std::string(who) + ": range ends at step " + std::to_string(range.last) +
                           " but the series has " + std::to_string(series.size()) + " steps");
    }
    if (range.length() < 2) {
        throw InvalidInput(std::string(who) + ": need at least 2 points");
    }
}

double log_value(double v, std::size_t& clamped) {
    if (!(v > kLogFloor)) {
        ++clamped;
        return std::log(kLogFloor);
    }
    return std::log(v);
}

}  // namespace

PowerLawFit fit_power_law(const QuantileSeries& series, StepRange window) {
    check_range(series, window, "fit_power_law");

    const auto n = static_cast<double>(window.length());
    PowerLawFit fit;
    fit.window = window;

    double mean_x = 0.0;
    double mean_y = 0.0;
    std::vector<double> ys;
    ys.reserve(window.length());
    for (std::size_t i = window.first; i <= window.last; ++i) {
        const double y = log_value(series.at_step(i), fit.clamped_points);
        ys.push_back(y);
        mean_x += std::log(static_cast<double>(i));
        mean_y += y;
    }
    mean_x /= n;
    mean_y /= n;

    // Centered sums keep the slope exact on noiseless power laws.
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = window.first; i <= window.last; ++i) {
        const double dx = std::log(static_cast<double>(i)) - mean_x;
        sxx += dx * dx;
        sxy += dx * (ys[i - window.first] - mean_y);
    }
    const double slope = sxy / sxx;
    fit.beta = -slope;
    fit.alpha = std::exp(mean_y - slope * mean_x);
    fit.degenerate = fit.clamped_points == window.length();
    return fit;
}

double predict_quantile(const PowerLawFit& fit, std::size_t step) {
    if (step == 0) {
        throw InvalidInput("predict_quantile: steps are 1-based");
    }
    return fit.alpha * std::pow(static_cast<double>(step), -fit.beta);
}

FitQuality r_squared(const QuantileSeries& series, const PowerLawFit& fit, StepRange eval_range) {
    check_range(series, eval_range, "r_squared");

    std::size_t clamped = 0;
    std::vector<double> ys;
    ys.reserve(eval_range.length());
    double mean = 0.0;
    for (std::size_t i = eval_range.first; i <= eval_range.last; ++i) {
        ys.push_back(log_value(series.at_step(i), clamped));
        mean += ys.back();
    }
    mean /= static_cast<double>(ys.size());

    const double log_alpha = std::log(fit.alpha);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = eval_range.first; i <= eval_range.last; ++i) {
        const double y = ys[i - eval_range.first];
        const double predicted = log_alpha - fit.beta * std::log(static_cast<double>(i));
        ss_res += (y - predicted) * (y - predicted);
        ss_tot += (y - mean) * (y - mean);
    }
    if (!(ss_tot > 1e-24 * static_cast<double>(ys.size()))) {
        throw DegenerateVariance("r_squared: log-quantiles are constant over steps " +
                                 std::to_string(eval_range.first) + ".." + std::to_string(eval_range.last));
    }
    return FitQuality{1.0 - ss_res / ss_tot, eval_range, ys.size()};
}

FitQuality evaluate_warmup_fit(const QuantileSeries& series, std::size_t warmup) {
    if (warmup < 2 || series.size() <= warmup) {
        throw InvalidInput("evaluate_warmup_fit: need series length > w >= 2 (w = " + std::to_string(warmup) +
                           ", length = " + std::to_string(series.size()) + ")");
    }
    const PowerLawFit fit = fit_power_law(series, {1, warmup});
    return r_squared(series, fit, {1, series.size()});
}

}  // namespace siftlab
