#pragma once

#include <cstddef>
#include <vector>

namespace siftlab {

/// Inclusive range of 1-based decode steps.
struct StepRange {
    std::size_t first = 1;
    std::size_t last = 1;

    std::size_t length() const noexcept { return last >= first ? last - first + 1 : 0; }
};

/// Per-step tau-quantiles of the attention scores. values[0] is step 1.
struct QuantileSeries {
    double tau = 0.5;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    double at_step(std::size_t step) const { return values.at(step - 1); }
};

/// theta(i) ~= alpha * i^(-beta), fitted by OLS in log-log space.
struct PowerLawFit {
    double alpha = 1.0;
    double beta = 0.0;
    StepRange window;
    std::size_t clamped_points = 0;  // values floored to kLogFloor before the log
    bool degenerate = false;         // every windowed value sat at the floor
};

struct FitQuality {
    double r2 = 0.0;
    StepRange eval_range;
    std::size_t n_points = 0;
};

/// Non-positive quantiles (float underflow) are raised to this before taking logs.
inline constexpr double kLogFloor = 1e-12;

PowerLawFit fit_power_law(const QuantileSeries& series, StepRange window);

/// eta_S = alpha * S^(-beta)
double predict_quantile(const PowerLawFit& fit, std::size_t step);

/// Coefficient of determination in log space over `eval_range`. Negative when
/// the fit does worse than the mean of the observed log-quantiles.
FitQuality r_squared(const QuantileSeries& series, const PowerLawFit& fit, StepRange eval_range);

/// Fit on steps 1..w, score on the full series.
FitQuality evaluate_warmup_fit(const QuantileSeries& series, std::size_t warmup);

}  // namespace siftlab
