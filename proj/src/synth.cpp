#include "siftlab/synth.hpp"

#include "siftlab/core_math.hpp"
#include "siftlab/error.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace siftlab {

void SynthParams::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw InvalidInput("SynthParams: alpha must be positive and finite");
    }
    if (!std::isfinite(beta)) {
        throw InvalidInput("SynthParams: beta must be finite");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw InvalidInput("SynthParams: noise_sigma must be >= 0");
    }
    if (steps < 1) {
        throw InvalidInput("SynthParams: steps must be at least 1");
    }
    if (!(concentration > 0.0) || !std::isfinite(concentration)) {
        throw InvalidInput("SynthParams: concentration must be positive");
    }
}

QuantileSeries generate_powerlaw_series(const SynthParams& params, double tau) {
    params.validate();
    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    QuantileSeries series;
    series.tau = tau;
    series.values.reserve(params.steps);
    for (std::size_t i = 1; i <= params.steps; ++i) {
        const double trend = params.alpha * std::pow(static_cast<double>(i), -params.beta);
        if (params.noise_sigma == 0.0) {
            series.values.push_back(trend);
        } else {
            series.values.push_back(trend * std::exp(params.noise_sigma * noise(rng)));
        }
    }
    return series;
}

std::vector<ScoreRow> generate_score_rows(const SynthParams& params) {
    params.validate();
    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> normal(0.0, params.concentration);
    std::vector<ScoreRow> rows;
    rows.reserve(params.steps);
    for (std::size_t i = 1; i <= params.steps; ++i) {
        Eigen::VectorXd logits(static_cast<Index>(i));
        for (Index j = 0; j < logits.size(); ++j) {
            logits(j) = normal(rng);
        }
        rows.push_back(softmax(logits));
    }
    return rows;
}

AttentionTrace generate_score_trace(const SynthParams& params) {
    return make_score_trace(generate_score_rows(params), "synthetic", "gaussian-logits");
}

void MatchedRowParams::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
        throw InvalidInput("MatchedRowParams: need alpha > 0 and finite beta");
    }
    if (!(tau >= 0.0 && tau < 1.0)) {
        throw InvalidInput("MatchedRowParams: tau must lie in [0, 1)");
    }
    if (steps < 1) {
        throw InvalidInput("MatchedRowParams: steps must be at least 1");
    }
    if (!(concentration > 0.0)) {
        throw InvalidInput("MatchedRowParams: concentration must be positive");
    }
}

namespace {

// The family v(a) = a * base + (1 - a) * uniform keeps sum(v) = 1 and the sort
// order of `base`, so its tau-quantile moves affinely from 1/n (a = 0) through
// q(base) (a = 1). Larger a are allowed while every entry stays positive.
struct Mix {
    double a = 0.0;
    bool exact = false;
};

Mix solve_mix(const ScoreRow& base, double base_q, double target) {
    const double n = static_cast<double>(base.size());
    const double u = 1.0 / n;
    if (target == u) {
        return {0.0, true};
    }
    // Entries stay positive while a < 1 / (1 - n * min(base)).
    const double floor_term = 1.0 - n * base.minCoeff();
    const double a_max = floor_term > 0.0 ? 0.999 / floor_term : std::numeric_limits<double>::infinity();
    const double slope = base_q - u;
    if (slope == 0.0 || (target - u) / slope <= 0.0) {
        return {0.0, false};
    }
    const double a = (target - u) / slope;
    if (a <= 1.0 || a <= a_max) {
        return {a, true};
    }
    return {a_max, false};
}

}  // namespace

MatchedRows generate_quantile_matched_rows(const MatchedRowParams& params) {
    params.validate();
    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    MatchedRows out;
    out.rows.reserve(params.steps);
    out.target_quantiles.reserve(params.steps);
    for (std::size_t step = 1; step <= params.steps; ++step) {
        const double target = params.alpha * std::pow(static_cast<double>(step), -params.beta);
        out.target_quantiles.push_back(target);
        const auto n = static_cast<Index>(step);

        Eigen::VectorXd z(n);
        for (Index j = 0; j < n; ++j) {
            z(j) = normal(rng);
        }
        if (step == 1) {
            out.rows.push_back(Eigen::VectorXd::Ones(1));
            if (target != 1.0) {
                out.off_target_steps.push_back(step);
            }
            continue;
        }

        // Sharpen the base row until the mix can reach a target below 1/n.
        double concentration = params.concentration;
        ScoreRow base = softmax(concentration * z);
        double base_q = quantile(base, params.tau);
        for (int attempt = 0; attempt < 16 && target < 1.0 / static_cast<double>(n) && base_q > target; ++attempt) {
            concentration *= 1.5;
            base = softmax(concentration * z);
            base_q = quantile(base, params.tau);
        }
        const Mix mix = solve_mix(base, base_q, target);
        ScoreRow row = (mix.a * base.array() + (1.0 - mix.a) / static_cast<double>(n)).matrix();
        out.rows.push_back(std::move(row));
        if (!mix.exact) {
            out.off_target_steps.push_back(step);
        }
    }
    return out;
}

AttentionTrace make_score_trace(const std::vector<ScoreRow>& rows, std::string model_name, std::string dataset) {
    AttentionTrace trace;
    trace.header.model_name = std::move(model_name);
    trace.header.dataset = std::move(dataset);
    trace.header.num_steps = rows.size();
    trace.header.record_kind = RecordKind::kFullScores;
    trace.records.reserve(rows.size());
    for (const auto& row : rows) {
        const Eigen::VectorXf narrowed = row.cast<float>();
        trace.records.emplace_back(narrowed.data(), narrowed.data() + narrowed.size());
    }
    return trace;
}

AttentionTrace make_quantile_trace(const QuantileSeries& series, std::string model_name, std::string dataset,
                                   std::size_t* clamped) {
    AttentionTrace trace;
    trace.header.model_name = std::move(model_name);
    trace.header.dataset = std::move(dataset);
    trace.header.num_steps = series.size();
    trace.header.record_kind = RecordKind::kQuantiles;
    trace.header.quantile_levels = {series.tau};
    trace.records.reserve(series.size());
    std::size_t n_clamped = 0;
    for (double v : series.values) {
        if (v > 1.0) {
            v = 1.0;
            ++n_clamped;
        }
        trace.records.push_back({static_cast<float>(v)});
    }
    if (clamped != nullptr) {
        *clamped = n_clamped;
    }
    return trace;
}

}  // namespace siftlab
