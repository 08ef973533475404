#pragma once

#include "siftlab/powerlaw.hpp"
#include "siftlab/trace_io.hpp"
#include "siftlab/types.hpp"

#include <cstdint>
#include <vector>

namespace siftlab {

struct SynthParams {
    double alpha = 1.0;
    double beta = 0.5;
    double noise_sigma = 0.0;  // lognormal sigma, applied in log space
    std::size_t steps = 1024;
    std::uint64_t seed = 0;
    double concentration = 1.0;  // std-dev of the Gaussian logits behind score rows

    void validate() const;
    /// alpha * 1^(-beta) <= 1, i.e. theta_1 is a valid probability.
    bool feasible_for_quantile_trace() const noexcept { return alpha <= 1.0; }
};

/// theta_i = alpha * i^(-beta) * exp(eps_i), eps_i ~ N(0, sigma^2).
QuantileSeries generate_powerlaw_series(const SynthParams& params, double tau = 0.5);

/// Row i = softmax of i iid N(0, concentration^2) logits.
std::vector<ScoreRow> generate_score_rows(const SynthParams& params);
AttentionTrace generate_score_trace(const SynthParams& params);

/// Score rows whose tau-quantile at step n is exactly alpha * n^(-beta).
struct MatchedRowParams {
    double alpha = 1.0;
    double beta = 1.2;
    double tau = 0.5;
    std::size_t steps = 1024;
    std::uint64_t seed = 0;
    double concentration = 2.0;  // starting logit spread; raised per step as needed

    void validate() const;
};

struct MatchedRows {
    std::vector<ScoreRow> rows;
    std::vector<double> target_quantiles;  // alpha * n^(-beta), step n at [n-1]
    /// Steps whose target is unreachable for a row of that length (tiny n, or
    /// step 1 with alpha != 1); those rows are the closest reachable instead.
    std::vector<std::size_t> off_target_steps;

    /// First step from which every row hits its target.
    std::size_t first_exact_step() const noexcept {
        return off_target_steps.empty() ? 1 : off_target_steps.back() + 1;
    }
};

MatchedRows generate_quantile_matched_rows(const MatchedRowParams& params);

/// Packs double score rows into a FULL_SCORES trace (values rounded to f32).
AttentionTrace make_score_trace(const std::vector<ScoreRow>& rows, std::string model_name, std::string dataset);

/// QUANTILES trace carrying one series; values above 1 are clamped to 1.
/// `clamped` receives the number of clamped steps when non-null.
AttentionTrace make_quantile_trace(const QuantileSeries& series, std::string model_name, std::string dataset,
                                   std::size_t* clamped = nullptr);

}  // namespace siftlab
