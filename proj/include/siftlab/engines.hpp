#pragma once

#include "siftlab/core_math.hpp"
#include "siftlab/error.hpp"
#include "siftlab/kv_cache.hpp"
#include "siftlab/powerlaw.hpp"
#include "siftlab/types.hpp"

#include <optional>
#include <string>
#include <utility>

namespace siftlab {

/// What the approximate phase does when no score clears the threshold.
enum class EmptyFilterPolicy {
    kKeepArgmax,  // attend to the single highest-scoring key
    kReturnZero,  // emit a zero output, exactly as the bare filter would
};

struct SiftConfig {
    double tau = 0.5;
    std::size_t warmup_steps = 512;
    EmptyFilterPolicy empty_filter_policy = EmptyFilterPolicy::kKeepArgmax;
    bool renormalize = false;
    /// Leading warmup steps left out of the power-law fit (theta_1 is always 1).
    std::size_t fit_skip_first = 0;

    void validate() const;
};

struct TopKConfig {
    double k_fraction = 1.0;

    void validate() const;
    /// ceil(k_fraction * total), at least 1.
    Index k_for(Index total) const;
};

/// Simplified heavy-hitter eviction: a persistent set of ceil(budget * S) keys,
/// the most recent ceil(recent * S) of which are protected from eviction.
struct EvictConfig {
    double budget_fraction = 1.0;
    double recent_window_fraction = 0.0;

    void validate() const;
    Index budget_for(Index total) const;
    Index recent_for(Index total) const;
};

struct StepResult {
    Eigen::VectorXd output;
    IndexSet retained_indices;
    std::size_t retained_count = 0;
    std::size_t total_keys = 0;
    std::optional<double> threshold_used;  // approximate Sift steps only
    bool fallback_triggered = false;       // the threshold filter came back empty
};

/// Which keys an engine attends to and with what weights, decided purely from
/// a score row. Engines differ only in how they produce this.
struct Selection {
    IndexSet indices;
    Eigen::VectorXd weights;
    std::optional<double> threshold;
    bool fallback = false;
};

Selection select_all(const ScoreRow& scores);

/// The k largest scores, ties going to the lower index. Weights are the raw
/// (unrenormalized) scores.
Selection select_top_k(const ScoreRow& scores, Index k);

/// {i : scores[i] > eta}. Strict, so scores exactly at eta are dropped.
Selection select_above(const ScoreRow& scores, double eta, EmptyFilterPolicy policy, bool renormalize);

/// Output = sum_j weights[j] * values.row(indices[j]) over the first `total` rows.
template <typename DerivedV>
StepResult finish_step(Selection selection, const Eigen::MatrixBase<DerivedV>& values, Index total) {
    StepResult result;
    result.output = Eigen::VectorXd::Zero(values.cols());
    for (std::size_t j = 0; j < selection.indices.size(); ++j) {
        const Index i = selection.indices[j];
        if (i < 0 || i >= total) {
            throw IndexError("finish_step: selected index " + std::to_string(i) + " outside " +
                             std::to_string(total) + " keys");
        }
        result.output += selection.weights(static_cast<Index>(j)) * values.row(i).transpose().template cast<double>();
    }
    result.retained_count = selection.indices.size();
    result.retained_indices = std::move(selection.indices);
    result.total_keys = static_cast<std::size_t>(total);
    result.threshold_used = selection.threshold;
    result.fallback_triggered = selection.fallback;
    return result;
}

template <typename Scalar>
StepResult finish_step(Selection selection, const KvCache<Scalar>& cache) {
    const auto gathered = cache.gather_values(selection.indices);
    StepResult result;
    result.output = weighted_sum(selection.weights, gathered);
    result.retained_count = selection.indices.size();
    result.retained_indices = std::move(selection.indices);
    result.total_keys = static_cast<std::size_t>(cache.size());
    result.threshold_used = selection.threshold;
    result.fallback_triggered = selection.fallback;
    return result;
}

/// softmax(q K^T / sqrt(D)) over every cached key.
template <typename Scalar, typename DerivedQ>
ScoreRow attention_scores(const KvCache<Scalar>& cache, const Eigen::MatrixBase<DerivedQ>& q) {
    if (cache.empty()) {
        throw InvalidState("attention step on an empty cache (append the current token first)");
    }
    return softmax(scaled_dot_scores(q, cache.keys(), cache.head_dim()));
}

// ---------------------------------------------------------------------------
// Exact and top-k. The caller appends the current token's (k, v) first.

template <typename Scalar, typename DerivedQ>
std::pair<StepResult, ScoreRow> exact_step(const KvCache<Scalar>& cache, const Eigen::MatrixBase<DerivedQ>& q) {
    ScoreRow scores = attention_scores(cache, q);
    StepResult result = finish_step(select_all(scores), cache);
    return {std::move(result), std::move(scores)};
}

template <typename Scalar, typename DerivedQ>
StepResult topk_step(const KvCache<Scalar>& cache, const Eigen::MatrixBase<DerivedQ>& q, const TopKConfig& cfg) {
    cfg.validate();
    const ScoreRow scores = attention_scores(cache, q);
    return finish_step(select_top_k(scores, cfg.k_for(cache.size())), cache);
}

// ---------------------------------------------------------------------------
// Sift: exact attention for w warmup steps while recording the tau-quantile of
// each score row, then a power-law predicted threshold filters later rows.

/// Fit over the configured warmup window of a recorded series.
PowerLawFit fit_warmup_series(const QuantileSeries& series, const SiftConfig& cfg);

template <typename Scalar>
struct SiftState {
    SiftConfig config;
    KvCache<Scalar> cache;
    QuantileSeries quantile_series;
    std::optional<PowerLawFit> fit;
    std::size_t step = 0;

    SiftState(SiftConfig cfg, Index head_dim) : config(cfg), cache(head_dim) {
        config.validate();
        quantile_series.tau = config.tau;
        quantile_series.values.reserve(config.warmup_steps);
    }

    bool in_warmup() const noexcept { return step < config.warmup_steps; }
};

template <typename Scalar, typename DQ, typename DK, typename DV>
StepResult sift_warmup_step(SiftState<Scalar>& state, const Eigen::MatrixBase<DQ>& q,
                            const Eigen::MatrixBase<DK>& k, const Eigen::MatrixBase<DV>& v) {
    if (!state.in_warmup()) {
        throw PhaseError("sift_warmup_step: warmup already covered " + std::to_string(state.step) + " steps");
    }
    state.cache.append(k, v);
    const ScoreRow scores = attention_scores(state.cache, q);
    state.quantile_series.values.push_back(quantile(scores, state.config.tau));
    ++state.step;
    return finish_step(select_all(scores), state.cache);
}

template <typename Scalar>
const PowerLawFit& sift_finalize_warmup(SiftState<Scalar>& state) {
    if (state.step != state.config.warmup_steps) {
        throw PhaseError("sift_finalize_warmup: at step " + std::to_string(state.step) + ", warmup is " +
                         std::to_string(state.config.warmup_steps));
    }
    state.fit = fit_warmup_series(state.quantile_series, state.config);
    return *state.fit;
}

template <typename Scalar, typename DQ, typename DK, typename DV>
StepResult sift_approx_step(SiftState<Scalar>& state, const Eigen::MatrixBase<DQ>& q,
                            const Eigen::MatrixBase<DK>& k, const Eigen::MatrixBase<DV>& v) {
    if (!state.fit) {
        throw PhaseError("sift_approx_step: no power-law fit (finish the warmup first)");
    }
    state.cache.append(k, v);
    ++state.step;
    const ScoreRow scores = attention_scores(state.cache, q);
    const double eta = predict_quantile(*state.fit, state.step);
    return finish_step(select_above(scores, eta, state.config.empty_filter_policy, state.config.renormalize),
                       state.cache);
}

/// Dispatches on phase and fits automatically after the last warmup step.
template <typename Scalar, typename DQ, typename DK, typename DV>
StepResult sift_step(SiftState<Scalar>& state, const Eigen::MatrixBase<DQ>& q, const Eigen::MatrixBase<DK>& k,
                     const Eigen::MatrixBase<DV>& v) {
    if (!state.in_warmup()) {
        return sift_approx_step(state, q, k, v);
    }
    StepResult result = sift_warmup_step(state, q, k, v);
    if (state.step == state.config.warmup_steps) {
        sift_finalize_warmup(state);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Eviction baseline.

/// Bookkeeping for the persistent retained set. Scoring is left to the caller
/// so the same policy runs over live q/K or over recorded score rows.
class HeavyHitterEvictor {
public:
    explicit HeavyHitterEvictor(EvictConfig cfg);

    /// Admits the newest position (total - 1) and returns the keys to score.
    const IndexSet& admit(Index total);

    /// Takes post-softmax scores over the admitted candidates, accumulates them,
    /// evicts down to budget and returns the renormalized survivors.
    Selection settle(const Eigen::VectorXd& candidate_scores);

    const IndexSet& retained() const noexcept { return retained_; }
    const std::vector<double>& accumulated() const noexcept { return accumulated_; }
    const EvictConfig& config() const noexcept { return config_; }

private:
    EvictConfig config_;
    Index total_ = 0;
    IndexSet retained_;
    std::vector<double> accumulated_;  // parallel to retained_
};

template <typename Scalar>
struct EvictState {
    KvCache<Scalar> cache;
    HeavyHitterEvictor evictor;

    EvictState(EvictConfig cfg, Index head_dim) : cache(head_dim), evictor(cfg) {}
};

template <typename Scalar, typename DQ, typename DK, typename DV>
StepResult evict_step(EvictState<Scalar>& state, const Eigen::MatrixBase<DQ>& q, const Eigen::MatrixBase<DK>& k,
                      const Eigen::MatrixBase<DV>& v) {
    state.cache.append(k, v);
    const IndexSet& candidates = state.evictor.admit(state.cache.size());
    Matrix<Scalar> keys(static_cast<Index>(candidates.size()), state.cache.head_dim());
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        keys.row(static_cast<Index>(j)) = state.cache.keys().row(candidates[j]);
    }
    const ScoreRow scores = softmax(scaled_dot_scores(q, keys, state.cache.head_dim()));
    return finish_step(state.evictor.settle(scores), state.cache);
}

}  // namespace siftlab
