#include "siftlab/engines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace siftlab {

void SiftConfig::validate() const {
    if (!(tau >= 0.0 && tau < 1.0)) {
        throw InvalidInput("SiftConfig: tau must lie in [0, 1)");
    }
    if (warmup_steps < 2) {
        throw InvalidInput("SiftConfig: warmup_steps must be at least 2");
    }
    if (warmup_steps < fit_skip_first + 2) {
        throw InvalidInput("SiftConfig: fit_skip_first leaves fewer than 2 warmup points to fit");
    }
}

void TopKConfig::validate() const {
    if (!(k_fraction > 0.0 && k_fraction <= 1.0)) {
        throw InvalidInput("TopKConfig: k_fraction must lie in (0, 1]");
    }
}

Index TopKConfig::k_for(Index total) const {
    const auto k = static_cast<Index>(std::ceil(k_fraction * static_cast<double>(total)));
    return std::clamp<Index>(k, 1, std::max<Index>(total, 1));
}

void EvictConfig::validate() const {
    if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) {
        throw InvalidInput("EvictConfig: budget_fraction must lie in (0, 1]");
    }
    if (!(recent_window_fraction >= 0.0 && recent_window_fraction <= budget_fraction)) {
        throw InvalidInput("EvictConfig: recent_window_fraction must lie in [0, budget_fraction]");
    }
}

Index EvictConfig::budget_for(Index total) const {
    return std::max<Index>(1, static_cast<Index>(std::ceil(budget_fraction * static_cast<double>(total))));
}

Index EvictConfig::recent_for(Index total) const {
    const auto recent = static_cast<Index>(std::ceil(recent_window_fraction * static_cast<double>(total)));
    return std::min(recent, budget_for(total));
}

Selection select_all(const ScoreRow& scores) {
    Selection sel;
    sel.indices.resize(static_cast<std::size_t>(scores.size()));
    std::iota(sel.indices.begin(), sel.indices.end(), Index{0});
    sel.weights = scores;
    return sel;
}

Selection select_top_k(const ScoreRow& scores, Index k) {
    const Index n = scores.size();
    k = std::clamp<Index>(k, 0, n);
    IndexSet order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const auto before = [&](Index a, Index b) { return scores(a) > scores(b) || (scores(a) == scores(b) && a < b); };
    std::nth_element(order.begin(), order.begin() + k, order.end(), before);
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());

    Selection sel;
    sel.weights.resize(k);
    for (Index j = 0; j < k; ++j) {
        sel.weights(j) = scores(order[static_cast<std::size_t>(j)]);
    }
    sel.indices = std::move(order);
    return sel;
}

Selection select_above(const ScoreRow& scores, double eta, EmptyFilterPolicy policy, bool renormalize) {
    Selection sel;
    sel.threshold = eta;
    for (Index i = 0; i < scores.size(); ++i) {
        if (scores(i) > eta) {
            sel.indices.push_back(i);
        }
    }
    if (sel.indices.empty()) {
        sel.fallback = true;
        if (policy == EmptyFilterPolicy::kKeepArgmax && scores.size() > 0) {
            Index best = 0;
            scores.maxCoeff(&best);  // first maximum
            sel.indices.push_back(best);
        }
    }
    sel.weights.resize(static_cast<Index>(sel.indices.size()));
    for (std::size_t j = 0; j < sel.indices.size(); ++j) {
        sel.weights(static_cast<Index>(j)) = scores(sel.indices[j]);
    }
    if (renormalize && sel.weights.size() > 0) {
        sel.weights /= sel.weights.sum();
    }
    return sel;
}

PowerLawFit fit_warmup_series(const QuantileSeries& series, const SiftConfig& cfg) {
    return fit_power_law(series, {1 + cfg.fit_skip_first, cfg.warmup_steps});
}

HeavyHitterEvictor::HeavyHitterEvictor(EvictConfig cfg) : config_(cfg) { config_.validate(); }

const IndexSet& HeavyHitterEvictor::admit(Index total) {
    if (total != total_ + 1) {
        throw InvalidState("HeavyHitterEvictor: expected step " + std::to_string(total_ + 1) + ", got " +
                           std::to_string(total));
    }
    total_ = total;
    retained_.push_back(total - 1);
    accumulated_.push_back(0.0);
    return retained_;
}

Selection HeavyHitterEvictor::settle(const Eigen::VectorXd& candidate_scores) {
    if (candidate_scores.size() != static_cast<Index>(retained_.size())) {
        throw ShapeError("HeavyHitterEvictor::settle: " + std::to_string(candidate_scores.size()) +
                         " scores for " + std::to_string(retained_.size()) + " candidates");
    }
    for (std::size_t j = 0; j < retained_.size(); ++j) {
        accumulated_[j] += candidate_scores(static_cast<Index>(j));
    }

    const Index budget = config_.budget_for(total_);
    const Index protected_from = total_ - config_.recent_for(total_);
    std::vector<bool> keep(retained_.size(), true);
    auto remaining = static_cast<Index>(retained_.size());
    while (remaining > budget) {
        std::size_t victim = retained_.size();
        for (std::size_t j = 0; j < retained_.size(); ++j) {
            if (!keep[j] || retained_[j] >= protected_from) {
                continue;
            }
            // Strict < keeps the oldest among equal accumulated scores.
            if (victim == retained_.size() || accumulated_[j] < accumulated_[victim]) {
                victim = j;
            }
        }
        if (victim == retained_.size()) {
            throw InvalidState("HeavyHitterEvictor: nothing evictable outside the recency window");
        }
        keep[victim] = false;
        --remaining;
    }

    Selection sel;
    std::vector<double> weights;
    IndexSet survivors;
    std::vector<double> survivor_acc;
    for (std::size_t j = 0; j < retained_.size(); ++j) {
        if (keep[j]) {
            survivors.push_back(retained_[j]);
            survivor_acc.push_back(accumulated_[j]);
            weights.push_back(candidate_scores(static_cast<Index>(j)));
        }
    }
    retained_ = survivors;
    accumulated_ = std::move(survivor_acc);

    sel.indices = std::move(survivors);
    sel.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Index>(weights.size()));
    const double mass = sel.weights.sum();
    if (mass > 0.0) {
        sel.weights /= mass;
    }
    return sel;
}

}  // namespace siftlab
