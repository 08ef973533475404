#pragma once

#include "siftlab/engines.hpp"
#include "siftlab/metrics.hpp"
#include "siftlab/trace_io.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace siftlab {

enum class EngineKind { kFull, kTopK, kSift, kEvict };

/// One engine configuration in a sweep.
struct EngineSpec {
    EngineKind kind = EngineKind::kFull;
    TopKConfig topk;
    SiftConfig sift;
    EvictConfig evict;
    /// Replaces the fitted power law with a constant threshold after warmup.
    std::optional<double> sift_fixed_threshold;

    std::string name() const;   // "full", "topk", "sift", "evict"
    std::string label() const;  // name plus parameters
    double intended_sparsity() const;
};

/// Runs an engine from score rows alone: the policy each engine applies
/// given a_S, with no q/K involved. Rows must arrive in step order.
class ScoreDomainEngine {
public:
    explicit ScoreDomainEngine(EngineSpec spec);

    Selection step(const ScoreRow& scores);

    const EngineSpec& spec() const noexcept { return spec_; }
    const QuantileSeries& quantile_series() const noexcept { return series_; }
    const std::optional<PowerLawFit>& fit() const noexcept { return fit_; }

private:
    EngineSpec spec_;
    std::size_t step_ = 0;
    QuantileSeries series_;
    std::optional<PowerLawFit> fit_;
    std::optional<HeavyHitterEvictor> evictor_;
};

struct ReplayOptions {
    Index head_dim = 64;
    std::uint64_t seed = 0;       // drives the synthetic value (and q/k) vectors
    bool record_indices = false;  // keep retained sets for mask export
    unsigned threads = 0;         // 0: one worker per engine, capped by hardware
};

/// Feeds the same score rows and the same seeded values V to every engine.
/// `row_at(i)` returns the score row for 1-based step i.
std::vector<RunRecord> replay_score_rows(std::size_t steps, const std::function<ScoreRow(std::size_t)>& row_at,
                                         const std::vector<EngineSpec>& engines, const ReplayOptions& options);

std::vector<RunRecord> replay_trace(const AttentionTrace& trace, const std::vector<EngineSpec>& engines,
                                    const ReplayOptions& options);

/// Live decode with seeded Gaussian q, k, v per step, each engine on its own cache.
std::vector<RunRecord> run_synthetic_decode(std::size_t steps, const std::vector<EngineSpec>& engines,
                                            const ReplayOptions& options);

}  // namespace siftlab
