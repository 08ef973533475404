#pragma once

#include "siftlab/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace siftlab {

/// Mean over steps of (total - retained) / total.
double realized_sparsity(std::span<const std::size_t> retained, std::span<const std::size_t> totals);

/// ||exact - approx||_2 / ||exact||_2
double output_error(const Eigen::VectorXd& exact, const Eigen::VectorXd& approx);

/// Bytes of value vectors read for one step. Keys are always read in full
/// (scores are exact), so only values vary with the retained set.
constexpr std::uint64_t value_bytes_loaded(std::uint64_t retained_count, std::uint64_t head_dim,
                                           std::uint64_t bytes_per_element) {
    return retained_count * head_dim * bytes_per_element;
}

/// Mean over steps of 1 - loaded_i / full_i.
double value_bytes_reduction(std::span<const std::size_t> retained, std::span<const std::size_t> totals,
                             std::uint64_t head_dim, std::uint64_t bytes_per_element);

/// Per-step timings (seconds) for the Sift vs. top-k runtime comparison.
struct CostModelInputs {
    double t_proj_v = 0.0;         // full scores x V
    double t_proj_v_pruned = 0.0;  // pruned scores x V'
    double t_threshold = 0.0;
    double t_topk = 0.0;
    double t_powerlaw_fit = 0.0;   // one-off
    std::size_t steps = 0;         // S
    std::size_t warmup = 0;        // w

    void validate() const;
};

struct CostModelDelta {
    /// w (T_projV - T_projV') + (S - w)(T_thr - T_topk) + T_fit
    double full = 0.0;
    /// (S - w)(T_thr - T_topk): the steady-state term alone.
    double dominant = 0.0;
    double gap = 0.0;        // full - dominant
    double gap_bound = 0.0;  // w |T_projV - T_projV'| + T_fit
};

CostModelDelta cost_model_delta(const CostModelInputs& inputs);

/// Everything one engine configuration did over a replay.
struct RunRecord {
    std::vector<std::size_t> retained_counts;
    std::vector<std::size_t> total_keys;
    std::vector<double> rel_errors;
    std::vector<bool> fallbacks;
    std::vector<IndexSet> retained_indices;  // only when masks were requested
};

struct RunMetrics {
    std::vector<std::size_t> retained_counts;
    std::vector<std::size_t> total_keys;
    double realized_sparsity = 0.0;
    double intended_sparsity = 0.0;
    double mean_rel_l2_error = 0.0;
    std::size_t fallback_count = 0;
    std::uint64_t value_bytes_loaded = 0;
    std::uint64_t value_bytes_full = 0;
};

/// Aggregates steps [eval_from, end] (1-based) of a run.
RunMetrics summarize_run(const RunRecord& record, double intended_sparsity, std::uint64_t head_dim,
                         std::uint64_t bytes_per_element, std::size_t eval_from = 1);

struct MaskRow {
    std::size_t step = 0;  // 1-based; retained indices must be < step
    IndexSet retained;
};

enum class MaskFormat { kCsv, kPbm };

/// One row per MaskRow, `total_steps` columns, 1 = attended. Positions at or
/// beyond the row's step are never attended and stay 0. PBM output draws
/// attended positions white, so its bits are the complement of the CSV.
std::string render_sparsity_mask(const std::vector<MaskRow>& rows, std::size_t total_steps, MaskFormat format);
void export_sparsity_mask(const std::vector<MaskRow>& rows, std::size_t total_steps,
                          const std::filesystem::path& path, MaskFormat format = MaskFormat::kCsv);

}  // namespace siftlab
