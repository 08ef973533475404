#include "siftlab/metrics.hpp"

#include "siftlab/error.hpp"

#include <cmath>
#include <fstream>

namespace siftlab {
namespace {

void check_counts(std::span<const std::size_t> retained, std::span<const std::size_t> totals, const char* who) {
    if (retained.empty()) {
        throw InvalidInput(std::string(who) + ": no steps");
    }
    if (retained.size() != totals.size()) {
        throw InvalidInput(std::string(who) + ": retained and total sequences differ in length");
    }
    for (std::size_t i = 0; i < retained.size(); ++i) {
        if (totals[i] == 0 || retained[i] > totals[i]) {
            throw InvalidInput(std::string(who) + ": step " + std::to_string(i + 1) + " retains " +
                               std::to_string(retained[i]) + " of " + std::to_string(totals[i]) + " keys");
        }
    }
}

}  // namespace

double realized_sparsity(std::span<const std::size_t> retained, std::span<const std::size_t> totals) {
    check_counts(retained, totals, "realized_sparsity");
    double sum = 0.0;
    for (std::size_t i = 0; i < retained.size(); ++i) {
        sum += static_cast<double>(totals[i] - retained[i]) / static_cast<double>(totals[i]);
    }
    return sum / static_cast<double>(retained.size());
}

double output_error(const Eigen::VectorXd& exact, const Eigen::VectorXd& approx) {
    if (exact.size() != approx.size()) {
        throw ShapeError("output_error: vectors differ in length");
    }
    const double norm = exact.norm();
    if (norm == 0.0) {
        throw DegenerateInput("output_error: exact output is the zero vector");
    }
    return (exact - approx).norm() / norm;
}

double value_bytes_reduction(std::span<const std::size_t> retained, std::span<const std::size_t> totals,
                             std::uint64_t head_dim, std::uint64_t bytes_per_element) {
    check_counts(retained, totals, "value_bytes_reduction");
    if (head_dim == 0 || bytes_per_element == 0) {
        throw InvalidInput("value_bytes_reduction: zero-sized value vectors");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < retained.size(); ++i) {
        const auto loaded = static_cast<double>(value_bytes_loaded(retained[i], head_dim, bytes_per_element));
        const auto full = static_cast<double>(value_bytes_loaded(totals[i], head_dim, bytes_per_element));
        sum += 1.0 - loaded / full;
    }
    return sum / static_cast<double>(retained.size());
}

void CostModelInputs::validate() const {
    for (double t : {t_proj_v, t_proj_v_pruned, t_threshold, t_topk, t_powerlaw_fit}) {
        if (!(t >= 0.0) || !std::isfinite(t)) {
            throw InvalidInput("CostModelInputs: durations must be finite and >= 0");
        }
    }
    if (warmup > steps) {
        throw InvalidInput("CostModelInputs: warmup exceeds total steps");
    }
}

CostModelDelta cost_model_delta(const CostModelInputs& in) {
    in.validate();
    const auto w = static_cast<double>(in.warmup);
    const auto after = static_cast<double>(in.steps - in.warmup);
    const double proj_gap = in.t_proj_v - in.t_proj_v_pruned;
    CostModelDelta d;
    d.dominant = after * (in.t_threshold - in.t_topk);
    d.full = w * proj_gap + d.dominant + in.t_powerlaw_fit;
    d.gap = d.full - d.dominant;
    d.gap_bound = w * std::abs(proj_gap) + in.t_powerlaw_fit;
    return d;
}

RunMetrics summarize_run(const RunRecord& record, double intended_sparsity, std::uint64_t head_dim,
                         std::uint64_t bytes_per_element, std::size_t eval_from) {
    const std::size_t n = record.retained_counts.size();
    if (eval_from < 1 || eval_from > n) {
        throw InvalidInput("summarize_run: eval_from " + std::to_string(eval_from) + " outside 1.." +
                           std::to_string(n));
    }
    RunMetrics m;
    m.intended_sparsity = intended_sparsity;
    const auto first = static_cast<std::ptrdiff_t>(eval_from - 1);
    m.retained_counts.assign(record.retained_counts.begin() + first, record.retained_counts.end());
    m.total_keys.assign(record.total_keys.begin() + first, record.total_keys.end());
    m.realized_sparsity = realized_sparsity(m.retained_counts, m.total_keys);

    double err = 0.0;
    for (std::size_t i = eval_from - 1; i < n; ++i) {
        err += record.rel_errors.at(i);
        m.fallback_count += record.fallbacks.at(i) ? 1 : 0;
        m.value_bytes_loaded += value_bytes_loaded(record.retained_counts[i], head_dim, bytes_per_element);
        m.value_bytes_full += value_bytes_loaded(record.total_keys[i], head_dim, bytes_per_element);
    }
    m.mean_rel_l2_error = err / static_cast<double>(n - eval_from + 1);
    return m;
}

std::string render_sparsity_mask(const std::vector<MaskRow>& rows, std::size_t total_steps, MaskFormat format) {
    std::string out;
    if (format == MaskFormat::kPbm) {
        out += "P1\n" + std::to_string(total_steps) + " " + std::to_string(rows.size()) + "\n";
    }
    const char on = format == MaskFormat::kCsv ? '1' : '0';
    const char off = format == MaskFormat::kCsv ? '0' : '1';
    const char sep = format == MaskFormat::kCsv ? ',' : ' ';
    for (const MaskRow& row : rows) {
        if (row.step < 1 || row.step > total_steps) {
            throw InvalidInput("sparsity mask: step " + std::to_string(row.step) + " outside 1.." +
                               std::to_string(total_steps));
        }
        std::string line(total_steps, off);
        for (Index i : row.retained) {
            if (i < 0 || static_cast<std::size_t>(i) >= row.step) {
                throw InvalidInput("sparsity mask: step " + std::to_string(row.step) + " retains future position " +
                                   std::to_string(i));
            }
            line[static_cast<std::size_t>(i)] = on;
        }
        for (std::size_t j = 0; j < total_steps; ++j) {
            if (j > 0) {
                out += sep;
            }
            out += line[j];
        }
        out += '\n';
    }
    return out;
}

void export_sparsity_mask(const std::vector<MaskRow>& rows, std::size_t total_steps,
                          const std::filesystem::path& path, MaskFormat format) {
    const std::string text = render_sparsity_mask(rows, total_steps, format);
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

}  // namespace siftlab
