#include "siftlab/experiment.hpp"

#include "siftlab/error.hpp"

#include <algorithm>
#include <cstdio>
#include <atomic>
#include <future>
#include <random>
#include <thread>

namespace siftlab {
namespace {

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", x);
    return buf;
}

Matrix<double> gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<double> m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = normal(rng);
        }
    }
    return m;
}

void record_step(RunRecord& rec, const StepResult& result, const Eigen::VectorXd& exact, bool keep_indices) {
    rec.retained_counts.push_back(result.retained_count);
    rec.total_keys.push_back(result.total_keys);
    rec.rel_errors.push_back(output_error(exact, result.output));
    rec.fallbacks.push_back(result.fallback_triggered);
    if (keep_indices) {
        rec.retained_indices.push_back(result.retained_indices);
    }
}

/// Runs job(e) for every engine index on a small pool; results land by index.
std::vector<RunRecord> fan_out(std::size_t count, unsigned threads, const std::function<RunRecord(std::size_t)>& job) {
    std::vector<RunRecord> out(count);
    unsigned workers = threads != 0 ? threads : std::max(1U, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    std::vector<std::future<void>> pending;
    std::atomic<std::size_t> next{0};
    for (unsigned w = 0; w < workers; ++w) {
        pending.push_back(std::async(std::launch::async, [&] {
            for (std::size_t e = next++; e < count; e = next++) {
                out[e] = job(e);
            }
        }));
    }
    for (auto& f : pending) {
        f.get();
    }
    return out;
}

}  // namespace

std::string EngineSpec::name() const {
    switch (kind) {
        case EngineKind::kFull: return "full";
        case EngineKind::kTopK: return "topk";
        case EngineKind::kSift: return "sift";
        case EngineKind::kEvict: return "evict";
    }
    return "?";
}

std::string EngineSpec::label() const {
    switch (kind) {
        case EngineKind::kFull: return "full";
        case EngineKind::kTopK: return "topk(k=" + fmt(topk.k_fraction) + ")";
        case EngineKind::kSift: {
            std::string s = "sift(tau=" + fmt(sift.tau) + ",w=" + std::to_string(sift.warmup_steps);
            if (sift_fixed_threshold) {
                s += ",eta=" + fmt(*sift_fixed_threshold);
            }
            return s + ")";
        }
        case EngineKind::kEvict:
            return "evict(b=" + fmt(evict.budget_fraction) + ",r=" + fmt(evict.recent_window_fraction) + ")";
    }
    return "?";
}

double EngineSpec::intended_sparsity() const {
    switch (kind) {
        case EngineKind::kFull: return 0.0;
        case EngineKind::kTopK: return 1.0 - topk.k_fraction;
        case EngineKind::kSift: return sift.tau;
        case EngineKind::kEvict: return 1.0 - evict.budget_fraction;
    }
    return 0.0;
}

ScoreDomainEngine::ScoreDomainEngine(EngineSpec spec) : spec_(std::move(spec)) {
    switch (spec_.kind) {
        case EngineKind::kTopK: spec_.topk.validate(); break;
        case EngineKind::kSift:
            spec_.sift.validate();
            series_.tau = spec_.sift.tau;
            break;
        case EngineKind::kEvict: evictor_.emplace(spec_.evict); break;
        case EngineKind::kFull: break;
    }
}

Selection ScoreDomainEngine::step(const ScoreRow& scores) {
    ++step_;
    if (scores.size() != static_cast<Index>(step_)) {
        throw ShapeError("ScoreDomainEngine: step " + std::to_string(step_) + " got a row of length " +
                         std::to_string(scores.size()));
    }
    switch (spec_.kind) {
        case EngineKind::kFull: return select_all(scores);
        case EngineKind::kTopK: return select_top_k(scores, spec_.topk.k_for(scores.size()));
        case EngineKind::kSift: {
            const SiftConfig& cfg = spec_.sift;
            if (step_ <= cfg.warmup_steps) {
                series_.values.push_back(quantile(scores, cfg.tau));
                if (step_ == cfg.warmup_steps) {
                    fit_ = fit_warmup_series(series_, cfg);
                    if (spec_.sift_fixed_threshold) {
                        fit_->alpha = *spec_.sift_fixed_threshold;
                        fit_->beta = 0.0;
                    }
                }
                return select_all(scores);
            }
            return select_above(scores, predict_quantile(*fit_, step_), cfg.empty_filter_policy, cfg.renormalize);
        }
        case EngineKind::kEvict: {
            const IndexSet& candidates = evictor_->admit(scores.size());
            Eigen::VectorXd sub(static_cast<Index>(candidates.size()));
            for (std::size_t j = 0; j < candidates.size(); ++j) {
                sub(static_cast<Index>(j)) = scores(candidates[j]);
            }
            // Softmax restricted to a subset equals the full softmax renormalized on it.
            sub /= sub.sum();
            return evictor_->settle(sub);
        }
    }
    throw InvalidState("ScoreDomainEngine: unknown engine kind");
}

std::vector<RunRecord> replay_score_rows(std::size_t steps, const std::function<ScoreRow(std::size_t)>& row_at,
                                         const std::vector<EngineSpec>& engines, const ReplayOptions& options) {
    if (steps < 1) {
        throw InvalidInput("replay: no steps");
    }
    std::mt19937_64 rng(options.seed);
    const Matrix<double> values = gaussian_matrix(static_cast<Index>(steps), options.head_dim, rng);

    std::vector<ScoreRow> rows;
    std::vector<Eigen::VectorXd> exact;
    rows.reserve(steps);
    exact.reserve(steps);
    for (std::size_t i = 1; i <= steps; ++i) {
        rows.push_back(row_at(i));
        exact.push_back(finish_step(select_all(rows.back()), values, static_cast<Index>(i)).output);
    }

    return fan_out(engines.size(), options.threads, [&](std::size_t e) {
        ScoreDomainEngine engine(engines[e]);
        RunRecord rec;
        for (std::size_t i = 1; i <= steps; ++i) {
            StepResult result = finish_step(engine.step(rows[i - 1]), values, static_cast<Index>(i));
            record_step(rec, result, exact[i - 1], options.record_indices);
        }
        return rec;
    });
}

std::vector<RunRecord> replay_trace(const AttentionTrace& trace, const std::vector<EngineSpec>& engines,
                                    const ReplayOptions& options) {
    if (trace.header.record_kind != RecordKind::kFullScores) {
        throw InvalidInput("replay needs a FULL_SCORES trace; this one holds quantiles only");
    }
    return replay_score_rows(
        trace.records.size(), [&](std::size_t i) { return score_row(trace, i); }, engines, options);
}

std::vector<RunRecord> run_synthetic_decode(std::size_t steps, const std::vector<EngineSpec>& engines,
                                            const ReplayOptions& options) {
    if (steps < 1) {
        throw InvalidInput("synthetic decode: no steps");
    }
    const Index n = static_cast<Index>(steps);
    const Index d = options.head_dim;
    std::mt19937_64 rng(options.seed);
    const Matrix<double> queries = gaussian_matrix(n, d, rng);
    const Matrix<double> keys = gaussian_matrix(n, d, rng);
    const Matrix<double> values = gaussian_matrix(n, d, rng);

    std::vector<Eigen::VectorXd> exact;
    exact.reserve(steps);
    {
        KvCache<double> cache(d);
        for (Index i = 0; i < n; ++i) {
            cache.append(keys.row(i), values.row(i));
            exact.push_back(exact_step(cache, queries.row(i)).first.output);
        }
    }

    return fan_out(engines.size(), options.threads, [&](std::size_t e) {
        const EngineSpec& spec = engines[e];
        RunRecord rec;
        auto record = [&](Index i, const StepResult& r) {
            record_step(rec, r, exact[static_cast<std::size_t>(i)], options.record_indices);
        };
        switch (spec.kind) {
            case EngineKind::kFull:
            case EngineKind::kTopK: {
                KvCache<double> cache(d);
                for (Index i = 0; i < n; ++i) {
                    cache.append(keys.row(i), values.row(i));
                    record(i, spec.kind == EngineKind::kFull ? exact_step(cache, queries.row(i)).first
                                                             : topk_step(cache, queries.row(i), spec.topk));
                }
                break;
            }
            case EngineKind::kSift: {
                SiftState<double> state(spec.sift, d);
                for (Index i = 0; i < n; ++i) {
                    record(i, sift_step(state, queries.row(i), keys.row(i), values.row(i)));
                    if (spec.sift_fixed_threshold && state.fit && state.step == spec.sift.warmup_steps) {
                        state.fit->alpha = *spec.sift_fixed_threshold;
                        state.fit->beta = 0.0;
                    }
                }
                break;
            }
            case EngineKind::kEvict: {
                EvictState<double> state(spec.evict, d);
                for (Index i = 0; i < n; ++i) {
                    record(i, evict_step(state, queries.row(i), keys.row(i), values.row(i)));
                }
                break;
            }
        }
        return rec;
    });
}

}  // namespace siftlab
