#include "siftlab/cli.hpp"

#include "siftlab/error.hpp"
#include "siftlab/experiment.hpp"
#include "siftlab/metrics.hpp"
#include "siftlab/powerlaw.hpp"
#include "siftlab/synth.hpp"
#include "siftlab/trace_io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace siftlab::cli {
namespace {

using nlohmann::json;

/// JSON config files for CLI11: keys are long flag names, arrays map to
/// multi-valued options. Top-level keys belong to the subcommand being run;
/// an object named after a subcommand is that subcommand's section.
class ConfigJson : public CLI::Config {
public:
    explicit ConfigJson(const CLI::App* app) : app_(app) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            input >> j;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) {
            throw CLI::ConversionError("config file must hold a JSON object");
        }
        std::vector<CLI::ConfigItem> items;
        std::vector<std::string> scope;
        const auto active = app_->get_subcommands();
        if (!active.empty()) {
            scope.push_back(active.front()->get_name());
        }
        flatten(j, scope, items);
        return items;
    }

private:
    const CLI::App* app_;

    static std::string scalar(const json& v) {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        if (v.is_boolean()) {
            return v.get<bool>() ? "true" : "false";
        }
        return v.dump();
    }

    void flatten(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) const {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                std::vector<std::string> nested;
                if (parents.size() > 1 || app_->get_subcommand_no_throw(key) == nullptr) {
                    nested = parents;
                }
                nested.push_back(key);
                flatten(value, nested, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) {
                    item.inputs.push_back(scalar(v));
                }
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }
};

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

/// Shared "where do score rows come from" flags for compare and mask.
struct SourceOptions {
    std::string trace_path;
    bool synthetic = false;
    std::size_t steps = 1024;
    Index head_dim = 64;
    std::uint64_t seed = 0;
    unsigned threads = 0;

    void attach(CLI::App* cmd) {
        auto* trace = cmd->add_option("--trace", trace_path, "FULL_SCORES trace to replay");
        auto* synth = cmd->add_flag("--synthetic", synthetic, "Live decode with seeded Gaussian q/k/v instead");
        trace->excludes(synth);
        cmd->add_option("--steps", steps, "Decode steps for --synthetic")->capture_default_str();
        cmd->add_option("--head-dim", head_dim, "Head dimension D")->capture_default_str();
        cmd->add_option("--seed", seed, "Seed for synthetic q/k/v and value vectors")->capture_default_str();
        cmd->add_option("--threads", threads, "Worker threads (0: automatic)")->capture_default_str();
    }

    void check() const {
        if (trace_path.empty() && !synthetic) {
            throw CLI::ValidationError("source", "give --trace <file> or --synthetic");
        }
        if (head_dim < 1) {
            throw CLI::ValidationError("--head-dim", "must be positive");
        }
    }

    std::pair<std::size_t, std::vector<RunRecord>> run(const std::vector<EngineSpec>& engines,
                                                       bool record_indices) const {
        ReplayOptions opts;
        opts.head_dim = head_dim;
        opts.seed = seed;
        opts.record_indices = record_indices;
        opts.threads = threads;
        if (synthetic) {
            return {steps, run_synthetic_decode(steps, engines, opts)};
        }
        const AttentionTrace trace = read_trace(trace_path);
        return {trace.records.size(), replay_trace(trace, engines, opts)};
    }
};

EmptyFilterPolicy parse_policy(const std::string& text) {
    return text == "return-zero" ? EmptyFilterPolicy::kReturnZero : EmptyFilterPolicy::kKeepArgmax;
}

// ---------------------------------------------------------------------------
// gen-trace

struct GenTraceOptions {
    std::string out;
    std::string kind = "powerlaw";
    SynthParams params;
    double tau = 0.5;
    std::string model_name = "synthetic";
    std::string dataset;
    std::uint64_t prompt_id = 0;
    std::uint64_t layer = 0;
    std::uint64_t head = 0;
};

void add_gen_trace(CLI::App& app, GenTraceOptions& o) {
    auto* cmd = app.add_subcommand("gen-trace", "Write a synthetic attention trace");
    cmd->add_option("--out", o.out, "Output trace path")->required();
    cmd->add_option("--kind", o.kind,
                    "powerlaw: noisy power-law quantile series (QUANTILES); scores: Gaussian-logit score rows; "
                    "matched: score rows whose tau-quantile is exactly alpha*i^-beta")
        ->check(CLI::IsMember({"powerlaw", "scores", "matched"}))
        ->capture_default_str();
    cmd->add_option("--steps", o.params.steps, "Number of decode steps")->capture_default_str();
    cmd->add_option("--alpha", o.params.alpha, "Power-law scale")->capture_default_str();
    cmd->add_option("--beta", o.params.beta, "Power-law decay exponent")->capture_default_str();
    cmd->add_option("--noise", o.params.noise_sigma, "Lognormal noise sigma (powerlaw)")->capture_default_str();
    cmd->add_option("--seed", o.params.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--concentration", o.params.concentration, "Logit spread (scores, matched)")
        ->capture_default_str();
    cmd->add_option("--tau", o.tau, "Quantile level recorded (powerlaw) or matched (matched)")
        ->capture_default_str();
    cmd->add_option("--model-name", o.model_name)->capture_default_str();
    cmd->add_option("--dataset", o.dataset, "Header dataset label (defaults to the kind)");
    cmd->add_option("--prompt-id", o.prompt_id);
    cmd->add_option("--layer", o.layer);
    cmd->add_option("--head", o.head);
}

int cmd_gen_trace(const GenTraceOptions& o, std::ostream& out) {
    AttentionTrace trace;
    std::string note;
    if (o.kind == "powerlaw") {
        std::size_t clamped = 0;
        trace = make_quantile_trace(generate_powerlaw_series(o.params, o.tau), o.model_name, "powerlaw-series",
                                    &clamped);
        if (clamped > 0) {
            note = std::to_string(clamped) + " values above 1 clamped to 1";
        }
    } else if (o.kind == "scores") {
        trace = make_score_trace(generate_score_rows(o.params), o.model_name, "gaussian-logits");
    } else {
        MatchedRowParams mp;
        mp.alpha = o.params.alpha;
        mp.beta = o.params.beta;
        mp.tau = o.tau;
        mp.steps = o.params.steps;
        mp.seed = o.params.seed;
        mp.concentration = o.params.concentration;
        const MatchedRows rows = generate_quantile_matched_rows(mp);
        trace = make_score_trace(rows.rows, o.model_name, "quantile-matched");
        trace.header.extra["target_tau"] = o.tau;
        trace.header.extra["first_exact_step"] = rows.first_exact_step();
        if (rows.first_exact_step() > mp.steps) {
            note = "no row matches its target quantile (alpha * n^-beta is out of reach at this tau; raise --beta)";
        } else {
            note = "rows match the target quantile from step " + std::to_string(rows.first_exact_step());
        }
    }
    if (!o.dataset.empty()) {
        trace.header.dataset = o.dataset;
    }
    trace.header.prompt_id = o.prompt_id;
    trace.header.layer = o.layer;
    trace.header.head = o.head;
    write_trace(trace, o.out);

    out << "wrote " << o.out << "\n"
        << "  record_kind: " << to_string(trace.header.record_kind) << "\n"
        << "  num_steps:   " << trace.header.num_steps << "\n"
        << "  model/data:  " << trace.header.model_name << " / " << trace.header.dataset << "\n"
        << "  prompt/layer/head: " << trace.header.prompt_id << "/" << trace.header.layer << "/"
        << trace.header.head << "\n";
    if (!note.empty()) {
        out << "  note: " << note << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
    std::vector<std::string> traces;
    std::vector<double> taus{0.5, 0.75, 0.875};
    std::vector<std::size_t> warmups{64, 128, 256, 512};
    std::size_t fit_skip = 0;
    std::string out;
};

void add_fit(CLI::App& app, FitOptions& o) {
    auto* cmd = app.add_subcommand("fit", "Fit power laws to per-step attention quantiles");
    cmd->add_option("--trace", o.traces, "Trace file(s); one entry per prompt/layer/head")->required();
    cmd->add_option("--taus", o.taus, "Quantile levels")->delimiter(',')->capture_default_str();
    cmd->add_option("--warmups", o.warmups, "Warmup lengths w")->delimiter(',')->capture_default_str();
    cmd->add_option("--fit-skip", o.fit_skip, "Leading steps left out of every fit")->capture_default_str();
    cmd->add_option("--out", o.out, "Report path (stdout if omitted)");
}

json r2_summary(std::vector<double> values) {
    json s;
    s["count"] = values.size();
    if (values.empty()) {
        for (const char* k : {"median", "p5", "p25", "p75", "p95"}) {
            s[k] = nullptr;
        }
        return s;
    }
    const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Index>(values.size()));
    s["median"] = quantile(v, 0.5);
    s["p5"] = quantile(v, 0.05);
    s["p25"] = quantile(v, 0.25);
    s["p75"] = quantile(v, 0.75);
    s["p95"] = quantile(v, 0.95);
    return s;
}

json fit_entry(const QuantileSeries& series, StepRange window, StepRange eval) {
    json e;
    const PowerLawFit fit = fit_power_law(series, window);
    e["alpha"] = fit.alpha;
    e["beta"] = fit.beta;
    e["fit_first"] = window.first;
    e["fit_last"] = window.last;
    e["clamped_points"] = fit.clamped_points;
    try {
        const FitQuality q = r_squared(series, fit, eval);
        e["r2"] = q.r2;
        e["n_points"] = q.n_points;
    } catch (const DegenerateVariance&) {
        e["r2"] = nullptr;
        e["n_points"] = eval.length();
        e["note"] = "constant series: R^2 undefined";
    }
    return e;
}

int cmd_fit(const FitOptions& o, std::ostream& out) {
    json report;
    report["schema"] = "siftlab.fit.v1";
    report["taus"] = o.taus;
    report["warmups"] = o.warmups;
    report["fit_skip"] = o.fit_skip;
    report["traces"] = json::array();

    // (tau index, warmup or 0 for the full fit) -> R^2 values across traces
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> pooled;

    for (const auto& path : o.traces) {
        const AttentionTrace trace = read_trace(path);
        json t;
        t["path"] = path;
        t["model_name"] = trace.header.model_name;
        t["dataset"] = trace.header.dataset;
        t["prompt_id"] = trace.header.prompt_id;
        t["layer"] = trace.header.layer;
        t["head"] = trace.header.head;
        t["num_steps"] = trace.header.num_steps;
        t["fits"] = json::array();
        t["skipped"] = json::array();

        const std::size_t n = trace.records.size();
        const std::size_t first = 1 + o.fit_skip;
        for (std::size_t ti = 0; ti < o.taus.size(); ++ti) {
            const double tau = o.taus[ti];
            QuantileSeries series;
            try {
                series = quantile_series(trace, tau);
            } catch (const InvalidInput&) {
                t["skipped"].push_back({{"tau", tau}, {"reason", "quantile level not recorded in trace"}});
                continue;
            }
            if (n < first + 1) {
                t["skipped"].push_back({{"tau", tau}, {"reason", "too few steps"}});
                continue;
            }
            json full = fit_entry(series, {first, n}, {first, n});
            full["tau"] = tau;
            full["warmup"] = nullptr;
            if (!full["r2"].is_null()) {
                pooled[{ti, 0}].push_back(full["r2"].get<double>());
            }
            t["fits"].push_back(full);

            for (std::size_t w : o.warmups) {
                if (w < first + 1 || w >= n) {
                    t["skipped"].push_back({{"tau", tau}, {"warmup", w}, {"reason", "warmup must satisfy skip+2 <= w < steps"}});
                    continue;
                }
                json e = fit_entry(series, {first, w}, {1, n});
                e["tau"] = tau;
                e["warmup"] = w;
                if (!e["r2"].is_null()) {
                    pooled[{ti, w}].push_back(e["r2"].get<double>());
                }
                t["fits"].push_back(e);
            }
        }
        report["traces"].push_back(std::move(t));
    }

    report["summary"] = json::array();
    for (std::size_t ti = 0; ti < o.taus.size(); ++ti) {
        std::vector<std::size_t> ws{0};
        ws.insert(ws.end(), o.warmups.begin(), o.warmups.end());
        for (std::size_t w : ws) {
            json s = r2_summary(pooled[{ti, w}]);
            s["tau"] = o.taus[ti];
            s["warmup"] = w == 0 ? json(nullptr) : json(w);
            report["summary"].push_back(std::move(s));
        }
    }

    const std::string text = report.dump(2) + "\n";
    if (o.out.empty()) {
        out << text;
    } else {
        std::ofstream f(o.out, std::ios::trunc);
        if (!f) {
            throw IoError("cannot open " + o.out + " for writing");
        }
        f << text;
        out << "wrote " << o.out << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// compare

struct CompareOptions {
    SourceOptions source;
    std::vector<std::string> engines;
    std::vector<double> k_fractions;
    std::vector<double> taus;
    std::vector<std::size_t> warmups;
    std::vector<double> budgets;
    double recent_fraction = 0.0;
    std::string policy = "keep-argmax";
    bool renormalize = false;
    std::size_t fit_skip = 0;
    std::optional<double> fixed_threshold;
    std::size_t eval_from = 1;
    std::uint64_t bytes_per_element = 2;
    std::string out_dir = ".";
};

void add_engine_flags(CLI::App* cmd, CompareOptions& o) {
    cmd->add_option("--recent-fraction", o.recent_fraction, "Eviction recency window fraction")
        ->capture_default_str();
    cmd->add_option("--policy", o.policy, "Empty-filter policy for Sift")
        ->check(CLI::IsMember({"keep-argmax", "return-zero"}))
        ->capture_default_str();
    cmd->add_flag("--renormalize", o.renormalize, "Renormalize retained Sift scores");
    cmd->add_option("--fit-skip", o.fit_skip, "Leading warmup steps left out of the Sift fit")->capture_default_str();
    cmd->add_option("--sift-fixed-threshold", o.fixed_threshold,
                    "Use this constant threshold after warmup instead of the fitted power law");
}

void add_compare(CLI::App& app, CompareOptions& o) {
    auto* cmd = app.add_subcommand("compare", "Replay identical inputs through several engines");
    o.source.attach(cmd);
    cmd->add_option("--engines", o.engines, "Engines to run")
        ->delimiter(',')
        ->check(CLI::IsMember({"full", "topk", "sift", "evict"}))
        ->required();
    cmd->add_option("--k-fractions", o.k_fractions, "Top-k fractions of S")->delimiter(',');
    cmd->add_option("--taus", o.taus, "Sift quantile levels")->delimiter(',');
    cmd->add_option("--warmups", o.warmups, "Sift warmup lengths")->delimiter(',');
    cmd->add_option("--budgets", o.budgets, "Eviction budgets as fractions of S")->delimiter(',');
    add_engine_flags(cmd, o);
    cmd->add_option("--eval-from", o.eval_from, "First step (1-based) included in the metrics")
        ->capture_default_str();
    cmd->add_option("--bytes-per-element", o.bytes_per_element, "Bytes per value element in the data model")
        ->capture_default_str();
    cmd->add_option("--out-dir", o.out_dir, "Directory for compare.csv and compare.json")
        ->envname("SIFTLAB_OUT_DIR")
        ->capture_default_str();
}

SiftConfig sift_config(const CompareOptions& o, double tau, std::size_t w) {
    SiftConfig c;
    c.tau = tau;
    c.warmup_steps = w;
    c.empty_filter_policy = parse_policy(o.policy);
    c.renormalize = o.renormalize;
    c.fit_skip_first = o.fit_skip;
    c.validate();
    return c;
}

std::vector<EngineSpec> build_sweep(const CompareOptions& o) {
    std::vector<EngineSpec> specs;
    auto require = [](bool ok, const char* engine, const char* flag) {
        if (!ok) {
            throw CLI::ValidationError(flag, std::string("engine '") + engine + "' needs " + flag);
        }
    };
    for (const auto& name : o.engines) {
        EngineSpec base;
        try {
            if (name == "full") {
                specs.push_back(base);
            } else if (name == "topk") {
                require(!o.k_fractions.empty(), "topk", "--k-fractions");
                for (double k : o.k_fractions) {
                    EngineSpec s = base;
                    s.kind = EngineKind::kTopK;
                    s.topk.k_fraction = k;
                    s.topk.validate();
                    specs.push_back(s);
                }
            } else if (name == "sift") {
                require(!o.taus.empty(), "sift", "--taus");
                require(!o.warmups.empty(), "sift", "--warmups");
                for (double tau : o.taus) {
                    for (std::size_t w : o.warmups) {
                        EngineSpec s = base;
                        s.kind = EngineKind::kSift;
                        s.sift = sift_config(o, tau, w);
                        s.sift_fixed_threshold = o.fixed_threshold;
                        specs.push_back(s);
                    }
                }
            } else if (name == "evict") {
                require(!o.budgets.empty(), "evict", "--budgets");
                for (double b : o.budgets) {
                    EngineSpec s = base;
                    s.kind = EngineKind::kEvict;
                    s.evict.budget_fraction = b;
                    s.evict.recent_window_fraction = o.recent_fraction;
                    s.evict.validate();
                    specs.push_back(s);
                }
            }
        } catch (const InvalidInput& e) {
            throw CLI::ValidationError(name, e.what());
        }
    }
    return specs;
}

int cmd_compare(const CompareOptions& o, std::ostream& out) {
    o.source.check();
    const std::vector<EngineSpec> specs = build_sweep(o);
    const auto [steps, records] = o.source.run(specs, false);
    if (o.eval_from < 1 || o.eval_from > steps) {
        throw CLI::ValidationError("--eval-from", "must lie in 1.." + std::to_string(steps));
    }

    std::filesystem::create_directories(o.out_dir);
    const auto csv_path = std::filesystem::path(o.out_dir) / "compare.csv";
    const auto json_path = std::filesystem::path(o.out_dir) / "compare.json";

    std::string csv = "# siftlab compare v1\n";
    csv += "engine,label,tau,warmup,k_fraction,budget_fraction,recent_fraction,intended_sparsity,"
           "realized_sparsity,mean_rel_l2_error,fallback_count,value_bytes_loaded,value_bytes_full,"
           "steps_evaluated\n";
    json rows = json::array();
    for (std::size_t e = 0; e < specs.size(); ++e) {
        const EngineSpec& s = specs[e];
        const RunMetrics m = summarize_run(records[e], s.intended_sparsity(), static_cast<std::uint64_t>(o.source.head_dim),
                                           o.bytes_per_element, o.eval_from);
        const bool sift = s.kind == EngineKind::kSift;
        const bool topk = s.kind == EngineKind::kTopK;
        const bool evict = s.kind == EngineKind::kEvict;
        const std::size_t evaluated = m.retained_counts.size();
        csv += s.name() + ",\"" + s.label() + "\"," + (sift ? num(s.sift.tau) : "") + "," +
               (sift ? std::to_string(s.sift.warmup_steps) : "") + "," + (topk ? num(s.topk.k_fraction) : "") +
               "," + (evict ? num(s.evict.budget_fraction) : "") + "," +
               (evict ? num(s.evict.recent_window_fraction) : "") + "," + num(m.intended_sparsity) + "," +
               num(m.realized_sparsity) + "," + num(m.mean_rel_l2_error) + "," + std::to_string(m.fallback_count) +
               "," + std::to_string(m.value_bytes_loaded) + "," + std::to_string(m.value_bytes_full) + "," +
               std::to_string(evaluated) + "\n";
        json r;
        r["engine"] = s.name();
        r["label"] = s.label();
        r["tau"] = sift ? json(s.sift.tau) : json(nullptr);
        r["warmup"] = sift ? json(s.sift.warmup_steps) : json(nullptr);
        r["k_fraction"] = topk ? json(s.topk.k_fraction) : json(nullptr);
        r["budget_fraction"] = evict ? json(s.evict.budget_fraction) : json(nullptr);
        r["recent_fraction"] = evict ? json(s.evict.recent_window_fraction) : json(nullptr);
        r["intended_sparsity"] = m.intended_sparsity;
        r["realized_sparsity"] = m.realized_sparsity;
        r["mean_rel_l2_error"] = m.mean_rel_l2_error;
        r["fallback_count"] = m.fallback_count;
        r["value_bytes_loaded"] = m.value_bytes_loaded;
        r["value_bytes_full"] = m.value_bytes_full;
        r["steps_evaluated"] = evaluated;
        rows.push_back(std::move(r));

        char line[160];
        std::snprintf(line, sizeof(line), "%-32s intended %.4f  realized %.4f  rel-L2 %.3e  fallbacks %zu\n",
                      s.label().c_str(), m.intended_sparsity, m.realized_sparsity, m.mean_rel_l2_error,
                      m.fallback_count);
        out << line;
    }

    json doc;
    doc["schema"] = "siftlab.compare.v1";
    doc["source"] = o.source.synthetic ? json("synthetic-decode") : json(o.source.trace_path);
    doc["steps"] = steps;
    doc["head_dim"] = o.source.head_dim;
    doc["seed"] = o.source.seed;
    doc["eval_from"] = o.eval_from;
    doc["bytes_per_element"] = o.bytes_per_element;
    doc["rows"] = std::move(rows);

    std::ofstream(csv_path, std::ios::trunc) << csv;
    std::ofstream(json_path, std::ios::trunc) << doc.dump(2) << "\n";
    if (!std::filesystem::exists(csv_path) || !std::filesystem::exists(json_path)) {
        throw IoError("failed writing results to " + o.out_dir);
    }
    out << "wrote " << csv_path.string() << " and " << json_path.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// mask

struct MaskOptions {
    SourceOptions source;
    CompareOptions engine_flags;
    std::string engine = "sift";
    double k_fraction = 0.5;
    double tau = 0.5;
    std::size_t warmup = 64;
    double budget = 0.5;
    std::optional<std::size_t> step;
    std::string format = "csv";
    std::string out;
};

void add_mask(CLI::App& app, MaskOptions& o) {
    auto* cmd = app.add_subcommand("mask", "Write the 0/1 sparsity mask of one engine run");
    o.source.attach(cmd);
    cmd->add_option("--engine", o.engine)->check(CLI::IsMember({"full", "topk", "sift", "evict"}))->capture_default_str();
    cmd->add_option("--k-fraction", o.k_fraction)->capture_default_str();
    cmd->add_option("--tau", o.tau)->capture_default_str();
    cmd->add_option("--warmup", o.warmup)->capture_default_str();
    cmd->add_option("--budget", o.budget)->capture_default_str();
    add_engine_flags(cmd, o.engine_flags);
    cmd->add_option("--step", o.step, "Single 1-based step to write (all steps if omitted)");
    cmd->add_option("--format", o.format)->check(CLI::IsMember({"csv", "pbm"}))->capture_default_str();
    cmd->add_option("--out", o.out, "Mask file")->required();
}

int cmd_mask(const MaskOptions& o, std::ostream& out) {
    o.source.check();
    CompareOptions c = o.engine_flags;
    c.engines = {o.engine};
    c.k_fractions = {o.k_fraction};
    c.taus = {o.tau};
    c.warmups = {o.warmup};
    c.budgets = {o.budget};
    const std::vector<EngineSpec> specs = build_sweep(c);

    const auto [steps, records] = o.source.run(specs, true);
    if (o.step && (*o.step < 1 || *o.step > steps)) {
        throw IndexError("--step " + std::to_string(*o.step) + " is beyond the run's " + std::to_string(steps) +
                         " steps");
    }
    const RunRecord& rec = records.front();
    std::vector<MaskRow> rows;
    for (std::size_t i = 1; i <= steps; ++i) {
        if (!o.step || *o.step == i) {
            rows.push_back({i, rec.retained_indices[i - 1]});
        }
    }
    export_sparsity_mask(rows, steps, o.out, o.format == "pbm" ? MaskFormat::kPbm : MaskFormat::kCsv);
    out << "wrote " << o.out << " (" << rows.size() << " x " << steps << ", " << specs.front().label() << ")\n";
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"siftlab: quantile-threshold sparse attention experiments"};
    app.config_formatter(std::make_shared<ConfigJson>(&app));
    app.set_config("--config", "", "JSON file of flag values for the subcommand (flags take precedence)");
    app.fallthrough();
    app.require_subcommand(1);

    GenTraceOptions gen;
    FitOptions fit;
    CompareOptions compare;
    MaskOptions mask;
    add_gen_trace(app, gen);
    add_fit(app, fit);
    add_compare(app, compare);
    add_mask(app, mask);

    try {
        app.parse(argc, argv);
        if (app.got_subcommand("gen-trace")) {
            return cmd_gen_trace(gen, out);
        }
        if (app.got_subcommand("fit")) {
            return cmd_fit(fit, out);
        }
        if (app.got_subcommand("compare")) {
            return cmd_compare(compare, out);
        }
        return cmd_mask(mask, out);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace siftlab::cli
