#include "siftlab/trace_io.hpp"

#include "siftlab/core_math.hpp"
#include "siftlab/error.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace siftlab {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>(v >> shift));
    }
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint64_t offset() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("truncated file while reading ") + what, pos_);
        }
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(b)]) << (8 * b);
        }
        pos_ += 4;
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    std::string text(std::size_t n, const char* what) {
        need(n, what);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

const char* const kKnownKeys[] = {"dataset",         "head",          "layer",          "model_name",
                                  "num_steps",       "prompt_id",     "quantile_levels", "record_kind",
                                  "score_precision"};

TraceHeader decode_header(const std::string& text, std::uint64_t offset) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("header is not valid JSON: ") + e.what(), offset);
    }
    if (!j.is_object()) {
        throw FormatError("header must be a JSON object", offset);
    }
    TraceHeader h;
    try {
        h.model_name = j.at("model_name").get<std::string>();
        h.dataset = j.at("dataset").get<std::string>();
        h.prompt_id = j.at("prompt_id").get<std::uint64_t>();
        h.layer = j.at("layer").get<std::uint64_t>();
        h.head = j.at("head").get<std::uint64_t>();
        h.num_steps = j.at("num_steps").get<std::uint64_t>();
        h.record_kind = record_kind_from_string(j.at("record_kind").get<std::string>());
        h.quantile_levels = j.value("quantile_levels", std::vector<double>{});
        h.score_precision = j.at("score_precision").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad header field: ") + e.what(), offset);
    } catch (const InvalidInput& e) {
        throw FormatError(e.what(), offset);
    }
    for (const char* key : kKnownKeys) {
        j.erase(key);
    }
    h.extra = std::move(j);

    if (h.score_precision != "f32") {
        throw FormatError("unsupported score_precision '" + h.score_precision + "'", offset);
    }
    if (h.num_steps < 1) {
        throw FormatError("num_steps must be at least 1", offset);
    }
    if (h.record_kind == RecordKind::kQuantiles && h.quantile_levels.empty()) {
        throw FormatError("QUANTILES trace without quantile_levels", offset);
    }
    return h;
}

void check_record(const TraceHeader& h, const std::vector<float>& rec, std::size_t step) {
    const std::string where = "step " + std::to_string(step);
    double sum = 0.0;
    for (float x : rec) {
        // Zeros are float underflow of tiny probabilities; accepted and floored later.
        if (!std::isfinite(x) || x < 0.0F || x > 1.0F) {
            throw InvalidInput(where + ": score " + std::to_string(x) + " outside [0, 1]");
        }
        sum += x;
    }
    if (h.record_kind == RecordKind::kFullScores) {
        if (rec.size() != step) {
            throw InvalidInput(where + ": row has " + std::to_string(rec.size()) + " scores, expected " +
                               std::to_string(step));
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw InvalidInput(where + ": row sums to " + std::to_string(sum) + ", expected 1 within 1e-3");
        }
    } else if (rec.size() != h.quantile_levels.size()) {
        throw InvalidInput(where + ": " + std::to_string(rec.size()) + " quantiles for " +
                           std::to_string(h.quantile_levels.size()) + " levels");
    }
}

}  // namespace

std::string to_string(RecordKind kind) {
    return kind == RecordKind::kFullScores ? "FULL_SCORES" : "QUANTILES";
}

RecordKind record_kind_from_string(const std::string& text) {
    if (text == "FULL_SCORES") {
        return RecordKind::kFullScores;
    }
    if (text == "QUANTILES") {
        return RecordKind::kQuantiles;
    }
    throw InvalidInput("unknown record_kind '" + text + "'");
}

void validate_trace(const AttentionTrace& trace) {
    const TraceHeader& h = trace.header;
    if (h.num_steps < 1) {
        throw InvalidInput("trace: num_steps must be at least 1");
    }
    if (h.record_kind == RecordKind::kQuantiles && h.quantile_levels.empty()) {
        throw InvalidInput("trace: QUANTILES requires at least one quantile level");
    }
    if (trace.records.size() != h.num_steps) {
        throw InvalidInput("trace: header says " + std::to_string(h.num_steps) + " steps, found " +
                           std::to_string(trace.records.size()) + " records");
    }
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        check_record(h, trace.records[i], i + 1);
    }
}

std::string encode_header(const TraceHeader& h) {
    nlohmann::json j = h.extra.is_object() ? h.extra : nlohmann::json::object();
    j["model_name"] = h.model_name;
    j["dataset"] = h.dataset;
    j["prompt_id"] = h.prompt_id;
    j["layer"] = h.layer;
    j["head"] = h.head;
    j["num_steps"] = h.num_steps;
    j["record_kind"] = to_string(h.record_kind);
    j["quantile_levels"] = h.quantile_levels;
    j["score_precision"] = h.score_precision;
    return j.dump();
}

std::vector<std::uint8_t> serialize_trace(const AttentionTrace& trace) {
    validate_trace(trace);
    const std::string header = encode_header(trace.header);
    std::vector<std::uint8_t> out(std::begin(kTraceMagic), std::end(kTraceMagic));
    put_u32(out, kTraceVersion);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    const bool full = trace.header.record_kind == RecordKind::kFullScores;
    for (const auto& rec : trace.records) {
        if (full) {
            put_u32(out, static_cast<std::uint32_t>(rec.size()));
        }
        for (float x : rec) {
            put_f32(out, x);
        }
    }
    return out;
}

AttentionTrace parse_trace(const std::vector<std::uint8_t>& bytes) {
    ByteReader in(bytes);
    in.need(sizeof(kTraceMagic), "magic");
    if (!std::equal(std::begin(kTraceMagic), std::end(kTraceMagic), bytes.begin())) {
        throw FormatError("bad magic (not a SIFTTRC1 trace)", 0);
    }
    in.text(sizeof(kTraceMagic), "magic");
    const std::uint64_t version_at = in.offset();
    const std::uint32_t version = in.u32("version");
    if (version != kTraceVersion) {
        throw FormatError("unsupported trace version " + std::to_string(version), version_at);
    }
    const std::uint32_t header_len = in.u32("header length");
    const std::uint64_t header_at = in.offset();
    AttentionTrace trace;
    trace.header = decode_header(in.text(header_len, "header"), header_at);

    const TraceHeader& h = trace.header;
    const bool full = h.record_kind == RecordKind::kFullScores;
    trace.records.reserve(static_cast<std::size_t>(h.num_steps));
    for (std::uint64_t step = 1; step <= h.num_steps; ++step) {
        const std::uint64_t record_at = in.offset();
        std::size_t count = h.quantile_levels.size();
        if (full) {
            const std::uint32_t n = in.u32("row length");
            if (n != step) {
                throw FormatError("step " + std::to_string(step) + ": row length " + std::to_string(n) +
                                      " but FULL_SCORES step i must hold i scores",
                                  record_at);
            }
            count = n;
        }
        in.need(4 * count, "scores");
        std::vector<float> rec(count);
        for (auto& x : rec) {
            x = in.f32("scores");
        }
        try {
            check_record(h, rec, static_cast<std::size_t>(step));
        } catch (const InvalidInput& e) {
            throw FormatError(e.what(), record_at);
        }
        trace.records.push_back(std::move(rec));
    }
    if (!in.at_end()) {
        throw FormatError("trailing bytes after the last record", in.offset());
    }
    return trace;
}

void write_trace(const AttentionTrace& trace, const std::filesystem::path& path) {
    const auto bytes = serialize_trace(trace);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

AttentionTrace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_trace(bytes);
}

ScoreRow score_row(const AttentionTrace& trace, std::size_t step) {
    if (trace.header.record_kind != RecordKind::kFullScores) {
        throw InvalidInput("score_row: trace holds quantiles, not score rows");
    }
    if (step < 1 || step > trace.records.size()) {
        throw IndexError("score_row: step " + std::to_string(step) + " outside 1.." +
                         std::to_string(trace.records.size()));
    }
    const auto& rec = trace.records[step - 1];
    return Eigen::Map<const Eigen::VectorXf>(rec.data(), static_cast<Index>(rec.size())).cast<double>();
}

QuantileSeries quantile_series(const AttentionTrace& trace, double tau) {
    QuantileSeries series;
    series.tau = tau;
    series.values.reserve(trace.records.size());
    if (trace.header.record_kind == RecordKind::kFullScores) {
        for (std::size_t i = 1; i <= trace.records.size(); ++i) {
            series.values.push_back(quantile(score_row(trace, i), tau));
        }
        return series;
    }
    const auto& levels = trace.header.quantile_levels;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        if (std::abs(levels[l] - tau) <= 1e-9) {
            for (const auto& rec : trace.records) {
                series.values.push_back(rec[l]);
            }
            return series;
        }
    }
    throw InvalidInput("quantile_series: trace has no quantile level " + std::to_string(tau));
}

}  // namespace siftlab
