#pragma once

#include "siftlab/powerlaw.hpp"
#include "siftlab/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace siftlab {

enum class RecordKind { kFullScores, kQuantiles };

std::string to_string(RecordKind kind);
RecordKind record_kind_from_string(const std::string& text);

struct TraceHeader {
    std::string model_name;
    std::string dataset;
    std::uint64_t prompt_id = 0;
    std::uint64_t layer = 0;
    std::uint64_t head = 0;
    std::uint64_t num_steps = 0;
    RecordKind record_kind = RecordKind::kFullScores;
    std::vector<double> quantile_levels;  // QUANTILES only
    std::string score_precision = "f32";
    /// Header keys this reader does not know, carried through unchanged.
    nlohmann::json extra = nlohmann::json::object();
};

/// One record per decode step: a score row of length i at step i
/// (FULL_SCORES), or one value per quantile level (QUANTILES).
struct AttentionTrace {
    TraceHeader header;
    std::vector<std::vector<float>> records;
};

inline constexpr char kTraceMagic[8] = {'S', 'I', 'F', 'T', 'T', 'R', 'C', '1'};
inline constexpr std::uint32_t kTraceVersion = 1;
/// Ingested FULL_SCORES rows must sum to 1 within this.
inline constexpr double kRowSumTolerance = 1e-3;

/// Throws InvalidInput naming the first offending step.
void validate_trace(const AttentionTrace& trace);

/// Compact JSON with sorted keys; the exact bytes written after the length prefix.
std::string encode_header(const TraceHeader& header);

std::vector<std::uint8_t> serialize_trace(const AttentionTrace& trace);
AttentionTrace parse_trace(const std::vector<std::uint8_t>& bytes);

void write_trace(const AttentionTrace& trace, const std::filesystem::path& path);
AttentionTrace read_trace(const std::filesystem::path& path);

/// Score row of a FULL_SCORES trace at 1-based `step`, widened to double.
ScoreRow score_row(const AttentionTrace& trace, std::size_t step);

/// theta_{i,tau} for every step: recomputed from FULL_SCORES rows, or picked
/// from the matching QUANTILES level.
QuantileSeries quantile_series(const AttentionTrace& trace, double tau);

}  // namespace siftlab
