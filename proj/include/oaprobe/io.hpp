#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "oaprobe/geometry.hpp"
#include "oaprobe/hierarchy.hpp"
#include "oaprobe/metrics.hpp"
#include "oaprobe/microtrain.hpp"
#include "oaprobe/saliency.hpp"
#include "oaprobe/stats.hpp"
#include "oaprobe/synth.hpp"

namespace oaprobe {

inline constexpr const char* kToolVersion = "oaprobe 0.1.0";

using Json = nlohmann::json;

// -------- digests --------
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string digest_hex(std::uint64_t h);  // "fnv1a64:<16 hex digits>"
std::string digest_file(const std::string& path);

// -------- CSV formats --------
// labels: header `subject_id,kl`; OA derived during parse.
std::vector<LabelRecord> parse_labels_csv(const std::string& path);
void write_labels_csv(const std::vector<LabelRecord>& labels,
                      const std::string& path);

// predictions: header `subject_id,p_oa` with an optional
// `p_kl0..p_kl4` block; simplex checked within 1e-6 and renormalized.
PredictionSet parse_predictions_csv(const std::string& path);
void write_predictions_csv(const PredictionSet& preds,
                           const std::string& path);

// embeddings: header `subject_id,e0,...`; ragged rows rejected.
EmbeddingMatrix parse_embeddings_csv(const std::string& path);
void write_embeddings_csv(const EmbeddingMatrix& em, const std::string& path);

// -------- raw volumes with JSON sidecar --------
// Payload at `path` (little-endian f32 or raw bytes for masks), sidecar at
// `path + ".json"`: {"dims":[D,H,W],"dtype":"f32"|"u8","order":"C"}.
void write_volume(const Volume& v, const std::string& path);
Volume read_volume(const std::string& path);
void write_mask(const MaskVolume& m, const std::string& path);
MaskVolume read_mask(const std::string& path);

// -------- manifest and reports --------
struct RunManifest {
    std::string command;
    std::string setting;  // empty when not applicable
    Json config = Json::object();
    std::map<std::string, std::string> input_digests;
    std::string tool_version = kToolVersion;
    std::string run_id;  // content digest, set by finalize()

    void finalize();
};

struct ReportDocument {
    RunManifest manifest;
    Json sections = Json::object();
};

// Writes the structured document at `path` and a human-readable rendering
// at the same path with extension `.txt`. Requires a finalized manifest.
void emit_report(const ReportDocument& doc, const std::string& path);
ReportDocument read_report(const std::string& path);
std::string render_report_text(const ReportDocument& doc);

// -------- report section builders --------
Json metric_report_json(const MetricReport& r);
Json confusion_json(const ConfusionMatrix& cm);
Json mcnemar_json(const McNemarResult& r);
Json diff_json(const DiffResult& r);
Json severity_json(const SeverityAxisReport& r);
Json overlap_json(const OverlapReport& r);

// -------- configs --------
Json synth_config_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const Json& j);  // unknown keys rejected
Json train_config_json(const TrainConfig& cfg);

// -------- model checkpoint --------
// Single JSON document: dims, setting, hyperparameters, and base64-encoded
// little-endian float64 parameter arrays.
struct Checkpoint {
    MicroModel model;
    TrainConfig config;
};

void save_checkpoint(const MicroModel& m, const TrainConfig& cfg,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string base64_encode(const std::uint8_t* data, std::size_t n);
std::vector<std::uint8_t> base64_decode(const std::string& s);

}  // namespace oaprobe
