#include "oaprobe/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace oaprobe {

// -------------------- small file / string helpers --------------------

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << content;
    if (!os) throw std::runtime_error("write failed: " + path);
}

// Lines split on LF with a trailing CR stripped (CRLF tolerated).
std::vector<std::string> read_lines(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        std::string line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = end + 1;
    }
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

[[noreturn]] void fail_at(const std::string& path, std::size_t line_no,
                          const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                             what);
}

int parse_int_strict(const std::string& s, const std::string& path,
                     std::size_t line_no) {
    int value = 0;
    const auto [ptr, ec] =
        std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        fail_at(path, line_no, "not an integer: `" + s + "`");
    }
    return value;
}

double parse_double_strict(const std::string& s, const std::string& path,
                           std::size_t line_no) {
    double value = 0.0;
    const auto [ptr, ec] =
        std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() ||
        !std::isfinite(value)) {
        fail_at(path, line_no, "not a finite number: `" + s + "`");
    }
    return value;
}

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

Json parse_json_file(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return Json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": invalid JSON: " + e.what());
    }
}

std::string task_name(Task t) { return t == Task::oa ? "oa" : "kl"; }

}  // namespace

// -------------------- digests --------------------

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::string digest_hex(std::uint64_t h) { return "fnv1a64:" + hex16(h); }

std::string digest_file(const std::string& path) {
    const std::string bytes = read_file(path);
    return digest_hex(fnv1a64(bytes.data(), bytes.size()));
}

// -------------------- labels CSV --------------------

std::vector<LabelRecord> parse_labels_csv(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty() || lines[0] != "subject_id,kl") {
        throw std::runtime_error(path + ":1: expected header `subject_id,kl`");
    }
    std::vector<LabelRecord> records;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (lines[i].empty()) continue;
        const std::vector<std::string> fields = split_csv(lines[i]);
        if (fields.size() != 2) {
            fail_at(path, line_no, "expected 2 fields, got " +
                                       std::to_string(fields.size()));
        }
        const int grade = parse_int_strict(fields[1], path, line_no);
        try {
            records.emplace_back(fields[0], KlGrade(grade));
        } catch (const std::invalid_argument& e) {
            fail_at(path, line_no, e.what());
        }
        if (!seen.insert(fields[0]).second) {
            fail_at(path, line_no, "duplicate subject_id `" + fields[0] + "`");
        }
    }
    if (records.empty()) {
        throw std::runtime_error(path + ": empty cohort");
    }
    return records;
}

void write_labels_csv(const std::vector<LabelRecord>& labels,
                      const std::string& path) {
    std::string out = "subject_id,kl\n";
    for (const LabelRecord& r : labels) {
        out += r.subject_id + "," + std::to_string(r.kl.value()) + "\n";
    }
    write_file(path, out);
}

// -------------------- predictions CSV --------------------

PredictionSet parse_predictions_csv(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    const std::string oa_header = "subject_id,p_oa";
    const std::string kl_header =
        "subject_id,p_oa,p_kl0,p_kl1,p_kl2,p_kl3,p_kl4";
    if (lines.empty() || (lines[0] != oa_header && lines[0] != kl_header)) {
        throw std::runtime_error(
            path + ":1: expected header `" + oa_header + "` or `" + kl_header +
            "`");
    }
    const bool with_kl = lines[0] == kl_header;
    PredictionSet preds;
    if (with_kl) preds.p_kl.emplace();
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (lines[i].empty()) continue;
        const std::vector<std::string> fields = split_csv(lines[i]);
        const std::size_t want = with_kl ? 7 : 2;
        if (fields.size() != want) {
            fail_at(path, line_no, "expected " + std::to_string(want) +
                                       " fields, got " +
                                       std::to_string(fields.size()));
        }
        if (fields[0].empty()) fail_at(path, line_no, "empty subject_id");
        if (!seen.insert(fields[0]).second) {
            fail_at(path, line_no, "duplicate subject_id `" + fields[0] + "`");
        }
        const double p_oa = parse_double_strict(fields[1], path, line_no);
        if (p_oa < 0.0 || p_oa > 1.0) {
            fail_at(path, line_no, "p_oa outside [0,1]");
        }
        preds.subject_ids.push_back(fields[0]);
        preds.p_oa.push_back(p_oa);
        if (with_kl) {
            std::array<double, 5> p{};
            for (std::size_t k = 0; k < 5; ++k) {
                p[k] = parse_double_strict(fields[2 + k], path, line_no);
            }
            try {
                preds.p_kl->emplace_back(p);
            } catch (const std::invalid_argument& e) {
                fail_at(path, line_no, e.what());
            }
        }
    }
    if (preds.subject_ids.empty()) {
        throw std::runtime_error(path + ": empty prediction set");
    }
    preds.validate();
    return preds;
}

void write_predictions_csv(const PredictionSet& preds,
                           const std::string& path) {
    preds.validate();
    std::string out = preds.has_kl()
                          ? "subject_id,p_oa,p_kl0,p_kl1,p_kl2,p_kl3,p_kl4\n"
                          : "subject_id,p_oa\n";
    for (std::size_t i = 0; i < preds.subject_ids.size(); ++i) {
        out += preds.subject_ids[i] + "," + fmt17(preds.p_oa[i]);
        if (preds.has_kl()) {
            const KlProbVector& p = (*preds.p_kl)[i];
            for (int k = 0; k < 5; ++k) out += "," + fmt17(p[k]);
        }
        out += "\n";
    }
    write_file(path, out);
}

// -------------------- embeddings CSV --------------------

EmbeddingMatrix parse_embeddings_csv(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ":1: missing header");
    const std::vector<std::string> head = split_csv(lines[0]);
    if (head.size() < 2 || head[0] != "subject_id") {
        throw std::runtime_error(path +
                                 ":1: expected header `subject_id,e0,...`");
    }
    for (std::size_t c = 1; c < head.size(); ++c) {
        if (head[c] != "e" + std::to_string(c - 1)) {
            throw std::runtime_error(path + ":1: bad embedding column `" +
                                     head[c] + "`");
        }
    }
    EmbeddingMatrix em;
    em.n_cols = head.size() - 1;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (lines[i].empty()) continue;
        const std::vector<std::string> fields = split_csv(lines[i]);
        if (fields.size() != head.size()) {
            fail_at(path, line_no, "expected " + std::to_string(head.size()) +
                                       " fields, got " +
                                       std::to_string(fields.size()));
        }
        if (fields[0].empty()) fail_at(path, line_no, "empty subject_id");
        if (!seen.insert(fields[0]).second) {
            fail_at(path, line_no, "duplicate subject_id `" + fields[0] + "`");
        }
        em.subject_ids.push_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            em.data.push_back(parse_double_strict(fields[c], path, line_no));
        }
    }
    em.n_rows = em.subject_ids.size();
    if (em.n_rows == 0) throw std::runtime_error(path + ": empty embeddings");
    return em;
}

void write_embeddings_csv(const EmbeddingMatrix& em, const std::string& path) {
    std::string out = "subject_id";
    for (std::size_t c = 0; c < em.n_cols; ++c) {
        out += ",e" + std::to_string(c);
    }
    out += "\n";
    for (std::size_t r = 0; r < em.n_rows; ++r) {
        out += em.subject_ids[r];
        for (std::size_t c = 0; c < em.n_cols; ++c) {
            out += "," + fmt17(em.at(r, c));
        }
        out += "\n";
    }
    write_file(path, out);
}

// -------------------- raw volumes --------------------

namespace {

Json sidecar_for(const std::array<std::size_t, 3>& dims, const char* dtype) {
    Json j;
    j["dims"] = dims;
    j["dtype"] = dtype;
    j["order"] = "C";
    return j;
}

std::array<std::size_t, 3> read_sidecar(const std::string& path,
                                        const std::string& want_dtype) {
    const std::string sc_path = path + ".json";
    const Json j = parse_json_file(sc_path);
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3) {
        throw std::runtime_error(sc_path + ": dims must be a 3-array");
    }
    const std::string dtype = j.value("dtype", "");
    if (dtype != want_dtype) {
        throw std::runtime_error(sc_path + ": unknown dtype `" + dtype +
                                 "` (expected " + want_dtype + ")");
    }
    if (j.value("order", "") != "C") {
        throw std::runtime_error(sc_path + ": only C order is supported");
    }
    std::array<std::size_t, 3> dims{};
    for (std::size_t ax = 0; ax < 3; ++ax) {
        const auto v = j["dims"][ax].get<std::int64_t>();
        if (v < 1) throw std::runtime_error(sc_path + ": dims must be >= 1");
        dims[ax] = static_cast<std::size_t>(v);
    }
    return dims;
}

}  // namespace

void write_volume(const Volume& v, const std::string& path) {
    v.validate();
    std::string bytes;
    bytes.reserve(v.data.size() * 4);
    for (float f : v.data) {
        const auto u = std::bit_cast<std::uint32_t>(f);
        for (int s = 0; s < 32; s += 8) {
            bytes.push_back(static_cast<char>((u >> s) & 0xFF));
        }
    }
    write_file(path, bytes);
    write_file(path + ".json", sidecar_for(v.dims, "f32").dump(2) + "\n");
}

Volume read_volume(const std::string& path) {
    Volume v;
    v.dims = read_sidecar(path, "f32");
    const std::string bytes = read_file(path);
    const std::size_t expected = v.voxel_count() * 4;
    if (bytes.size() != expected) {
        throw std::runtime_error(
            path + ": payload is " + std::to_string(bytes.size()) +
            " bytes but dims imply " + std::to_string(expected));
    }
    v.data.resize(v.voxel_count());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        std::uint32_t u = 0;
        for (int s = 0; s < 4; ++s) {
            u |= static_cast<std::uint32_t>(
                     static_cast<std::uint8_t>(bytes[i * 4 +
                                                     static_cast<std::size_t>(s)]))
                 << (8 * s);
        }
        v.data[i] = std::bit_cast<float>(u);
    }
    return v;
}

void write_mask(const MaskVolume& m, const std::string& path) {
    m.validate();
    std::string bytes(m.data.begin(), m.data.end());
    write_file(path, bytes);
    write_file(path + ".json", sidecar_for(m.dims, "u8").dump(2) + "\n");
}

MaskVolume read_mask(const std::string& path) {
    MaskVolume m;
    m.dims = read_sidecar(path, "u8");
    const std::string bytes = read_file(path);
    if (bytes.size() != m.voxel_count()) {
        throw std::runtime_error(
            path + ": payload is " + std::to_string(bytes.size()) +
            " bytes but dims imply " + std::to_string(m.voxel_count()));
    }
    m.data.assign(bytes.begin(), bytes.end());
    for (std::uint8_t b : m.data) {
        if (b > 1) throw std::runtime_error(path + ": non-binary mask");
    }
    return m;
}

// -------------------- manifest and reports --------------------

namespace {

Json manifest_json(const RunManifest& mf) {
    Json j;
    j["command"] = mf.command;
    j["setting"] = mf.setting;
    j["config"] = mf.config;
    j["input_digests"] = mf.input_digests;
    j["tool_version"] = mf.tool_version;
    j["run_id"] = mf.run_id;
    return j;
}

std::string report_txt_path(const std::string& path) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        return path.substr(0, path.size() - 5) + ".txt";
    }
    return path + ".txt";
}

void render_flat(const Json& j, const std::string& prefix, std::string& out) {
    for (const auto& [key, value] : j.items()) {
        const std::string full = prefix.empty() ? key : prefix + "." + key;
        if (value.is_object()) {
            render_flat(value, full, out);
        } else {
            out += full + " = " + value.dump() + "\n";
        }
    }
}

}  // namespace

void RunManifest::finalize() {
    Json j;
    j["command"] = command;
    j["setting"] = setting;
    j["config"] = config;
    j["input_digests"] = input_digests;
    j["tool_version"] = tool_version;
    const std::string canon = j.dump();
    run_id = hex16(fnv1a64(canon.data(), canon.size()));
}

std::string render_report_text(const ReportDocument& doc) {
    std::string out = "oaprobe report\n";
    out += "run_id: " + doc.manifest.run_id + "\n";
    out += "command: " + doc.manifest.command + "\n";
    if (!doc.manifest.setting.empty()) {
        out += "setting: " + doc.manifest.setting + "\n";
    }
    out += "tool_version: " + doc.manifest.tool_version + "\n";
    for (const auto& [name, section] : doc.sections.items()) {
        out += "\n[" + name + "]\n";
        if (section.is_object()) {
            render_flat(section, "", out);
        } else {
            out += name + " = " + section.dump() + "\n";
        }
    }
    return out;
}

void emit_report(const ReportDocument& doc, const std::string& path) {
    if (doc.manifest.run_id.empty() || doc.manifest.tool_version.empty()) {
        throw std::invalid_argument("report manifest missing or not finalized");
    }
    Json j;
    j["manifest"] = manifest_json(doc.manifest);
    j["results"] = doc.sections;
    write_file(path, j.dump(2) + "\n");
    write_file(report_txt_path(path), render_report_text(doc));
}

ReportDocument read_report(const std::string& path) {
    const Json j = parse_json_file(path);
    if (!j.contains("manifest") || !j.contains("results")) {
        throw std::runtime_error(path + ": not a report document");
    }
    ReportDocument doc;
    const Json& mf = j["manifest"];
    doc.manifest.command = mf.at("command").get<std::string>();
    doc.manifest.setting = mf.value("setting", "");
    doc.manifest.config = mf.at("config");
    doc.manifest.input_digests =
        mf.at("input_digests").get<std::map<std::string, std::string>>();
    doc.manifest.tool_version = mf.at("tool_version").get<std::string>();
    doc.manifest.run_id = mf.at("run_id").get<std::string>();
    doc.sections = j["results"];
    return doc;
}

// -------------------- report sections --------------------

Json metric_report_json(const MetricReport& r) {
    Json j;
    j["task"] = task_name(r.task);
    j["auc"] = r.auc;
    j["acc"] = r.acc;
    j["f1"] = r.f1;
    if (r.per_class_f1) j["per_class_f1"] = *r.per_class_f1;
    j["skipped_classes"] = r.skipped_classes;
    return j;
}

Json confusion_json(const ConfusionMatrix& cm) {
    Json rows = Json::array();
    for (int t = 0; t < cm.n_classes; ++t) {
        Json row = Json::array();
        for (int p = 0; p < cm.n_classes; ++p) row.push_back(cm.at(t, p));
        rows.push_back(std::move(row));
    }
    Json j;
    j["n_classes"] = cm.n_classes;
    j["counts"] = rows;
    return j;
}

Json mcnemar_json(const McNemarResult& r) {
    Json j;
    j["b"] = r.b;
    j["c"] = r.c;
    j["p_value"] = r.p_value;
    return j;
}

Json diff_json(const DiffResult& r) {
    Json j;
    j["mean_diff"] = r.mean_diff;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    j["p_value"] = r.p_value;
    j["n_replicates_used"] = r.n_replicates_used;
    j["n_discarded"] = r.n_discarded;
    return j;
}

Json severity_json(const SeverityAxisReport& r) {
    Json j;
    j["evr_pc1"] = r.evr_pc1;
    j["rho_pc1_kl"] = r.rho_pc1_kl;
    j["rho_pc1_oa"] = r.rho_pc1_oa;
    j["auroc_oa_probe"] = r.auroc_oa_probe;
    j["rho_k_dadj"] = r.rho_k_dadj;
    j["adj_distances"] = r.adj_distances;
    j["classes_present"] = r.classes_present;
    return j;
}

namespace {

std::string q_key(double q) {
    if (q == std::floor(q) && std::abs(q) < 1e15) {
        return std::to_string(static_cast<long long>(q));
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", q);
    return buf;
}

}  // namespace

Json overlap_json(const OverlapReport& r) {
    Json dice = Json::object();
    for (const auto& [q, v] : r.dice) dice[q_key(q)] = v;
    Json j;
    j["mass_roi"] = r.mass_roi;
    j["top1_roi"] = r.top1_roi;
    j["dice"] = dice;
    return j;
}

// -------------------- configs --------------------

namespace {

Json box_json(const Box& b) {
    Json j;
    j["lo"] = b.lo;
    j["hi"] = b.hi;
    return j;
}

Box box_from_json(const Json& j, const std::string& name) {
    if (!j.is_object() || !j.contains("lo") || !j.contains("hi")) {
        throw std::runtime_error(name + " box needs `lo` and `hi` arrays");
    }
    Box b;
    for (std::size_t ax = 0; ax < 3; ++ax) {
        const auto lo = j["lo"].at(ax).get<std::int64_t>();
        const auto hi = j["hi"].at(ax).get<std::int64_t>();
        if (lo < 0 || hi < 0) {
            throw std::runtime_error(name + " box must be nonnegative");
        }
        b.lo[ax] = static_cast<std::size_t>(lo);
        b.hi[ax] = static_cast<std::size_t>(hi);
    }
    return b;
}

}  // namespace

Json synth_config_json(const SynthConfig& cfg) {
    Json j;
    j["n_train"] = cfg.n_train;
    j["n_test"] = cfg.n_test;
    j["dims"] = cfg.dims;
    j["grade_probs"] = cfg.grade_probs;
    j["roi"] = box_json(cfg.roi);
    j["distractor"] = box_json(cfg.distractor);
    j["severity_gain"] = cfg.severity_gain;
    j["distractor_gain"] = cfg.distractor_gain;
    j["noise_sd"] = cfg.noise_sd;
    j["label_flip_rate"] = cfg.label_flip_rate;
    j["noise_train_only"] = cfg.noise_train_only;
    j["seed"] = cfg.seed;
    return j;
}

SynthConfig synth_config_from_json(const Json& j) {
    SynthConfig cfg;
    if (!j.is_object()) {
        throw std::runtime_error("synth config must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "n_train") {
            cfg.n_train = value.get<int>();
        } else if (key == "n_test") {
            cfg.n_test = value.get<int>();
        } else if (key == "dims") {
            for (std::size_t ax = 0; ax < 3; ++ax) {
                cfg.dims[ax] = value.at(ax).get<std::size_t>();
            }
        } else if (key == "grade_probs") {
            for (std::size_t k = 0; k < 5; ++k) {
                cfg.grade_probs[k] = value.at(k).get<double>();
            }
        } else if (key == "roi") {
            cfg.roi = box_from_json(value, "roi");
        } else if (key == "distractor") {
            cfg.distractor = box_from_json(value, "distractor");
        } else if (key == "severity_gain") {
            cfg.severity_gain = value.get<double>();
        } else if (key == "distractor_gain") {
            cfg.distractor_gain = value.get<double>();
        } else if (key == "noise_sd") {
            cfg.noise_sd = value.get<double>();
        } else if (key == "label_flip_rate") {
            cfg.label_flip_rate = value.get<double>();
        } else if (key == "noise_train_only") {
            cfg.noise_train_only = value.get<bool>();
        } else if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else {
            throw std::runtime_error("unknown synth config key `" + key + "`");
        }
    }
    return cfg;
}

Json train_config_json(const TrainConfig& cfg) {
    Json j;
    j["lambda_oa"] = cfg.lambda_oa;
    j["lambda_kl"] = cfg.lambda_kl;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["hidden"] = cfg.hidden;
    j["seed"] = cfg.seed;
    return j;
}

namespace {

TrainConfig train_config_from_json(const Json& j) {
    TrainConfig cfg;
    cfg.lambda_oa = j.at("lambda_oa").get<double>();
    cfg.lambda_kl = j.at("lambda_kl").get<double>();
    cfg.lr = j.at("lr").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}  // namespace

// -------------------- base64 --------------------

namespace {

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(const std::uint8_t* data, std::size_t n) {
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= n; i += 3) {
        const std::uint32_t v = (static_cast<std::uint32_t>(data[i]) << 16) |
                                (static_cast<std::uint32_t>(data[i + 1]) << 8) |
                                data[i + 2];
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back(kB64Alphabet[v & 63]);
    }
    if (i + 1 == n) {
        const std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16;
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (i + 2 == n) {
        const std::uint32_t v = (static_cast<std::uint32_t>(data[i]) << 16) |
                                (static_cast<std::uint32_t>(data[i + 1]) << 8);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& s) {
    if (s.size() % 4 != 0) {
        throw std::invalid_argument("base64 length must be a multiple of 4");
    }
    std::array<std::int8_t, 256> lut;
    lut.fill(-1);
    for (int i = 0; i < 64; ++i) {
        lut[static_cast<std::size_t>(
            static_cast<unsigned char>(kB64Alphabet[i]))] =
            static_cast<std::int8_t>(i);
    }
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int pad = 0;
        std::uint32_t v = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = s[i + k];
            if (c == '=') {
                if (i + 4 != s.size() || k < 2) {
                    throw std::invalid_argument("bad base64 padding");
                }
                ++pad;
                v <<= 6;
                continue;
            }
            if (pad > 0) throw std::invalid_argument("bad base64 padding");
            const std::int8_t d =
                lut[static_cast<std::size_t>(static_cast<unsigned char>(c))];
            if (d < 0) throw std::invalid_argument("invalid base64 character");
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    }
    return out;
}

// -------------------- checkpoint --------------------

namespace {

std::string doubles_b64(const double* v, std::size_t n) {
    std::vector<std::uint8_t> bytes(n * 8);
    for (std::size_t i = 0; i < n; ++i) {
        const auto u = std::bit_cast<std::uint64_t>(v[i]);
        for (int s = 0; s < 8; ++s) {
            bytes[i * 8 + static_cast<std::size_t>(s)] =
                static_cast<std::uint8_t>((u >> (8 * s)) & 0xFF);
        }
    }
    return base64_encode(bytes.data(), bytes.size());
}

std::vector<double> b64_doubles(const std::string& s, std::size_t expected,
                                const std::string& name) {
    const std::vector<std::uint8_t> bytes = base64_decode(s);
    if (bytes.size() != expected * 8) {
        throw std::runtime_error("checkpoint array `" + name +
                                 "` has wrong length");
    }
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint64_t u = 0;
        for (int sh = 0; sh < 8; ++sh) {
            u |= static_cast<std::uint64_t>(
                     bytes[i * 8 + static_cast<std::size_t>(sh)])
                 << (8 * sh);
        }
        out[i] = std::bit_cast<double>(u);
    }
    return out;
}

constexpr const char* kCheckpointFormat = "oaprobe-checkpoint-v1";

}  // namespace

void save_checkpoint(const MicroModel& m, const TrainConfig& cfg,
                     const std::string& path) {
    m.validate();
    Json params;
    params["w_enc"] = doubles_b64(m.w_enc.data(), m.w_enc.size());
    params["b_enc"] = doubles_b64(m.b_enc.data(), m.b_enc.size());
    if (m.has_oa_head()) {
        params["w_oa"] = doubles_b64(m.w_oa.data(), m.w_oa.size());
        params["b_oa"] = doubles_b64(&m.b_oa, 1);
    }
    if (m.has_kl_head()) {
        params["w_kl"] = doubles_b64(m.w_kl.data(), m.w_kl.size());
        params["b_kl"] = doubles_b64(m.b_kl.data(), m.b_kl.size());
    }
    Json j;
    j["format"] = kCheckpointFormat;
    j["setting"] = to_string(m.setting);
    j["d"] = m.d;
    j["h"] = m.h;
    j["train_config"] = train_config_json(cfg);
    j["params"] = params;
    write_file(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
    const Json j = parse_json_file(path);
    if (j.value("format", "") != kCheckpointFormat) {
        throw std::runtime_error(path + ": not an oaprobe checkpoint");
    }
    Checkpoint ck;
    ck.model.setting = setting_from_string(j.at("setting").get<std::string>());
    ck.model.d = j.at("d").get<std::size_t>();
    ck.model.h = j.at("h").get<std::size_t>();
    ck.config = train_config_from_json(j.at("train_config"));
    const Json& params = j.at("params");
    const std::size_t d = ck.model.d;
    const std::size_t h = ck.model.h;
    ck.model.w_enc =
        b64_doubles(params.at("w_enc").get<std::string>(), h * d, "w_enc");
    ck.model.b_enc =
        b64_doubles(params.at("b_enc").get<std::string>(), h, "b_enc");
    if (ck.model.setting != Setting::single_kl) {
        ck.model.w_oa =
            b64_doubles(params.at("w_oa").get<std::string>(), h, "w_oa");
        ck.model.b_oa =
            b64_doubles(params.at("b_oa").get<std::string>(), 1, "b_oa")[0];
    }
    if (ck.model.setting != Setting::single_oa) {
        ck.model.w_kl =
            b64_doubles(params.at("w_kl").get<std::string>(), 5 * h, "w_kl");
        ck.model.b_kl =
            b64_doubles(params.at("b_kl").get<std::string>(), 5, "b_kl");
    }
    ck.model.validate();
    return ck;
}

}  // namespace oaprobe
