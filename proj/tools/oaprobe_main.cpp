#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oaprobe/io.hpp"

namespace fs = std::filesystem;
using namespace oaprobe;

namespace {

// labels.csv plus one raw volume per subject, flattened to double vectors
struct LoadedDataset {
    std::vector<LabelRecord> labels;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> xs;
    std::array<std::size_t, 3> dims{};
};

LoadedDataset load_dataset(const std::string& dir) {
    LoadedDataset out;
    out.labels = parse_labels_csv(dir + "/labels.csv");
    bool first = true;
    for (const LabelRecord& r : out.labels) {
        const std::string vpath = dir + "/volumes/" + r.subject_id + ".raw";
        const Volume v = read_volume(vpath);
        if (first) {
            out.dims = v.dims;
            first = false;
        } else if (v.dims != out.dims) {
            throw std::runtime_error(vpath + ": volume dims differ from cohort");
        }
        out.ids.push_back(r.subject_id);
        out.xs.emplace_back(v.data.begin(), v.data.end());
    }
    return out;
}

Json summary_json(const CohortSummary& s) {
    Json j;
    j["grade_counts"] = s.grade_counts;
    j["n_oa_negative"] = s.n_oa_negative;
    j["n_oa_positive"] = s.n_oa_positive;
    return j;
}

void print_seed(std::uint64_t seed) { std::cout << "seed: " << seed << "\n"; }

// ---------------- synth ----------------

int run_synth(const std::string& cfg_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_flag) {
    const Json cfg_json = [&] {
        std::ifstream is(cfg_path);
        if (!is) throw std::runtime_error("cannot open: " + cfg_path);
        try {
            return Json::parse(is);
        } catch (const std::exception& e) {
            throw std::runtime_error(cfg_path + ": invalid JSON: " + e.what());
        }
    }();
    SynthConfig cfg = synth_config_from_json(cfg_json);
    if (seed_flag) cfg.seed = *seed_flag;
    print_seed(cfg.seed);

    const SynthCohort cohort = generate_cohort(cfg);

    fs::create_directories(out_dir + "/train/volumes");
    if (cfg.n_test > 0) fs::create_directories(out_dir + "/test/volumes");
    fs::create_directories(out_dir + "/masks");

    std::vector<LabelRecord> train_labels;
    std::vector<LabelRecord> test_labels;
    std::string truth = "subject_id,split,kl_true,kl_observed\n";
    std::map<std::string, std::string> outputs;

    for (const SynthSubject& s : cohort.subjects) {
        const std::string split = s.is_test ? "test" : "train";
        const std::string rel = split + "/volumes/" + s.id + ".raw";
        write_volume(s.volume, out_dir + "/" + rel);
        outputs[rel] = digest_file(out_dir + "/" + rel);
        (s.is_test ? test_labels : train_labels)
            .emplace_back(s.id, s.kl_observed);
        truth += s.id + "," + split + "," + std::to_string(s.kl_true.value()) +
                 "," + std::to_string(s.kl_observed.value()) + "\n";
    }
    write_labels_csv(train_labels, out_dir + "/train/labels.csv");
    outputs["train/labels.csv"] = digest_file(out_dir + "/train/labels.csv");
    if (!test_labels.empty()) {
        write_labels_csv(test_labels, out_dir + "/test/labels.csv");
        outputs["test/labels.csv"] = digest_file(out_dir + "/test/labels.csv");
    }
    {
        std::ofstream os(out_dir + "/truth.csv", std::ios::binary);
        os << truth;
    }
    outputs["truth.csv"] = digest_file(out_dir + "/truth.csv");
    write_mask(cohort.roi_mask, out_dir + "/masks/roi.raw");
    write_mask(cohort.distractor_mask, out_dir + "/masks/distractor.raw");
    outputs["masks/roi.raw"] = digest_file(out_dir + "/masks/roi.raw");
    outputs["masks/distractor.raw"] =
        digest_file(out_dir + "/masks/distractor.raw");

    RunManifest mf;
    mf.command = "synth";
    mf.config = synth_config_json(cfg);
    mf.input_digests[cfg_path] = digest_file(cfg_path);
    mf.finalize();

    ReportDocument doc;
    doc.manifest = mf;
    Json cohort_section;
    cohort_section["n_train"] = cfg.n_train;
    cohort_section["n_test"] = cfg.n_test;
    if (!train_labels.empty()) {
        cohort_section["train"] = summary_json(summarize_cohort(train_labels));
    }
    if (!test_labels.empty()) {
        cohort_section["test"] = summary_json(summarize_cohort(test_labels));
    }
    doc.sections["cohort"] = cohort_section;
    doc.sections["output_digests"] = outputs;
    emit_report(doc, out_dir + "/manifest.json");
    return 0;
}

// ---------------- train ----------------

int run_train(const std::string& data_dir, const std::string& setting_str,
              const TrainConfig& cfg, const std::string& out_dir) {
    const Setting setting = setting_from_string(setting_str);
    print_seed(cfg.seed);

    const LoadedDataset data = load_dataset(data_dir);
    std::vector<TrainSample> dataset;
    dataset.reserve(data.labels.size());
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        dataset.push_back({data.xs[i], data.labels[i]});
    }

    const TrainResult tr = train(dataset, cfg, setting);

    fs::create_directories(out_dir + "/saliency");
    std::map<std::string, std::string> outputs;

    save_checkpoint(tr.model, cfg, out_dir + "/checkpoint.json");
    outputs["checkpoint.json"] = digest_file(out_dir + "/checkpoint.json");

    const PredictionSet preds = predict(tr.model, data.xs, data.ids);
    write_predictions_csv(preds, out_dir + "/preds.csv");
    outputs["preds.csv"] = digest_file(out_dir + "/preds.csv");

    const EmbeddingMatrix em = embed(tr.model, data.xs, data.ids);
    write_embeddings_csv(em, out_dir + "/embeddings.csv");
    outputs["embeddings.csv"] = digest_file(out_dir + "/embeddings.csv");

    const SaliencyTarget target = tr.model.has_oa_head()
                                      ? SaliencyTarget::oa_pos
                                      : SaliencyTarget::kl_predicted;
    for (std::size_t i = 0; i < data.ids.size(); ++i) {
        const std::vector<double> sal =
            input_saliency(tr.model, data.xs[i], target);
        Volume sv;
        sv.dims = data.dims;
        sv.data.assign(sal.begin(), sal.end());
        const std::string rel = "saliency/" + data.ids[i] + ".raw";
        write_volume(sv, out_dir + "/" + rel);
        outputs[rel] = digest_file(out_dir + "/" + rel);
    }

    RunManifest mf;
    mf.command = "train";
    mf.setting = setting_str;
    mf.config = train_config_json(cfg);
    mf.config["data"] = data_dir;
    mf.config["saliency_target"] =
        target == SaliencyTarget::oa_pos ? "oa_pos" : "kl_predicted";
    mf.input_digests["labels.csv"] = digest_file(data_dir + "/labels.csv");
    for (const std::string& id : data.ids) {
        mf.input_digests["volumes/" + id + ".raw"] =
            digest_file(data_dir + "/volumes/" + id + ".raw");
    }
    mf.finalize();

    ReportDocument doc;
    doc.manifest = mf;
    Json train_section;
    train_section["n_subjects"] = data.ids.size();
    train_section["input_dim"] = tr.model.d;
    train_section["hidden"] = tr.model.h;
    train_section["first_epoch_loss"] = tr.epoch_losses.front();
    train_section["final_epoch_loss"] = tr.epoch_losses.back();
    train_section["loss_history"] = tr.epoch_losses;
    doc.sections["train"] = train_section;
    doc.sections["output_digests"] = outputs;
    emit_report(doc, out_dir + "/report.json");
    return 0;
}

// ---------------- eval ----------------

int run_eval(const std::string& preds_path, const std::string& labels_path,
             const std::string& task, std::uint64_t seed,
             const std::string& out_path) {
    print_seed(seed);
    const std::vector<LabelRecord> labels = parse_labels_csv(labels_path);
    const PredictionSet preds = parse_predictions_csv(preds_path);
    const PredictionSet aligned = align_predictions(preds, labels);

    ReportDocument doc;
    if (task == "oa" || task == "both") {
        doc.sections["oa_metrics"] =
            metric_report_json(evaluate_oa(preds, labels));
        std::vector<int> truth;
        truth.reserve(labels.size());
        for (const LabelRecord& r : labels) truth.push_back(r.oa.value());
        doc.sections["oa_confusion"] = confusion_json(
            confusion_matrix(hard_oa_predictions(aligned.p_oa), truth, 2));
    }
    if (task == "kl" || task == "both") {
        if (!preds.has_kl()) {
            throw std::runtime_error(
                "task " + task + " requires KL probability columns in " +
                preds_path);
        }
        doc.sections["kl_metrics"] =
            metric_report_json(evaluate_kl(preds, labels));
        std::vector<int> truth;
        truth.reserve(labels.size());
        for (const LabelRecord& r : labels) truth.push_back(r.kl.value());
        doc.sections["kl_confusion"] = confusion_json(
            confusion_matrix(hard_kl_predictions(*aligned.p_kl), truth, 5));
    }

    RunManifest mf;
    mf.command = "eval";
    mf.config["task"] = task;
    mf.config["preds"] = preds_path;
    mf.config["labels"] = labels_path;
    mf.config["seed"] = seed;
    mf.input_digests[preds_path] = digest_file(preds_path);
    mf.input_digests[labels_path] = digest_file(labels_path);
    mf.finalize();
    doc.manifest = mf;
    emit_report(doc, out_path);
    return 0;
}

// ---------------- compare ----------------

int run_compare(const std::string& pa_path, const std::string& pb_path,
                const std::string& labels_path, const std::string& task,
                int n_boot, std::uint64_t seed, int threads,
                const std::string& out_path) {
    print_seed(seed);
    const std::vector<LabelRecord> labels = parse_labels_csv(labels_path);
    const PredictionSet preds_a = parse_predictions_csv(pa_path);
    const PredictionSet preds_b = parse_predictions_csv(pb_path);
    const PredictionSet al_a = align_predictions(preds_a, labels);
    const PredictionSet al_b = align_predictions(preds_b, labels);

    ReportDocument doc;
    PairedOutcome outcome;
    std::vector<BootstrapMetric> boot_metrics;
    if (task == "oa") {
        const std::vector<int> ha = hard_oa_predictions(al_a.p_oa);
        const std::vector<int> hb = hard_oa_predictions(al_b.p_oa);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const int y = labels[i].oa.value();
            outcome.correct_a.push_back(ha[i] == y ? 1 : 0);
            outcome.correct_b.push_back(hb[i] == y ? 1 : 0);
        }
        boot_metrics = {BootstrapMetric::oa_auc, BootstrapMetric::oa_f1};
        doc.sections["metrics_a"] =
            metric_report_json(evaluate_oa(preds_a, labels));
        doc.sections["metrics_b"] =
            metric_report_json(evaluate_oa(preds_b, labels));
    } else {
        if (!preds_a.has_kl() || !preds_b.has_kl()) {
            throw std::runtime_error(
                "task kl requires KL probability columns in both prediction "
                "files");
        }
        const std::vector<int> ha = hard_kl_predictions(*al_a.p_kl);
        const std::vector<int> hb = hard_kl_predictions(*al_b.p_kl);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const int y = labels[i].kl.value();
            outcome.correct_a.push_back(ha[i] == y ? 1 : 0);
            outcome.correct_b.push_back(hb[i] == y ? 1 : 0);
        }
        boot_metrics = {BootstrapMetric::kl_macro_auc,
                        BootstrapMetric::kl_macro_f1};
        doc.sections["metrics_a"] =
            metric_report_json(evaluate_kl(preds_a, labels));
        doc.sections["metrics_b"] =
            metric_report_json(evaluate_kl(preds_b, labels));
    }

    doc.sections["mcnemar"] = mcnemar_json(mcnemar_exact(outcome));
    for (BootstrapMetric m : boot_metrics) {
        const DiffResult diff = paired_bootstrap(m, preds_a, preds_b, labels,
                                                 n_boot, seed, threads);
        doc.sections["diff_" + to_string(m)] = diff_json(diff);
    }

    RunManifest mf;
    mf.command = "compare";
    mf.config["task"] = task;
    mf.config["preds_a"] = pa_path;
    mf.config["preds_b"] = pb_path;
    mf.config["labels"] = labels_path;
    mf.config["bootstrap"] = n_boot;
    mf.config["seed"] = seed;
    mf.config["threads"] = threads;
    mf.input_digests[pa_path] = digest_file(pa_path);
    mf.input_digests[pb_path] = digest_file(pb_path);
    mf.input_digests[labels_path] = digest_file(labels_path);
    mf.finalize();
    doc.manifest = mf;
    emit_report(doc, out_path);
    return 0;
}

// ---------------- geometry ----------------

int run_geometry(const std::string& emb_path, const std::string& labels_path,
                 std::uint64_t seed, const std::string& out_path) {
    print_seed(seed);
    const EmbeddingMatrix em = parse_embeddings_csv(emb_path);
    const std::vector<LabelRecord> labels = parse_labels_csv(labels_path);
    const SeverityAxisReport rep = severity_axis_report(em, labels);

    RunManifest mf;
    mf.command = "geometry";
    mf.config["embeddings"] = emb_path;
    mf.config["labels"] = labels_path;
    mf.config["seed"] = seed;
    mf.input_digests[emb_path] = digest_file(emb_path);
    mf.input_digests[labels_path] = digest_file(labels_path);
    mf.finalize();

    ReportDocument doc;
    doc.manifest = mf;
    doc.sections["severity_axis"] = severity_json(rep);
    emit_report(doc, out_path);
    return 0;
}

// ---------------- saliency ----------------

int run_saliency(const std::string& sal_dir, const std::string& mask_path,
                 std::vector<double> qs, std::uint64_t seed,
                 const std::string& out_path) {
    print_seed(seed);
    if (qs.empty()) qs = {5.0, 10.0};
    const MaskVolume mask = read_mask(mask_path);

    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(sal_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".raw") {
            paths.push_back(entry.path().string());
        }
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) {
        throw std::runtime_error("no .raw volumes in " + sal_dir);
    }

    ReportDocument doc;
    Json per_subject = Json::object();
    OverlapReport mean;
    for (double q : qs) mean.dice[q] = 0.0;
    std::map<std::string, std::string> inputs;
    inputs[mask_path] = digest_file(mask_path);
    for (const std::string& p : paths) {
        const Volume v = read_volume(p);
        const OverlapReport rep = overlap_report(v, mask, qs);
        const std::string id = fs::path(p).stem().string();
        per_subject[id] = overlap_json(rep);
        mean.mass_roi += rep.mass_roi;
        mean.top1_roi += rep.top1_roi;
        for (const auto& [q, val] : rep.dice) mean.dice[q] += val;
        inputs[p] = digest_file(p);
    }
    const double inv = 1.0 / static_cast<double>(paths.size());
    mean.mass_roi *= inv;
    mean.top1_roi *= inv;
    for (auto& [q, val] : mean.dice) val *= inv;

    RunManifest mf;
    mf.command = "saliency";
    mf.config["sal"] = sal_dir;
    mf.config["mask"] = mask_path;
    mf.config["q"] = qs;
    mf.config["seed"] = seed;
    mf.input_digests = inputs;
    mf.finalize();

    doc.manifest = mf;
    doc.sections["mean"] = overlap_json(mean);
    doc.sections["n_subjects"] = paths.size();
    doc.sections["per_subject"] = per_subject;
    emit_report(doc, out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical coarse/fine supervision probe"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
    std::string synth_cfg, synth_out;
    std::optional<std::uint64_t> synth_seed;
    synth_cmd->add_option("--config", synth_cfg, "SynthConfig JSON file")
        ->required();
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "override the config seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a micro model");
    std::string train_data, train_setting, train_out;
    TrainConfig tcfg;
    train_cmd->add_option("--data", train_data, "cohort directory")->required();
    train_cmd
        ->add_option("--setting", train_setting,
                     "single_oa | single_kl | dual")
        ->required();
    train_cmd->add_option("--lambda-oa", tcfg.lambda_oa, "OA loss weight");
    train_cmd->add_option("--lambda-kl", tcfg.lambda_kl, "KL loss weight");
    train_cmd->add_option("--epochs", tcfg.epochs, "training epochs");
    train_cmd->add_option("--lr", tcfg.lr, "learning rate");
    train_cmd->add_option("--wd", tcfg.weight_decay, "weight decay");
    train_cmd->add_option("--batch", tcfg.batch_size, "batch size");
    train_cmd->add_option("--hidden", tcfg.hidden, "hidden width");
    train_cmd->add_option("--seed", tcfg.seed, "training seed");
    train_cmd->add_option("--out", train_out, "output directory")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate predictions");
    std::string eval_preds, eval_labels, eval_task = "both", eval_out;
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--preds", eval_preds, "predictions CSV")->required();
    eval_cmd->add_option("--labels", eval_labels, "labels CSV")->required();
    eval_cmd->add_option("--task", eval_task, "oa | kl | both")
        ->check(CLI::IsMember({"oa", "kl", "both"}));
    eval_cmd->add_option("--seed", eval_seed, "echoed in the manifest");
    eval_cmd->add_option("-o,--out", eval_out, "report path")->required();

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "compare two models");
    std::string cmp_a, cmp_b, cmp_labels, cmp_task, cmp_out;
    int cmp_boot = kDefaultBootstrapReplicates;
    std::uint64_t cmp_seed = 0;
    int cmp_threads = 1;
    cmp_cmd->add_option("--preds-a", cmp_a, "predictions CSV A")->required();
    cmp_cmd->add_option("--preds-b", cmp_b, "predictions CSV B")->required();
    cmp_cmd->add_option("--labels", cmp_labels, "labels CSV")->required();
    cmp_cmd->add_option("--task", cmp_task, "oa | kl")
        ->required()
        ->check(CLI::IsMember({"oa", "kl"}));
    cmp_cmd->add_option("--bootstrap", cmp_boot, "bootstrap replicates");
    cmp_cmd->add_option("--seed", cmp_seed, "bootstrap seed");
    cmp_cmd->add_option("--threads", cmp_threads, "bootstrap executors");
    cmp_cmd->add_option("-o,--out", cmp_out, "report path")->required();

    // geometry
    auto* geo_cmd = app.add_subcommand("geometry", "severity-axis analysis");
    std::string geo_emb, geo_labels, geo_out;
    std::uint64_t geo_seed = 0;
    geo_cmd->add_option("--embeddings", geo_emb, "embeddings CSV")->required();
    geo_cmd->add_option("--labels", geo_labels, "labels CSV")->required();
    geo_cmd->add_option("--seed", geo_seed, "echoed in the manifest");
    geo_cmd->add_option("-o,--out", geo_out, "report path")->required();

    // saliency
    auto* sal_cmd = app.add_subcommand("saliency", "saliency-ROI overlap");
    std::string sal_dir, sal_mask, sal_out;
    std::vector<double> sal_qs;
    std::uint64_t sal_seed = 0;
    sal_cmd->add_option("--sal", sal_dir, "directory of saliency volumes")
        ->required();
    sal_cmd->add_option("--mask", sal_mask, "ROI mask volume")->required();
    sal_cmd->add_option("--q", sal_qs, "top-q percentages")->delimiter(',');
    sal_cmd->add_option("--seed", sal_seed, "echoed in the manifest");
    sal_cmd->add_option("-o,--out", sal_out, "report path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth_cmd->parsed()) {
            return run_synth(synth_cfg, synth_out, synth_seed);
        }
        if (train_cmd->parsed()) {
            return run_train(train_data, train_setting, tcfg, train_out);
        }
        if (eval_cmd->parsed()) {
            return run_eval(eval_preds, eval_labels, eval_task, eval_seed,
                            eval_out);
        }
        if (cmp_cmd->parsed()) {
            return run_compare(cmp_a, cmp_b, cmp_labels, cmp_task, cmp_boot,
                               cmp_seed, cmp_threads, cmp_out);
        }
        if (geo_cmd->parsed()) {
            return run_geometry(geo_emb, geo_labels, geo_seed, geo_out);
        }
        if (sal_cmd->parsed()) {
            return run_saliency(sal_dir, sal_mask, sal_qs, sal_seed, sal_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
