#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oaprobe/io.hpp"
#include "oaprobe/rng.hpp"

using namespace oaprobe;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    const fs::path dir = fs::temp_directory_path() / "oaprobe_io_tests";
    fs::create_directories(dir);
    return dir;
}

std::string tmp_path(const std::string& name) { return (tmp_dir() / name).string(); }

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("fnv1a64 known vectors") {
    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
    CHECK(digest_hex(0xcbf29ce484222325ULL) == "fnv1a64:cbf29ce484222325");

    const std::string p = tmp_path("digest.bin");
    write_text(p, "foobar");
    CHECK(digest_file(p) == "fnv1a64:85944171f73967e8");
    CHECK_THROWS_AS(digest_file(tmp_path("no_such_file.bin")), std::runtime_error);
}

TEST_CASE("base64 known values and round trips") {
    const std::string man = "Man";
    CHECK(base64_encode(reinterpret_cast<const std::uint8_t*>(man.data()), 3) ==
          "TWFu");
    CHECK(base64_encode(reinterpret_cast<const std::uint8_t*>(man.data()), 2) ==
          "TWE=");
    CHECK(base64_encode(reinterpret_cast<const std::uint8_t*>(man.data()), 1) ==
          "TQ==");
    CHECK(base64_encode(nullptr, 0) == "");

    Rng rng(987);
    for (std::size_t n = 0; n <= 17; ++n) {
        std::vector<std::uint8_t> bytes(n);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.next_below(256));
        const std::string enc = base64_encode(bytes.data(), bytes.size());
        CHECK(base64_decode(enc) == bytes);
    }
    CHECK_THROWS_AS(base64_decode("TWF!"), std::invalid_argument);
    CHECK_THROWS_AS(base64_decode("TWFuA"), std::invalid_argument);  // bad length
}

TEST_CASE("labels csv round trip") {
    std::vector<LabelRecord> labels = {LabelRecord("s01", KlGrade(0)),
                                       LabelRecord("s02", KlGrade(2)),
                                       LabelRecord("s03", KlGrade(4))};
    const std::string p = tmp_path("labels.csv");
    write_labels_csv(labels, p);
    const auto parsed = parse_labels_csv(p);
    REQUIRE(parsed.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(parsed[i].subject_id == labels[i].subject_id);
        CHECK(parsed[i].kl == labels[i].kl);
        CHECK(parsed[i].oa == labels[i].oa);
    }
}

TEST_CASE("labels csv tolerates crlf and blank lines") {
    const std::string p = tmp_path("labels_crlf.csv");
    write_text(p, "subject_id,kl\r\ns1,0\r\n\r\ns2,3\r\n");
    const auto parsed = parse_labels_csv(p);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].subject_id == "s1");
    CHECK(parsed[1].kl.value() == 3);
    CHECK(parsed[1].oa.value() == 1);
}

TEST_CASE("labels csv parse errors carry 1-based line numbers") {
    const std::string p = tmp_path("labels_bad.csv");
    write_text(p, "subject_id,kl\ns1,0\ns2,7\n");
    CHECK_THROWS_WITH_AS(parse_labels_csv(p), doctest::Contains(":3:"),
                         std::runtime_error);

    write_text(p, "id,kl\ns1,0\n");
    CHECK_THROWS_WITH_AS(parse_labels_csv(p), doctest::Contains(":1:"),
                         std::runtime_error);

    write_text(p, "subject_id,kl\ns1,0\ns1,1\n");
    CHECK_THROWS_WITH_AS(parse_labels_csv(p), doctest::Contains("duplicate"),
                         std::runtime_error);

    write_text(p, "subject_id,kl\ns1,not_a_number\n");
    CHECK_THROWS_WITH_AS(parse_labels_csv(p), doctest::Contains(":2:"),
                         std::runtime_error);

    write_text(p, "subject_id,kl\n\n");
    CHECK_THROWS_WITH_AS(parse_labels_csv(p), doctest::Contains("empty cohort"),
                         std::runtime_error);
}

TEST_CASE("predictions csv round trips exactly") {
    PredictionSet preds;
    preds.subject_ids = {"a", "b", "c"};
    preds.p_oa = {1.0 / 3.0, 0.1, 0.9999999999999999};
    const std::string p = tmp_path("preds.csv");
    write_predictions_csv(preds, p);
    const PredictionSet parsed = parse_predictions_csv(p);
    CHECK(parsed.subject_ids == preds.subject_ids);
    CHECK(parsed.p_oa == preds.p_oa);  // %.17g is lossless for doubles
    CHECK_FALSE(parsed.has_kl());

    // with a kl block; dyadic probabilities survive bit-exactly
    preds.p_kl = std::vector<KlProbVector>{
        KlProbVector({0.25, 0.25, 0.25, 0.125, 0.125}),
        KlProbVector({0.5, 0.25, 0.125, 0.0625, 0.0625}),
        KlProbVector({0.2, 0.2, 0.2, 0.2, 0.2}),
    };
    write_predictions_csv(preds, p);
    const PredictionSet parsed2 = parse_predictions_csv(p);
    REQUIRE(parsed2.has_kl());
    for (std::size_t i = 0; i < 3; ++i) {
        for (int c = 0; c < 5; ++c) {
            CHECK((*parsed2.p_kl)[i][c] ==
                  doctest::Approx((*preds.p_kl)[i][c]).epsilon(1e-15));
        }
    }
    CHECK((*parsed2.p_kl)[0][3] == 0.125);
}

TEST_CASE("predictions csv rejects malformed input") {
    const std::string p = tmp_path("preds_bad.csv");
    write_text(p, "subject,p\na,0.5\n");
    CHECK_THROWS_WITH_AS(parse_predictions_csv(p), doctest::Contains(":1:"),
                         std::runtime_error);

    write_text(p, "subject_id,p_oa\na,1.5\n");
    CHECK_THROWS_WITH_AS(parse_predictions_csv(p), doctest::Contains("p_oa"),
                         std::runtime_error);

    write_text(p,
               "subject_id,p_oa,p_kl0,p_kl1,p_kl2,p_kl3,p_kl4\n"
               "a,0.5,0.9,0.9,0.1,0.1,0.1\n");
    CHECK_THROWS_AS(parse_predictions_csv(p), std::runtime_error);  // not a simplex

    write_text(p, "subject_id,p_oa\na,0.5\na,0.6\n");
    CHECK_THROWS_WITH_AS(parse_predictions_csv(p), doctest::Contains("duplicate"),
                         std::runtime_error);
}

TEST_CASE("embeddings csv round trips exactly") {
    EmbeddingMatrix em;
    em.subject_ids = {"x", "y"};
    em.n_rows = 2;
    em.n_cols = 3;
    em.data = {3.141592653589793, -1.0 / 7.0, 0.0, 1e-300, -2.5, 42.0};
    const std::string p = tmp_path("emb.csv");
    write_embeddings_csv(em, p);
    const EmbeddingMatrix parsed = parse_embeddings_csv(p);
    CHECK(parsed.subject_ids == em.subject_ids);
    CHECK(parsed.n_rows == 2);
    CHECK(parsed.n_cols == 3);
    CHECK(parsed.data == em.data);

    write_text(p, "subject_id,e0,e1\na,1.0,2.0\nb,3.0\n");
    CHECK_THROWS_WITH_AS(parse_embeddings_csv(p), doctest::Contains(":3:"),
                         std::runtime_error);
    write_text(p, "subject_id\na\n");
    CHECK_THROWS_AS(parse_embeddings_csv(p), std::runtime_error);
}

TEST_CASE("volume raw round trip is bit-identical") {
    Volume v;
    v.dims = {2, 3, 2};
    v.data = {0.0f, -1.5f, 0.25f, 3.14159f, -0.0f, 1e-30f,
              7.0f, -42.5f, 0.125f, 9.9f, 2.0f, -8.25f};
    const std::string p = tmp_path("vol.raw");
    write_volume(v, p);
    const Volume r = read_volume(p);
    CHECK(r.dims == v.dims);
    REQUIRE(r.data.size() == v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        CHECK(std::memcmp(&r.data[i], &v.data[i], sizeof(float)) == 0);
    }

    MaskVolume m;
    m.dims = {2, 2, 2};
    m.data = {1, 0, 0, 1, 1, 1, 0, 0};
    const std::string mp = tmp_path("mask.raw");
    write_mask(m, mp);
    const MaskVolume mr = read_mask(mp);
    CHECK(mr.dims == m.dims);
    CHECK(mr.data == m.data);
}

TEST_CASE("volume io rejects inconsistent files") {
    Volume v;
    v.dims = {1, 1, 2};
    v.data = {1.0f, 2.0f};
    const std::string p = tmp_path("vol_bad.raw");
    write_volume(v, p);

    // truncate the payload behind the sidecar's back
    write_text(p, "abc");
    CHECK_THROWS_AS(read_volume(p), std::runtime_error);

    write_volume(v, p);
    write_text(p + ".json", R"({"dims":[1,1,2],"dtype":"f64","order":"C"})");
    CHECK_THROWS_AS(read_volume(p), std::runtime_error);
    write_text(p + ".json", R"({"dims":[1,1,2],"dtype":"f32","order":"F"})");
    CHECK_THROWS_AS(read_volume(p), std::runtime_error);
    fs::remove(p + ".json");
    CHECK_THROWS_AS(read_volume(p), std::runtime_error);

    // masks must stay binary on disk
    MaskVolume m;
    m.dims = {1, 1, 2};
    m.data = {1, 0};
    const std::string mp = tmp_path("mask_bad.raw");
    write_mask(m, mp);
    write_text(mp, std::string("\x01\x02", 2));
    CHECK_THROWS_AS(read_mask(mp), std::runtime_error);
}

TEST_CASE("checkpoint round trips every setting bit-exactly") {
    for (Setting s : {Setting::single_oa, Setting::single_kl, Setting::dual}) {
        const MicroModel m = init_model(5, 3, s, 31);
        TrainConfig cfg;
        cfg.lambda_oa = 0.75;
        cfg.lambda_kl = 1.5;
        cfg.lr = 3e-4;
        cfg.weight_decay = 2e-5;
        cfg.epochs = 17;
        cfg.batch_size = 3;
        cfg.hidden = 3;
        cfg.seed = 99;
        const std::string p = tmp_path("ckpt_" + to_string(s) + ".json");
        save_checkpoint(m, cfg, p);
        const Checkpoint loaded = load_checkpoint(p);
        CHECK(loaded.model.setting == s);
        CHECK(loaded.model.d == 5);
        CHECK(loaded.model.h == 3);
        CHECK(flatten_params(loaded.model) == flatten_params(m));
        CHECK(loaded.config.lambda_oa == cfg.lambda_oa);
        CHECK(loaded.config.lr == cfg.lr);
        CHECK(loaded.config.epochs == 17);
        CHECK(loaded.config.seed == 99);
    }

    const std::string p = tmp_path("ckpt_bad.json");
    write_text(p, R"({"format":"other-format","setting":"dual"})");
    CHECK_THROWS_AS(load_checkpoint(p), std::runtime_error);
}

TEST_CASE("report emit, read back and deterministic rerun") {
    ReportDocument doc;
    doc.manifest.command = "eval";
    doc.manifest.setting = "dual";
    doc.manifest.config["threshold"] = 0.5;
    doc.manifest.input_digests["labels.csv"] = "fnv1a64:cbf29ce484222325";
    doc.manifest.finalize();
    REQUIRE(doc.manifest.run_id.size() == 16);

    MetricReport mr;
    mr.task = Task::oa;
    mr.auc = 0.875;
    mr.acc = 0.75;
    mr.f1 = 2.0 / 3.0;
    doc.sections["oa_metrics"] = metric_report_json(mr);

    const std::string p = tmp_path("report.json");
    emit_report(doc, p);
    const std::string first = read_text(p);
    const std::string first_txt = read_text(tmp_path("report.txt"));
    CHECK(first.size() > 0);
    CHECK(first_txt.find("run_id") != std::string::npos);
    CHECK(first_txt.find("oa_metrics") != std::string::npos);

    const ReportDocument back = read_report(p);
    CHECK(back.manifest.command == "eval");
    CHECK(back.manifest.setting == "dual");
    CHECK(back.manifest.run_id == doc.manifest.run_id);
    CHECK(back.manifest.tool_version == kToolVersion);
    CHECK(back.sections == doc.sections);
    CHECK(back.manifest.config == doc.manifest.config);

    emit_report(doc, p);  // byte-identical rerun
    CHECK(read_text(p) == first);
    CHECK(read_text(tmp_path("report.txt")) == first_txt);

    ReportDocument unfinalized;
    unfinalized.manifest.command = "eval";
    CHECK_THROWS_AS(emit_report(unfinalized, tmp_path("r2.json")),
                    std::invalid_argument);

    write_text(p, R"({"not_a_report": 1})");
    CHECK_THROWS_WITH_AS(read_report(p), doctest::Contains("not a report"),
                         std::runtime_error);
}

TEST_CASE("manifest run id depends on content only") {
    RunManifest a;
    a.command = "train";
    a.config["seed"] = 7;
    a.finalize();
    RunManifest b;
    b.command = "train";
    b.config["seed"] = 7;
    b.finalize();
    CHECK(a.run_id == b.run_id);
    b.config["seed"] = 8;
    b.finalize();
    CHECK(a.run_id != b.run_id);
}

TEST_CASE("synth config json round trip and strictness") {
    SynthConfig cfg;
    cfg.n_train = 33;
    cfg.n_test = 11;
    cfg.dims = {9, 8, 7};
    cfg.grade_probs = {0.1, 0.2, 0.3, 0.25, 0.15};
    cfg.roi = Box{{1, 1, 1}, {4, 4, 4}};
    cfg.distractor = Box{{5, 5, 5}, {8, 7, 6}};
    cfg.severity_gain = 0.625;
    cfg.distractor_gain = 0.0;
    cfg.noise_sd = 2.5;
    cfg.label_flip_rate = 0.125;
    cfg.noise_train_only = false;
    cfg.seed = 12345;

    const SynthConfig back = synth_config_from_json(synth_config_json(cfg));
    CHECK(back.n_train == 33);
    CHECK(back.n_test == 11);
    CHECK(back.dims == cfg.dims);
    CHECK(back.grade_probs == cfg.grade_probs);
    CHECK(back.roi.lo == cfg.roi.lo);
    CHECK(back.roi.hi == cfg.roi.hi);
    CHECK(back.distractor.hi == cfg.distractor.hi);
    CHECK(back.severity_gain == cfg.severity_gain);
    CHECK(back.noise_sd == cfg.noise_sd);
    CHECK(back.label_flip_rate == cfg.label_flip_rate);
    CHECK(back.noise_train_only == false);
    CHECK(back.seed == 12345);

    // partial configs keep defaults; unknown keys are rejected
    const SynthConfig partial = synth_config_from_json(Json{{"n_train", 5}});
    CHECK(partial.n_train == 5);
    CHECK(partial.n_test == SynthConfig{}.n_test);
    CHECK_THROWS_WITH_AS(synth_config_from_json(Json{{"n_trian", 5}}),
                         doctest::Contains("unknown"), std::runtime_error);
}

TEST_CASE("train config json carries every hyperparameter") {
    TrainConfig cfg;
    cfg.lambda_oa = 0.5;
    cfg.lambda_kl = 2.0;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.0;
    cfg.epochs = 7;
    cfg.batch_size = 4;
    cfg.hidden = 9;
    cfg.seed = 77;
    const Json j = train_config_json(cfg);
    CHECK(j.at("lambda_oa").get<double>() == 0.5);
    CHECK(j.at("lambda_kl").get<double>() == 2.0);
    CHECK(j.at("lr").get<double>() == 1e-3);
    CHECK(j.at("weight_decay").get<double>() == 0.0);
    CHECK(j.at("epochs").get<int>() == 7);
    CHECK(j.at("batch_size").get<int>() == 4);
    CHECK(j.at("hidden").get<int>() == 9);
    CHECK(j.at("seed").get<std::uint64_t>() == 77);
}

TEST_CASE("section builders expose the documented fields") {
    McNemarResult mc;
    mc.b = 3;
    mc.c = 8;
    mc.p_value = 0.2265625;
    const Json jm = mcnemar_json(mc);
    CHECK(jm.at("b").get<std::int64_t>() == 3);
    CHECK(jm.at("c").get<std::int64_t>() == 8);
    CHECK(jm.at("p_value").get<double>() == 0.2265625);

    DiffResult dr;
    dr.mean_diff = 0.125;
    dr.ci_low = -0.0625;
    dr.ci_high = 0.25;
    dr.p_value = 0.3125;
    dr.n_replicates_used = 400;
    dr.n_discarded = 2;
    const Json jd = diff_json(dr);
    CHECK(jd.at("mean_diff").get<double>() == 0.125);
    CHECK(jd.at("ci_low").get<double>() == -0.0625);
    CHECK(jd.at("ci_high").get<double>() == 0.25);
    CHECK(jd.at("n_replicates_used").get<std::int64_t>() == 400);

    ConfusionMatrix cm;
    cm.n_classes = 2;
    cm.counts = {3, 1, 0, 4};
    const Json jc = confusion_json(cm);
    CHECK(jc.at("counts")[0][1].get<std::int64_t>() == 1);
    CHECK(jc.at("counts")[1][1].get<std::int64_t>() == 4);

    OverlapReport ov;
    ov.mass_roi = 0.5;
    ov.top1_roi = 1.0;
    ov.dice[5.0] = 0.25;
    ov.dice[10.0] = 0.375;
    const Json jo = overlap_json(ov);
    CHECK(jo.at("mass_roi").get<double>() == 0.5);
    CHECK(jo.at("dice").at("5").get<double>() == 0.25);
}
