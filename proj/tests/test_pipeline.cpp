#include "cogspeech/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fileio.hpp"
#include "cogspeech/core/rng.hpp"
#include "support/tempdir.hpp"
#include "support/wav.hpp"

using namespace cogspeech;

namespace {

// A small synthetic cohort: six subjects, three short recordings each,
// sidecar transcripts planted with a class token so both tracks have
// learnable signal.
struct Fixture {
    testsupport::TempDir dir{"pipe"};
    RunConfig cfg;

    explicit Fixture(int subjects = 6) {
        std::string manifest = "subject_id,class,mmse,ctd_path,pft_path,sft_path\n";
        SplitMix64 rng(2024);
        const char* classes[] = {"HC", "MCI", "Dementia"};
        for (int s = 0; s < subjects; ++s) {
            const std::string id =
                "s" + std::string(s < 9 ? "0" : "") + std::to_string(s + 1);
            const char* cls = classes[s % 3];
            const int mmse = 30 - 3 * (s % 3) - (s % 2);
            manifest += id + "," + cls + "," + std::to_string(mmse);
            for (const char* task : {"ctd", "pft", "sft"}) {
                const std::string stem = id + "_" + task;
                const auto wav = dir / (stem + ".wav");
                // Cheap distinct audio per file: short tone bursts.
                auto samples = testsupport::sine_wave(
                    150.0 + 10.0 * s, 0.12, 16000, 0.4);
                samples[0] += 1e-4 * s;
                testsupport::write_wav_pcm16(wav, samples, 16000);
                std::ofstream(dir / (stem + ".wav.txt"))
                    << "subject " << id << " " << cls << "token speaks about "
                    << task << " words w" << rng.next_below(100) << " w"
                    << rng.next_below(100);
                manifest += "," + stem + ".wav";
            }
            manifest += "\n";
        }
        std::ofstream(dir / "manifest.csv") << manifest;

        cfg.manifest_path = dir / "manifest.csv";
        cfg.run_dir = dir / "run";
        cfg.seed = 42;
        cfg.dev_fraction = 0.34;
        cfg.jobs = 2;
        cfg.epochs = 30;
        cfg.svm_epochs = 50;
        cfg.embed_epochs = 50;
    }
};

}  // namespace

TEST_CASE("config file parsing and overrides") {
    testsupport::TempDir dir("cfg");
    {
        std::ofstream f(dir / "run.cfg");
        f << "# comment line\n";
        f << "manifest_path = data/manifest.csv\n";
        f << "run_dir = \"out/run1\"\n";
        f << "seed = 7\n";
        f << "dev_fraction = 0.25\n";
        f << "binary_mode = true\n";
        f << "w_svm = 0.7\n";
        f << "w_text = 0.3\n";
    }
    RunConfig cfg = load_run_config(dir / "run.cfg");
    CHECK(cfg.manifest_path == "data/manifest.csv");
    CHECK(cfg.run_dir == "out/run1");
    CHECK(cfg.seed == 7);
    CHECK(cfg.dev_fraction == 0.25);
    CHECK(cfg.binary_mode);
    CHECK(cfg.w_svm == 0.7);

    apply_config_entry(cfg, "seed", "9");
    CHECK(cfg.seed == 9);
    CHECK_THROWS_AS(apply_config_entry(cfg, "no_such_key", "1"),
                    ArgumentError);
    CHECK_THROWS_AS(apply_config_entry(cfg, "jobs", "many"), ArgumentError);
}

TEST_CASE("validate_run_config rejects inconsistent settings") {
    RunConfig cfg;
    cfg.manifest_path = "m.csv";
    cfg.run_dir = "run";
    validate_run_config(cfg);

    RunConfig bad = cfg;
    bad.dev_fraction = 1.5;
    CHECK_THROWS_AS(validate_run_config(bad), ArgumentError);
    bad = cfg;
    bad.asr_backend = "external";
    CHECK_THROWS_AS(validate_run_config(bad), ArgumentError);
    bad = cfg;
    bad.w_svm = 0.8;
    CHECK_THROWS_AS(validate_run_config(bad), ArgumentError);
    bad = cfg;
    bad.aggregation = "mode";
    CHECK_THROWS_AS(validate_run_config(bad), ArgumentError);
}

TEST_CASE("ingest writes a deterministic summary") {
    Fixture fx;
    const IngestSummary summary = cmd_ingest(fx.cfg);
    CHECK(summary.subjects == 6);
    CHECK(summary.mmse_present == 6);
    CHECK(summary.by_class.at("HC") == 2);
    CHECK(summary.by_class.at("MCI") == 2);
    CHECK(summary.by_class.at("Dementia") == 2);

    const std::string bytes1 =
        read_file(fx.cfg.run_dir / "manifest.validated.json");
    cmd_ingest(fx.cfg);
    CHECK(read_file(fx.cfg.run_dir / "manifest.validated.json") == bytes1);
}

TEST_CASE("ingest propagates manifest errors") {
    Fixture fx;
    std::ofstream(fx.dir / "bad.csv")
        << "subject_id,class,mmse,ctd_path,pft_path,sft_path\n"
        << "s001,HC,31,a.wav,b.wav,c.wav\n";
    RunConfig cfg = fx.cfg;
    cfg.manifest_path = fx.dir / "bad.csv";
    CHECK_THROWS_WITH_AS(cmd_ingest(cfg), doctest::Contains("row 2"),
                         RangeError);
}

TEST_CASE("mock pipeline: transcribe, embed, featurize") {
    Fixture fx;
    cmd_ingest(fx.cfg);

    const StageResult tr = cmd_transcribe(fx.cfg);
    CHECK(tr.items.size() == 18);
    CHECK(tr.backend_invocations == 18);
    for (const auto& item : tr.items) {
        CHECK(item.source == "mock");
        CHECK(item.key.size() == 16);
    }

    // Sidecar text flows through the mock backend.
    const auto items = tr.items;
    const auto text = cache_lookup(asr_cache_dir(fx.cfg), items[0].key);
    REQUIRE(text.has_value());
    CHECK(text->find("subject s01") != std::string::npos);

    const StageResult em = cmd_embed(fx.cfg);
    CHECK(em.items.size() == 18);
    CHECK(em.backend_invocations == 18);

    const StageResult ft = cmd_featurize(fx.cfg);
    CHECK(ft.items.size() == 18);
    const std::string csv = read_file(fx.cfg.run_dir / "features.csv");
    CHECK(csv.find("subject_id,task,f1") == 0);
    CHECK(csv.find("f33") != std::string::npos);

    // Warm rerun: everything served from cache, zero invocations.
    const StageResult tr2 = cmd_transcribe(fx.cfg);
    CHECK(tr2.backend_invocations == 0);
    for (const auto& item : tr2.items) {
        CHECK(item.source == "cache");
    }
    const StageResult em2 = cmd_embed(fx.cfg);
    CHECK(em2.backend_invocations == 0);
}

TEST_CASE("embed requires the transcribe stage") {
    Fixture fx;
    cmd_ingest(fx.cfg);
    CHECK_THROWS_WITH_AS(cmd_embed(fx.cfg),
                         doctest::Contains("stage.transcribe.json"),
                         PreconditionError);
}

TEST_CASE("one unreadable wav fails the stage but keeps the rest") {
    Fixture fx;
    cmd_ingest(fx.cfg);
    // Corrupt one recording.
    std::ofstream(fx.dir / "s01_ctd.wav", std::ios::binary | std::ios::trunc)
        << "not a wav";
    // Its sidecar no longer matters; remove to keep the failure clean.
    std::filesystem::remove(fx.dir / "s01_ctd.wav.txt");

    CHECK_THROWS_AS(cmd_transcribe(fx.cfg), BackendError);
    CHECK(std::filesystem::exists(fx.cfg.run_dir /
                                  "stage.transcribe.failures.json"));
    const auto items = nlohmann::json::parse(
        read_file(fx.cfg.run_dir / "stage.transcribe.json"))["items"];
    CHECK(items.size() == 17);

    // The cached 17 survive; embedding works over them.
    const StageResult em = cmd_embed(fx.cfg);
    CHECK(em.items.size() == 17);
}

TEST_CASE("full mock pipeline trains, predicts, evaluates") {
    Fixture fx;
    cmd_ingest(fx.cfg);
    cmd_transcribe(fx.cfg);
    cmd_embed(fx.cfg);
    cmd_featurize(fx.cfg);
    cmd_train_regressor(fx.cfg);
    CHECK(std::filesystem::exists(head_checkpoint_path(fx.cfg)));

    cmd_train_classifier(fx.cfg);
    CHECK(std::filesystem::exists(clf_checkpoint_path(fx.cfg)));

    cmd_predict(fx.cfg);
    const std::string preds = read_file(predictions_path(fx.cfg));
    CHECK(preds.find("subject_id,y_true,y_pred") == 0);
    CHECK(std::count(preds.begin(), preds.end(), '\n') == 7);  // header + 6

    const EvaluateResult ev = cmd_evaluate(fx.cfg);
    CHECK(ev.reports.size() == 2);
    const std::string md = read_file(fx.cfg.run_dir / "report.md");
    CHECK(md.find("Baseline (paper) | - | 2.9850") != std::string::npos);
    CHECK(md.find("Baseline (paper) | - | 0.5500") != std::string::npos);
    CHECK(std::filesystem::exists(fx.cfg.run_dir / "classifications.csv"));
}

TEST_CASE("evaluate without any checkpoint names the missing files") {
    Fixture fx;
    cmd_ingest(fx.cfg);
    CHECK_THROWS_AS(cmd_evaluate(fx.cfg), PreconditionError);
}

TEST_CASE("two identical runs produce byte-identical outputs") {
    Fixture fx;
    RunConfig cfg1 = fx.cfg;
    cfg1.run_dir = fx.dir / "run1";
    RunConfig cfg2 = fx.cfg;
    cfg2.run_dir = fx.dir / "run2";

    for (const RunConfig* cfg : {&cfg1, &cfg2}) {
        cmd_ingest(*cfg);
        cmd_transcribe(*cfg);
        cmd_embed(*cfg);
        cmd_featurize(*cfg);
        cmd_train_regressor(*cfg);
        cmd_train_classifier(*cfg);
        cmd_predict(*cfg);
        cmd_evaluate(*cfg);
    }
    for (const char* name : {"predictions.csv", "report.json", "report.md",
                             "features.csv", "head.ckpt.json",
                             "clf.ckpt.json", "manifest.validated.json"}) {
        CHECK(read_file(cfg1.run_dir / name) ==
              read_file(cfg2.run_dir / name));
    }
}

TEST_CASE("median aggregation and binary mode run end to end") {
    Fixture fx;
    fx.cfg.aggregation = "median";
    fx.cfg.binary_mode = true;
    cmd_ingest(fx.cfg);
    cmd_transcribe(fx.cfg);
    cmd_embed(fx.cfg);
    cmd_featurize(fx.cfg);
    cmd_train_regressor(fx.cfg);
    cmd_train_classifier(fx.cfg);
    cmd_predict(fx.cfg);
    const EvaluateResult ev = cmd_evaluate(fx.cfg);
    REQUIRE(ev.reports.size() == 2);
    CHECK(ev.reports[1].class_order == kBinaryClassOrder);
}

TEST_CASE("external backends drive the pipeline") {
    Fixture fx(3);
    testsupport::TempDir scripts("ext");
    const auto asr = scripts / "asr.sh";
    {
        std::ofstream f(asr);
        f << "#!/bin/sh\necho \"external transcript for $(basename $1) in $2 segments\"\n";
    }
    const auto enc = scripts / "enc.sh";
    {
        std::ofstream f(enc);
        f << "#!/bin/sh\nn=$(wc -c)\ni=0\nwhile [ $i -lt 768 ]; do\n"
          << "  printf '%s ' $(( (n + i) % 7 ))\n  i=$((i+1))\ndone\n";
    }
    std::filesystem::permissions(asr, std::filesystem::perms::owner_all);
    std::filesystem::permissions(enc, std::filesystem::perms::owner_all);

    fx.cfg.asr_backend = "external";
    fx.cfg.asr_command = asr.string();
    fx.cfg.encoder_backend = "external";
    fx.cfg.encoder_command = enc.string();

    cmd_ingest(fx.cfg);
    const StageResult tr = cmd_transcribe(fx.cfg);
    CHECK(tr.backend_invocations == 9);
    for (const auto& item : tr.items) {
        CHECK(item.source == "external");
    }
    const auto text = cache_lookup(asr_cache_dir(fx.cfg), tr.items[0].key);
    REQUIRE(text.has_value());
    CHECK(text->find("external transcript for s01_ctd.wav in 1 segments") !=
          std::string::npos);

    const StageResult em = cmd_embed(fx.cfg);
    CHECK(em.items.size() == 9);
}

TEST_CASE("gradcheck command passes") {
    RunConfig cfg;
    cfg.seed = 42;
    CHECK(cmd_gradcheck(cfg));
}

#ifdef COGSPEECH_BIN
TEST_CASE("cli binary smoke test") {
    Fixture fx(3);
    const std::string bin = COGSPEECH_BIN;
    {
        std::ofstream f(fx.dir / "run.cfg");
        f << "manifest_path = " << (fx.dir / "manifest.csv").string() << "\n";
        f << "run_dir = " << (fx.dir / "run").string() << "\n";
        f << "seed = 42\n";
        f << "epochs = 5\n";
    }
    const std::string base =
        bin + " --config " + (fx.dir / "run.cfg").string() + " ";
    CHECK(std::system((base + "ingest 2>/dev/null").c_str()) == 0);
    CHECK(std::system((base + "transcribe 2>/dev/null").c_str()) == 0);
    CHECK(std::system((base + "embed 2>/dev/null").c_str()) == 0);
    CHECK(std::system((base + "gradcheck >/dev/null").c_str()) == 0);

    // Overrides win over the config file: an invalid dev_fraction must fail.
    CHECK(std::system(
              (base + "ingest --dev_fraction 2.0 2>/dev/null").c_str()) != 0);
}
#endif
