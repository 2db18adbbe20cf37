#pragma once
// End-to-end batch pipeline over a run directory: ingest -> transcribe ->
// embed -> featurize -> train -> predict -> evaluate, plus the gradient
// check. Each stage reads the previous stage's run-dir artifacts, so
// expensive backend work stays cached and re-runnable. All stage outputs
// are byte-deterministic given (inputs, config, seed).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cogspeech/classifier.hpp"
#include "cogspeech/evalreport.hpp"
#include "cogspeech/manifest.hpp"
#include "cogspeech/regressor.hpp"

namespace cogspeech {

struct RunConfig {
    std::filesystem::path manifest_path;
    std::filesystem::path run_dir;
    std::uint64_t seed = 42;
    double dev_fraction = 0.2;
    int jobs = 4;

    std::string asr_backend = "mock";      // mock | external
    std::string encoder_backend = "mock";  // mock | external
    std::string asr_command;
    std::string encoder_command;
    std::string acoustic_command;  // optional external acoustic extractor
    double asr_timeout_s = 300.0;
    double encoder_timeout_s = 300.0;

    // Regression head training.
    double learning_rate = 1e-3;
    int epochs = 300;
    int batch_size = 16;
    std::string optimizer = "adam";  // adam | sgd
    std::string aggregation = "mean";  // mean | median
    bool concat_acoustic = false;

    // Classifier training.
    double svm_lambda = 1e-2;
    int svm_epochs = 200;
    double embed_lr = 0.5;
    int embed_epochs = 300;
    bool binary_mode = false;
    double w_svm = 0.6;
    double w_text = 0.4;
};

// Flat key=value file (TOML-compatible subset): one `key = value` per
// line, `#` comments, optional double quotes around values.
RunConfig load_run_config(const std::filesystem::path& path);

// Applies one key=value entry; unknown keys raise ArgumentError. Used by
// both the config parser and command-line overrides (overrides win by
// being applied last).
void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value);

void validate_run_config(const RunConfig& cfg);

// ---- Stage results -------------------------------------------------------

struct IngestSummary {
    std::size_t subjects = 0;
    std::map<std::string, std::size_t> by_class;
    std::size_t mmse_present = 0;
    std::vector<int> mmse_histogram;  // 31 bins, scores 0..30
};

struct StageItem {
    std::string subject_id;
    std::string task;
    std::string key;     // cache key (empty for featurize)
    std::string source;  // mock | external | cache | internal
};

struct StageResult {
    std::vector<StageItem> items;
    std::size_t backend_invocations = 0;
    std::size_t failures = 0;
};

struct EvaluateResult {
    std::vector<EvaluationReport> reports;
};

// ---- Commands ------------------------------------------------------------

IngestSummary cmd_ingest(const RunConfig& cfg);
StageResult cmd_transcribe(const RunConfig& cfg);
StageResult cmd_embed(const RunConfig& cfg);
StageResult cmd_featurize(const RunConfig& cfg);
TrainResult cmd_train_regressor(const RunConfig& cfg);
void cmd_train_classifier(const RunConfig& cfg);
void cmd_predict(const RunConfig& cfg);
EvaluateResult cmd_evaluate(const RunConfig& cfg);

// Prints one verdict line on stdout; returns true when the maximum
// relative error is within threshold.
bool cmd_gradcheck(const RunConfig& cfg, double threshold = 1e-4);

// Run-dir layout helpers (shared with tests).
std::filesystem::path asr_cache_dir(const RunConfig& cfg);
std::filesystem::path emb_cache_dir(const RunConfig& cfg);
std::filesystem::path head_checkpoint_path(const RunConfig& cfg);
std::filesystem::path clf_checkpoint_path(const RunConfig& cfg);
std::filesystem::path predictions_path(const RunConfig& cfg);

}  // namespace cogspeech
