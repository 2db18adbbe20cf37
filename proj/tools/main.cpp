// cogspeech: batch speech-to-cognitive-score pipeline CLI.
//
// Subcommands mirror the pipeline stages; every option can also come from
// a key=value config file (--config), with command-line values winning.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/pipeline.hpp"

namespace {

using cogspeech::RunConfig;

struct CliOverrides {
    std::vector<std::pair<std::string, std::string>> entries;

    void add(CLI::App* cmd, const std::string& key,
             const std::string& description) {
        auto* opt = cmd->add_option_function<std::string>(
            "--" + key,
            [this, key](const std::string& value) {
                entries.emplace_back(key, value);
            },
            description);
        opt->type_name("VALUE");
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"speech-to-MMSE regression and diagnostic-class pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "key=value run configuration file")
        ->type_name("PATH");

    CliOverrides overrides;
    // Global flags, applied to whichever subcommand runs.
    for (const char* key : {"run_dir", "seed", "jobs"}) {
        overrides.add(&app, key, "");
    }
    app.add_option_function<std::string>(
           "--run-dir",
           [&](const std::string& v) { overrides.entries.emplace_back("run_dir", v); },
           "run directory (alias for --run_dir)")
        ->type_name("PATH");

    const std::vector<std::string> keys = {
        "run_dir", "seed", "jobs", "manifest_path", "dev_fraction",
        "asr_backend", "encoder_backend", "asr_command", "encoder_command",
        "acoustic_command", "asr_timeout_s", "encoder_timeout_s",
        "learning_rate", "epochs", "batch_size", "optimizer", "aggregation",
        "concat_acoustic", "svm_lambda", "svm_epochs", "embed_lr",
        "embed_epochs", "binary_mode", "w_svm", "w_text"};

    std::vector<CLI::App*> commands;
    for (const char* name :
         {"ingest", "transcribe", "embed", "featurize", "train-regressor",
          "train-classifier", "predict", "evaluate", "gradcheck"}) {
        auto* cmd = app.add_subcommand(name, "");
        for (const auto& key : keys) {
            overrides.add(cmd, key, "");
        }
        cmd->add_option_function<std::string>(
               "--run-dir",
               [&overrides](const std::string& v) {
                   overrides.entries.emplace_back("run_dir", v);
               },
               "run directory (alias for --run_dir)")
            ->type_name("PATH");
        commands.push_back(cmd);
    }
    commands[0]->description("validate the manifest and summarize it");
    commands[1]->description("transcribe recordings into the ASR cache");
    commands[2]->description("encode transcripts into the embedding cache");
    commands[3]->description("extract acoustic and readability features");
    commands[4]->description("train the MMSE regression head");
    commands[5]->description("train the SVM + text classifier ensemble");
    commands[6]->description("write per-subject MMSE predictions");
    commands[7]->description("compute metrics and emit reports");
    commands[8]->description("finite-difference check of the head gradients");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            cfg = cogspeech::load_run_config(config_path);
        }
        for (const auto& [key, value] : overrides.entries) {
            cogspeech::apply_config_entry(cfg, key, value);
        }

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "ingest") {
            const auto summary = cogspeech::cmd_ingest(cfg);
            std::cerr << "ingest: " << summary.subjects << " subjects ("
                      << summary.mmse_present << " with MMSE)\n";
        } else if (cmd == "transcribe") {
            const auto r = cogspeech::cmd_transcribe(cfg);
            std::cerr << "transcribe: " << r.items.size() << " transcripts, "
                      << r.backend_invocations << " backend invocations\n";
        } else if (cmd == "embed") {
            const auto r = cogspeech::cmd_embed(cfg);
            std::cerr << "embed: " << r.items.size() << " embeddings, "
                      << r.backend_invocations << " backend invocations\n";
        } else if (cmd == "featurize") {
            const auto r = cogspeech::cmd_featurize(cfg);
            std::cerr << "featurize: " << r.items.size() << " feature rows\n";
        } else if (cmd == "train-regressor") {
            cogspeech::cmd_train_regressor(cfg);
        } else if (cmd == "train-classifier") {
            cogspeech::cmd_train_classifier(cfg);
        } else if (cmd == "predict") {
            cogspeech::cmd_predict(cfg);
            std::cerr << "predict: wrote "
                      << cogspeech::predictions_path(cfg).string() << "\n";
        } else if (cmd == "evaluate") {
            cogspeech::cmd_evaluate(cfg);
            std::cerr << "evaluate: wrote report.json and report.md\n";
        } else if (cmd == "gradcheck") {
            return cogspeech::cmd_gradcheck(cfg) ? 0 : 1;
        }
        return 0;
    } catch (const cogspeech::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
