#include "cogspeech/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "cogspeech/asr.hpp"
#include "cogspeech/audio.hpp"
#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fileio.hpp"
#include "cogspeech/core/fnv.hpp"
#include "cogspeech/core/jsonw.hpp"
#include "cogspeech/core/subprocess.hpp"
#include "cogspeech/encoder.hpp"
#include "cogspeech/features.hpp"

namespace cogspeech {
namespace {

namespace fs = std::filesystem;

// Width the z-scored acoustic vector is padded/truncated to when
// concat_acoustic extends the regression input.
constexpr int kAcousticPadDim = 32;

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ArgumentError("config key '" + key + "' expects a bool, got '" +
                        value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ArgumentError("config key '" + key + "' expects a number, got '" +
                            value + "'");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ArgumentError("config key '" + key +
                            "' expects an integer, got '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ArgumentError("config key '" + key +
                            "' expects an unsigned integer, got '" + value +
                            "'");
    }
}

std::string trim_copy(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Bounded worker pool over [0, n). The body must not throw; per-item
// errors are collected into slots by the caller.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    const auto workers =
        static_cast<std::size_t>(std::max(1, std::min<int>(jobs, static_cast<int>(n))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (std::size_t i = next.fetch_add(1); i < n;
                 i = next.fetch_add(1)) {
                body(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

struct WorkItem {
    const SubjectRecord* record = nullptr;
    TaskKind task = TaskKind::CTD;
    fs::path wav_path;
};

std::vector<WorkItem> build_work_list(const RunConfig& cfg,
                                      const std::vector<SubjectRecord>& records) {
    std::vector<WorkItem> work;
    work.reserve(records.size() * 3);
    for (const auto& rec : records) {
        for (TaskKind task : kAllTasks) {
            work.push_back(
                {&rec, task, resolve_recording(cfg.manifest_path, rec, task)});
        }
    }
    return work;
}

struct ItemFailure {
    std::string subject_id;
    std::string task;
    std::string path;
    std::string error;
};

void write_failure_manifest(const fs::path& path,
                            const std::vector<ItemFailure>& failures) {
    JsonWriter w;
    w.begin_object();
    w.kv("version", 1);
    w.key("failures");
    w.begin_array();
    for (const auto& f : failures) {
        w.begin_object();
        w.kv("subject_id", f.subject_id);
        w.kv("task", f.task);
        w.kv("path", f.path);
        w.kv("error", f.error);
        w.end_object();
    }
    w.end_array();
    w.end_object();
    atomic_write_file(path, w.str());
}

void write_stage_index(const fs::path& path, const std::string& backend,
                       std::size_t invocations,
                       const std::vector<StageItem>& items) {
    JsonWriter w;
    w.begin_object();
    w.kv("version", 1);
    w.kv("backend", backend);
    w.kv("backend_invocations", invocations);
    w.key("items");
    w.begin_array();
    for (const auto& it : items) {
        w.begin_object();
        w.kv("subject_id", it.subject_id);
        w.kv("task", it.task);
        w.kv("key", it.key);
        w.kv("source", it.source);
        w.end_object();
    }
    w.end_array();
    w.end_object();
    atomic_write_file(path, w.str());
}

std::vector<StageItem> read_stage_index(const fs::path& path) {
    const auto contents = read_file_if_exists(path);
    if (!contents) {
        throw PreconditionError("missing stage output: " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(*contents);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad stage index " + path.string() + ": " + e.what());
    }
    std::vector<StageItem> items;
    for (const auto& it : j.at("items")) {
        StageItem item;
        item.subject_id = it.at("subject_id").get<std::string>();
        item.task = it.at("task").get<std::string>();
        item.key = it.at("key").get<std::string>();
        item.source = it.at("source").get<std::string>();
        items.push_back(std::move(item));
    }
    return items;
}

void require_file(const fs::path& path, const char* producer) {
    if (!fs::exists(path)) {
        throw PreconditionError("missing stage output: " + path.string() +
                                " (run `" + producer + "` first)");
    }
}

// Transcript text per (subject, task) out of the ASR cache.
std::map<std::string, std::map<TaskKind, std::string>> load_transcripts(
    const RunConfig& cfg) {
    const auto items =
        read_stage_index(cfg.run_dir / "stage.transcribe.json");
    std::map<std::string, std::map<TaskKind, std::string>> texts;
    for (const auto& it : items) {
        auto text = cache_lookup(asr_cache_dir(cfg), it.key);
        if (!text) {
            throw PreconditionError("transcript cache entry missing for " +
                                    it.subject_id + "/" + it.task +
                                    " (key " + it.key + "); rerun transcribe");
        }
        texts[it.subject_id][task_from_string(it.task)] = std::move(*text);
    }
    return texts;
}

std::map<std::string, std::map<TaskKind, Embedding>> load_embeddings(
    const RunConfig& cfg) {
    const auto items = read_stage_index(cfg.run_dir / "stage.embed.json");
    std::map<std::string, std::map<TaskKind, Embedding>> embs;
    for (const auto& it : items) {
        auto emb = embedding_cache_lookup(emb_cache_dir(cfg), it.key);
        if (!emb) {
            throw PreconditionError("embedding cache entry missing for " +
                                    it.subject_id + "/" + it.task + " (key " +
                                    it.key + "); rerun embed");
        }
        embs[it.subject_id][task_from_string(it.task)] = std::move(*emb);
    }
    return embs;
}

struct FeatureTable {
    Eigen::Index acoustic_dim = 0;
    Eigen::Index total_dim = 0;
    std::map<std::string, std::map<TaskKind, Eigen::VectorXd>> rows;
};

FeatureTable load_features(const RunConfig& cfg) {
    const fs::path csv_path = cfg.run_dir / "features.csv";
    require_file(csv_path, "featurize");
    const fs::path index_path = cfg.run_dir / "stage.featurize.json";
    require_file(index_path, "featurize");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(index_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad stage index " + index_path.string() + ": " +
                          e.what());
    }
    FeatureTable table;
    table.acoustic_dim = j.at("acoustic_dim").get<Eigen::Index>();

    std::istringstream in(read_file(csv_path));
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty features.csv");
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::getline(row, field, ',');
        const std::string subject = field;
        std::getline(row, field, ',');
        const TaskKind task = task_from_string(field);
        std::vector<double> values;
        while (std::getline(row, field, ',')) {
            values.push_back(parse_double("features.csv", field));
        }
        Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
        for (std::size_t i = 0; i < values.size(); ++i) {
            v[static_cast<Eigen::Index>(i)] = values[i];
        }
        if (table.total_dim == 0) {
            table.total_dim = v.size();
        } else if (v.size() != table.total_dim) {
            throw FormatError("inconsistent feature row width in features.csv");
        }
        table.rows[subject][task] = std::move(v);
    }
    return table;
}

// z-scored acoustic block, zero-padded/truncated to the fixed pad width.
Eigen::VectorXd pad_acoustic(const StandardizationParams& params,
                             const Eigen::VectorXd& acoustic) {
    const Eigen::VectorXd z = apply_standardizer(params, acoustic);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(kAcousticPadDim);
    const Eigen::Index n = std::min<Eigen::Index>(z.size(), kAcousticPadDim);
    out.head(n) = z.head(n);
    return out;
}

// Optional acoustic standardizer block in the head checkpoint (present
// only when the head was trained with concat_acoustic).
struct AcousticAugment {
    bool enabled = false;
    StandardizationParams standardizer;
};

AcousticAugment load_head_augment(const fs::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    AcousticAugment aug;
    if (j.contains("acoustic") && !j.at("acoustic").is_null()) {
        const auto& a = j.at("acoustic");
        const auto mean = a.at("mean").get<std::vector<double>>();
        const auto stdv = a.at("std").get<std::vector<double>>();
        aug.enabled = true;
        aug.standardizer.mean =
            Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                              static_cast<Eigen::Index>(mean.size()));
        aug.standardizer.std =
            Eigen::Map<const Eigen::VectorXd>(stdv.data(),
                                              static_cast<Eigen::Index>(stdv.size()));
        aug.standardizer.zero_variance.assign(mean.size(), false);
    }
    return aug;
}

Eigen::VectorXd regression_input(const Embedding& emb,
                                 const AcousticAugment& aug,
                                 const Eigen::VectorXd* acoustic) {
    if (!aug.enabled) {
        return emb;
    }
    if (acoustic == nullptr) {
        throw PreconditionError(
            "head was trained with concat_acoustic but no acoustic features "
            "are available; run featurize");
    }
    Eigen::VectorXd x(emb.size() + kAcousticPadDim);
    x.head(emb.size()) = emb;
    x.tail(kAcousticPadDim) = pad_acoustic(aug.standardizer, *acoustic);
    return x;
}

int class_index(ClassLabel label, bool binary_mode) {
    if (binary_mode) {
        return label == ClassLabel::HC ? 0 : 1;
    }
    switch (label) {
        case ClassLabel::HC: return 0;
        case ClassLabel::MCI: return 1;
        case ClassLabel::Dementia: return 2;
        case ClassLabel::Unknown: break;
    }
    throw ArgumentError("class_index: Unknown label has no class index");
}

Aggregation aggregation_from_config(const RunConfig& cfg) {
    return cfg.aggregation == "median" ? Aggregation::Median
                                       : Aggregation::Mean;
}

TrainConfig regressor_config(const RunConfig& cfg) {
    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.seed = cfg.seed;
    tc.optimizer = cfg.optimizer == "sgd" ? Optimizer::Sgd : Optimizer::Adam;
    return tc;
}

}  // namespace

// ---- Config --------------------------------------------------------------

void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
    if (key == "manifest_path") cfg.manifest_path = value;
    else if (key == "run_dir") cfg.run_dir = value;
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "dev_fraction") cfg.dev_fraction = parse_double(key, value);
    else if (key == "jobs") cfg.jobs = static_cast<int>(parse_int(key, value));
    else if (key == "asr_backend") cfg.asr_backend = value;
    else if (key == "encoder_backend") cfg.encoder_backend = value;
    else if (key == "asr_command") cfg.asr_command = value;
    else if (key == "encoder_command") cfg.encoder_command = value;
    else if (key == "acoustic_command") cfg.acoustic_command = value;
    else if (key == "asr_timeout_s") cfg.asr_timeout_s = parse_double(key, value);
    else if (key == "encoder_timeout_s")
        cfg.encoder_timeout_s = parse_double(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_double(key, value);
    else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "batch_size")
        cfg.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "optimizer") cfg.optimizer = value;
    else if (key == "aggregation") cfg.aggregation = value;
    else if (key == "concat_acoustic")
        cfg.concat_acoustic = parse_bool(key, value);
    else if (key == "svm_lambda") cfg.svm_lambda = parse_double(key, value);
    else if (key == "svm_epochs")
        cfg.svm_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "embed_lr") cfg.embed_lr = parse_double(key, value);
    else if (key == "embed_epochs")
        cfg.embed_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "binary_mode") cfg.binary_mode = parse_bool(key, value);
    else if (key == "w_svm") cfg.w_svm = parse_double(key, value);
    else if (key == "w_text") cfg.w_text = parse_double(key, value);
    else throw ArgumentError("unknown config key '" + key + "'");
}

RunConfig load_run_config(const std::filesystem::path& path) {
    RunConfig cfg;
    std::istringstream in(read_file(path));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim_copy(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config line " + std::to_string(line_no) +
                              " is not key = value: '" + line + "'");
        }
        const std::string key = trim_copy(line.substr(0, eq));
        std::string value = trim_copy(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        apply_config_entry(cfg, key, value);
    }
    return cfg;
}

void validate_run_config(const RunConfig& cfg) {
    if (cfg.manifest_path.empty()) {
        throw ArgumentError("manifest_path is required");
    }
    if (cfg.run_dir.empty()) {
        throw ArgumentError("run_dir is required");
    }
    if (!(cfg.dev_fraction > 0.0 && cfg.dev_fraction < 1.0)) {
        throw ArgumentError("dev_fraction must be in (0,1)");
    }
    if (cfg.jobs < 1) {
        throw ArgumentError("jobs must be >= 1");
    }
    if (cfg.asr_backend != "mock" && cfg.asr_backend != "external") {
        throw ArgumentError("asr_backend must be mock or external");
    }
    if (cfg.encoder_backend != "mock" && cfg.encoder_backend != "external") {
        throw ArgumentError("encoder_backend must be mock or external");
    }
    if (cfg.asr_backend == "external" && cfg.asr_command.empty()) {
        throw ArgumentError("asr_backend=external requires asr_command");
    }
    if (cfg.encoder_backend == "external" && cfg.encoder_command.empty()) {
        throw ArgumentError("encoder_backend=external requires encoder_command");
    }
    if (cfg.optimizer != "adam" && cfg.optimizer != "sgd") {
        throw ArgumentError("optimizer must be adam or sgd");
    }
    if (cfg.aggregation != "mean" && cfg.aggregation != "median") {
        throw ArgumentError("aggregation must be mean or median");
    }
    if (cfg.w_svm < 0.0 || cfg.w_text < 0.0 ||
        std::abs(cfg.w_svm + cfg.w_text - 1.0) > 1e-9) {
        throw ArgumentError("ensemble weights must be >= 0 and sum to 1");
    }
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.svm_epochs < 1 ||
        cfg.embed_epochs < 1) {
        throw ArgumentError("epoch/batch settings must be positive");
    }
    if (cfg.learning_rate <= 0.0 || cfg.svm_lambda <= 0.0 ||
        cfg.embed_lr <= 0.0) {
        throw ArgumentError("learning rates and svm_lambda must be positive");
    }
}

// ---- Layout --------------------------------------------------------------

fs::path asr_cache_dir(const RunConfig& cfg) {
    return cfg.run_dir / "cache" / "asr";
}
fs::path emb_cache_dir(const RunConfig& cfg) {
    return cfg.run_dir / "cache" / "emb";
}
fs::path head_checkpoint_path(const RunConfig& cfg) {
    return cfg.run_dir / "head.ckpt.json";
}
fs::path clf_checkpoint_path(const RunConfig& cfg) {
    return cfg.run_dir / "clf.ckpt.json";
}
fs::path predictions_path(const RunConfig& cfg) {
    return cfg.run_dir / "predictions.csv";
}

// ---- Commands ------------------------------------------------------------

IngestSummary cmd_ingest(const RunConfig& cfg) {
    validate_run_config(cfg);
    const auto records = load_manifest(cfg.manifest_path);

    IngestSummary summary;
    summary.subjects = records.size();
    summary.mmse_histogram.assign(kMmseMax + 1, 0);
    summary.by_class = {{"HC", 0}, {"MCI", 0}, {"Dementia", 0}, {"Unknown", 0}};
    for (const auto& rec : records) {
        summary.by_class[to_string(rec.class_label)] += 1;
        if (rec.mmse) {
            ++summary.mmse_present;
            summary.mmse_histogram[static_cast<std::size_t>(*rec.mmse)] += 1;
        }
    }

    JsonWriter w;
    w.begin_object();
    w.kv("version", 1);
    w.kv("subjects", summary.subjects);
    w.key("by_class");
    w.begin_object();
    for (const char* c : {"HC", "MCI", "Dementia", "Unknown"}) {
        w.kv(c, summary.by_class.at(c));
    }
    w.end_object();
    w.kv("mmse_present", summary.mmse_present);
    w.key("mmse_histogram");
    w.begin_array();
    for (int count : summary.mmse_histogram) {
        w.value(count);
    }
    w.end_array();
    w.end_object();
    atomic_write_file(cfg.run_dir / "manifest.validated.json", w.str());
    return summary;
}

StageResult cmd_transcribe(const RunConfig& cfg) {
    validate_run_config(cfg);
    require_file(cfg.run_dir / "manifest.validated.json", "ingest");
    const auto records = load_manifest(cfg.manifest_path);
    const auto work = build_work_list(cfg, records);
    const fs::path cache = asr_cache_dir(cfg);

    std::unique_ptr<TranscriberBackend> backend;
    if (cfg.asr_backend == "mock") {
        backend = std::make_unique<MockTranscriber>();
    } else {
        backend = std::make_unique<ExternalTranscriber>(cfg.asr_command,
                                                        cfg.asr_timeout_s);
    }

    std::vector<StageItem> items(work.size());
    std::vector<std::optional<ItemFailure>> failures(work.size());
    std::atomic<std::size_t> invocations{0};

    parallel_for(work.size(), cfg.jobs, [&](std::size_t i) {
        const WorkItem& wi = work[i];
        StageItem& item = items[i];
        item.subject_id = wi.record->subject_id;
        item.task = to_string(wi.task);
        std::string key;
        try {
            key = transcript_cache_key(wi.wav_path);
            item.key = key;
            if (cache_lookup(cache, key)) {
                item.source = to_string(TranscriptSource::Cache);
                return;
            }
            const AudioBuffer buf = resample_to_16k(read_wav(wi.wav_path));
            invocations.fetch_add(1, std::memory_order_relaxed);
            const std::string text = transcribe(*backend, buf, wi.wav_path);
            cache_store(cache, key, text);
            item.source = to_string(backend->source());
        } catch (const Error& e) {
            if (!key.empty()) {
                try {
                    atomic_write_file(cache / (key + ".err"), e.what());
                } catch (const Error&) {
                    // keep the primary failure
                }
            }
            failures[i] = ItemFailure{item.subject_id, item.task,
                                      wi.wav_path.string(), e.what()};
        }
    });

    StageResult result;
    std::vector<ItemFailure> failed;
    for (std::size_t i = 0; i < work.size(); ++i) {
        if (failures[i]) {
            failed.push_back(*failures[i]);
        } else {
            result.items.push_back(items[i]);
        }
    }
    result.backend_invocations = invocations.load();
    result.failures = failed.size();

    write_stage_index(cfg.run_dir / "stage.transcribe.json", backend->name(),
                      result.backend_invocations, result.items);
    if (!failed.empty()) {
        write_failure_manifest(cfg.run_dir / "stage.transcribe.failures.json",
                               failed);
        throw BackendError(
            "transcribe: " + std::to_string(failed.size()) + " of " +
            std::to_string(work.size()) +
            " files failed; see stage.transcribe.failures.json (" +
            std::to_string(result.items.size()) + " results cached)");
    }
    return result;
}

StageResult cmd_embed(const RunConfig& cfg) {
    validate_run_config(cfg);
    const auto transcribed =
        read_stage_index(cfg.run_dir / "stage.transcribe.json");
    const fs::path cache = emb_cache_dir(cfg);

    std::unique_ptr<EncoderBackend> backend;
    if (cfg.encoder_backend == "mock") {
        backend = std::make_unique<MockEncoder>();
    } else {
        backend = std::make_unique<ExternalEncoder>(cfg.encoder_command,
                                                    cfg.encoder_timeout_s);
    }

    std::vector<StageItem> items(transcribed.size());
    std::vector<std::optional<ItemFailure>> failures(transcribed.size());
    std::atomic<std::size_t> invocations{0};

    parallel_for(transcribed.size(), cfg.jobs, [&](std::size_t i) {
        const StageItem& src = transcribed[i];
        StageItem& item = items[i];
        item.subject_id = src.subject_id;
        item.task = src.task;
        try {
            const auto text = cache_lookup(asr_cache_dir(cfg), src.key);
            if (!text) {
                throw PreconditionError(
                    "transcript cache entry missing (key " + src.key +
                    "); rerun transcribe");
            }
            const std::string key =
                embedding_cache_key(backend->name(), *text);
            item.key = key;
            if (embedding_cache_lookup(cache, key)) {
                item.source = "cache";
                return;
            }
            invocations.fetch_add(1, std::memory_order_relaxed);
            const Embedding emb = encode(*backend, *text);
            embedding_cache_store(cache, key, emb);
            item.source = backend->name();
        } catch (const Error& e) {
            failures[i] = ItemFailure{item.subject_id, item.task, src.key,
                                      e.what()};
        }
    });

    StageResult result;
    std::vector<ItemFailure> failed;
    for (std::size_t i = 0; i < transcribed.size(); ++i) {
        if (failures[i]) {
            failed.push_back(*failures[i]);
        } else {
            result.items.push_back(items[i]);
        }
    }
    result.backend_invocations = invocations.load();
    result.failures = failed.size();

    write_stage_index(cfg.run_dir / "stage.embed.json", backend->name(),
                      result.backend_invocations, result.items);
    if (!failed.empty()) {
        write_failure_manifest(cfg.run_dir / "stage.embed.failures.json",
                               failed);
        throw BackendError("embed: " + std::to_string(failed.size()) + " of " +
                           std::to_string(transcribed.size()) +
                           " transcripts failed; see stage.embed.failures.json");
    }
    return result;
}

StageResult cmd_featurize(const RunConfig& cfg) {
    validate_run_config(cfg);
    const auto records = load_manifest(cfg.manifest_path);
    const auto transcripts = load_transcripts(cfg);
    const auto work = build_work_list(cfg, records);

    const bool external = !cfg.acoustic_command.empty();
    std::vector<StageItem> items(work.size());
    std::vector<std::optional<ItemFailure>> failures(work.size());
    std::vector<Eigen::VectorXd> acoustic(work.size());
    std::vector<ReadabilityVec> readability(work.size());
    std::atomic<std::size_t> invocations{0};

    parallel_for(work.size(), cfg.jobs, [&](std::size_t i) {
        const WorkItem& wi = work[i];
        StageItem& item = items[i];
        item.subject_id = wi.record->subject_id;
        item.task = to_string(wi.task);
        item.source = external ? "external" : "internal";
        try {
            const AudioBuffer buf = resample_to_16k(read_wav(wi.wav_path));
            if (external) {
                auto argv = split_command(cfg.acoustic_command);
                argv.push_back(wi.wav_path.string());
                invocations.fetch_add(1, std::memory_order_relaxed);
                const SubprocessResult r =
                    run_subprocess(argv, "", cfg.asr_timeout_s);
                if (r.timed_out) {
                    throw TimeoutError("acoustic backend timed out: " +
                                       wi.wav_path.string());
                }
                if (r.exit_code != 0) {
                    throw BackendError("acoustic backend exited with code " +
                                       std::to_string(r.exit_code) + "\n" +
                                       r.err);
                }
                std::istringstream in(r.out);
                std::vector<double> values;
                double v = 0.0;
                while (in >> v) {
                    values.push_back(v);
                }
                if (values.empty()) {
                    throw FormatError("acoustic backend emitted no numbers");
                }
                acoustic[i] = Eigen::Map<const Eigen::VectorXd>(
                    values.data(), static_cast<Eigen::Index>(values.size()));
            } else {
                acoustic[i] = extract_acoustic(buf);
            }
            const auto sub_it = transcripts.find(wi.record->subject_id);
            std::string text;
            if (sub_it != transcripts.end()) {
                const auto task_it = sub_it->second.find(wi.task);
                if (task_it != sub_it->second.end()) {
                    text = task_it->second;
                }
            }
            readability[i] = extract_readability(text, buf.duration_s());
        } catch (const Error& e) {
            failures[i] = ItemFailure{item.subject_id, item.task,
                                      wi.wav_path.string(), e.what()};
        }
    });

    // Validate consistent acoustic width before writing anything.
    Eigen::Index acoustic_dim = external ? 0 : kAcousticDim;
    for (std::size_t i = 0; i < work.size(); ++i) {
        if (failures[i]) continue;
        if (acoustic_dim == 0) {
            acoustic_dim = acoustic[i].size();
        } else if (acoustic[i].size() != acoustic_dim) {
            failures[i] = ItemFailure{
                items[i].subject_id, items[i].task, work[i].wav_path.string(),
                "acoustic backend width changed: " +
                    std::to_string(acoustic[i].size()) + " vs " +
                    std::to_string(acoustic_dim)};
        }
    }

    StageResult result;
    std::vector<ItemFailure> failed;
    std::string csv = "subject_id,task";
    for (Eigen::Index f = 0; f < acoustic_dim + kReadabilityDim; ++f) {
        csv += ",f" + std::to_string(f + 1);
    }
    csv += "\n";
    for (std::size_t i = 0; i < work.size(); ++i) {
        if (failures[i]) {
            failed.push_back(*failures[i]);
            continue;
        }
        result.items.push_back(items[i]);
        csv += items[i].subject_id + "," + items[i].task;
        for (Eigen::Index f = 0; f < acoustic[i].size(); ++f) {
            csv += ",";
            csv += format_double(acoustic[i][f]);
        }
        for (Eigen::Index f = 0; f < kReadabilityDim; ++f) {
            csv += ",";
            csv += format_double(readability[i][f]);
        }
        csv += "\n";
    }
    result.backend_invocations = invocations.load();
    result.failures = failed.size();

    atomic_write_file(cfg.run_dir / "features.csv", csv);
    {
        JsonWriter w;
        w.begin_object();
        w.kv("version", 1);
        w.kv("acoustic", external ? "external" : "internal");
        w.kv("acoustic_dim", static_cast<std::int64_t>(acoustic_dim));
        w.kv("backend_invocations", result.backend_invocations);
        w.key("items");
        w.begin_array();
        for (const auto& it : result.items) {
            w.begin_object();
            w.kv("subject_id", it.subject_id);
            w.kv("task", it.task);
            w.kv("source", it.source);
            w.end_object();
        }
        w.end_array();
        w.end_object();
        atomic_write_file(cfg.run_dir / "stage.featurize.json", w.str());
    }
    if (!failed.empty()) {
        write_failure_manifest(cfg.run_dir / "stage.featurize.failures.json",
                               failed);
        throw BackendError("featurize: " + std::to_string(failed.size()) +
                           " of " + std::to_string(work.size()) +
                           " recordings failed; see "
                           "stage.featurize.failures.json");
    }
    return result;
}

TrainResult cmd_train_regressor(const RunConfig& cfg) {
    validate_run_config(cfg);
    const auto records = load_manifest(cfg.manifest_path);
    const auto embeddings = load_embeddings(cfg);
    auto [train_recs, dev_recs] =
        split_dataset(records, cfg.dev_fraction, cfg.seed);

    const NormalizationParams norm = fit_normalizer(train_recs);

    FeatureTable features;
    StandardizationParams acoustic_std;
    if (cfg.concat_acoustic) {
        features = load_features(cfg);
        std::vector<Eigen::VectorXd> train_acoustic;
        for (const auto& rec : train_recs) {
            const auto sub = features.rows.find(rec.subject_id);
            if (sub == features.rows.end()) continue;
            for (const auto& [task, row] : sub->second) {
                train_acoustic.push_back(row.head(features.acoustic_dim));
            }
        }
        acoustic_std = fit_standardizer(train_acoustic);
    }

    auto make_examples = [&](const std::vector<SubjectRecord>& recs) {
        std::vector<TrainingExample> examples;
        for (const auto& rec : recs) {
            if (!rec.mmse) continue;
            const auto sub = embeddings.find(rec.subject_id);
            if (sub == embeddings.end()) continue;
            for (const auto& [task, emb] : sub->second) {
                TrainingExample ex;
                if (cfg.concat_acoustic) {
                    const auto frow = features.rows.find(rec.subject_id);
                    if (frow == features.rows.end() ||
                        frow->second.find(task) == frow->second.end()) {
                        continue;
                    }
                    const Eigen::VectorXd ac =
                        frow->second.at(task).head(features.acoustic_dim);
                    ex.embedding.resize(emb.size() + kAcousticPadDim);
                    ex.embedding.head(emb.size()) = emb;
                    ex.embedding.tail(kAcousticPadDim) =
                        pad_acoustic(acoustic_std, ac);
                } else {
                    ex.embedding = emb;
                }
                ex.target_normalized =
                    normalize_score(static_cast<double>(*rec.mmse), norm);
                ex.subject_id = rec.subject_id;
                ex.task = task;
                examples.push_back(std::move(ex));
            }
        }
        return examples;
    };

    const auto train_examples = make_examples(train_recs);
    const auto dev_examples = make_examples(dev_recs);
    if (train_examples.empty()) {
        throw PreconditionError(
            "no training examples: need train subjects with MMSE scores and "
            "cached embeddings");
    }

    const int input_dim = static_cast<int>(train_examples.front().embedding.size());
    const TrainConfig tc = regressor_config(cfg);
    const RegressionHead head = init_head(tc.seed, input_dim);
    TrainResult result = train(head, train_examples, dev_examples, tc);

    save_head_checkpoint(head_checkpoint_path(cfg), result.head, norm, tc,
                         cfg.concat_acoustic ? &acoustic_std : nullptr);

    const auto& last = result.history.back();
    std::cerr << "train-regressor: epochs=" << result.history.size()
              << " best_epoch=" << result.best_epoch + 1
              << " final_train_mse=" << last.train_mse
              << " best_dev_mse="
              << (dev_examples.empty()
                      ? std::numeric_limits<double>::quiet_NaN()
                      : result.history[static_cast<std::size_t>(
                                           result.best_epoch)]
                            .dev_mse)
              << "\n";
    return result;
}

void cmd_train_classifier(const RunConfig& cfg) {
    validate_run_config(cfg);
    const auto records = load_manifest(cfg.manifest_path);
    const auto embeddings = load_embeddings(cfg);
    const auto features = load_features(cfg);
    auto [train_recs, dev_recs] =
        split_dataset(records, cfg.dev_fraction, cfg.seed);

    const auto class_order =
        cfg.binary_mode ? kBinaryClassOrder : kDefaultClassOrder;

    // Subject-level inputs: tasks concatenated in CTD/PFT/SFT order for the
    // SVM; embeddings averaged over tasks for the text classifier.
    auto build = [&](const std::vector<SubjectRecord>& recs,
                     Eigen::MatrixXd& X_svm, Eigen::MatrixXd& X_emb,
                     std::vector<int>& labels) {
        std::vector<Eigen::VectorXd> svm_rows;
        std::vector<Embedding> emb_rows;
        for (const auto& rec : recs) {
            if (rec.class_label == ClassLabel::Unknown) continue;
            const auto frow = features.rows.find(rec.subject_id);
            const auto erow = embeddings.find(rec.subject_id);
            if (frow == features.rows.end() || erow == embeddings.end()) {
                continue;
            }
            bool complete = true;
            for (TaskKind task : kAllTasks) {
                if (frow->second.find(task) == frow->second.end() ||
                    erow->second.find(task) == erow->second.end()) {
                    complete = false;
                    break;
                }
            }
            if (!complete) continue;

            Eigen::VectorXd svm_x(3 * features.total_dim);
            Embedding emb_mean = Embedding::Zero(kEmbeddingDim);
            int t = 0;
            for (TaskKind task : kAllTasks) {
                svm_x.segment(t * features.total_dim, features.total_dim) =
                    frow->second.at(task);
                emb_mean += erow->second.at(task);
                ++t;
            }
            emb_mean /= 3.0;
            svm_rows.push_back(std::move(svm_x));
            emb_rows.push_back(std::move(emb_mean));
            labels.push_back(class_index(rec.class_label, cfg.binary_mode));
        }
        X_svm.resize(static_cast<Eigen::Index>(svm_rows.size()),
                     3 * features.total_dim);
        X_emb.resize(static_cast<Eigen::Index>(emb_rows.size()), kEmbeddingDim);
        for (std::size_t i = 0; i < svm_rows.size(); ++i) {
            X_svm.row(static_cast<Eigen::Index>(i)) = svm_rows[i].transpose();
            X_emb.row(static_cast<Eigen::Index>(i)) = emb_rows[i].transpose();
        }
    };

    Eigen::MatrixXd X_svm, X_emb;
    std::vector<int> labels;
    build(train_recs, X_svm, X_emb, labels);
    if (X_svm.rows() < 2) {
        throw PreconditionError(
            "train-classifier: need at least 2 labeled train subjects with "
            "features and embeddings");
    }

    std::vector<Eigen::VectorXd> train_rows;
    train_rows.reserve(static_cast<std::size_t>(X_svm.rows()));
    for (Eigen::Index i = 0; i < X_svm.rows(); ++i) {
        train_rows.push_back(X_svm.row(i).transpose());
    }
    const StandardizationParams standardizer = fit_standardizer(train_rows);
    Eigen::MatrixXd X_std(X_svm.rows(), X_svm.cols());
    for (Eigen::Index i = 0; i < X_svm.rows(); ++i) {
        X_std.row(i) =
            apply_standardizer(standardizer, X_svm.row(i).transpose())
                .transpose();
    }

    ClassifierCheckpoint ckpt;
    ckpt.class_order = class_order;
    ckpt.svm_config = SvmConfig{cfg.svm_lambda, cfg.svm_epochs, cfg.seed};
    ckpt.svm = train_svm(X_std, labels, class_order, ckpt.svm_config);
    ckpt.embed_config = EmbedClfConfig{cfg.embed_lr, cfg.embed_epochs, cfg.seed};
    ckpt.embed_clf = train_embed_clf(X_emb, labels, class_order,
                                     ckpt.embed_config);
    ckpt.standardizer = standardizer;
    ckpt.ensemble = EnsembleConfig{cfg.w_svm, cfg.w_text};
    ckpt.binary_mode = cfg.binary_mode;
    ckpt.seed = cfg.seed;
    save_clf_checkpoint(clf_checkpoint_path(cfg), ckpt);

    std::cerr << "train-classifier: subjects=" << X_svm.rows()
              << " classes=" << class_order.size()
              << " svm_objective="
              << svm_objective(ckpt.svm, X_std, labels, cfg.svm_lambda)
              << "\n";
}

void cmd_predict(const RunConfig& cfg) {
    validate_run_config(cfg);
    require_file(head_checkpoint_path(cfg), "train-regressor");
    const HeadCheckpoint ckpt = load_head_checkpoint(head_checkpoint_path(cfg));
    const AcousticAugment aug = load_head_augment(head_checkpoint_path(cfg));
    const auto records = load_manifest(cfg.manifest_path);
    const auto embeddings = load_embeddings(cfg);
    FeatureTable features;
    if (aug.enabled) {
        features = load_features(cfg);
    }

    // Sorted by subject_id for deterministic output.
    std::map<std::string, const SubjectRecord*> by_id;
    for (const auto& rec : records) {
        by_id[rec.subject_id] = &rec;
    }

    std::string csv = "subject_id,y_true,y_pred\n";
    const Aggregation agg = aggregation_from_config(cfg);
    for (const auto& [subject_id, rec] : by_id) {
        const auto erow = embeddings.find(subject_id);
        if (erow == embeddings.end() || erow->second.empty()) {
            continue;
        }
        std::map<TaskKind, Embedding> inputs;
        for (const auto& [task, emb] : erow->second) {
            const Eigen::VectorXd* acoustic = nullptr;
            Eigen::VectorXd acoustic_row;
            if (aug.enabled) {
                const auto frow = features.rows.find(subject_id);
                if (frow == features.rows.end() ||
                    frow->second.find(task) == frow->second.end()) {
                    continue;
                }
                acoustic_row =
                    frow->second.at(task).head(features.acoustic_dim);
                acoustic = &acoustic_row;
            }
            inputs[task] = regression_input(emb, aug, acoustic);
        }
        if (inputs.empty()) {
            continue;
        }
        const double y_pred =
            predict_subject(ckpt.head, inputs, ckpt.norm, agg);
        csv += subject_id + ",";
        if (rec->mmse) {
            csv += std::to_string(*rec->mmse);
        }
        csv += ",";
        csv += format_double(y_pred);
        csv += "\n";
    }
    atomic_write_file(predictions_path(cfg), csv);
}

EvaluateResult cmd_evaluate(const RunConfig& cfg) {
    validate_run_config(cfg);
    const auto records = load_manifest(cfg.manifest_path);
    auto [train_recs, dev_recs] =
        split_dataset(records, cfg.dev_fraction, cfg.seed);
    std::set<std::string> dev_ids;
    for (const auto& rec : dev_recs) {
        dev_ids.insert(rec.subject_id);
    }

    EvaluateResult result;
    const bool have_head = fs::exists(predictions_path(cfg));
    const bool have_clf = fs::exists(clf_checkpoint_path(cfg));
    if (!have_head && !have_clf) {
        throw PreconditionError("missing stage output: " +
                                predictions_path(cfg).string() + " or " +
                                clf_checkpoint_path(cfg).string() +
                                " (run predict or train-classifier first)");
    }

    if (have_head) {
        EvaluationReport report;
        report.task = ReportTask::Regression;
        report.model_name = "regression head (" + cfg.encoder_backend +
                            " encoder, " + cfg.asr_backend + " asr)";

        std::istringstream in(read_file(predictions_path(cfg)));
        std::string line;
        std::getline(in, line);  // header
        std::vector<double> dev_true, dev_pred;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::istringstream row(line);
            std::string subject, y_true, y_pred;
            std::getline(row, subject, ',');
            std::getline(row, y_true, ',');
            std::getline(row, y_pred, ',');
            report.rows.push_back({subject, y_true, y_pred});
            if (!y_true.empty() && dev_ids.count(subject) > 0) {
                dev_true.push_back(parse_double("y_true", y_true));
                dev_pred.push_back(parse_double("y_pred", y_pred));
            }
        }
        if (!dev_true.empty()) {
            const Eigen::Map<const Eigen::VectorXd> t(dev_true.data(),
                                                      static_cast<Eigen::Index>(
                                                          dev_true.size()));
            const Eigen::Map<const Eigen::VectorXd> p(dev_pred.data(),
                                                      static_cast<Eigen::Index>(
                                                          dev_pred.size()));
            report.rmse = rmse(p, t);
            report.dev_metric = report.rmse;
            std::cerr << "evaluate: dev RMSE = " << report.rmse << " over "
                      << dev_true.size() << " subjects\n";
        }
        result.reports.push_back(std::move(report));
    }

    if (have_clf) {
        const ClassifierCheckpoint ckpt =
            load_clf_checkpoint(clf_checkpoint_path(cfg));
        const auto embeddings = load_embeddings(cfg);
        const auto features = load_features(cfg);

        EvaluationReport report;
        report.task = ReportTask::Classification;
        report.model_name = "SVM (acoustic+readability) " +
                            format_double(ckpt.ensemble.w_svm * 100.0) +
                            "% + text classifier " +
                            format_double(ckpt.ensemble.w_text * 100.0) + "%";
        report.class_order = ckpt.class_order;

        std::vector<int> y_true, y_pred;
        std::string csv = "subject_id,y_true,y_pred";
        for (const auto& c : ckpt.class_order) {
            csv += ",p_" + c;
        }
        csv += "\n";
        for (const auto& rec : dev_recs) {
            if (rec.class_label == ClassLabel::Unknown) continue;
            const auto frow = features.rows.find(rec.subject_id);
            const auto erow = embeddings.find(rec.subject_id);
            if (frow == features.rows.end() || erow == embeddings.end()) {
                continue;
            }
            bool complete = true;
            for (TaskKind task : kAllTasks) {
                if (frow->second.find(task) == frow->second.end() ||
                    erow->second.find(task) == erow->second.end()) {
                    complete = false;
                    break;
                }
            }
            if (!complete) continue;

            Eigen::VectorXd svm_x(3 * features.total_dim);
            Embedding emb_mean = Embedding::Zero(kEmbeddingDim);
            int t = 0;
            for (TaskKind task : kAllTasks) {
                svm_x.segment(t * features.total_dim, features.total_dim) =
                    frow->second.at(task);
                emb_mean += erow->second.at(task);
                ++t;
            }
            emb_mean /= 3.0;

            const Eigen::VectorXd p_svm = svm_probs(
                ckpt.svm, apply_standardizer(ckpt.standardizer, svm_x));
            const Eigen::VectorXd p_text = embed_probs(ckpt.embed_clf, emb_mean);
            const auto [cls, combined] =
                ensemble_predict(p_svm, p_text, ckpt.ensemble);

            const int truth = class_index(rec.class_label, ckpt.binary_mode);
            y_true.push_back(truth);
            y_pred.push_back(cls);

            csv += rec.subject_id + "," + ckpt.class_order[static_cast<std::size_t>(truth)] +
                   "," + ckpt.class_order[static_cast<std::size_t>(cls)];
            for (Eigen::Index c = 0; c < combined.size(); ++c) {
                csv += ",";
                csv += format_double(combined[c]);
            }
            csv += "\n";
        }
        if (!y_true.empty()) {
            auto [confusion, macro_f1] = confusion_and_f1(
                y_pred, y_true, static_cast<int>(ckpt.class_order.size()));
            report.confusion = confusion;
            report.macro_f1 = macro_f1;
            report.dev_metric = macro_f1;
            std::cerr << "evaluate: dev macro-F1 = " << macro_f1 << " over "
                      << y_true.size() << " subjects\n";
        } else {
            report.confusion = Eigen::MatrixXi::Zero(
                static_cast<Eigen::Index>(ckpt.class_order.size()),
                static_cast<Eigen::Index>(ckpt.class_order.size()));
        }
        atomic_write_file(cfg.run_dir / "classifications.csv", csv);
        result.reports.push_back(std::move(report));
    }

    emit_reports(result.reports, cfg.run_dir);
    return result;
}

bool cmd_gradcheck(const RunConfig& cfg, double threshold) {
    const GradCheckResult r = gradient_check(cfg.seed);
    const bool pass = r.max_relative_error <= threshold;
    std::printf("gradcheck: max_relative_error=%.6e probes=%d threshold=%.1e %s\n",
                r.max_relative_error, r.probes, threshold,
                pass ? "PASS" : "FAIL");
    std::fflush(stdout);
    return pass;
}

}  // namespace cogspeech
