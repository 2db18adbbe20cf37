#pragma once
// Subject manifests: CSV ingestion, stratified train/dev splitting, and
// MMSE score normalization. Records are immutable after load; everything
// here is pure over its inputs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cogspeech {

enum class TaskKind { CTD, PFT, SFT };

inline constexpr TaskKind kAllTasks[] = {TaskKind::CTD, TaskKind::PFT,
                                         TaskKind::SFT};

const char* to_string(TaskKind task);
TaskKind task_from_string(const std::string& name);

enum class ClassLabel { HC, MCI, Dementia, Unknown };

const char* to_string(ClassLabel label);
ClassLabel class_from_string(const std::string& name);

// MMSE is clinically an integer on a 0-30 scale; stored as int, used as
// double in all arithmetic.
inline constexpr int kMmseMin = 0;
inline constexpr int kMmseMax = 30;

struct SubjectRecord {
    std::string subject_id;
    ClassLabel class_label = ClassLabel::Unknown;
    std::optional<int> mmse;
    // Exactly the three task keys; paths kept verbatim from the manifest
    // and resolved against the manifest's directory at use time.
    std::map<TaskKind, std::string> recordings;
};

// Affine score-normalization parameters, fitted on the training set only.
struct NormalizationParams {
    double y_min = 0.0;
    double y_max = 0.0;
};

// CSV with fixed header `subject_id,class,mmse,ctd_path,pft_path,sft_path`.
// Blank mmse -> absent; class `?` -> Unknown. Fields must not contain
// commas; quoted fields are rejected.
std::vector<SubjectRecord> load_manifest(const std::filesystem::path& path);

// Resolves a recording path relative to the manifest's directory.
std::filesystem::path resolve_recording(const std::filesystem::path& manifest,
                                        const SubjectRecord& record,
                                        TaskKind task);

// Deterministic stratified split: per class stratum, a seeded shuffle takes
// round(dev_fraction * stratum size) records into dev. Output order follows
// the input manifest order.
std::pair<std::vector<SubjectRecord>, std::vector<SubjectRecord>>
split_dataset(const std::vector<SubjectRecord>& records, double dev_fraction,
              std::uint64_t seed);

// y_min/y_max over the train records' MMSE values. Requires at least two
// distinct scores.
NormalizationParams fit_normalizer(const std::vector<SubjectRecord>& train);

void validate_params(const NormalizationParams& params);

// (y - y_min) / (y_max - y_min). Not clamped: out-of-range scores map
// outside [0,1] so the inverse stays exact.
double normalize_score(double y, const NormalizationParams& params);

// p_hat * (y_max - y_min) + y_min; exact inverse of normalize_score.
double denormalize_score(double p_hat, const NormalizationParams& params);

}  // namespace cogspeech
