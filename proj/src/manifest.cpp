#include "cogspeech/manifest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/rng.hpp"

namespace cogspeech {
namespace {

constexpr std::array<const char*, 6> kHeader = {
    "subject_id", "class", "mmse", "ctd_path", "pft_path", "sft_path"};

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return line;
}

}  // namespace

const char* to_string(TaskKind task) {
    switch (task) {
        case TaskKind::CTD: return "CTD";
        case TaskKind::PFT: return "PFT";
        case TaskKind::SFT: return "SFT";
    }
    return "?";
}

TaskKind task_from_string(const std::string& name) {
    if (name == "CTD") return TaskKind::CTD;
    if (name == "PFT") return TaskKind::PFT;
    if (name == "SFT") return TaskKind::SFT;
    throw ArgumentError("unknown task kind: " + name);
}

const char* to_string(ClassLabel label) {
    switch (label) {
        case ClassLabel::HC: return "HC";
        case ClassLabel::MCI: return "MCI";
        case ClassLabel::Dementia: return "Dementia";
        case ClassLabel::Unknown: return "Unknown";
    }
    return "?";
}

ClassLabel class_from_string(const std::string& name) {
    if (name == "HC") return ClassLabel::HC;
    if (name == "MCI") return ClassLabel::MCI;
    if (name == "Dementia") return ClassLabel::Dementia;
    if (name == "?" || name == "Unknown") return ClassLabel::Unknown;
    throw FormatError("unknown class label: " + name);
}

std::vector<SubjectRecord> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open manifest: " + path.string());
    }

    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty manifest: " + path.string());
    }
    const auto header = split_fields(strip_cr(line));
    for (std::size_t i = 0; i < kHeader.size(); ++i) {
        if (i >= header.size() || header[i] != kHeader[i]) {
            throw FormatError(std::string("manifest header missing column '") +
                              kHeader[i] + "'");
        }
    }
    if (header.size() != kHeader.size()) {
        throw FormatError("manifest header has extra columns");
    }

    std::vector<SubjectRecord> records;
    std::unordered_set<std::string> seen_ids;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        line = strip_cr(line);
        if (line.empty()) {
            continue;
        }
        if (line.find('"') != std::string::npos) {
            throw FormatError("quoted fields are not supported (row " +
                              std::to_string(row) + ")");
        }
        const auto fields = split_fields(line);
        if (fields.size() != kHeader.size()) {
            throw FormatError("expected " + std::to_string(kHeader.size()) +
                              " fields, got " + std::to_string(fields.size()) +
                              " (row " + std::to_string(row) + ")");
        }

        SubjectRecord rec;
        rec.subject_id = fields[0];
        if (rec.subject_id.empty()) {
            throw FormatError("empty subject_id (row " + std::to_string(row) +
                              ")");
        }
        if (!seen_ids.insert(rec.subject_id).second) {
            throw FormatError("duplicate subject_id '" + rec.subject_id +
                              "' (row " + std::to_string(row) + ")");
        }
        rec.class_label = class_from_string(fields[1]);
        if (!fields[2].empty()) {
            int value = 0;
            try {
                std::size_t pos = 0;
                value = std::stoi(fields[2], &pos);
                if (pos != fields[2].size()) {
                    throw std::invalid_argument("trailing");
                }
            } catch (const std::exception&) {
                throw FormatError("mmse is not an integer: '" + fields[2] +
                                  "' (row " + std::to_string(row) + ")");
            }
            if (value < kMmseMin || value > kMmseMax) {
                throw RangeError("mmse " + std::to_string(value) +
                                 " outside [0,30] (row " + std::to_string(row) +
                                 ")");
            }
            rec.mmse = value;
        }
        rec.recordings[TaskKind::CTD] = fields[3];
        rec.recordings[TaskKind::PFT] = fields[4];
        rec.recordings[TaskKind::SFT] = fields[5];
        records.push_back(std::move(rec));
    }
    return records;
}

std::filesystem::path resolve_recording(const std::filesystem::path& manifest,
                                        const SubjectRecord& record,
                                        TaskKind task) {
    const std::filesystem::path p(record.recordings.at(task));
    if (p.is_absolute()) {
        return p;
    }
    return manifest.parent_path() / p;
}

std::pair<std::vector<SubjectRecord>, std::vector<SubjectRecord>>
split_dataset(const std::vector<SubjectRecord>& records, double dev_fraction,
              std::uint64_t seed) {
    if (records.empty()) {
        throw ArgumentError("split_dataset: no records");
    }
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) {
        throw ArgumentError("dev_fraction must be in (0,1)");
    }

    // Strata in fixed label order; indices within a stratum keep manifest
    // order before the seeded shuffle, so the split depends only on
    // (records, dev_fraction, seed).
    constexpr ClassLabel kStrata[] = {ClassLabel::HC, ClassLabel::MCI,
                                      ClassLabel::Dementia,
                                      ClassLabel::Unknown};
    std::vector<bool> in_dev(records.size(), false);
    for (std::size_t s = 0; s < 4; ++s) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].class_label == kStrata[s]) {
                idx.push_back(i);
            }
        }
        if (idx.empty()) {
            continue;
        }
        SplitMix64 rng(mix_seed(seed, s));
        shuffle(idx, rng);
        auto n_dev = static_cast<std::size_t>(
            std::llround(dev_fraction * static_cast<double>(idx.size())));
        n_dev = std::min(n_dev, idx.size());
        for (std::size_t k = 0; k < n_dev; ++k) {
            in_dev[idx[k]] = true;
        }
    }

    std::vector<SubjectRecord> train;
    std::vector<SubjectRecord> dev;
    for (std::size_t i = 0; i < records.size(); ++i) {
        (in_dev[i] ? dev : train).push_back(records[i]);
    }
    return {std::move(train), std::move(dev)};
}

NormalizationParams fit_normalizer(const std::vector<SubjectRecord>& train) {
    double lo = 0.0, hi = 0.0;
    std::size_t distinct = 0;
    std::unordered_set<int> seen;
    for (const auto& rec : train) {
        if (!rec.mmse) {
            continue;
        }
        if (seen.insert(*rec.mmse).second) {
            ++distinct;
        }
        const double y = *rec.mmse;
        if (seen.size() == 1) {
            lo = hi = y;
        } else {
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    }
    if (distinct < 2) {
        throw RangeError(
            "fit_normalizer: need at least two distinct MMSE scores, got " +
            std::to_string(distinct));
    }
    return {lo, hi};
}

void validate_params(const NormalizationParams& params) {
    if (!std::isfinite(params.y_min) || !std::isfinite(params.y_max) ||
        !(params.y_max > params.y_min)) {
        throw RangeError("invalid normalization params: y_min=" +
                         std::to_string(params.y_min) +
                         " y_max=" + std::to_string(params.y_max));
    }
}

double normalize_score(double y, const NormalizationParams& params) {
    validate_params(params);
    return (y - params.y_min) / (params.y_max - params.y_min);
}

double denormalize_score(double p_hat, const NormalizationParams& params) {
    validate_params(params);
    return p_hat * (params.y_max - params.y_min) + params.y_min;
}

}  // namespace cogspeech
