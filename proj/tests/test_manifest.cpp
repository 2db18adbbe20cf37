#include "cogspeech/manifest.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "cogspeech/core/errors.hpp"
#include "support/tempdir.hpp"

using namespace cogspeech;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
}

const char* kHeader = "subject_id,class,mmse,ctd_path,pft_path,sft_path\n";

std::vector<SubjectRecord> make_records(
    const std::vector<std::pair<ClassLabel, std::optional<int>>>& spec) {
    std::vector<SubjectRecord> records;
    int i = 0;
    for (const auto& [label, mmse] : spec) {
        SubjectRecord rec;
        rec.subject_id = "s" + std::to_string(100 + i++);
        rec.class_label = label;
        rec.mmse = mmse;
        rec.recordings = {{TaskKind::CTD, "a.wav"},
                          {TaskKind::PFT, "b.wav"},
                          {TaskKind::SFT, "c.wav"}};
        records.push_back(rec);
    }
    return records;
}

}  // namespace

TEST_CASE("load_manifest maps fields directly") {
    testsupport::TempDir dir("manifest");
    write_text(dir / "m.csv",
               std::string(kHeader) + "s001,HC,29,a.wav,b.wav,c.wav\n");
    const auto records = load_manifest(dir / "m.csv");
    REQUIRE(records.size() == 1);
    CHECK(records[0].subject_id == "s001");
    CHECK(records[0].class_label == ClassLabel::HC);
    CHECK(records[0].mmse == 29);
    CHECK(records[0].recordings.at(TaskKind::CTD) == "a.wav");
    CHECK(records[0].recordings.at(TaskKind::PFT) == "b.wav");
    CHECK(records[0].recordings.at(TaskKind::SFT) == "c.wav");
}

TEST_CASE("load_manifest blank mmse and ? class") {
    testsupport::TempDir dir("manifest");
    write_text(dir / "m.csv",
               std::string(kHeader) + "s002,MCI,,a.wav,b.wav,c.wav\n" +
                   "s003,?,12,a.wav,b.wav,c.wav\n");
    const auto records = load_manifest(dir / "m.csv");
    REQUIRE(records.size() == 2);
    CHECK_FALSE(records[0].mmse.has_value());
    CHECK(records[1].class_label == ClassLabel::Unknown);
}

TEST_CASE("load_manifest accepts crlf line endings") {
    testsupport::TempDir dir("manifest");
    write_text(dir / "m.csv",
               "subject_id,class,mmse,ctd_path,pft_path,sft_path\r\n"
               "s001,HC,30,a.wav,b.wav,c.wav\r\n");
    const auto records = load_manifest(dir / "m.csv");
    REQUIRE(records.size() == 1);
    CHECK(records[0].recordings.at(TaskKind::SFT) == "c.wav");
}

TEST_CASE("load_manifest error paths") {
    testsupport::TempDir dir("manifest");

    SUBCASE("mmse out of range names the row") {
        write_text(dir / "m.csv", std::string(kHeader) +
                                      "s001,HC,29,a.wav,b.wav,c.wav\n"
                                      "s002,HC,2,a.wav,b.wav,c.wav\n"
                                      "s003,Dementia,31,a.wav,b.wav,c.wav\n");
        CHECK_THROWS_WITH_AS(load_manifest(dir / "m.csv"),
                             doctest::Contains("row 4"), RangeError);
    }
    SUBCASE("missing header column is named") {
        write_text(dir / "m.csv",
                   "subject_id,class,mmse,ctd_path,pft_path\ns,HC,1,a,b\n");
        CHECK_THROWS_WITH_AS(load_manifest(dir / "m.csv"),
                             doctest::Contains("sft_path"), FormatError);
    }
    SUBCASE("duplicate subject_id") {
        write_text(dir / "m.csv", std::string(kHeader) +
                                      "s001,HC,29,a.wav,b.wav,c.wav\n"
                                      "s001,MCI,20,a.wav,b.wav,c.wav\n");
        CHECK_THROWS_WITH_AS(load_manifest(dir / "m.csv"),
                             doctest::Contains("duplicate"), FormatError);
    }
    SUBCASE("quoted fields rejected") {
        write_text(dir / "m.csv", std::string(kHeader) +
                                      "s001,HC,29,\"a.wav\",b.wav,c.wav\n");
        CHECK_THROWS_AS(load_manifest(dir / "m.csv"), FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_manifest(dir / "absent.csv"), IoError);
    }
}

TEST_CASE("split_dataset determinism and sizes") {
    const auto records = make_records({{ClassLabel::HC, 25},
                                       {ClassLabel::HC, 26},
                                       {ClassLabel::HC, 27},
                                       {ClassLabel::HC, 28},
                                       {ClassLabel::HC, 29},
                                       {ClassLabel::MCI, 20},
                                       {ClassLabel::MCI, 21},
                                       {ClassLabel::MCI, 22},
                                       {ClassLabel::MCI, 23},
                                       {ClassLabel::MCI, 24}});
    auto [train1, dev1] = split_dataset(records, 0.2, 7);
    CHECK(train1.size() == 8);
    CHECK(dev1.size() == 2);

    auto [train2, dev2] = split_dataset(records, 0.2, 7);
    REQUIRE(train2.size() == train1.size());
    for (std::size_t i = 0; i < train1.size(); ++i) {
        CHECK(train1[i].subject_id == train2[i].subject_id);
    }
}

TEST_CASE("split_dataset stratifies by class") {
    const auto records = make_records({{ClassLabel::HC, 25},
                                       {ClassLabel::HC, 26},
                                       {ClassLabel::HC, 27},
                                       {ClassLabel::HC, 28},
                                       {ClassLabel::MCI, 20},
                                       {ClassLabel::MCI, 21},
                                       {ClassLabel::MCI, 22},
                                       {ClassLabel::MCI, 23}});
    auto [train, dev] = split_dataset(records, 0.5, 3);
    CHECK(dev.size() == 4);
    int dev_hc = 0, dev_mci = 0;
    for (const auto& rec : dev) {
        (rec.class_label == ClassLabel::HC ? dev_hc : dev_mci) += 1;
    }
    CHECK(dev_hc == 2);
    CHECK(dev_mci == 2);
}

TEST_CASE("split_dataset is a partition") {
    const auto records = make_records({{ClassLabel::HC, 1},
                                       {ClassLabel::MCI, 2},
                                       {ClassLabel::Dementia, 3},
                                       {ClassLabel::Unknown, std::nullopt},
                                       {ClassLabel::HC, 5},
                                       {ClassLabel::HC, 6},
                                       {ClassLabel::Dementia, 7}});
    for (std::uint64_t seed : {1, 2, 42}) {
        auto [train, dev] = split_dataset(records, 0.3, seed);
        std::set<std::string> seen;
        for (const auto& rec : train) seen.insert(rec.subject_id);
        for (const auto& rec : dev) seen.insert(rec.subject_id);
        CHECK(seen.size() == records.size());
        CHECK(train.size() + dev.size() == records.size());
    }
}

TEST_CASE("split_dataset rejects bad fractions") {
    const auto records = make_records({{ClassLabel::HC, 1}});
    CHECK_THROWS_AS(split_dataset(records, 0.0, 1), ArgumentError);
    CHECK_THROWS_AS(split_dataset(records, 1.0, 1), ArgumentError);
    CHECK_THROWS_AS(split_dataset({}, 0.5, 1), ArgumentError);
}

TEST_CASE("fit_normalizer min/max over train only") {
    const auto records = make_records(
        {{ClassLabel::HC, 12}, {ClassLabel::HC, 25}, {ClassLabel::HC, 30}});
    const auto params = fit_normalizer(records);
    CHECK(params.y_min == 12.0);
    CHECK(params.y_max == 30.0);

    const auto full = fit_normalizer(
        make_records({{ClassLabel::HC, 0}, {ClassLabel::Dementia, 30}}));
    CHECK(full.y_min == 0.0);
    CHECK(full.y_max == 30.0);
}

TEST_CASE("fit_normalizer rejects degenerate ranges") {
    CHECK_THROWS_AS(
        fit_normalizer(make_records({{ClassLabel::HC, 20}, {ClassLabel::HC, 20}})),
        RangeError);
    CHECK_THROWS_AS(fit_normalizer(make_records({{ClassLabel::HC, 20}})),
                    RangeError);
}

TEST_CASE("normalize_score examples") {
    const NormalizationParams p{0.0, 30.0};
    CHECK(normalize_score(15.0, p) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(normalize_score(30.0, p) == doctest::Approx(1.0).epsilon(1e-12));
    const NormalizationParams q{12.0, 30.0};
    CHECK(normalize_score(10.0, q) ==
          doctest::Approx(-1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("denormalize_score examples and linearity") {
    const NormalizationParams p{0.0, 30.0};
    CHECK(denormalize_score(0.5, p) == doctest::Approx(15.0).epsilon(1e-12));
    CHECK(denormalize_score(1.1, p) == doctest::Approx(33.0).epsilon(1e-12));
}

TEST_CASE("normalization round trip") {
    const NormalizationParams p{0.0, 30.0};
    for (int y = 0; y <= 30; ++y) {
        const double back = denormalize_score(normalize_score(y, p), p);
        CHECK(std::abs(back - y) <= 1e-12);
    }
    // Property over random params and values.
    const NormalizationParams q{7.0, 23.0};
    for (double y : {-5.0, 0.0, 3.14159, 17.5, 30.0, 100.0}) {
        const double back = denormalize_score(normalize_score(y, q), q);
        CHECK(std::abs(back - y) <= 1e-9 * std::max(1.0, std::abs(y)));
    }
}

TEST_CASE("normalize_score monotonicity") {
    const NormalizationParams p{3.0, 27.0};
    double prev = normalize_score(-2.0, p);
    for (double y = -1.0; y <= 35.0; y += 0.5) {
        const double cur = normalize_score(y, p);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("invalid params rejected") {
    CHECK_THROWS_AS(normalize_score(1.0, NormalizationParams{5.0, 5.0}),
                    RangeError);
    CHECK_THROWS_AS(denormalize_score(1.0, NormalizationParams{9.0, 3.0}),
                    RangeError);
}
