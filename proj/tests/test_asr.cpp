#include "cogspeech/asr.hpp"

#include <doctest.h>

#include <fstream>
#include <thread>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fnv.hpp"
#include "support/tempdir.hpp"
#include "support/wav.hpp"

using namespace cogspeech;

namespace {

AudioBuffer silence(double seconds) {
    AudioBuffer buf;
    buf.sample_rate = 16000;
    buf.samples =
        Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(seconds * 16000));
    return buf;
}

}  // namespace

TEST_CASE("mock_transcribe sidecar passthrough") {
    testsupport::TempDir dir("asr");
    const auto wav = dir / "a.wav";
    std::ofstream(dir / "a.wav.txt") << "the boy steals cookies";
    const MockTranscriber mock;
    const std::string text = transcribe(mock, silence(2.0), wav);
    CHECK(text == "the boy steals cookies");
}

TEST_CASE("mock_transcribe pseudo-token count is ceil(duration)") {
    testsupport::TempDir dir("asr");
    const std::string text = mock_transcribe(silence(2.4), dir / "nofile.wav");
    // 3 tokens separated by single spaces.
    CHECK(std::count(text.begin(), text.end(), ' ') == 2);
    CHECK(text.substr(0, 3) == "tok");
}

TEST_CASE("mock_transcribe golden value for one second of silence") {
    // Frozen from an independent FNV-1a-64 reference computation: the
    // content hash of 16000 zero doubles is 0xb7b725b914373325 and the
    // first token hash chain gives tok53335f73b5955ada.
    testsupport::TempDir dir("asr");
    const std::string text = mock_transcribe(silence(1.0), dir / "nofile.wav");
    CHECK(text == "tok53335f73b5955ada");
}

TEST_CASE("mock_transcribe golden tokens for 2.4 s of silence") {
    testsupport::TempDir dir("asr");
    const std::string text = mock_transcribe(silence(2.4), dir / "nofile.wav");
    CHECK(text ==
          "tok569c1ccefd1ce82c tokf696c8d75352a4bd tok969174dfa988614e");
}

TEST_CASE("mock_transcribe is deterministic and content-addressed") {
    testsupport::TempDir dir("asr");
    AudioBuffer buf;
    buf.sample_rate = 16000;
    buf.samples = Eigen::ArrayXd::LinSpaced(16000, -0.5, 0.5);
    const std::string a = mock_transcribe(buf, dir / "x.wav");
    const std::string b = mock_transcribe(buf, dir / "y.wav");
    CHECK(a == b);  // path plays no role without a sidecar

    buf.samples[0] += 1.0 / 32768.0;
    const std::string c = mock_transcribe(buf, dir / "x.wav");
    CHECK(a != c);
}

TEST_CASE("mock_transcribe of empty audio is empty") {
    testsupport::TempDir dir("asr");
    CHECK(mock_transcribe(silence(0.0), dir / "nofile.wav").empty());
    const MockTranscriber mock;
    CHECK(transcribe(mock, silence(0.0), dir / "nofile.wav").empty());
}

TEST_CASE("external transcriber runs the command with path and segments") {
    testsupport::TempDir dir("asr");
    const auto wav = dir / "in.wav";
    testsupport::write_wav_pcm16(wav, std::vector<double>(16000, 0.0), 16000);
    // `echo` reflects its arguments: "<path> <segment_count>".
    const ExternalTranscriber backend("/bin/echo", 30.0);
    const AudioBuffer buf = read_wav(wav);
    const std::string text = transcribe(backend, buf, wav);
    CHECK(text == wav.string() + " 1");
}

TEST_CASE("external transcriber failure carries diagnostics") {
    testsupport::TempDir dir("asr");
    const auto script = dir / "fail.sh";
    std::ofstream(script) << "#!/bin/sh\necho boom-diagnostic >&2\nexit 3\n";
    std::filesystem::permissions(script,
                                 std::filesystem::perms::owner_all);
    const ExternalTranscriber backend(script.string(), 30.0);
    CHECK_THROWS_WITH_AS(transcribe(backend, silence(1.0), dir / "a.wav"),
                         doctest::Contains("boom-diagnostic"), BackendError);
}

TEST_CASE("external transcriber timeout") {
    testsupport::TempDir dir("asr");
    const ExternalTranscriber backend("/bin/sleep 5", 0.2);
    CHECK_THROWS_AS(transcribe(backend, silence(1.0), dir / "a.wav"),
                    TimeoutError);
}

TEST_CASE("transcript cache round trip and overwrite") {
    testsupport::TempDir dir("asr");
    const auto cache = dir / "cache";

    CHECK_FALSE(cache_lookup(cache, "00000000000000aa").has_value());

    cache_store(cache, "00000000000000aa", "first");
    auto hit = cache_lookup(cache, "00000000000000aa");
    REQUIRE(hit.has_value());
    CHECK(*hit == "first");

    cache_store(cache, "00000000000000aa", "second");
    CHECK(*cache_lookup(cache, "00000000000000aa") == "second");
}

TEST_CASE("transcript cache key hashes raw file bytes") {
    testsupport::TempDir dir("asr");
    std::ofstream(dir / "f.bin", std::ios::binary) << "abc";
    CHECK(transcript_cache_key(dir / "f.bin") ==
          to_hex16(fnv1a64("abc")));
}

TEST_CASE("concurrent cache stores never expose partial files") {
    testsupport::TempDir dir("asr");
    const auto cache = dir / "cache";
    const std::string payload(20000, 'x');
    std::vector<std::thread> writers;
    for (int i = 0; i < 8; ++i) {
        writers.emplace_back(
            [&]() { cache_store(cache, "00000000000000bb", payload); });
    }
    for (auto& t : writers) t.join();
    auto hit = cache_lookup(cache, "00000000000000bb");
    REQUIRE(hit.has_value());
    CHECK(hit->size() == payload.size());
}
