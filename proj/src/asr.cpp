#include "cogspeech/asr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fileio.hpp"
#include "cogspeech/core/fnv.hpp"
#include "cogspeech/core/subprocess.hpp"

namespace cogspeech {
namespace {

// FNV over each sample's IEEE-754 double bits in little-endian byte order,
// independent of host endianness.
std::uint64_t sample_content_hash(const AudioBuffer& buf) {
    std::uint64_t h = kFnvOffsetBasis;
    for (Eigen::Index i = 0; i < buf.samples.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(buf.samples[i]);
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) {
            bytes[b] = static_cast<unsigned char>(bits & 0xff);
            bits >>= 8;
        }
        h = fnv1a64(bytes, 8, h);
    }
    return h;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n\f\v");
    if (b == std::string::npos) {
        return "";
    }
    std::size_t e = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(b, e - b + 1);
}

std::string strip_nul(std::string s) {
    s.erase(std::remove(s.begin(), s.end(), '\0'), s.end());
    return s;
}

}  // namespace

const char* to_string(TranscriptSource source) {
    switch (source) {
        case TranscriptSource::Mock: return "mock";
        case TranscriptSource::External: return "external";
        case TranscriptSource::Cache: return "cache";
    }
    return "?";
}

std::string mock_transcribe(const AudioBuffer& buf,
                            const std::filesystem::path& audio_path) {
    std::filesystem::path sidecar = audio_path;
    sidecar += ".txt";
    std::error_code ec;
    if (std::filesystem::exists(sidecar, ec) && !ec) {
        return read_file(sidecar);
    }

    if (buf.samples.size() == 0 || buf.sample_rate <= 0) {
        return "";
    }
    const auto n_tokens =
        static_cast<std::uint32_t>(std::ceil(buf.duration_s()));
    const std::uint64_t content = sample_content_hash(buf);

    unsigned char key[12];
    std::uint64_t c = content;
    for (int b = 0; b < 8; ++b) {
        key[b] = static_cast<unsigned char>(c & 0xff);
        c >>= 8;
    }

    std::string out;
    for (std::uint32_t i = 0; i < n_tokens; ++i) {
        std::uint32_t v = i;
        for (int b = 0; b < 4; ++b) {
            key[8 + b] = static_cast<unsigned char>(v & 0xff);
            v >>= 8;
        }
        if (i > 0) {
            out += ' ';
        }
        out += "tok";
        out += to_hex16(fnv1a64(key, 12));
    }
    return out;
}

std::string MockTranscriber::transcribe_file(
    const AudioBuffer& audio, std::size_t /*segments*/,
    const std::filesystem::path& audio_path) const {
    return mock_transcribe(audio, audio_path);
}

std::string ExternalTranscriber::transcribe_file(
    const AudioBuffer& /*audio*/, std::size_t segments,
    const std::filesystem::path& audio_path) const {
    auto argv = split_command(command_);
    if (argv.empty()) {
        throw ArgumentError("asr_command is empty");
    }
    argv.push_back(audio_path.string());
    argv.push_back(std::to_string(segments));

    const SubprocessResult r = run_subprocess(argv, "", timeout_s_);
    if (r.timed_out) {
        throw TimeoutError("asr backend timed out after " +
                           std::to_string(timeout_s_) + " s: " +
                           audio_path.string());
    }
    if (r.exit_code != 0) {
        throw BackendError("asr backend exited with code " +
                           std::to_string(r.exit_code) + " for " +
                           audio_path.string() + "\n" + r.err);
    }
    return r.out;
}

std::string transcribe(const TranscriberBackend& backend,
                       const AudioBuffer& buf,
                       const std::filesystem::path& audio_path) {
    const std::size_t segments = segment_count(buf);
    return trim(strip_nul(backend.transcribe_file(buf, segments, audio_path)));
}

std::string transcript_cache_key(const std::filesystem::path& wav_path) {
    const std::string bytes = read_file(wav_path);
    return to_hex16(fnv1a64(bytes.data(), bytes.size()));
}

std::optional<std::string> cache_lookup(const std::filesystem::path& cache_dir,
                                        const std::string& key) {
    return read_file_if_exists(cache_dir / (key + ".txt"));
}

void cache_store(const std::filesystem::path& cache_dir,
                 const std::string& key, const std::string& text) {
    atomic_write_file(cache_dir / (key + ".txt"), text);
}

}  // namespace cogspeech
