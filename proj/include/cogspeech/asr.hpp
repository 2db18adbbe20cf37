#pragma once
// Speech-to-text stage behind a pluggable backend: a deterministic mock
// for desk-scale runs, an external-command adapter for real ASR engines,
// and a content-addressed transcript cache.

#include <filesystem>
#include <optional>
#include <string>

#include "cogspeech/audio.hpp"
#include "cogspeech/manifest.hpp"

namespace cogspeech {

enum class TranscriptSource { Mock, External, Cache };

const char* to_string(TranscriptSource source);

struct Transcript {
    std::string subject_id;
    TaskKind task = TaskKind::CTD;
    std::string text;  // UTF-8, possibly empty, never contains NUL bytes
    TranscriptSource source = TranscriptSource::Mock;
};

class TranscriberBackend {
public:
    virtual ~TranscriberBackend() = default;
    virtual std::string name() const = 0;
    virtual TranscriptSource source() const = 0;
    // Whole-file transcription. Backends do their own 30-second windowing;
    // segment_count tells them how many windows the recording spans.
    virtual std::string transcribe_file(
        const AudioBuffer& audio, std::size_t segments,
        const std::filesystem::path& audio_path) const = 0;
};

// Sidecar fixture mode: `<audio_path>.txt` contents verbatim when present.
// Otherwise one pseudo-token per started second of audio, derived from an
// FNV-1a-64 chain over the sample bytes, so equal audio content always
// yields equal text.
class MockTranscriber final : public TranscriberBackend {
public:
    std::string name() const override { return "mock"; }
    TranscriptSource source() const override { return TranscriptSource::Mock; }
    std::string transcribe_file(
        const AudioBuffer& audio, std::size_t segments,
        const std::filesystem::path& audio_path) const override;
};

// Runs `<command> <wav_path> <segment_count>` and takes its stdout as the
// transcript. Non-zero exit raises BackendError carrying captured stderr;
// exceeding the deadline raises TimeoutError.
class ExternalTranscriber final : public TranscriberBackend {
public:
    explicit ExternalTranscriber(std::string command, double timeout_s = 300.0)
        : command_(std::move(command)), timeout_s_(timeout_s) {}

    std::string name() const override { return "external"; }
    TranscriptSource source() const override {
        return TranscriptSource::External;
    }
    std::string transcribe_file(
        const AudioBuffer& audio, std::size_t segments,
        const std::filesystem::path& audio_path) const override;

private:
    std::string command_;
    double timeout_s_;
};

// Free-function form of the mock rule (also what MockTranscriber calls).
std::string mock_transcribe(const AudioBuffer& buf,
                            const std::filesystem::path& audio_path);

// Orchestrates one file: computes the window count, invokes the backend,
// strips surrounding whitespace and NUL bytes.
std::string transcribe(const TranscriberBackend& backend,
                       const AudioBuffer& buf,
                       const std::filesystem::path& audio_path);

// Transcript cache, keyed by lowercase-hex FNV-1a-64 of the raw WAV bytes.
std::string transcript_cache_key(const std::filesystem::path& wav_path);

std::optional<std::string> cache_lookup(const std::filesystem::path& cache_dir,
                                        const std::string& key);

// Atomic (temp file + rename); last writer wins.
void cache_store(const std::filesystem::path& cache_dir,
                 const std::string& key, const std::string& text);

}  // namespace cogspeech
