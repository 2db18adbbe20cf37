#pragma once
// Text-to-embedding stage: 768-d contextual vectors behind a pluggable
// backend. The mock is a feature-hashing bag of tokens (deterministic and
// able to carry planted signals); the external adapter shells out to a
// real language-model encoder.

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>

namespace cogspeech {

inline constexpr int kEmbeddingDim = 768;
inline constexpr std::size_t kMaxEncoderTokens = 512;

using Embedding = Eigen::VectorXd;  // always kEmbeddingDim entries

class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;
    virtual std::string name() const = 0;
    // Receives text already truncated to kMaxEncoderTokens tokens.
    virtual Embedding encode_text(const std::string& text) const = 0;
};

class MockEncoder final : public EncoderBackend {
public:
    std::string name() const override { return "mock"; }
    Embedding encode_text(const std::string& text) const override;
};

// Pipes the text to `<command>` on stdin and parses exactly 768
// whitespace-separated decimal floats from its stdout.
class ExternalEncoder final : public EncoderBackend {
public:
    explicit ExternalEncoder(std::string command, double timeout_s = 300.0)
        : command_(std::move(command)), timeout_s_(timeout_s) {}

    std::string name() const override { return "external"; }
    Embedding encode_text(const std::string& text) const override;

private:
    std::string command_;
    double timeout_s_;
};

// Feature-hashing mock: lowercase, split on runs of non-alphanumeric
// bytes; each token adds +/-1 (sign from the top hash bit) at index
// FNV-1a-64(token) mod 768; the result is L2-normalized. No tokens ->
// all-zero vector.
Embedding mock_encode(const std::string& text);

// Returns the prefix of `text` covering its first `max_tokens` whitespace
// tokens; the original bytes are preserved when nothing is cut.
std::string truncate_tokens(const std::string& text,
                            std::size_t max_tokens = kMaxEncoderTokens);

// Truncates, delegates to the backend, and validates the 768-d contract.
Embedding encode(const EncoderBackend& backend, const std::string& text);

// Embedding cache. Key covers the backend name so models never share
// entries; stored as 768 space-separated decimals (17 significant digits).
std::string embedding_cache_key(const std::string& backend_name,
                                const std::string& text);

std::optional<Embedding> embedding_cache_lookup(
    const std::filesystem::path& cache_dir, const std::string& key);

void embedding_cache_store(const std::filesystem::path& cache_dir,
                           const std::string& key, const Embedding& values);

}  // namespace cogspeech
