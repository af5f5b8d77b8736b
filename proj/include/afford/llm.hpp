#ifndef AFFORD_LLM_HPP
#define AFFORD_LLM_HPP

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace afford {

struct LlmTranscript {
  std::string model;
  std::string prompt;
  std::string response;  // verbatim model output
  double timestamp = 0.0;  // seconds since epoch
};

/// Text-in, text-out language model. Implementations must be safe to call
/// from several threads.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string model_id() const = 0;
  /// Throws Error(LlmUnavailable) when no response can be produced.
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Lowercase hex SHA-256 of model + "\n" + prompt.
std::string transcript_key(const std::string& model, const std::string& prompt);

/// Append-only JSON-lines store of transcripts, one object per line with
/// fields {key, model, prompt, response, ts}. Later lines win on duplicate
/// keys. Writes are serialized; a write is visible to subsequent lookups in
/// the same process.
class TranscriptCache {
 public:
  /// In-memory only.
  TranscriptCache() = default;
  /// Loads `path` if it exists; appends go to `path`.
  explicit TranscriptCache(std::filesystem::path path);

  std::optional<LlmTranscript> find(const std::string& model, const std::string& prompt) const;
  void append(const LlmTranscript& transcript);
  std::size_t size() const;
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, LlmTranscript> entries_;
};

/// Replay layer: answers from the cache when possible, otherwise asks the
/// upstream client (if any) and records the transcript.
class CachedLlmClient final : public LlmClient {
 public:
  CachedLlmClient(std::shared_ptr<TranscriptCache> cache, std::string model,
                  std::unique_ptr<LlmClient> upstream = nullptr);

  std::string model_id() const override { return model_; }
  std::string complete(const std::string& prompt) override;

 private:
  std::shared_ptr<TranscriptCache> cache_;
  std::string model_;
  std::unique_ptr<LlmClient> upstream_;
};

/// Deterministic test double. A prompt is answered by the first rule whose
/// `match` substring occurs in it; otherwise the queued responses are used in
/// order. Every call is recorded.
class ScriptedLlmClient final : public LlmClient {
 public:
  struct Rule {
    std::string match;
    std::string response;
  };

  explicit ScriptedLlmClient(std::string model = "scripted") : model_(std::move(model)) {}

  ScriptedLlmClient& on(std::string match, std::string response);
  ScriptedLlmClient& then(std::string response);

  /// Reads {"model": ..., "rules": [{"match", "response"}], "queue": [...]}.
  static std::unique_ptr<ScriptedLlmClient> from_file(const std::filesystem::path& path);

  std::string model_id() const override { return model_; }
  std::string complete(const std::string& prompt) override;
  std::vector<std::string> prompts() const;

 private:
  std::string model_;
  mutable std::mutex mutex_;
  std::vector<Rule> rules_;
  std::vector<std::string> queue_;
  std::size_t next_ = 0;
  std::vector<std::string> prompts_;
};

/// OpenAI-compatible chat-completions client.
class RemoteLlmClient final : public LlmClient {
 public:
  RemoteLlmClient(std::string base_url, std::string model, std::string api_key, int timeout_seconds = 60);

  std::string model_id() const override { return model_; }
  std::string complete(const std::string& prompt) override;

 private:
  std::string base_url_;
  std::string model_;
  std::string api_key_;
  int timeout_seconds_;
};

inline constexpr const char* kLlmCredentialEnv = "AFFORD_LLM_API_KEY";
inline constexpr const char* kLlmEndpointEnv = "AFFORD_LLM_ENDPOINT";

/// Remote client configured from the environment, or nullopt-equivalent
/// (nullptr) when the credential is absent.
std::unique_ptr<LlmClient> remote_client_from_env(const std::string& model);

double unix_now();

}  // namespace afford

#endif  // AFFORD_LLM_HPP
