#include "afford/llm.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "afford/error.hpp"
#include "afford/pnm.hpp"

namespace afford {

using nlohmann::json;

double unix_now() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string transcript_key(const std::string& model, const std::string& prompt) {
  const std::string material = model + "\n" + prompt;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(material.data(), material.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    raise(ErrorCode::IoError, "SHA-256 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

TranscriptCache::TranscriptCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  std::ifstream in(*path_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      raise(ErrorCode::FormatError, path_->string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    LlmTranscript t{j.at("model").get<std::string>(), j.at("prompt").get<std::string>(),
                    j.at("response").get<std::string>(), j.value("ts", 0.0)};
    entries_[transcript_key(t.model, t.prompt)] = std::move(t);
  }
}

std::optional<LlmTranscript> TranscriptCache::find(const std::string& model, const std::string& prompt) const {
  const std::string key = transcript_key(model, prompt);
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void TranscriptCache::append(const LlmTranscript& transcript) {
  const std::string key = transcript_key(transcript.model, transcript.prompt);
  std::lock_guard lock(mutex_);
  if (path_) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    std::ofstream out(*path_, std::ios::app);
    if (!out) raise(ErrorCode::IoError, "cannot append to " + path_->string());
    json j = {{"key", key},
              {"model", transcript.model},
              {"prompt", transcript.prompt},
              {"response", transcript.response},
              {"ts", transcript.timestamp}};
    out << j.dump() << '\n';
  }
  entries_[key] = transcript;
}

std::size_t TranscriptCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

CachedLlmClient::CachedLlmClient(std::shared_ptr<TranscriptCache> cache, std::string model,
                                 std::unique_ptr<LlmClient> upstream)
    : cache_(std::move(cache)), model_(std::move(model)), upstream_(std::move(upstream)) {
  if (!cache_) cache_ = std::make_shared<TranscriptCache>();
}

std::string CachedLlmClient::complete(const std::string& prompt) {
  if (auto hit = cache_->find(model_, prompt)) return hit->response;
  if (!upstream_) raise(ErrorCode::LlmUnavailable, "no cached transcript for prompt and no upstream model configured");
  std::string response = upstream_->complete(prompt);
  cache_->append({model_, prompt, response, unix_now()});
  return response;
}

ScriptedLlmClient& ScriptedLlmClient::on(std::string match, std::string response) {
  std::lock_guard lock(mutex_);
  rules_.push_back({std::move(match), std::move(response)});
  return *this;
}

ScriptedLlmClient& ScriptedLlmClient::then(std::string response) {
  std::lock_guard lock(mutex_);
  queue_.push_back(std::move(response));
  return *this;
}

std::unique_ptr<ScriptedLlmClient> ScriptedLlmClient::from_file(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    raise(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  auto client = std::make_unique<ScriptedLlmClient>(j.value("model", std::string("scripted")));
  for (const auto& r : j.value("rules", json::array()))
    client->on(r.at("match").get<std::string>(), r.at("response").get<std::string>());
  for (const auto& q : j.value("queue", json::array())) client->then(q.get<std::string>());
  return client;
}

std::string ScriptedLlmClient::complete(const std::string& prompt) {
  std::lock_guard lock(mutex_);
  prompts_.push_back(prompt);
  for (const auto& rule : rules_)
    if (prompt.find(rule.match) != std::string::npos) return rule.response;
  if (next_ < queue_.size()) return queue_[next_++];
  raise(ErrorCode::LlmUnavailable, "scripted client has no response for prompt: " + prompt);
}

std::vector<std::string> ScriptedLlmClient::prompts() const {
  std::lock_guard lock(mutex_);
  return prompts_;
}

std::unique_ptr<LlmClient> remote_client_from_env(const std::string& model) {
  const char* key = std::getenv(kLlmCredentialEnv);
  if (key == nullptr || *key == '\0') return nullptr;
  const char* endpoint = std::getenv(kLlmEndpointEnv);
  return std::make_unique<RemoteLlmClient>(endpoint ? endpoint : "https://api.openai.com", model, key);
}

}  // namespace afford
