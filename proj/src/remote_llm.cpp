#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include "afford/error.hpp"
#include "afford/llm.hpp"

namespace afford {

RemoteLlmClient::RemoteLlmClient(std::string base_url, std::string model, std::string api_key, int timeout_seconds)
    : base_url_(std::move(base_url)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds) {}

std::string RemoteLlmClient::complete(const std::string& prompt) {
  using nlohmann::json;
  // httplib::Client is not thread-safe, so each call gets its own.
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  client.set_bearer_token_auth(api_key_);

  const json body = {{"model", model_},
                     {"temperature", 0},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  auto res = client.Post("/v1/chat/completions", body.dump(), "application/json");
  if (!res) raise(ErrorCode::LlmUnavailable, "request to " + base_url_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    raise(ErrorCode::LlmUnavailable, "endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
  try {
    return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    raise(ErrorCode::LlmUnavailable, std::string("unexpected completion payload: ") + e.what());
  }
}

}  // namespace afford
