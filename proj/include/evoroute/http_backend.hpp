#pragma once

/**
 * Live chat-completion client. One POST per generation with logprobs
 * enabled; transient transport errors and 5xx responses are retried with
 * exponential backoff, missing logprobs abort immediately (the method
 * cannot run without them). Every attempt is appended to a line-delimited
 * request log when a log path is configured.
 */

#include <chrono>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "evoroute/backend.hpp"
#include "evoroute/common.hpp"

namespace evoroute {

class HttpBackend : public GenerationService {
 public:
  HttpBackend(EndpointConfig small, EndpointConfig large, GenParams params = {},
              std::string request_log_path = {})
      : small_(std::move(small)),
        large_(std::move(large)),
        params_(params),
        log_path_(std::move(request_log_path)) {}

  GenerationRecord generate(ModelChoice model, const std::string& prompt,
                            const std::string& problem_id) override {
    const EndpointConfig& ep = model == ModelChoice::Small ? small_ : large_;
    if (ep.base_url.empty())
      throw BackendError("backend: no endpoint configured for model '" +
                         std::string(to_string(model)) + "'");

    nlohmann::json body;
    body["model"] = ep.model;
    body["messages"] = nlohmann::json::array(
        {nlohmann::json{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = params_.temperature;
    body["top_p"] = params_.top_p;
    body["max_tokens"] = params_.max_tokens;
    body["logprobs"] = true;
    body["top_logprobs"] = params_.top_logprobs;
    body["stream"] = false;
    const std::string payload = body.dump();

    std::string last_error;
    bool timed_out = false;
    const int max_attempts = params_.max_retries + 1;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      const auto started = std::chrono::steady_clock::now();
      httplib::Client client(ep.base_url);
      client.set_connection_timeout(std::chrono::duration<double>(params_.timeout_s));
      client.set_read_timeout(std::chrono::duration<double>(params_.timeout_s));
      client.set_write_timeout(std::chrono::duration<double>(params_.timeout_s));
      httplib::Headers headers;
      if (!ep.api_key.empty())
        headers.emplace("Authorization", "Bearer " + ep.api_key);

      auto res = client.Post("/v1/chat/completions", headers, payload,
                             "application/json");
      const double latency_ms =
          std::chrono::duration<double, std::milli>(
              std::chrono::steady_clock::now() - started)
              .count();

      if (!res) {
        timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                    res.error() == httplib::Error::Read ||
                    res.error() == httplib::Error::Write;
        last_error = "transport error: " + httplib::to_string(res.error());
        log_attempt(ep, problem_id, attempt, -1, latency_ms, payload, last_error);
        backoff(attempt, max_attempts);
        continue;
      }

      log_attempt(ep, problem_id, attempt, res->status, latency_ms, payload,
                  res->body);

      if (res->status >= 500) {  // transient server-side failure
        timed_out = false;
        last_error = "server status " + std::to_string(res->status);
        backoff(attempt, max_attempts);
        continue;
      }
      if (res->status != 200)
        throw BackendError("backend: request rejected with status " +
                           std::to_string(res->status) + ": " + res->body);

      return parse_response(model, ep, prompt, res->body, attempt, latency_ms);
    }
    if (timed_out)
      throw TimeoutError("backend: request timed out after " +
                         std::to_string(max_attempts) + " attempts");
    throw BackendError("backend: request failed after " +
                       std::to_string(max_attempts) + " attempts: " + last_error);
  }

 private:
  EndpointConfig small_;
  EndpointConfig large_;
  GenParams params_;
  std::string log_path_;
  std::mutex log_mu_;

  void backoff(int attempt, int max_attempts) {
    if (attempt >= max_attempts) return;
    const auto delay =
        std::chrono::milliseconds(params_.backoff_ms) * (1 << (attempt - 1));
    std::this_thread::sleep_for(delay);
  }

  GenerationRecord parse_response(ModelChoice model, const EndpointConfig& ep,
                                  const std::string& prompt,
                                  const std::string& body, int attempts,
                                  double latency_ms) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const std::exception& e) {
      throw BackendError(std::string("backend: unparseable response: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
      throw BackendError("backend: response carries no choices");
    const auto& choice = j["choices"][0];

    GenerationRecord rec;
    rec.model = model;
    rec.model_name = ep.model;
    rec.prompt = prompt;
    rec.output = choice.contains("message")
                     ? choice["message"].value("content", std::string{})
                     : std::string{};
    rec.tokens = detail::parse_logprobs(choice);
    rec.latency_ms = latency_ms;
    rec.finish_reason = choice.value("finish_reason", std::string{"stop"});
    rec.attempts = attempts;
    return rec;
  }

  void log_attempt(const EndpointConfig& ep, const std::string& problem_id,
                   int attempt, int status, double latency_ms,
                   const std::string& request, const std::string& response) {
    if (log_path_.empty()) return;
    nlohmann::json line;
    line["endpoint"] = ep.base_url;
    line["model"] = ep.model;
    line["problem"] = problem_id;
    line["attempt"] = attempt;
    line["status"] = status;
    line["latency_ms"] = latency_ms;
    line["request"] = request;
    line["response"] = response;
    std::lock_guard<std::mutex> lock(log_mu_);
    std::ofstream out(log_path_, std::ios::app);
    out << line.dump() << "\n";
  }
};

}  // namespace evoroute
