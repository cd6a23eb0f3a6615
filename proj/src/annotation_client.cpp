#include "sama/annotation_client.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "sama/errors.hpp"

namespace sama {

FixtureClient::FixtureClient(std::map<std::string, std::vector<std::string>> replies) : replies_(std::move(replies)) {}

FixtureClient FixtureClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read fixture file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::map<std::string, std::vector<std::string>> replies;
  try {
    const auto j = nlohmann::json::parse(ss.str());
    if (!j.is_object()) throw DataError("fixture file must hold a JSON object: " + path.string());
    for (const auto& [key, value] : j.items()) {
      if (value.is_string()) {
        replies[key] = {value.get<std::string>()};
      } else {
        replies[key] = value.get<std::vector<std::string>>();
      }
      if (replies[key].empty()) throw DataError("fixture key '" + key + "' has no replies");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("fixture file " + path.string() + ": " + e.what());
  }
  return FixtureClient(std::move(replies));
}

std::string FixtureClient::complete(const CompletionRequest& request) {
  ++calls_;
  auto it = replies_.find(request.key);
  if (it == replies_.end()) throw ClientError("no fixture reply for key '" + request.key + "'");
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, request.attempt)), it->second.size() - 1);
  return it->second[i];
}

std::string env_or_empty(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  return v == nullptr ? std::string() : std::string(v);
}

HttpCompletionClient::HttpCompletionClient(HttpClientOptions options) : options_(std::move(options)) {
  const std::string& url = options_.endpoint;
  if (url.rfind("http://", 0) != 0) {
    throw ConfigError("client endpoint must be an http:// URL (TLS is not compiled in): '" + url + "'");
  }
  const std::size_t slash = url.find('/', 7);
  scheme_host_ = slash == std::string::npos ? url : url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
  if (!(options_.requests_per_second > 0.0) || options_.max_concurrency < 1) throw ConfigError("client: invalid rate settings");
}

void HttpCompletionClient::acquire_slot() {
  while (true) {
    std::chrono::steady_clock::time_point wake;
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      if (in_flight_ < options_.max_concurrency && now >= next_allowed_) {
        ++in_flight_;
        next_allowed_ = now + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(1.0 / options_.requests_per_second));
        return;
      }
      wake = std::max(next_allowed_, now + std::chrono::milliseconds(5));
    }
    std::this_thread::sleep_until(wake);
  }
}

void HttpCompletionClient::release_slot() {
  std::lock_guard lock(mutex_);
  --in_flight_;
}

std::string HttpCompletionClient::complete(const CompletionRequest& request) {
  nlohmann::json body;
  body["key"] = request.key;
  body["prompt"] = request.prompt;
  body["images"] = request.images;
  const std::string payload = body.dump();

  httplib::Client cli(scheme_host_);
  const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  double backoff = options_.initial_backoff_seconds;
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    acquire_slot();
    auto res = cli.Post(path_, headers, payload, "application/json");
    release_slot();
    if (res && res->status == 200) {
      try {
        return nlohmann::json::parse(res->body).at("text").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ClientError(std::string("completion reply without a 'text' string: ") + e.what());
      }
    }
    const bool transient = !res || res->status == 429 || res->status >= 500;
    last_error = res ? "HTTP " + std::to_string(res->status) : "transport error " + httplib::to_string(res.error());
    if (!transient) break;
    std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    backoff *= 2.0;
  }
  throw ClientError("completion request '" + request.key + "' failed: " + last_error);
}

}  // namespace sama
