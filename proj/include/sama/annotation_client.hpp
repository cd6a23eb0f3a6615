#pragma once

// Text-completion clients used for dialogue annotation and caption judging.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace sama {

struct CompletionRequest {
  std::string key;                  // stable identity, e.g. "vid/dialogue"
  std::string prompt;
  std::vector<std::string> images;  // frame references sent with the prompt
  int attempt = 0;                  // 0 for the first try, then re-prompts
};

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  /// Throws ClientError when no reply can be obtained.
  virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Replays recorded replies from a JSON object mapping each key to either a
/// string or a list of strings (one per attempt; the last entry repeats).
class FixtureClient final : public CompletionClient {
 public:
  explicit FixtureClient(std::map<std::string, std::vector<std::string>> replies);
  static FixtureClient from_file(const std::filesystem::path& path);

  std::string complete(const CompletionRequest& request) override;
  std::size_t calls() const { return calls_; }

 private:
  std::map<std::string, std::vector<std::string>> replies_;
  std::size_t calls_ = 0;
};

struct HttpClientOptions {
  std::string endpoint;  // http://host[:port]/path
  std::string api_key;   // sent as a bearer token when nonempty
  double requests_per_second = 2.0;
  int max_concurrency = 1;
  double timeout_seconds = 30.0;
  int max_retries = 4;   // retries after 429 / 5xx / transport failures
  double initial_backoff_seconds = 0.5;
};

/// POSTs {"prompt", "images", "key"} as JSON and reads {"text"} from the
/// reply. Requests are spaced to honour the rate cap, at most
/// `max_concurrency` run at once, and transient failures back off
/// exponentially.
class HttpCompletionClient final : public CompletionClient {
 public:
  explicit HttpCompletionClient(HttpClientOptions options);
  std::string complete(const CompletionRequest& request) override;

 private:
  void acquire_slot();
  void release_slot();

  HttpClientOptions options_;
  std::string scheme_host_;
  std::string path_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_allowed_{};
  int in_flight_ = 0;
};

/// Environment variable value or empty string.
std::string env_or_empty(const std::string& name);

}  // namespace sama
