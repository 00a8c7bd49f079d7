#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dart/tensor.hpp"

namespace dart::crg {

/// One recorded LLM exchange. A query log file doubles as a replay fixture.
struct QueryLog {
  std::string class_name;
  Index query_index = 0;
  std::string raw;
  std::string status = "ok";

  [[nodiscard]] nlohmann::json to_json() const;
  static QueryLog from_json(const nlohmann::json& j);
};

void write_query_logs(const std::filesystem::path& path, const std::vector<QueryLog>& logs);
std::vector<QueryLog> read_query_logs(const std::filesystem::path& path);

struct LlmRequest {
  std::string class_name;
  Index query_index = 0;
  std::string prompt;
  double top_p = 0.3;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  /// Raw completion text for one request.
  virtual std::string complete(const LlmRequest& request) = 0;
  /// Whether complete() may be called from several threads at once.
  [[nodiscard]] virtual bool concurrent() const { return false; }
};

/// Serves recorded responses keyed by (class, query index).
class ReplayBackend : public LlmBackend {
 public:
  explicit ReplayBackend(const std::vector<QueryLog>& fixtures);
  static ReplayBackend from_file(const std::filesystem::path& path);

  std::string complete(const LlmRequest& request) override;
  [[nodiscard]] bool concurrent() const override { return true; }

  /// (class, query) pairs the fixture set cannot answer.
  [[nodiscard]] std::vector<std::pair<std::string, Index>> missing(
      const std::vector<std::string>& classes, Index queries) const;

 private:
  std::map<std::pair<std::string, Index>, std::string> responses_;
};

struct LiveBackendConfig {
  /// e.g. https://api.openai.com/v1; requests go to <base_url>/chat/completions.
  std::string base_url;
  std::string api_key;
  std::string model = "gpt-4o";
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{60};

  /// Reads DART_LLM_BASE_URL, DART_LLM_API_KEY and DART_LLM_MODEL.
  static LiveBackendConfig from_env();
};

/// Chat-completion client over HTTP(S) with exponential-backoff retries.
class LiveBackend : public LlmBackend {
 public:
  explicit LiveBackend(LiveBackendConfig cfg);

  std::string complete(const LlmRequest& request) override;
  [[nodiscard]] bool concurrent() const override { return true; }

  [[nodiscard]] int last_attempts() const { return last_attempts_.load(); }

 private:
  LiveBackendConfig cfg_;
  std::atomic<int> last_attempts_{0};
};

}  // namespace dart::crg
