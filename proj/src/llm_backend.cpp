#include "dart/llm_backend.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "dart/error.hpp"

namespace dart::crg {

nlohmann::json QueryLog::to_json() const {
  return nlohmann::json{{"class", class_name}, {"query_index", query_index}, {"raw", raw}, {"status", status}};
}

QueryLog QueryLog::from_json(const nlohmann::json& j) {
  QueryLog q;
  try {
    q.class_name = j.at("class").get<std::string>();
    q.query_index = j.at("query_index").get<Index>();
    q.raw = j.at("raw").get<std::string>();
    q.status = j.value("status", "ok");
  } catch (const nlohmann::json::exception& e) {
    throw FixtureError(std::string("malformed query log record: ") + e.what());
  }
  return q;
}

void write_query_logs(const std::filesystem::path& path, const std::vector<QueryLog>& logs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write query log " + path.string());
  for (const auto& q : logs) out << q.to_json().dump() << "\n";
}

std::vector<QueryLog> read_query_logs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read query log " + path.string());
  std::vector<QueryLog> logs;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      logs.push_back(QueryLog::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw FixtureError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return logs;
}

// ---------------------------------------------------------------------------

ReplayBackend::ReplayBackend(const std::vector<QueryLog>& fixtures) {
  for (const auto& q : fixtures) responses_[{q.class_name, q.query_index}] = q.raw;
}

ReplayBackend ReplayBackend::from_file(const std::filesystem::path& path) {
  return ReplayBackend(read_query_logs(path));
}

std::string ReplayBackend::complete(const LlmRequest& request) {
  auto it = responses_.find({request.class_name, request.query_index});
  if (it == responses_.end()) {
    throw FixtureError("no replay fixture for class '" + request.class_name + "' query " +
                       std::to_string(request.query_index));
  }
  return it->second;
}

std::vector<std::pair<std::string, Index>> ReplayBackend::missing(
    const std::vector<std::string>& classes, Index queries) const {
  std::vector<std::pair<std::string, Index>> out;
  for (const auto& c : classes) {
    for (Index q = 0; q < queries; ++q) {
      if (!responses_.contains({c, q})) out.emplace_back(c, q);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

LiveBackendConfig LiveBackendConfig::from_env() {
  LiveBackendConfig cfg;
  if (const char* v = std::getenv("DART_LLM_BASE_URL")) cfg.base_url = v;
  if (const char* v = std::getenv("DART_LLM_API_KEY")) cfg.api_key = v;
  if (const char* v = std::getenv("DART_LLM_MODEL")) cfg.model = v;
  if (cfg.base_url.empty()) {
    throw ConfigError("live backend: DART_LLM_BASE_URL is not set");
  }
  return cfg;
}

LiveBackend::LiveBackend(LiveBackendConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) throw ConfigError("live backend: empty base URL");
  if (cfg_.attempts < 1) throw ConfigError("live backend: attempts must be >= 1");
}

namespace {

// Splits "scheme://host[:port][/prefix]" into the client origin and path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

std::string LiveBackend::complete(const LlmRequest& request) {
  const auto [origin, prefix] = split_url(cfg_.base_url);
  const nlohmann::json body{
      {"model", cfg_.model},
      {"top_p", request.top_p},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
  };
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  auto backoff = cfg_.initial_backoff;
  int attempt = 0;
  for (attempt = 1; attempt <= cfg_.attempts; ++attempt) {
    httplib::Client client(origin);
    client.set_connection_timeout(cfg_.timeout);
    client.set_read_timeout(cfg_.timeout);
    client.set_write_timeout(cfg_.timeout);
    auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
    } else if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      try {
        const auto reply = nlohmann::json::parse(res->body);
        last_attempts_ = attempt;
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed completion body: ") + e.what();
      }
    }
    if (attempt < cfg_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  last_attempts_ = cfg_.attempts;
  throw TransportError("LLM request for class '" + request.class_name + "' query " +
                       std::to_string(request.query_index) + " failed after " +
                       std::to_string(cfg_.attempts) + " attempts: " + last_error);
}

}  // namespace dart::crg
