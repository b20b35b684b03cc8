#include "icleval/remote_backend.hpp"

#include "icleval/digest.hpp"
#include "icleval/error.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

namespace icleval {

using nlohmann::json;

void RemoteConfig::validate() const {
  if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) {
    throw ConfigError(fmt::format("remote.url must start with http:// or https:// (got '{}')", url));
  }
  if (max_in_flight < 1) throw ConfigError("remote.max_in_flight must be >= 1");
  if (retries < 0) throw ConfigError("remote.retries must be >= 0");
  if (backoff_ms < 0) throw ConfigError("remote.backoff_ms must be >= 0");
  if (timeout_s <= 0) throw ConfigError("remote.timeout_s must be > 0");
}

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) n += (c & 0xc0) != 0x80;
  return n;
}

double continuation_logprob(const std::string& response_body, std::size_t prompt_chars, bool length_normalize) {
  json body;
  try {
    body = json::parse(response_body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(fmt::format("response is not JSON: {}", e.what()));
  }
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw ProtocolError("response missing field 'choices'");
  }
  const auto& choice = body["choices"][0];
  if (!choice.contains("logprobs") || !choice["logprobs"].is_object()) {
    throw ProtocolError("response missing field 'logprobs'");
  }
  const auto& lp = choice["logprobs"];
  if (!lp.contains("token_logprobs") || !lp["token_logprobs"].is_array()) {
    throw ProtocolError("response missing field 'logprobs.token_logprobs'");
  }
  const auto& token_logprobs = lp["token_logprobs"];
  const std::size_t n = token_logprobs.size();

  std::vector<std::size_t> offsets;
  if (lp.contains("text_offset") && lp["text_offset"].is_array()) {
    for (const auto& o : lp["text_offset"]) offsets.push_back(o.get<std::size_t>());
  } else if (lp.contains("tokens") && lp["tokens"].is_array()) {
    std::size_t pos = 0;
    for (const auto& t : lp["tokens"]) {
      offsets.push_back(pos);
      pos += utf8_length(t.get<std::string>());
    }
  } else {
    throw ProtocolError("response missing field 'logprobs.text_offset' (and no 'tokens' to derive it)");
  }
  if (offsets.size() != n) throw ProtocolError("logprobs.text_offset and token_logprobs differ in length");

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool overlaps = i + 1 == n || offsets[i + 1] > prompt_chars;
    if (!overlaps) continue;
    const auto& v = token_logprobs[i];
    if (!v.is_number()) throw ProtocolError(fmt::format("logprobs.token_logprobs[{}] is not a number", i));
    sum += v.get<double>();
    ++count;
  }
  if (count == 0) throw ProtocolError("response contains no continuation tokens");
  if (!std::isfinite(sum)) throw ProtocolError("continuation log-probability is not finite");
  return length_normalize ? sum / static_cast<double>(count) : sum;
}

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

struct RemoteBackend::Impl {
  ParsedUrl target;
  std::string bearer;

  // Idle keep-alive clients; `leased` counts requests in flight.
  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::unique_ptr<httplib::Client>> idle;
  int leased = 0;

  std::mutex audit_mu;
  std::ofstream audit;

  std::unique_ptr<httplib::Client> make_client(const RemoteConfig& cfg) const {
    auto c = std::make_unique<httplib::Client>(target.origin);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    c->set_connection_timeout(secs, usecs);
    c->set_read_timeout(secs, usecs);
    c->set_write_timeout(secs, usecs);
    c->set_keep_alive(true);
    c->set_tcp_nodelay(true);
    if (!bearer.empty()) c->set_bearer_token_auth(bearer);
    return c;
  }
};

namespace {

class Lease {
 public:
  Lease(RemoteBackend::Impl& impl, const RemoteConfig& cfg, auto&& factory) : impl_(impl) {
    std::unique_lock lock(impl_.mu);
    impl_.cv.wait(lock, [&] { return impl_.leased < cfg.max_in_flight; });
    ++impl_.leased;
    if (!impl_.idle.empty()) {
      client_ = std::move(impl_.idle.back());
      impl_.idle.pop_back();
    }
    lock.unlock();
    if (!client_) client_ = factory();
  }
  ~Lease() {
    std::lock_guard lock(impl_.mu);
    if (client_ && !discard_) impl_.idle.push_back(std::move(client_));
    --impl_.leased;
    impl_.cv.notify_one();
  }
  Lease(const Lease&) = delete;
  Lease& operator=(const Lease&) = delete;

  httplib::Client& client() { return *client_; }
  void discard() { discard_ = true; }

 private:
  RemoteBackend::Impl& impl_;
  std::unique_ptr<httplib::Client> client_;
  bool discard_ = false;
};

}  // namespace

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  config_.validate();
  impl_->target = split_url(config_.url);
  if (!config_.api_key_env.empty()) {
    const char* token = std::getenv(config_.api_key_env.c_str());
    if (token == nullptr || *token == '\0') {
      throw ConfigError(fmt::format("environment variable '{}' (bearer token) is not set", config_.api_key_env));
    }
    impl_->bearer = token;
  }
  if (config_.audit_log) {
    impl_->audit.open(*config_.audit_log, std::ios::app);
    if (!impl_->audit) throw ConfigError(fmt::format("cannot open audit log '{}'", config_.audit_log->string()));
  }
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::identity() const {
  nlohmann::ordered_json j;
  j["url"] = config_.url;
  j["model"] = config_.model;
  j["candidate_prefix"] = config_.candidate_prefix;
  j["length_normalize"] = config_.length_normalize;
  return "remote:" + j.dump();
}

std::vector<CandidateScore> RemoteBackend::score(const RenderedPrompt& prompt,
                                                 std::span<const std::string> classes) const {
  if (config_.max_prompt_chars > 0 && utf8_length(prompt.text) > config_.max_prompt_chars) {
    throw BackendError(fmt::format("query '{}': prompt of {} chars exceeds max_prompt_chars={}", prompt.query_id,
                                   utf8_length(prompt.text), config_.max_prompt_chars));
  }
  std::vector<std::string> continuations;
  continuations.reserve(classes.size());
  for (const auto& c : classes) continuations.push_back(config_.candidate_prefix + c);
  try {
    return score_remote(prompt.text, continuations);
  } catch (const ProtocolError& e) {
    throw ProtocolError(fmt::format("query '{}': {}", prompt.query_id, e.what()));
  } catch (const TransportError& e) {
    throw TransportError(fmt::format("query '{}': {}", prompt.query_id, e.what()));
  }
}

std::vector<CandidateScore> RemoteBackend::score_remote(const std::string& prompt,
                                                        std::span<const std::string> candidates) const {
  if (candidates.empty()) throw ConfigError("score_remote: candidate list is empty");
  const std::size_t prompt_chars = utf8_length(prompt);
  std::vector<CandidateScore> out;
  out.reserve(candidates.size());

  for (std::size_t c = 0; c < candidates.size(); ++c) {
    nlohmann::ordered_json req;
    if (!config_.model.empty()) req["model"] = config_.model;
    req["prompt"] = prompt + candidates[c];
    req["max_tokens"] = 0;
    req["echo"] = true;
    req["logprobs"] = 1;
    req["temperature"] = 0;
    const std::string body = req.dump();

    std::string last_error;
    std::optional<std::string> response;
    for (int attempt = 0; attempt <= config_.retries && !response; ++attempt) {
      if (attempt > 0 && config_.backoff_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(config_.backoff_ms) << (attempt - 1)));
      }
      Lease lease(*impl_, config_, [&] { return impl_->make_client(config_); });
      auto res = lease.client().Post(impl_->target.path, body, "application/json");
      int status = res ? res->status : -1;
      if (impl_->audit.is_open()) {
        nlohmann::ordered_json line;
        line["request_sha256"] = sha256_hex(body);
        line["attempt"] = attempt;
        line["status"] = status;
        line["response_sha256"] = res ? sha256_hex(res->body) : "";
        std::lock_guard lock(impl_->audit_mu);
        impl_->audit << line.dump() << '\n';
        impl_->audit.flush();
      }
      if (!res) {
        lease.discard();
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (status >= 200 && status < 300) {
        response = std::move(res->body);
      } else if (status == 429 || status >= 500) {
        last_error = fmt::format("HTTP {}", status);
      } else {
        throw TransportError(fmt::format("HTTP {} from {}: {}", status, config_.url, res->body.substr(0, 200)));
      }
    }
    if (!response) {
      throw TransportError(fmt::format("{} failed after {} attempts: {}", config_.url, config_.retries + 1, last_error));
    }
    out.push_back({static_cast<int>(c), continuation_logprob(*response, prompt_chars, config_.length_normalize)});
  }
  return out;
}

}  // namespace icleval
