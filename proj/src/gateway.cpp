#include "deskrec/gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "deskrec/error.hpp"
#include "http_client.hpp"

namespace deskrec {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string env_or(const char* name, std::string fallback) {
  const char* value = std::getenv(name);
  return value && *value ? std::string(value) : fallback;
}

json request_summary(const ChatRequest& request) {
  json images = json::array();
  for (const auto& m : request.messages)
    for (const auto& p : m.parts)
      if (p.is_image()) images.push_back(sha256_hex(p.image->bytes));
  return {{"model_id", request.model_id},
          {"temperature", request.temperature},
          {"max_output", request.max_output},
          {"tag", request.tag},
          {"message_count", request.messages.size()},
          {"image_sha256", std::move(images)}};
}

}  // namespace

std::size_t ChatRequest::image_count() const {
  std::size_t n = 0;
  for (const auto& m : messages)
    for (const auto& p : m.parts) n += p.is_image() ? 1 : 0;
  return n;
}

std::optional<ProviderProfile> builtin_profile(std::string_view name) {
  // GPT-series calls accept at most 10 images; Gemini accepts far more per request.
  if (name == "gpt-4o") return ProviderProfile{"gpt-4o", "gpt-4o", 10, "openai-chat"};
  if (name == "gpt-4o-mini") return ProviderProfile{"gpt-4o-mini", "gpt-4o-mini", 10, "openai-chat"};
  if (name == "gemini-1.5-pro") {
    return ProviderProfile{"gemini-1.5-pro", "gemini-1.5-pro", 3000, "openai-chat"};
  }
  if (name == "gemini-1.5-flash") {
    return ProviderProfile{"gemini-1.5-flash", "gemini-1.5-flash", 3000, "openai-chat"};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Digests

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::Io, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

json request_digest_inputs(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json parts = json::array();
    for (const auto& p : m.parts) {
      if (p.is_image()) {
        parts.push_back({{"type", "image"}, {"mime", p.image->mime},
                         {"sha256", sha256_hex(p.image->bytes)}});
      } else {
        parts.push_back({{"type", "text"}, {"sha256", sha256_hex(p.text)}});
      }
    }
    messages.push_back({{"role", m.role}, {"parts", std::move(parts)}});
  }
  return {{"model_id", request.model_id},
          {"temperature", request.temperature},
          {"max_output", request.max_output},
          {"messages", std::move(messages)}};
}

std::string request_key(const ChatRequest& request) {
  return sha256_hex(request_digest_inputs(request).dump());
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {}

fs::path ResponseCache::entry_path(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CacheEntry> ResponseCache::lookup(const std::string& key) const {
  const fs::path path = entry_path(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::CacheCorrupt, path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("key") || !doc.contains("response") ||
      !doc.contains("response_sha256") || !doc["response"].is_string()) {
    throw Error(Errc::CacheCorrupt, path.string() + ": missing fields");
  }
  if (doc["key"] != key) throw Error(Errc::CacheCorrupt, path.string() + ": key mismatch");
  const std::string response = doc["response"].get<std::string>();
  if (doc["response_sha256"] != sha256_hex(response)) {
    throw Error(Errc::CacheCorrupt, path.string() + ": response digest mismatch");
  }
  CacheEntry entry;
  entry.key = key;
  entry.response = response;
  entry.request_summary = doc.value("request_digest_inputs_summary", json::object());
  entry.created_at = doc.value("created_at", "");
  return entry;
}

void ResponseCache::store(const CacheEntry& entry) const {
  const fs::path path = entry_path(entry.key);
  std::error_code ec;
  if (fs::exists(path, ec)) return;
  fs::create_directories(path.parent_path());
  json doc = {{"key", entry.key},
              {"request_digest_inputs_summary", entry.request_summary},
              {"response", entry.response},
              {"response_sha256", sha256_hex(entry.response)},
              {"created_at", entry.created_at.empty() ? utc_now() : entry.created_at}};
  thread_local std::mt19937_64 rng{std::random_device{}()};
  const fs::path tmp = path.parent_path() / (entry.key + ".tmp." + std::to_string(rng()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
    if (!out) throw Error(Errc::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<std::string> ResponseCache::keys() const {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::is_directory(dir_, ec)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ResponseCache::Summary ResponseCache::inspect() const {
  Summary s;
  for (const std::string& key : keys()) {
    ++s.entries;
    std::error_code ec;
    s.bytes += fs::file_size(entry_path(key), ec);
    try {
      lookup(key);
    } catch (const Error&) {
      ++s.corrupt;
      s.corrupt_keys.push_back(key);
    }
  }
  return s;
}

std::size_t ResponseCache::prune(std::optional<std::chrono::hours> older_than) const {
  std::size_t removed = 0;
  const auto now = fs::file_time_type::clock::now();
  for (const std::string& key : keys()) {
    const fs::path path = entry_path(key);
    bool drop = false;
    try {
      lookup(key);
    } catch (const Error&) {
      drop = true;
    }
    if (!drop && older_than) {
      std::error_code ec;
      const auto written = fs::last_write_time(path, ec);
      drop = !ec && now - written > *older_than;
    }
    if (drop && fs::remove(path)) ++removed;
  }
  return removed;
}

// ---------------------------------------------------------------------------
// Providers

std::string ReplayProvider::complete(const ChatRequest& request) {
  const std::string key = request_key(request);
  if (auto entry = cache_.lookup(key)) return entry->response;
  throw Error(Errc::ProviderError,
              "no recorded response for \"" + request.tag + "\" (key " + key + ")");
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_transcript(const json& transcript) {
  struct State {
    std::mutex mutex;
    std::map<std::string, std::vector<std::string>> responses;
    std::map<std::string, std::size_t> served;
    std::optional<std::string> fallback;
  };
  auto state = std::make_shared<State>();
  if (auto it = transcript.find("responses"); it != transcript.end()) {
    for (const auto& [tag, value] : it->items()) {
      if (value.is_string()) {
        state->responses[tag] = {value.get<std::string>()};
      } else if (value.is_array() && !value.empty()) {
        for (const auto& v : value) state->responses[tag].push_back(v.get<std::string>());
      } else {
        throw Error(Errc::InvalidConfig, "transcript entry \"" + tag + "\" must be text or a list");
      }
    }
  }
  if (auto it = transcript.find("default"); it != transcript.end() && it->is_string()) {
    state->fallback = it->get<std::string>();
  }
  return std::make_shared<ScriptedProvider>([state](const ChatRequest& request) {
    std::lock_guard lock(state->mutex);
    std::string tag = request.tag;
    auto it = state->responses.find(tag);
    constexpr std::string_view kRetry = "#retry";
    if (it == state->responses.end() && tag.size() > kRetry.size() &&
        tag.compare(tag.size() - kRetry.size(), kRetry.size(), kRetry) == 0) {
      tag.resize(tag.size() - kRetry.size());
      it = state->responses.find(tag);
    }
    if (it == state->responses.end()) {
      if (state->fallback) return *state->fallback;
      throw Error(Errc::ProviderError, "no scripted response for \"" + request.tag + "\"");
    }
    std::size_t& n = state->served[tag];
    const std::string& out = it->second[std::min(n, it->second.size() - 1)];
    ++n;
    return out;
  });
}

std::string ScriptedProvider::complete(const ChatRequest& request) {
  ++calls_;
  {
    std::lock_guard lock(mutex_);
    seen_.push_back(request.tag);
  }
  return handler_(request);
}

std::vector<std::string> ScriptedProvider::seen_tags() const {
  std::lock_guard lock(mutex_);
  return seen_;
}

LiveProvider::LiveProvider(LiveProviderConfig config) : config_(std::move(config)) {
  if (config_.api_key.empty()) throw Error(Errc::AuthMissing, "VLM API key is empty");
}

std::shared_ptr<LiveProvider> LiveProvider::from_env() {
  LiveProviderConfig config;
  config.api_key = env_or("VLM_API_KEY", "");
  if (config.api_key.empty()) throw Error(Errc::AuthMissing, "VLM_API_KEY is not set");
  config.base_url = env_or("VLM_BASE_URL", config.base_url);
  return std::make_shared<LiveProvider>(std::move(config));
}

json LiveProvider::request_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    const bool has_image =
        std::any_of(m.parts.begin(), m.parts.end(), [](const ContentPart& p) { return p.is_image(); });
    if (!has_image) {
      std::string text;
      for (const auto& p : m.parts) {
        if (!text.empty()) text += "\n\n";
        text += p.text;
      }
      messages.push_back({{"role", m.role}, {"content", text}});
      continue;
    }
    json content = json::array();
    for (const auto& p : m.parts) {
      if (p.is_image()) {
        content.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:" + p.image->mime + ";base64," +
                                        base64_encode(p.image->bytes)}}}});
      } else {
        content.push_back({{"type", "text"}, {"text", p.text}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", std::move(content)}});
  }
  return {{"model", request.model_id},
          {"temperature", request.temperature},
          {"max_tokens", request.max_output},
          {"messages", std::move(messages)}};
}

std::string LiveProvider::complete(const ChatRequest& request) {
  const auto response = detail::http_post_json(
      config_.base_url, "/chat/completions", request_body(request).dump(),
      {{"Authorization", "Bearer " + config_.api_key}}, config_.timeout);
  if (response.status == 429 || response.status >= 500) {
    throw TransientError("HTTP " + std::to_string(response.status));
  }
  if (response.status != 200) {
    throw Error(Errc::ProviderError, "HTTP " + std::to_string(response.status) + ": " +
                                         response.body.substr(0, 300));
  }
  try {
    const json doc = json::parse(response.body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::ProviderError, std::string("unexpected response body: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(GatewayConfig config, std::shared_ptr<ChatProvider> provider,
                 std::optional<ResponseCache> cache)
    : config_(std::move(config)),
      provider_(std::move(provider)),
      cache_(std::move(cache)),
      slots_(std::clamp(config_.parallelism, 1, 1024)) {
  if (!provider_) throw Error(Errc::InvalidConfig, "gateway needs a provider");
}

ChatRequest Gateway::new_request(std::string tag) const {
  ChatRequest request;
  request.model_id = config_.profile.model_id;
  request.temperature = 0.0;
  request.max_output = config_.max_output;
  request.tag = std::move(tag);
  return request;
}

std::string Gateway::complete_chat(const ChatRequest& request) {
  const std::size_t images = request.image_count();
  if (images > static_cast<std::size_t>(config_.profile.image_limit)) {
    throw Error(Errc::ImageLimitExceeded,
                std::to_string(images) + " images exceed the " + config_.profile.name +
                    " limit of " + std::to_string(config_.profile.image_limit));
  }
  struct Slot {
    std::counting_semaphore<1024>& s;
    explicit Slot(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
    ~Slot() { s.release(); }
  } slot(slots_);

  for (int attempt = 0;; ++attempt) {
    {
      std::lock_guard lock(mutex_);
      ++stats_.provider_calls;
    }
    try {
      return provider_->complete(request);
    } catch (const TransientError& e) {
      {
        std::lock_guard lock(mutex_);
        ++stats_.provider_failures;
      }
      if (attempt >= config_.retries) {
        throw Error(Errc::ProviderError, "giving up after " + std::to_string(attempt + 1) +
                                             " attempts: " + e.what());
      }
      std::this_thread::sleep_for(config_.backoff * (1 << std::min(attempt, 10)));
    }
  }
}

std::string Gateway::cached_complete(const ChatRequest& request) {
  const std::size_t images = request.image_count();
  if (images > static_cast<std::size_t>(config_.profile.image_limit)) {
    throw Error(Errc::ImageLimitExceeded,
                std::to_string(images) + " images exceed the " + config_.profile.name +
                    " limit of " + std::to_string(config_.profile.image_limit));
  }
  const std::string key = request_key(request);
  if (cache_) {
    if (auto entry = cache_->lookup(key)) {
      record(request, key, true);
      return entry->response;
    }
  }
  std::string response = complete_chat(request);
  if (cache_) cache_->store({key, request_summary(request), response, {}});
  record(request, key, false);
  return response;
}

void Gateway::record(const ChatRequest& request, const std::string& key, bool from_cache) {
  RequestRecord rec;
  rec.tag = request.tag;
  rec.key = key;
  rec.from_cache = from_cache;
  std::string text;
  for (const auto& m : request.messages) {
    for (const auto& p : m.parts) {
      if (p.is_image()) {
        rec.image_digests.push_back(sha256_hex(p.image->bytes));
      } else {
        text += m.role;
        text.push_back('\0');
        text += p.text;
        text.push_back('\0');
      }
    }
  }
  rec.images = rec.image_digests.size();
  rec.text_digest = sha256_hex(text);
  std::lock_guard lock(mutex_);
  ++stats_.requests;
  if (from_cache) ++stats_.cache_hits;
  log_.push_back(std::move(rec));
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

std::vector<RequestRecord> Gateway::request_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

// ---------------------------------------------------------------------------
// JSON extraction

namespace {

struct Span {
  std::size_t begin;
  std::size_t end;  // one past the closing bracket
  bool balanced;
};

// Bracket span starting at text[begin] ('{' or '['), honouring JSON string escapes.
Span scan_span(std::string_view text, std::size_t begin) {
  std::vector<char> stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = begin; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '{': stack.push_back('}'); break;
      case '[': stack.push_back(']'); break;
      case '}':
      case ']':
        if (stack.empty() || stack.back() != c) return {begin, i + 1, false};
        stack.pop_back();
        if (stack.empty()) return {begin, i + 1, true};
        break;
      default: break;
    }
  }
  return {begin, text.size(), false};
}

}  // namespace

json extract_json(std::string_view raw) {
  std::optional<json> last;
  bool saw_candidate = false;
  std::string last_error;
  std::size_t i = 0;
  while (i < raw.size()) {
    const char c = raw[i];
    if (c != '{' && c != '[') {
      ++i;
      continue;
    }
    saw_candidate = true;
    const Span span = scan_span(raw, i);
    if (!span.balanced) {
      // An unterminated opener may just be prose; keep looking after it.
      last_error = "unbalanced brackets at offset " + std::to_string(i);
      i = span.end == raw.size() ? i + 1 : span.end;
      continue;
    }
    try {
      last = json::parse(raw.substr(span.begin, span.end - span.begin));
    } catch (const json::parse_error& e) {
      last_error = e.what();
    }
    i = span.end;
  }
  if (last) return *last;
  if (!saw_candidate) throw Error(Errc::NoJsonFound, "no JSON object or array in reply");
  throw Error(Errc::ParseError, last_error);
}

JsonReply ask_json(Gateway& gateway, ChatRequest request,
                   const std::function<void(const json&)>& validate) {
  const std::string base_tag = request.tag;
  Errc last_code = Errc::ParseError;
  std::string last_message;
  for (int attempt = 1; attempt <= 2; ++attempt) {
    std::string raw = gateway.cached_complete(request);
    try {
      json value = extract_json(raw);
      if (validate) validate(value);
      JsonReply reply;
      reply.value = std::move(value);
      reply.conversation = request.messages;
      reply.conversation.push_back(ChatMessage::assistant_text(raw));
      reply.raw = std::move(raw);
      reply.attempts = attempt;
      return reply;
    } catch (const json::exception& e) {
      last_code = Errc::ParseError;
      last_message = e.what();
    } catch (const Error& e) {
      switch (e.code()) {
        case Errc::ProviderError:
        case Errc::ImageLimitExceeded:
        case Errc::AuthMissing:
        case Errc::CacheCorrupt:
          throw;
        default:
          break;
      }
      last_code = e.code() == Errc::NoJsonFound ? Errc::NoJsonFound : Errc::ParseError;
      last_message = e.what();
    }
    if (attempt == 1) {
      request.messages.push_back(ChatMessage::assistant_text(raw));
      request.messages.push_back(ChatMessage::user_text(std::string(kJsonReprompt)));
      request.tag = base_tag + "#retry";
    }
  }
  throw Error(last_code, "\"" + base_tag + "\": " + last_message);
}

}  // namespace deskrec
