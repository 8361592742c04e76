#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace deskrec {

using nlohmann::json;

struct ImagePayload {
  std::string mime = "image/png";
  std::vector<std::uint8_t> bytes;
};

struct ContentPart {
  std::string text;
  std::shared_ptr<const ImagePayload> image;  // set for image parts

  bool is_image() const { return image != nullptr; }
  static ContentPart text_part(std::string text) { return {std::move(text), nullptr}; }
  static ContentPart image_part(std::vector<std::uint8_t> png) {
    return {{}, std::make_shared<const ImagePayload>(ImagePayload{"image/png", std::move(png)})};
  }
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::vector<ContentPart> parts;

  static ChatMessage user_text(std::string text) {
    return {"user", {ContentPart::text_part(std::move(text))}};
  }
  static ChatMessage assistant_text(std::string text) {
    return {"assistant", {ContentPart::text_part(std::move(text))}};
  }
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output = 4096;
  // Routing label for logs, reports and scripted transcripts, e.g. "df_proposer:0-9".
  // Not part of the cache key.
  std::string tag;

  std::size_t image_count() const;
};

struct ProviderProfile {
  std::string name;
  std::string model_id;
  int image_limit = 10;
  std::string request_shape = "openai-chat";
};

// gpt-4o, gpt-4o-mini (10 images per call), gemini-1.5-pro, gemini-1.5-flash.
std::optional<ProviderProfile> builtin_profile(std::string_view name);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string base64_encode(std::span<const std::uint8_t> bytes);

// Canonical form hashed into the cache key: model, sampling settings and every message
// part in order, each part represented by the SHA-256 of its raw bytes.
json request_digest_inputs(const ChatRequest& request);
std::string request_key(const ChatRequest& request);

struct CacheEntry {
  std::string key;
  json request_summary;
  std::string response;
  std::string created_at;
};

// Content-addressed store: <dir>/<first two hex>/<key>.json. Entries are written once
// (temp file + rename) and never rewritten.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path entry_path(const std::string& key) const;

  // Error(CacheCorrupt) if the file exists but does not verify.
  std::optional<CacheEntry> lookup(const std::string& key) const;
  void store(const CacheEntry& entry) const;

  struct Summary {
    std::size_t entries = 0;
    std::size_t corrupt = 0;
    std::uintmax_t bytes = 0;
    std::vector<std::string> corrupt_keys;
  };
  std::vector<std::string> keys() const;
  Summary inspect() const;
  // Removes corrupt entries, plus entries older than `older_than` when given.
  std::size_t prune(std::optional<std::chrono::hours> older_than) const;

 private:
  std::filesystem::path dir_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string_view kind() const = 0;
};

// Serves recorded responses straight from a cache; never reaches the network.
class ReplayProvider final : public ChatProvider {
 public:
  explicit ReplayProvider(ResponseCache cache) : cache_(std::move(cache)) {}
  std::string complete(const ChatRequest& request) override;
  std::string_view kind() const override { return "replay"; }

 private:
  ResponseCache cache_;
};

// Answers from a handler or a transcript keyed by request tag. Transcript form:
//   {"responses": {"<tag>": "text" | ["attempt 1", "attempt 2", ...]}, "default": "text"}
// A list is consumed one entry per call (the last entry repeats). A tag ending in
// "#retry" falls back to its base tag.
class ScriptedProvider final : public ChatProvider {
 public:
  using Handler = std::function<std::string(const ChatRequest&)>;

  explicit ScriptedProvider(Handler handler) : handler_(std::move(handler)) {}
  static std::shared_ptr<ScriptedProvider> from_transcript(const json& transcript);

  std::string complete(const ChatRequest& request) override;
  std::string_view kind() const override { return "scripted"; }

  std::size_t calls() const { return calls_; }
  std::vector<std::string> seen_tags() const;

 private:
  Handler handler_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> seen_;
};

struct LiveProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::chrono::seconds timeout{120};
};

// OpenAI-compatible /chat/completions client; images are sent as PNG data URLs.
class LiveProvider final : public ChatProvider {
 public:
  explicit LiveProvider(LiveProviderConfig config);
  // Reads VLM_API_KEY (required, else Error(AuthMissing)) and VLM_BASE_URL.
  static std::shared_ptr<LiveProvider> from_env();

  std::string complete(const ChatRequest& request) override;
  std::string_view kind() const override { return "live"; }

  static json request_body(const ChatRequest& request);

 private:
  LiveProviderConfig config_;
};

struct GatewayConfig {
  ProviderProfile profile{"gpt-4o", "gpt-4o", 10, "openai-chat"};
  int retries = 2;  // extra attempts after a transient failure
  std::chrono::milliseconds backoff{500};
  int parallelism = 4;
  int max_output = 4096;
};

struct RequestRecord {
  std::string tag;
  std::string key;
  std::size_t images = 0;
  std::vector<std::string> image_digests;
  std::string text_digest;  // SHA-256 over all text parts, in order
  bool from_cache = false;
};

struct GatewayStats {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t provider_calls = 0;
  std::size_t provider_failures = 0;
};

class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<ChatProvider> provider,
          std::optional<ResponseCache> cache = std::nullopt);

  const GatewayConfig& config() const { return config_; }
  const ProviderProfile& profile() const { return config_.profile; }
  ChatProvider& provider() { return *provider_; }

  // Request preset with the profile's model id, temperature 0 and the output budget.
  ChatRequest new_request(std::string tag) const;

  // Provider call with image-limit check, bounded concurrency and retries on
  // TransientError (exponential backoff).
  std::string complete_chat(const ChatRequest& request);
  // Cache-first; on a miss calls complete_chat and persists the response.
  std::string cached_complete(const ChatRequest& request);

  GatewayStats stats() const;
  std::vector<RequestRecord> request_log() const;

 private:
  void record(const ChatRequest& request, const std::string& key, bool from_cache);

  GatewayConfig config_;
  std::shared_ptr<ChatProvider> provider_;
  std::optional<ResponseCache> cache_;
  std::counting_semaphore<1024> slots_;
  mutable std::mutex mutex_;
  GatewayStats stats_;
  std::vector<RequestRecord> log_;
};

// Last top-level JSON value in free text (fenced or bare). Error(NoJsonFound) when the
// text has no bracketed span at all, Error(ParseError) when none of them parses.
json extract_json(std::string_view raw);

struct JsonReply {
  json value;
  std::string raw;                      // text of the accepted reply
  std::vector<ChatMessage> conversation;  // request messages + accepted assistant reply
  int attempts = 1;
};

inline constexpr std::string_view kJsonReprompt =
    "Your previous reply did not contain a valid JSON result in the required format. "
    "Reply again and output only the complete and valid JSON.";

// cached_complete + extract_json + validate. If extraction or `validate` fails, the
// reply is appended to the conversation with kJsonReprompt and asked once more (tag
// suffixed "#retry"); a second failure rethrows as Error(ParseError / NoJsonFound).
JsonReply ask_json(Gateway& gateway, ChatRequest request,
                   const std::function<void(const json&)>& validate = {});

}  // namespace deskrec
