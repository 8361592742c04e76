#include "deskrec/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>

#include <json.hpp>

#include "deskrec/error.hpp"
#include "http_client.hpp"

namespace deskrec {

namespace {

void normalize(EmbeddingVector& v) {
  double sum = 0.0;
  for (float x : v.values) sum += static_cast<double>(x) * x;
  if (sum == 0.0) return;
  const double inv = 1.0 / std::sqrt(sum);
  for (float& x : v.values) x = static_cast<float>(x * inv);
}

bool is_token_byte(unsigned char c) {
  return c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

}  // namespace

bool EmbeddingVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](float x) { return x == 0.0f; });
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.values.size() != b.values.size()) {
    throw Error(Errc::EmbeddingFailure, "embedding dimensions differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += static_cast<double>(a.values[i]) * b.values[i];
    na += static_cast<double>(a.values[i]) * a.values[i];
    nb += static_cast<double>(b.values[i]) * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<std::string> StubEmbedding::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_token_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t StubEmbedding::bucket(std::string_view token) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : token) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h % static_cast<std::uint64_t>(dimension_));
}

EmbeddingVector StubEmbedding::embed(std::string_view text) {
  EmbeddingVector v;
  v.values.assign(static_cast<std::size_t>(dimension_), 0.0f);
  const auto tokens = tokenize(text);
  v.empty_text = tokens.empty();
  for (const auto& t : tokens) v.values[bucket(t)] += 1.0f;
  normalize(v);
  return v;
}

RemoteEmbedding::RemoteEmbedding(RemoteEmbeddingConfig config) : config_(std::move(config)) {
  if (config_.api_key.empty()) throw Error(Errc::AuthMissing, "embedding API key is empty");
}

std::unique_ptr<RemoteEmbedding> RemoteEmbedding::from_env(std::string model) {
  RemoteEmbeddingConfig config;
  const char* key = std::getenv("EMBED_API_KEY");
  if (!key || !*key) throw Error(Errc::AuthMissing, "EMBED_API_KEY is not set");
  config.api_key = key;
  if (const char* url = std::getenv("EMBED_BASE_URL"); url && *url) config.base_url = url;
  config.model = std::move(model);
  return std::make_unique<RemoteEmbedding>(std::move(config));
}

EmbeddingVector RemoteEmbedding::embed(std::string_view text) {
  EmbeddingVector v;
  if (text.empty()) {
    v.empty_text = true;
    return v;
  }
  const nlohmann::json body = {{"model", config_.model}, {"input", std::string(text)}};
  detail::HttpResponse response;
  try {
    response = detail::http_post_json(config_.base_url, "/embeddings", body.dump(),
                                      {{"Authorization", "Bearer " + config_.api_key}},
                                      std::chrono::seconds(60));
  } catch (const Error& e) {
    throw Error(Errc::EmbeddingFailure, e.what());
  }
  if (response.status != 200) {
    throw Error(Errc::EmbeddingFailure, "HTTP " + std::to_string(response.status));
  }
  try {
    const auto doc = nlohmann::json::parse(response.body);
    for (const auto& x : doc.at("data").at(0).at("embedding")) v.values.push_back(x.get<float>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::EmbeddingFailure, e.what());
  }
  normalize(v);
  return v;
}

}  // namespace deskrec
