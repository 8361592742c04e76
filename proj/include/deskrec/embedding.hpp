#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace deskrec {

struct EmbeddingVector {
  std::vector<float> values;
  bool empty_text = false;  // set for "" (values are all zero)

  bool is_zero() const;
};

// Cosine in [-1, 1]; 0 when either side is a zero vector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::string_view kind() const = 0;
};

// Hashed bag of words. Tokens are maximal runs of ASCII letters/digits and non-ASCII
// bytes, lowercased; bucket = FNV-1a 64 of the token mod dimension. Counts are
// L2-normalized, so results are identical on every platform.
class StubEmbedding final : public EmbeddingBackend {
 public:
  explicit StubEmbedding(int dimension = 256) : dimension_(dimension) {}

  EmbeddingVector embed(std::string_view text) override;
  std::string_view kind() const override { return "stub"; }

  int dimension() const { return dimension_; }
  static std::vector<std::string> tokenize(std::string_view text);
  std::size_t bucket(std::string_view token) const;

 private:
  int dimension_;
};

struct RemoteEmbeddingConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "text-embedding-3-small";
};

// OpenAI-compatible /embeddings endpoint.
class RemoteEmbedding final : public EmbeddingBackend {
 public:
  explicit RemoteEmbedding(RemoteEmbeddingConfig config);
  // EMBED_API_KEY (required, else Error(AuthMissing)) and EMBED_BASE_URL.
  static std::unique_ptr<RemoteEmbedding> from_env(std::string model = "text-embedding-3-small");

  EmbeddingVector embed(std::string_view text) override;
  std::string_view kind() const override { return "remote"; }

 private:
  RemoteEmbeddingConfig config_;
};

}  // namespace deskrec
