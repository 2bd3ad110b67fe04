#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fcaccel::embedding {

inline constexpr std::size_t kDefaultDimension = 256;
inline constexpr double kNormTolerance = 1e-6;

// Unit-norm vector. Construction normalizes or validates; a zero vector is rejected.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  // Scales raw values to unit length. Throws kInvalidInput on a zero vector.
  static EmbeddingVector normalized(std::vector<double> values);
  // Accepts values already unit-norm within kNormTolerance and keeps them as given.
  static EmbeddingVector from_unit(std::vector<double> values);

  std::size_t dimension() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  bool empty() const noexcept { return values_.empty(); }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b) noexcept;

// Throws kInvalidInput on dimension mismatch. Result clamped to [-1, 1].
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct VectorizerInfo {
  std::string name;
  std::size_t dimension = kDefaultDimension;
  bool deterministic = true;
};

class Vectorizer {
 public:
  virtual ~Vectorizer() = default;
  virtual const VectorizerInfo& info() const noexcept = 0;
  // Implementations may assume non-empty text; use embed() for checked access.
  virtual std::vector<EmbeddingVector> vectorize(std::span<const std::string> texts) const = 0;
};

// Checked entry points: empty text -> kInvalidInput; a backend failure
// surfaces as kBackendUnavailable.
EmbeddingVector embed(std::string_view text, const Vectorizer& vectorizer);
std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, const Vectorizer& vectorizer);

// Signed feature hashing of character 1-, 2- and 3-grams (code points,
// ASCII letters lower-cased), L2-normalized.
class HashedNgramVectorizer final : public Vectorizer {
 public:
  explicit HashedNgramVectorizer(std::size_t dimension = kDefaultDimension);

  const VectorizerInfo& info() const noexcept override { return info_; }
  std::vector<EmbeddingVector> vectorize(std::span<const std::string> texts) const override;

  EmbeddingVector vectorize_one(std::string_view text) const;

 private:
  VectorizerInfo info_;
};

EmbeddingVector builtin_vectorize(std::string_view text);

struct HttpVectorizerConfig {
  std::string url;  // e.g. http://127.0.0.1:8080/embed
  std::string name = "http-embedding";
  std::size_t dimension = kDefaultDimension;
  std::chrono::milliseconds timeout{200};
  std::ptrdiff_t max_in_flight = 8;
};

// Client for an external embedding service:
//   POST {"texts": [...]} -> {"vectors": [[...], ...]}
class HttpVectorizer final : public Vectorizer {
 public:
  explicit HttpVectorizer(HttpVectorizerConfig config);
  ~HttpVectorizer() override;

  const VectorizerInfo& info() const noexcept override { return info_; }
  std::vector<EmbeddingVector> vectorize(std::span<const std::string> texts) const override;

 private:
  HttpVectorizerConfig config_;
  VectorizerInfo info_;
  std::string scheme_host_port_;
  std::string path_;
  mutable std::counting_semaphore<1024> in_flight_;
};

// Splits "http://host:port/path" into ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url);

}  // namespace fcaccel::embedding
