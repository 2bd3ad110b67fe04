#include "fcaccel/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "fcaccel/error.hpp"
#include "fcaccel/util.hpp"
#include "httplib.h"

namespace fcaccel::embedding {

namespace {

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Byte offsets of code point starts, plus the end offset. Stray
// continuation bytes count as their own unit.
std::vector<std::size_t> code_point_bounds(std::string_view s) {
  std::vector<std::size_t> bounds;
  bounds.reserve(s.size() + 1);
  std::size_t i = 0;
  while (i < s.size()) {
    bounds.push_back(i);
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    std::size_t j = 1;
    while (j < len && i + j < s.size() && (static_cast<unsigned char>(s[i + j]) & 0xC0) == 0x80) ++j;
    i += j;
  }
  bounds.push_back(s.size());
  return bounds;
}

}  // namespace

EmbeddingVector EmbeddingVector::normalized(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (!(sq > 0.0) || !std::isfinite(sq)) fail(ErrorCode::kInvalidInput, "cannot normalize a zero or non-finite vector");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : values) v *= inv;
  return EmbeddingVector(std::move(values));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (values.empty() || !std::isfinite(sq) || std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
    fail(ErrorCode::kInvalidInput, "embedding is not unit-norm");
  }
  // Kept verbatim so stored vectors reload bit-for-bit.
  return EmbeddingVector(std::move(values));
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    fail(ErrorCode::kInvalidInput, "dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                                       std::to_string(b.dimension()));
  }
  return std::clamp(dot(a.values(), b.values()), -1.0, 1.0);
}

EmbeddingVector embed(std::string_view text, const Vectorizer& vectorizer) {
  const std::string s(text);
  auto out = embed_batch(std::span<const std::string>(&s, 1), vectorizer);
  return std::move(out.front());
}

std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, const Vectorizer& vectorizer) {
  for (const auto& t : texts) {
    if (t.empty()) fail(ErrorCode::kInvalidInput, "cannot embed empty text");
  }
  if (texts.empty()) return {};
  auto out = vectorizer.vectorize(texts);
  if (out.size() != texts.size()) fail(ErrorCode::kBackendUnavailable, "vectorizer returned wrong vector count");
  for (const auto& v : out) {
    if (v.dimension() != vectorizer.info().dimension) {
      fail(ErrorCode::kBackendUnavailable, "vectorizer returned wrong dimension");
    }
  }
  return out;
}

HashedNgramVectorizer::HashedNgramVectorizer(std::size_t dimension) {
  if (dimension == 0) fail(ErrorCode::kInvalidInput, "vectorizer dimension must be positive");
  info_.name = "builtin-ngram-" + std::to_string(dimension);
  info_.dimension = dimension;
  info_.deterministic = true;
}

EmbeddingVector HashedNgramVectorizer::vectorize_one(std::string_view text) const {
  if (text.empty()) fail(ErrorCode::kInvalidInput, "cannot embed empty text");
  std::string lowered(text);
  for (char& c : lowered) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  const auto bounds = code_point_bounds(lowered);
  const std::size_t units = bounds.size() - 1;
  const std::size_t dim = info_.dimension;

  std::vector<double> signed_counts(dim, 0.0);
  std::vector<double> counts(dim, 0.0);
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t i = 0; i + n <= units; ++i) {
      const std::string_view gram(lowered.data() + bounds[i], bounds[i + n] - bounds[i]);
      const std::uint64_t h = mix64(fnv1a64(gram));
      const std::size_t bucket = h % dim;
      signed_counts[bucket] += (h >> 63) ? -1.0 : 1.0;
      counts[bucket] += 1.0;
    }
  }
  // Signed collisions can cancel to zero on tiny inputs; unsigned counts never do.
  const bool all_zero = std::all_of(signed_counts.begin(), signed_counts.end(), [](double v) { return v == 0.0; });
  return EmbeddingVector::normalized(all_zero ? std::move(counts) : std::move(signed_counts));
}

std::vector<EmbeddingVector> HashedNgramVectorizer::vectorize(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(vectorize_one(t));
  return out;
}

EmbeddingVector builtin_vectorize(std::string_view text) {
  static const HashedNgramVectorizer kBuiltin;
  return kBuiltin.vectorize_one(text);
}

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::kInvalidInput, "URL must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

HttpVectorizer::HttpVectorizer(HttpVectorizerConfig config)
    : config_(std::move(config)), in_flight_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, 1024)) {
  info_.name = config_.name;
  info_.dimension = config_.dimension;
  info_.deterministic = false;
  std::tie(scheme_host_port_, path_) = split_url(config_.url);
}

HttpVectorizer::~HttpVectorizer() = default;

std::vector<EmbeddingVector> HttpVectorizer::vectorize(std::span<const std::string> texts) const {
  if (!in_flight_.try_acquire_for(config_.timeout)) {
    fail(ErrorCode::kBackendUnavailable, "embedding service: too many requests in flight");
  }
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  httplib::Client client(scheme_host_port_);
  const auto ms = config_.timeout.count();
  client.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
  client.set_write_timeout(ms / 1000, (ms % 1000) * 1000);

  json body;
  body["texts"] = std::vector<std::string>(texts.begin(), texts.end());
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) fail(ErrorCode::kBackendUnavailable, "embedding service unreachable: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    fail(ErrorCode::kBackendUnavailable, "embedding service returned HTTP " + std::to_string(res->status));
  }

  std::vector<EmbeddingVector> out;
  try {
    const auto reply = json::parse(res->body);
    const auto& vectors = reply.at("vectors");
    if (!vectors.is_array() || vectors.size() != texts.size()) {
      fail(ErrorCode::kBackendUnavailable, "embedding service: vector count mismatch");
    }
    for (const auto& v : vectors) {
      auto values = v.get<std::vector<double>>();
      if (values.size() != info_.dimension) fail(ErrorCode::kBackendUnavailable, "embedding service: wrong dimension");
      out.push_back(EmbeddingVector::normalized(std::move(values)));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kBackendUnavailable, std::string("embedding service: malformed response: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kBackendUnavailable) throw;
    fail(ErrorCode::kBackendUnavailable, std::string("embedding service: ") + e.what());
  }
  return out;
}

}  // namespace fcaccel::embedding
