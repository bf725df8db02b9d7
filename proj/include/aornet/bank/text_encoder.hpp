#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "aornet/core/common.hpp"

// Deterministic text embedding without external weights: hashed character
// trigrams plus hashed word tokens, signed by one hash bit (the classic
// hashing trick), accumulated into a fixed-width vector and L2-normalized.
// It carries no semantics beyond lexical overlap, which is exactly enough
// for the alignment machinery to have something real to retrieve against;
// the interface is small so a learned encoder can slot in later.
namespace aornet::bank {

class HashNgramEncoder {
 public:
  explicit HashNgramEncoder(Eigen::Index dim) : dim_(dim) {
    require(dim_ >= 8, "text encoder dim must be at least 8");
  }

  Eigen::Index dim() const { return dim_; }

  std::string id() const { return "hashed-ngram/v1:d=" + std::to_string(dim_); }

  Vec encode(const std::string& text) const {
    const std::string s = normalize(text);
    require(s.size() > 2, "cannot encode empty text");
    Vec v = Vec::Zero(dim_);
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) accumulate(v, s.data() + i, 3, 1.0);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
      if (i == s.size() || s[i] == ' ') {
        if (i > start) accumulate(v, s.data() + start, i - start, 2.0);
        start = i + 1;
      }
    }
    const double n = v.norm();
    require(n > 0.0, "text hashed to the zero vector");
    return v / n;
  }

 private:
  // lowercase, collapse runs of whitespace/punctuation to single spaces, and
  // pad with one space on each side so edge trigrams see word boundaries
  static std::string normalize(const std::string& text) {
    std::string out = " ";
    for (unsigned char c : text) {
      if (std::isalnum(c))
        out += char(std::tolower(c));
      else if (out.back() != ' ')
        out += ' ';
    }
    if (out.back() != ' ') out += ' ';
    return out;
  }

  void accumulate(Vec& v, const char* data, std::size_t len, double weight) const {
    const std::uint64_t h = fnv1a64(data, len);
    const Eigen::Index bucket = Eigen::Index(h % std::uint64_t(dim_));
    v(bucket) += (h >> 63) ? weight : -weight;
  }

  Eigen::Index dim_;
};

template <class Encoder>
Mat encode_texts(const std::vector<std::string>& texts, const Encoder& enc,
                 Eigen::Index expected_d = -1) {
  if (expected_d >= 0 && enc.dim() != expected_d)
    throw ValidationError("ENCODER_DIM_MISMATCH: encoder produces d=" +
                          std::to_string(enc.dim()) + ", bank expects d=" +
                          std::to_string(expected_d));
  Mat m(Eigen::Index(texts.size()), enc.dim());
  for (std::size_t i = 0; i < texts.size(); ++i) m.row(Eigen::Index(i)) = enc.encode(texts[i]);
  return m;
}

}  // namespace aornet::bank
