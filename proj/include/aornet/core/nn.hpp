#pragma once

#include <map>
#include <string>
#include <vector>

#include "aornet/core/rng.hpp"
#include "aornet/core/tape.hpp"

namespace aornet::nn {

using aornet::Mat;
using ad::Tape;

// Named parameter container. std::map keeps iteration order stable by name,
// which fixes checkpoint layout and makes optimizer sweeps deterministic.
// Each parameter is initialized from an RNG forked on its own name, so adding
// or removing one parameter never shifts the init of the others.
class ParamStore {
 public:
  struct Entry {
    Mat w;
    Mat g;
    Mat m;  // AdamW first moment
    Mat v;  // AdamW second moment
  };

  explicit ParamStore(std::uint64_t init_seed = 0) : seed_(init_seed) {}

  enum class Init { kZeros, kOnes, kGlorot, kNormal02 };

  Entry& create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init) {
    require(!entries_.count(name), "duplicate parameter: " + name);
    Entry e;
    e.w = Mat::Zero(rows, cols);
    switch (init) {
      case Init::kZeros:
        break;
      case Init::kOnes:
        e.w.setOnes();
        break;
      case Init::kGlorot: {
        Rng r = Rng(seed_).fork(name);
        double s = std::sqrt(2.0 / double(rows + cols));
        for (Eigen::Index i = 0; i < rows; ++i)
          for (Eigen::Index j = 0; j < cols; ++j) e.w(i, j) = s * r.gaussian();
        break;
      }
      case Init::kNormal02: {
        Rng r = Rng(seed_).fork(name);
        for (Eigen::Index i = 0; i < rows; ++i)
          for (Eigen::Index j = 0; j < cols; ++j) e.w(i, j) = 0.02 * r.gaussian();
        break;
      }
    }
    e.g = Mat::Zero(rows, cols);
    e.m = Mat::Zero(rows, cols);
    e.v = Mat::Zero(rows, cols);
    return entries_.emplace(name, std::move(e)).first->second;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Entry& at(const std::string& name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), "unknown parameter: " + name);
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), "unknown parameter: " + name);
    return it->second;
  }

  // Tape leaf whose gradient accumulates into this entry.
  int use(Tape& t, const std::string& name) {
    Entry& e = at(name);
    return t.param(e.w, &e.g);
  }

  void zero_grads() {
    for (auto& [k, e] : entries_) e.g.setZero();
  }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [k, e] : entries_) n += std::size_t(e.w.size());
    return n;
  }

  std::uint64_t init_seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::map<std::string, Entry> entries_;
};

enum class Act { kNone, kRelu, kGelu };

inline int activate(Tape& t, int x, Act a) {
  switch (a) {
    case Act::kNone:
      return x;
    case Act::kRelu:
      return ad::relu(t, x);
    case Act::kGelu:
      return ad::gelu(t, x);
  }
  return x;
}

// y = x W + b. Parameters are created on first use (declare-by-name style).
struct Linear {
  std::string name;
  Eigen::Index in = 0, out = 0;

  void init(ParamStore& s) const {
    if (!s.has(name + ".w")) s.create(name + ".w", in, out, ParamStore::Init::kGlorot);
    if (!s.has(name + ".b")) s.create(name + ".b", 1, out, ParamStore::Init::kZeros);
  }

  int apply(Tape& t, ParamStore& s, int x) const {
    int y = ad::matmul(t, x, s.use(t, name + ".w"));
    return ad::add_row_broadcast(t, y, s.use(t, name + ".b"));
  }
};

struct LayerNorm {
  std::string name;
  Eigen::Index dim = 0;

  void init(ParamStore& s) const {
    if (!s.has(name + ".gamma")) s.create(name + ".gamma", 1, dim, ParamStore::Init::kOnes);
    if (!s.has(name + ".beta")) s.create(name + ".beta", 1, dim, ParamStore::Init::kZeros);
  }

  int apply(Tape& t, ParamStore& s, int x) const {
    return ad::layernorm(t, x, s.use(t, name + ".gamma"), s.use(t, name + ".beta"));
  }
};

// Plain MLP: dims = {in, h1, ..., out}; `act` between layers, none after the
// last one unless `final_act` says otherwise.
struct Mlp {
  std::string name;
  std::vector<Eigen::Index> dims;
  Act act = Act::kRelu;
  Act final_act = Act::kNone;

  void init(ParamStore& s) const {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      Linear{layer_name(i), dims[i], dims[i + 1]}.init(s);
  }

  int apply(Tape& t, ParamStore& s, int x) const {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      x = Linear{layer_name(i), dims[i], dims[i + 1]}.apply(t, s, x);
      x = activate(t, x, i + 2 < dims.size() ? act : final_act);
    }
    return x;
  }

  std::string layer_name(std::size_t i) const { return name + ".l" + std::to_string(i); }
};

// Multi-head attention. Query rows attend over key/value rows; `key_mask`
// (1 x Nk of 0/1, optional) removes dead slots from the key set — their
// probability is exactly zero, so masked content cannot leak into live rows.
struct MultiheadAttention {
  std::string name;
  Eigen::Index dim = 0;
  int heads = 1;

  void init(ParamStore& s) const {
    for (const char* p : {".q", ".k", ".v", ".o"})
      Linear{name + p, dim, dim}.init(s);
  }

  // `attn_out`, when given, receives each head's post-softmax probability
  // matrix (values only) for inspection tooling.
  int apply(Tape& t, ParamStore& s, int q_in, int kv_in, const Vec* key_mask = nullptr,
            std::vector<Mat>* attn_out = nullptr) const {
    require(dim % heads == 0, "attention: dim must divide by heads");
    Eigen::Index dh = dim / heads;
    int Q = Linear{name + ".q", dim, dim}.apply(t, s, q_in);
    int K = Linear{name + ".k", dim, dim}.apply(t, s, kv_in);
    int V = Linear{name + ".v", dim, dim}.apply(t, s, kv_in);
    Eigen::Index nq = t.val(Q).rows(), nk = t.val(K).rows();
    Mat mask;
    if (key_mask) {
      require(key_mask->size() == nk, "attention: key mask length mismatch");
      mask = Mat::Zero(nq, nk);
      mask.rowwise() = *key_mask;
    } else {
      mask = Mat::Ones(nq, nk);
    }
    std::vector<int> head_outs;
    for (int h = 0; h < heads; ++h) {
      int Qh = ad::slice_cols(t, Q, h * dh, dh);
      int Kh = ad::slice_cols(t, K, h * dh, dh);
      int Vh = ad::slice_cols(t, V, h * dh, dh);
      int scores = ad::scale(t, ad::matmul(t, Qh, ad::transpose(t, Kh)), 1.0 / std::sqrt(double(dh)));
      int attn = ad::masked_softmax(t, scores, mask);
      if (attn_out) attn_out->push_back(t.val(attn));
      head_outs.push_back(ad::matmul(t, attn, Vh));
    }
    int cat = heads == 1 ? head_outs[0] : ad::concat_cols(t, head_outs);
    return Linear{name + ".o", dim, dim}.apply(t, s, cat);
  }
};

// Pre-norm transformer block: x += MHSA(LN(x)); x += MLP(LN(x)).
struct TransformerBlock {
  std::string name;
  Eigen::Index dim = 0;
  int heads = 1;
  Eigen::Index mlp_hidden = 0;

  void init(ParamStore& s) const {
    LayerNorm{name + ".ln1", dim}.init(s);
    MultiheadAttention{name + ".attn", dim, heads}.init(s);
    LayerNorm{name + ".ln2", dim}.init(s);
    Mlp{name + ".mlp", {dim, mlp_hidden, dim}, Act::kGelu}.init(s);
  }

  int apply(Tape& t, ParamStore& s, int x, const Vec* key_mask = nullptr,
            std::vector<Mat>* attn_out = nullptr) const {
    int h = LayerNorm{name + ".ln1", dim}.apply(t, s, x);
    h = MultiheadAttention{name + ".attn", dim, heads}.apply(t, s, h, h, key_mask, attn_out);
    x = ad::add(t, x, h);
    int m = LayerNorm{name + ".ln2", dim}.apply(t, s, x);
    m = Mlp{name + ".mlp", {dim, mlp_hidden, dim}, Act::kGelu}.apply(t, s, m);
    return ad::add(t, x, m);
  }
};

}  // namespace aornet::nn
