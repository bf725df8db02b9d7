#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "aornet/mot/fusion.hpp"

using aornet::Mat;
using aornet::Rng;
using aornet::ValidationError;
using aornet::Vec;
using aornet::ad::Tape;
using namespace aornet::mot;

namespace {

MoTConfig toy_cfg() {
  MoTConfig c;
  c.o_max = 2;
  c.r_max = 3;
  c.num_classes = 4;
  c.d = 8;
  return c;
}

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.gaussian();
  return m;
}

Mat unit_rows(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Mat m = random_mat(rng, r, c);
  for (Eigen::Index i = 0; i < r; ++i) m.row(i) /= m.row(i).norm();
  return m;
}

double ref_gelu(double x) {
  const double k = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

Mat ref_linear(const aornet::nn::ParamStore& s, const std::string& lname, const Mat& x) {
  Mat y = x * s.at(lname + ".w").w;
  y.rowwise() += s.at(lname + ".b").w.row(0);
  return y;
}

Mat ref_mlp2(const aornet::nn::ParamStore& s, const std::string& name, const Mat& x) {
  Mat h = ref_linear(s, name + ".l0", x);
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j) h(i, j) = ref_gelu(h(i, j));
  return ref_linear(s, name + ".l1", h);
}

double max_abs_diff(const Mat& a, const Mat& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  return (a - b).cwiseAbs().maxCoeff();
}

// Builds leaf inputs + masks for a full pass; slot 1 of objects and slot 2 of
// relations are masked (their token rows are zero, as the upstream contract
// guarantees).
struct FullCase {
  Mat cls, obj, rel, t_a, t_o, t_r;
  MoTInputs in;

  FullCase(Rng& rng, const MoTConfig& cfg, Eigen::Index n_a, Eigen::Index n_o,
           Eigen::Index n_r) {
    cls = random_mat(rng, 1, cfg.d);
    obj = random_mat(rng, cfg.o_max, cfg.d);
    rel = random_mat(rng, cfg.r_max, cfg.d);
    obj.row(1).setZero();
    rel.row(2).setZero();
    t_a = unit_rows(rng, n_a, cfg.d);
    t_o = unit_rows(rng, n_o, cfg.d);
    t_r = unit_rows(rng, n_r, cfg.d);
    in.object_mask = {true, false};
    in.relation_mask = {true, true, false};
  }

  MoTOutput run(Tape& t, MoTHead& head, aornet::nn::ParamStore& s, int label = -1,
                bool leaf_inputs = false) {
    in.class_token = leaf_inputs ? t.leaf(cls) : t.input(cls);
    in.object_tokens = leaf_inputs ? t.leaf(obj) : t.input(obj);
    in.relation_tokens = leaf_inputs ? t.leaf(rel) : t.input(rel);
    return head.forward(t, s, in, t.input(t_a), t.input(t_o), t.input(t_r), nullptr, label);
  }
};

}  // namespace

TEST_CASE("similarity is cosine against the prototype rows") {
  Rng rng(7001);
  MoTHead head(toy_cfg());
  aornet::nn::ParamStore store(1);
  head.init(store);
  const Eigen::Index d = 8;
  Mat bank = unit_rows(rng, 5, d);

  SECTION("a visual row equal to a prototype attains similarity 1 at its column") {
    Mat v(2, d);
    v.row(0) = 3.0 * bank.row(2);  // scale must not matter
    v.row(1) = random_mat(rng, 1, d);
    Tape t;
    int m = head.similarity(t, t.input(v), t.input(bank));
    CHECK(t.val(m)(0, 2) == Catch::Approx(1.0).margin(1e-9));
    for (int c = 0; c < 5; ++c)
      if (c != 2) CHECK(t.val(m)(0, c) < t.val(m)(0, 2));
  }

  SECTION("orthogonal rows score zero everywhere") {
    Mat basis = Mat::Zero(2, d);
    basis(0, 0) = 1.0;
    basis(1, 1) = 1.0;
    Mat v = Mat::Zero(1, d);
    v(0, 5) = 2.5;
    Tape t;
    int m = head.similarity(t, t.input(v), t.input(basis));
    CHECK(t.val(m).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("random case equals brute-force normalized dot products") {
    Mat v = random_mat(rng, 3, d);
    Tape t;
    int m = head.similarity(t, t.input(v), t.input(bank));
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 5; ++c) {
        double expect = v.row(r).dot(bank.row(c)) / v.row(r).norm();
        CHECK(t.val(m)(r, c) == Catch::Approx(expect).margin(1e-6));
      }
  }

  SECTION("masked visual rows yield exactly zero similarity rows") {
    Mat v = random_mat(rng, 3, d);
    std::vector<bool> mask = {true, false, true};
    Tape t;
    int m = head.similarity(t, t.input(v), t.input(bank), &mask);
    CHECK(t.val(m).row(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(t.val(m).row(0).cwiseAbs().maxCoeff() > 0.0);
  }

  SECTION("dimension mismatch is rejected") {
    Tape t;
    int v = t.input(random_mat(rng, 1, d + 1));
    CHECK_THROWS_MATCHES(head.similarity(t, v, t.input(bank)), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("DIM_MISMATCH")));
  }
}

TEST_CASE("differentiable one-hot: hard forward, soft gradients") {
  MoTConfig cfg = toy_cfg();
  MoTHead head(cfg);
  Rng rng(7002);

  SECTION("argmax selection and lowest-index tie-break") {
    Mat m(2, 2);
    m << 0.2, 0.8, 0.5, 0.5;
    Tape t;
    int oh = head.differentiable_one_hot(t, t.input(m));
    Mat expect(2, 2);
    expect << 0.0, 1.0, 1.0, 0.0;
    CHECK(max_abs_diff(t.val(oh), expect) == 0.0);
  }

  SECTION("every forward row is exactly a {0,1} one-hot") {
    Mat m = random_mat(rng, 6, 9);
    Tape t;
    int oh = head.differentiable_one_hot(t, t.input(m));
    for (int r = 0; r < 6; ++r) {
      double sum = 0.0;
      int ones = 0;
      for (int c = 0; c < 9; ++c) {
        double x = t.val(oh)(r, c);
        CHECK((x == 0.0 || x == 1.0));
        sum += x;
        ones += x == 1.0;
      }
      CHECK(sum == 1.0);
      CHECK(ones == 1);
    }
  }

  SECTION("gradient equals the finite-difference gradient of the soft path") {
    Mat m = random_mat(rng, 2, 5);
    Mat c = random_mat(rng, 2, 5);
    const double tau = cfg.align.tau;

    // Independent soft surrogate: f(M) = sum(softmax(M/tau) .* c), row-wise.
    auto soft_value = [&](const Mat& mm) {
      double total = 0.0;
      for (Eigen::Index r = 0; r < mm.rows(); ++r) {
        Eigen::RowVectorXd z = mm.row(r) / tau;
        Eigen::RowVectorXd e = (z.array() - z.maxCoeff()).exp();
        total += (e / e.sum()).cwiseProduct(c.row(r)).sum();
      }
      return total;
    };

    Tape t;
    int leaf = t.leaf(m);
    int oh = head.differentiable_one_hot(t, leaf);
    int weighted = aornet::ad::hadamard(t, oh, t.input(c));
    int loss = aornet::ad::scale(t, aornet::ad::mean_all(t, weighted), 10.0);  // = sum
    t.backward(loss);
    const double h = 1e-6;
    for (int probe = 0; probe < 8; ++probe) {
      Eigen::Index r = Eigen::Index(rng.uniform_int(2)), cc = Eigen::Index(rng.uniform_int(5));
      Mat up = m, dn = m;
      up(r, cc) += h;
      dn(r, cc) -= h;
      double fd = (soft_value(up) - soft_value(dn)) / (2 * h);
      CHECK(t.grad(leaf)(r, cc) == Catch::Approx(fd).epsilon(1e-4).margin(1e-10));
    }
  }

  SECTION("soft mode emits the softmax itself") {
    MoTConfig soft_cfg = toy_cfg();
    soft_cfg.align.straight_through = false;
    MoTHead soft_head(soft_cfg);
    Mat m = random_mat(rng, 3, 4);
    Tape t;
    int p = soft_head.differentiable_one_hot(t, t.input(m));
    CHECK((t.val(p).rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(t.val(p).minCoeff() > 0.0);
    CHECK(t.val(p).maxCoeff() < 1.0);
  }

  SECTION("gumbel noise is reproducible from the seed and can flip choices") {
    MoTConfig noisy_cfg = toy_cfg();
    noisy_cfg.align.gumbel_noise = true;
    MoTHead noisy(noisy_cfg);
    Mat m = Mat::Zero(30, 2);
    m.col(1).setConstant(0.01);  // nearly tied, so noise decides
    auto run = [&](std::uint64_t seed) {
      Rng r(seed);
      Tape t;
      return Mat(t.val(noisy.differentiable_one_hot(t, t.input(m), &r)));
    };
    CHECK(max_abs_diff(run(11), run(11)) == 0.0);
    Tape t;
    int quiet = head.differentiable_one_hot(t, t.input(m));
    CHECK(max_abs_diff(run(11), t.val(quiet)) > 0.0);
    CHECK_THROWS_WITH(noisy.differentiable_one_hot(t, t.input(m), nullptr),
                      Catch::Matchers::ContainsSubstring("noise stream"));
  }
}

TEST_CASE("align-fuse adds the projected retrieved prototype residually") {
  Rng rng(7003);
  MoTConfig cfg = toy_cfg();
  MoTHead head(cfg);
  aornet::nn::ParamStore store(2);
  head.init(store);
  Mat bank = unit_rows(rng, 6, cfg.d);

  SECTION("zeroed projection output layer makes it the identity") {
    store.at("mot.proj_o.l1.w").w.setZero();
    store.at("mot.proj_o.l1.b").w.setZero();
    Mat v = random_mat(rng, cfg.o_max, cfg.d);
    Mat mhat = Mat::Zero(cfg.o_max, 6);
    mhat(0, 3) = 1.0;
    mhat(1, 0) = 1.0;
    Tape t;
    int f = head.align_fuse(t, store, 'o', t.input(v), t.input(mhat), t.input(bank));
    CHECK(max_abs_diff(t.val(f), v) == 0.0);
  }

  SECTION("hand recomputation: one-hot retrieval copies the prototype row") {
    Mat v = random_mat(rng, cfg.o_max, cfg.d);
    Mat mhat = Mat::Zero(cfg.o_max, 6);
    mhat(0, 4) = 1.0;
    mhat(1, 2) = 1.0;
    std::vector<bool> mask = {true, false};
    Tape t;
    int f =
        head.align_fuse(t, store, 'o', t.input(v), t.input(mhat), t.input(bank), &mask);
    Mat retrieved(cfg.o_max, cfg.d);
    retrieved.row(0) = bank.row(4);  // exactly, not approximately
    retrieved.row(1) = bank.row(2);
    Mat expect = v + ref_mlp2(store, "mot.proj_o", retrieved);
    expect.row(1).setZero();
    CHECK(max_abs_diff(t.val(f).row(0), expect.row(0)) < 1e-12);
    CHECK(t.val(f).row(1).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("soft retrieval weights recompute the same way") {
    Mat v = random_mat(rng, 1, cfg.d);
    Mat mhat = random_mat(rng, 1, 6).array().abs().matrix();
    Tape t;
    int f = head.align_fuse(t, store, 'a', t.input(v), t.input(mhat), t.input(bank));
    Mat expect = v + ref_mlp2(store, "mot.proj_a", mhat * bank);
    CHECK(max_abs_diff(t.val(f), expect) < 1e-9);
  }

  SECTION("per-level projections are distinct parameters by default") {
    CHECK(store.has("mot.proj_a.l0.w"));
    CHECK(store.has("mot.proj_o.l0.w"));
    CHECK(store.has("mot.proj_r.l0.w"));
    MoTConfig shared = toy_cfg();
    shared.shared_projection = true;
    aornet::nn::ParamStore s2(3);
    MoTHead(shared).init(s2);
    CHECK(s2.has("mot.proj.l0.w"));
    CHECK_FALSE(s2.has("mot.proj_a.l0.w"));
  }
}

TEST_CASE("dynamic weights: masked softmax over slot logits") {
  Rng rng(7004);
  MoTConfig cfg = toy_cfg();  // slots = 1 + 2 + 3 = 6
  MoTHead head(cfg);
  aornet::nn::ParamStore store(4);
  head.init(store);

  auto weights_for = [&](const Mat& fa, const Mat& fo, const Mat& fr,
                         const std::vector<bool>& om, const std::vector<bool>& rm) {
    Tape t;
    int w = head.dynamic_weights(t, store, t.input(fa), t.input(fo), t.input(fr), om, rm);
    return Mat(t.val(w));
  };

  Mat fa = random_mat(rng, 1, cfg.d);
  Mat fo = random_mat(rng, cfg.o_max, cfg.d);
  Mat fr = random_mat(rng, cfg.r_max, cfg.d);

  SECTION("all object and relation slots masked puts all weight on the action") {
    Mat w = weights_for(fa, Mat::Zero(cfg.o_max, cfg.d), Mat::Zero(cfg.r_max, cfg.d),
                        {false, false}, {false, false, false});
    CHECK(w(0, 0) == 1.0);
    CHECK(w.rightCols(5).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("zeroed weight MLP gives uniform weights over the live slots") {
    for (const char* n : {"mot.wmlp.l0.w", "mot.wmlp.l0.b", "mot.wmlp.l1.w", "mot.wmlp.l1.b"})
      store.at(n).w.setZero();
    // 1 action + 2 objects + 1 relation live -> each gets exactly 1/4.
    Mat w = weights_for(fa, fo, fr, {true, true}, {true, false, false});
    CHECK(w(0, 0) == 0.25);
    CHECK(w(0, 1) == 0.25);
    CHECK(w(0, 2) == 0.25);
    CHECK(w(0, 3) == 0.25);
    CHECK(w.rightCols(2).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("random case: sums to one, masked slots exactly zero") {
    Mat w = weights_for(fa, fo, fr, {true, false}, {false, true, true});
    CHECK(w.sum() == Catch::Approx(1.0).margin(1e-6));
    CHECK(w(0, 2) == 0.0);
    CHECK(w(0, 3) == 0.0);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w(0, 0) > 0.0);  // the action slot is always live
  }

  SECTION("a constant shift of every slot logit leaves the weights unchanged") {
    std::vector<bool> om = {true, false}, rm = {true, true, false};
    Mat before = weights_for(fa, fo, fr, om, rm);
    store.at("mot.wmlp.l1.b").w.array() += 7.5;
    Mat after = weights_for(fa, fo, fr, om, rm);
    CHECK(max_abs_diff(before, after) < 1e-6);
  }
}

TEST_CASE("final fusion is an exact convex combination") {
  Rng rng(7005);
  MoTConfig cfg = toy_cfg();
  MoTHead head(cfg);

  Mat fa = random_mat(rng, 1, cfg.d);
  Mat fo = random_mat(rng, cfg.o_max, cfg.d);
  Mat fr = random_mat(rng, cfg.r_max, cfg.d);

  SECTION("one-hot W on the action slot returns F_A") {
    Mat w = Mat::Zero(1, 6);
    w(0, 0) = 1.0;
    Tape t;
    int a = head.fuse_final(t, t.input(w), t.input(fa), t.input(fo), t.input(fr));
    CHECK(max_abs_diff(t.val(a), fa) == 0.0);
  }

  SECTION("identical live rows collapse to that vector") {
    Mat v = random_mat(rng, 1, cfg.d);
    Mat fo2 = v.colwise().replicate(cfg.o_max);
    Mat fr2 = v.colwise().replicate(cfg.r_max);
    Mat w(1, 6);
    w << 0.25, 0.30, 0.10, 0.05, 0.20, 0.10;  // sums to 1
    Tape t;
    int a = head.fuse_final(t, t.input(w), t.input(v), t.input(fo2), t.input(fr2));
    CHECK(max_abs_diff(t.val(a), v) < 1e-12);
  }

  SECTION("random case equals the brute-force weighted sum") {
    Mat w = random_mat(rng, 1, 6).array().abs().matrix();
    w /= w.sum();
    Tape t;
    int a = head.fuse_final(t, t.input(w), t.input(fa), t.input(fo), t.input(fr));
    Mat expect = w(0, 0) * fa;
    for (int i = 0; i < cfg.o_max; ++i) expect += w(0, 1 + i) * fo.row(i);
    for (int i = 0; i < cfg.r_max; ++i) expect += w(0, 3 + i) * fr.row(i);
    CHECK(max_abs_diff(t.val(a), expect) < 1e-12);
  }
}

TEST_CASE("classification loss matches hand-computed smoothed cross-entropy") {
  MoTConfig cfg = toy_cfg();  // 4 classes
  MoTHead head(cfg);
  aornet::nn::ParamStore store(5);
  head.init(store);
  Rng rng(7006);
  Mat a_final = random_mat(rng, 1, cfg.d);

  // Pin the logits by zeroing the FC weights and writing them into the bias.
  store.at("mot.fc.w").w.setZero();
  auto with_logits = [&](std::initializer_list<double> vals, int label, double eps) {
    Mat b(1, 4);
    int i = 0;
    for (double v : vals) b(0, i++) = v;
    store.at("mot.fc.b").w = b;
    Tape t;
    auto [logits, loss] = head.classify_and_loss(t, store, t.input(a_final), label, eps);
    REQUIRE(max_abs_diff(t.val(logits), b) == 0.0);
    return t.val(loss)(0, 0);
  };

  SECTION("no smoothing: loss is -ln p of the true class") {
    double loss = with_logits({1.0, 3.0, 0.5, -1.0}, 1, 0.0);
    Eigen::RowVector4d z(1.0, 3.0, 0.5, -1.0);
    Eigen::RowVector4d e = (z.array() - z.maxCoeff()).exp();
    CHECK(loss == Catch::Approx(-std::log(e(1) / e.sum())).margin(1e-12));
  }

  SECTION("uniform logits give ln(num_classes)") {
    CHECK(with_logits({0, 0, 0, 0}, 2, 0.0) == Catch::Approx(std::log(4.0)).margin(1e-12));
  }

  SECTION("hand case with smoothing 0.1") {
    // q = [0.925, 0.025, 0.025, 0.025]; loss = -sum q_i log softmax([2,0,0,0])_i
    double loss = with_logits({2.0, 0.0, 0.0, 0.0}, 0, 0.1);
    double Z = 1.0 + 3.0 * std::exp(-2.0);
    double lp0 = -std::log(Z);
    double lp_rest = -2.0 - std::log(Z);
    double expect = -(0.925 * lp0 + 3 * 0.025 * lp_rest);
    CHECK(loss == Catch::Approx(expect).margin(1e-6));
  }

  SECTION("labels outside the class range are rejected") {
    Tape t;
    int a = t.input(a_final);
    CHECK_THROWS_MATCHES(head.classify_and_loss(t, store, a, 4, 0.1), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("LABEL_OUT_OF_RANGE")));
    CHECK_THROWS_MATCHES(head.classify_and_loss(t, store, a, -1, 0.1), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("LABEL_OUT_OF_RANGE")));
  }
}

TEST_CASE("multimodal fusion: one softmax across every branch's slots") {
  Rng rng(7007);
  MoTConfig cfg = toy_cfg();
  MoTHead head(cfg);
  aornet::nn::ParamStore store(6);
  head.init(store);

  auto make_branch = [&](Tape& t) {
    BranchState b;
    b.f_a = t.input(random_mat(rng, 1, cfg.d));
    b.f_o = t.input(random_mat(rng, cfg.o_max, cfg.d));
    b.f_r = t.input(random_mat(rng, cfg.r_max, cfg.d));
    b.object_mask = {true, rng.uniform() < 0.5};
    b.relation_mask = {true, rng.uniform() < 0.5, false};
    return b;
  };

  SECTION("a single branch reduces bit-exactly to the unimodal path") {
    Tape t;
    BranchState b = make_branch(t);
    int w1 = head.dynamic_weights(t, store, b.f_a, b.f_o, b.f_r, b.object_mask,
                                  b.relation_mask);
    int a1 = head.fuse_final(t, w1, b.f_a, b.f_o, b.f_r);
    auto [w2, a2] = head.multimodal_fuse(t, store, {b});
    CHECK(max_abs_diff(t.val(w1), t.val(w2)) == 0.0);
    CHECK(max_abs_diff(t.val(a1), t.val(a2)) == 0.0);
  }

  SECTION("three branches: weights span all slots and sum to one") {
    Tape t;
    std::vector<BranchState> branches = {make_branch(t), make_branch(t), make_branch(t)};
    auto [w, a] = head.multimodal_fuse(t, store, branches);
    REQUIRE(t.val(w).cols() == 18);  // 3 * (1 + 2 + 3)
    CHECK(t.val(w).sum() == Catch::Approx(1.0).margin(1e-6));
    CHECK(t.val(w).minCoeff() >= 0.0);
    CHECK(t.val(a).cols() == cfg.d);
    // Masked slots across every branch stay at exactly zero weight.
    for (int bi = 0; bi < 3; ++bi)
      CHECK(t.val(w)(0, bi * 6 + 5) == 0.0);  // relation slot 2 is always masked
  }

  SECTION("swapping branch order permutes weights but not the fused vector") {
    Tape t;
    BranchState b1 = make_branch(t), b2 = make_branch(t);
    auto [w12, a12] = head.multimodal_fuse(t, store, {b1, b2});
    auto [w21, a21] = head.multimodal_fuse(t, store, {b2, b1});
    CHECK(max_abs_diff(t.val(a12), t.val(a21)) < 1e-6);
    CHECK(max_abs_diff(t.val(w12).leftCols(6), t.val(w21).rightCols(6)) < 1e-9);
  }

  SECTION("branches must agree with the head dimension") {
    Tape t;
    BranchState bad = make_branch(t);
    bad.f_a = t.input(random_mat(rng, 1, cfg.d + 2));
    CHECK_THROWS_MATCHES(head.multimodal_fuse(t, store, {bad}), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("BRANCH_DIM_MISMATCH")));
  }
}

TEST_CASE("full pass: masked garbage cannot reach the logits, eval is deterministic") {
  Rng rng(7008);
  MoTConfig cfg = toy_cfg();
  MoTHead head(cfg);
  aornet::nn::ParamStore store(7);
  head.init(store);

  FullCase base(rng, cfg, 5, 4, 6);
  Tape t1;
  MoTOutput o1 = base.run(t1, head, store, 2);

  // Poison the masked slots (object row 1, relation row 2) with huge values.
  FullCase dirty = base;
  dirty.obj.row(1) = 1e6 * random_mat(rng, 1, cfg.d);
  dirty.rel.row(2) = -1e6 * random_mat(rng, 1, cfg.d);
  Tape t2;
  MoTOutput o2 = dirty.run(t2, head, store, 2);
  CHECK(max_abs_diff(t1.val(o1.logits), t2.val(o2.logits)) == 0.0);
  CHECK(max_abs_diff(t1.val(o1.w), t2.val(o2.w)) == 0.0);
  CHECK(t1.val(o1.loss)(0, 0) == t2.val(o2.loss)(0, 0));

  // Two identical eval passes agree bitwise (noise off, fixed order).
  Tape t3;
  MoTOutput o3 = base.run(t3, head, store, 2);
  CHECK(max_abs_diff(t1.val(o1.logits), t3.val(o3.logits)) == 0.0);
  CHECK(max_abs_diff(t1.val(o1.a_final), t3.val(o3.a_final)) == 0.0);

  // Alignment record export: masked slots report -1, weights match W.
  AlignmentRecord rec = head.extract_alignment(t1, o1, base.in.object_mask,
                                               base.in.relation_mask);
  CHECK(rec.action_choice >= 0);
  CHECK(rec.action_choice < 5);
  CHECK(rec.object_choices[1] == -1);
  CHECK(rec.relation_choices[2] == -1);
  CHECK(rec.weights.size() == 6);
  CHECK(rec.weights[0] == t1.val(o1.w)(0, 0));
  CHECK(rec.to_json().at("object_choices").size() == 2);
}

TEST_CASE("gradients flow through the retrieval path into the projections") {
  Rng rng(7009);
  MoTConfig cfg = toy_cfg();
  MoTHead head(cfg);
  aornet::nn::ParamStore store(8);
  head.init(store);
  FullCase fc(rng, cfg, 5, 4, 6);

  auto proj_grad = [&](const Mat& bank_a) {
    store.zero_grads();
    Tape t;
    fc.in.class_token = t.input(fc.cls);
    fc.in.object_tokens = t.input(fc.obj);
    fc.in.relation_tokens = t.input(fc.rel);
    MoTOutput out = head.forward(t, store, fc.in, t.input(bank_a), t.input(fc.t_o),
                                 t.input(fc.t_r), nullptr, 1);
    t.backward(out.loss);
    return Mat(store.at("mot.proj_a.l0.w").g);
  };

  Mat g1 = proj_grad(fc.t_a);
  CHECK(g1.cwiseAbs().maxCoeff() > 0.0);
  // Perturbing the prototype matrix changes what the projection sees.
  Rng rng2(7010);
  Mat g2 = proj_grad(unit_rows(rng2, 5, cfg.d));
  CHECK(max_abs_diff(g1, g2) > 1e-12);
}

TEST_CASE("soft alignment mode: end-to-end gradients match finite differences") {
  Rng rng(7011);
  MoTConfig cfg = toy_cfg();
  cfg.align.straight_through = false;  // differentiable everywhere
  MoTHead head(cfg);
  aornet::nn::ParamStore store(9);
  head.init(store);
  FullCase fc(rng, cfg, 5, 4, 6);

  auto loss_of = [&](const Mat& cls, const Mat& obj, const Mat& rel) {
    Tape t;
    MoTInputs in = fc.in;
    in.class_token = t.input(cls);
    in.object_tokens = t.input(obj);
    in.relation_tokens = t.input(rel);
    MoTOutput out = head.forward(t, store, in, t.input(fc.t_a), t.input(fc.t_o),
                                 t.input(fc.t_r), nullptr, 3);
    return t.val(out.loss)(0, 0);
  };

  Tape t;
  MoTOutput out = fc.run(t, head, store, 3, /*leaf_inputs=*/true);
  store.zero_grads();
  t.backward(out.loss);

  const double h = 1e-5;
  for (int probe = 0; probe < 5; ++probe) {
    Eigen::Index c = Eigen::Index(rng.uniform_int(std::uint64_t(cfg.d)));
    Mat up = fc.cls, dn = fc.cls;
    up(0, c) += h;
    dn(0, c) -= h;
    double fd = (loss_of(up, fc.obj, fc.rel) - loss_of(dn, fc.obj, fc.rel)) / (2 * h);
    CHECK(t.grad(fc.in.class_token)(0, c) == Catch::Approx(fd).epsilon(1e-3).margin(1e-9));
  }
  for (int probe = 0; probe < 5; ++probe) {
    Eigen::Index r = Eigen::Index(rng.uniform_int(std::uint64_t(cfg.o_max)));
    Eigen::Index c = Eigen::Index(rng.uniform_int(std::uint64_t(cfg.d)));
    if (!fc.in.object_mask[std::size_t(r)]) r = 0;
    Mat up = fc.obj, dn = fc.obj;
    up(r, c) += h;
    dn(r, c) -= h;
    double fd = (loss_of(fc.cls, up, fc.rel) - loss_of(fc.cls, dn, fc.rel)) / (2 * h);
    CHECK(t.grad(fc.in.object_tokens)(r, c) == Catch::Approx(fd).epsilon(1e-3).margin(1e-9));
  }

  // Parameter probes through projection, weight MLP, and classifier.
  for (const char* pname : {"mot.proj_r.l0.w", "mot.wmlp.l0.w", "mot.fc.w"}) {
    Mat& w = store.at(pname).w;
    double analytic = store.at(pname).g(0, 0);
    double keep = w(0, 0);
    w(0, 0) = keep + h;
    double up = loss_of(fc.cls, fc.obj, fc.rel);
    w(0, 0) = keep - h;
    double dn = loss_of(fc.cls, fc.obj, fc.rel);
    w(0, 0) = keep;
    CHECK(analytic == Catch::Approx((up - dn) / (2 * h)).epsilon(1e-3).margin(1e-9));
  }
}
