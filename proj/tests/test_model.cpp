#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "aornet/harness/dataset.hpp"
#include "aornet/model/model.hpp"
#include "aornet/synth/generate.hpp"

using aornet::Mat;
using aornet::Rng;
using aornet::ValidationError;
using aornet::ad::Tape;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;
namespace model = aornet::model;
namespace harness = aornet::harness;

namespace {

// Generated once per process; every case reads the same corpus.
const fs::path& micro_root() {
  static fs::path root = [] {
    fs::path dir = fs::temp_directory_path() / "aornet_model_micro";
    fs::remove_all(dir);
    aornet::synth::write_dataset(aornet::synth::preset_scenario("micro"), dir);
    return dir;
  }();
  return root;
}

const fs::path& toy_root() {
  static fs::path root = [] {
    fs::path dir = fs::temp_directory_path() / "aornet_model_toy";
    fs::remove_all(dir);
    aornet::synth::write_dataset(aornet::synth::preset_scenario("toy"), dir);
    return dir;
  }();
  return root;
}

const harness::Dataset& micro_ds() {
  static harness::Dataset ds = harness::Dataset::load(micro_root());
  return ds;
}

const harness::Dataset& toy_ds() {
  static harness::Dataset ds = harness::Dataset::load(toy_root());
  return ds;
}

model::ModelSample first_sample(const harness::Dataset& ds, const model::ModelConfig& mc) {
  return harness::make_sample(ds, ds.clips.front(), mc.modalities, mc.encoder.frame_count,
                              mc.encoder.input_size, "fine", /*train_mode=*/false, Rng(0));
}

aornet::bank::PrototypeBank bank_for(const harness::Dataset& ds, Eigen::Index d) {
  return model::default_bank(ds.actions, ds.objects, ds.rules, d);
}

bool any_name_starts_with(const aornet::nn::ParamStore& s, const std::string& prefix) {
  for (const auto& [name, e] : s.entries()) {
    (void)e;
    if (name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("model presets pin their geometry") {
  model::ModelConfig toy = model::preset_model("toy");
  CHECK(toy.encoder.frame_count / toy.encoder.temporal_patch == 2);
  CHECK(toy.encoder.input_size / toy.encoder.spatial_patch == 4);
  CHECK(toy.encoder.d == 64);
  CHECK(toy.num_classes == 36);
  toy.validate();

  model::ModelConfig ref = model::preset_model("reference");
  CHECK(ref.encoder.frame_count / ref.encoder.temporal_patch == 4);
  CHECK(ref.encoder.input_size / ref.encoder.spatial_patch == 14);
  CHECK(ref.encoder.d == 768);
  CHECK(ref.coa.o_max == 6);
  CHECK(ref.coa.resolved_r_max() == 10);
  ref.validate();

  model::ModelConfig gp = model::preset_model("grad-probe");
  CHECK(gp.encoder.frame_count / gp.encoder.temporal_patch == 2);
  CHECK(gp.encoder.input_size / gp.encoder.spatial_patch == 2);
  CHECK(gp.encoder.d == 16);
  CHECK(gp.num_classes == 4);
  gp.validate();

  CHECK_THROWS_AS(model::preset_model("enormous"), ValidationError);
}

TEST_CASE("model config json round-trips exactly") {
  for (const std::string name : {"toy", "grad-probe", "reference"}) {
    model::ModelConfig c = model::preset_model(name);
    if (name == "toy") {
      c.variant = "coa";
      c.modalities = {"RGB", "IR"};
    }
    nlohmann::ordered_json j = c.to_json();
    model::ModelConfig back = model::ModelConfig::from_json(j);
    CHECK(back.to_json() == j);
  }

  // A preset plus overrides: overrides win, the rest stays preset.
  nlohmann::ordered_json doc;
  doc["preset"] = "toy";
  doc["variant"] = "base";
  doc["encoder"] = {{"blocks", 1}};
  model::ModelConfig c = model::ModelConfig::from_json(doc);
  CHECK(c.variant == "base");
  CHECK(c.encoder.blocks == 1);
  CHECK(c.encoder.d == 64);
  CHECK(c.encoder.input_size == 48);
}

TEST_CASE("model variants own disjoint parameter families") {
  model::ModelConfig cfg = model::preset_model("grad-probe");

  cfg.variant = "base";
  {
    aornet::nn::ParamStore s(0);
    model::AORNet(cfg).init(s);
    CHECK(any_name_starts_with(s, "enc.RGB."));
    CHECK(any_name_starts_with(s, "head.fc"));
    CHECK_FALSE(any_name_starts_with(s, "coa."));
    CHECK_FALSE(any_name_starts_with(s, "mot."));
  }

  cfg.variant = "coa";
  {
    aornet::nn::ParamStore s(0);
    model::AORNet(cfg).init(s);
    CHECK(any_name_starts_with(s, "coa.RGB."));
    CHECK(any_name_starts_with(s, "head.fc"));
    CHECK_FALSE(any_name_starts_with(s, "mot."));
  }

  cfg.variant = "full";
  cfg.modalities = {"RGB", "IR"};
  {
    aornet::nn::ParamStore s(0);
    model::AORNet(cfg).init(s);
    CHECK(any_name_starts_with(s, "enc.RGB."));
    CHECK(any_name_starts_with(s, "enc.IR."));
    CHECK(any_name_starts_with(s, "coa.RGB."));
    CHECK(any_name_starts_with(s, "coa.IR."));
    CHECK(any_name_starts_with(s, "mot."));
    CHECK_FALSE(any_name_starts_with(s, "head.fc"));
    // The fusion head is shared: exactly one wmlp weight, not one per stream.
    CHECK(s.has("mot.wmlp.l0.w"));
    CHECK_FALSE(s.has("mot.RGB.wmlp.l0.w"));
  }
}

TEST_CASE("model init is deterministic per seed") {
  model::ModelConfig cfg = model::preset_model("grad-probe");
  model::AORNet net(cfg);
  aornet::nn::ParamStore a(7), b(7), c(8);
  net.init(a);
  net.init(b);
  net.init(c);
  bool same_seed_equal = true, other_seed_differs = false;
  for (const auto& [name, e] : a.entries()) {
    if (std::memcmp(e.w.data(), b.at(name).w.data(),
                    std::size_t(e.w.size()) * sizeof(double)) != 0)
      same_seed_equal = false;
    if (std::memcmp(e.w.data(), c.at(name).w.data(),
                    std::size_t(e.w.size()) * sizeof(double)) != 0)
      other_seed_differs = true;
  }
  CHECK(same_seed_equal);
  CHECK(other_seed_differs);
}

TEST_CASE("forward produces finite logits at every depth") {
  const harness::Dataset& ds = micro_ds();
  for (const std::string variant : {"base", "coa", "full"}) {
    model::ModelConfig cfg = model::preset_model("grad-probe");
    cfg.variant = variant;
    model::AORNet net(cfg);
    aornet::nn::ParamStore s(1);
    net.init(s);
    model::ModelSample sample = first_sample(ds, cfg);

    aornet::bank::PrototypeBank pb;
    Tape t;
    model::BankNodes bn;
    const model::BankNodes* bp = nullptr;
    if (variant == "full") {
      pb = bank_for(ds, cfg.encoder.d);
      bn = model::put_bank(t, pb);
      bp = &bn;
    }
    model::ForwardOutput out = net.forward(t, s, sample, bp, nullptr, /*label=*/2);
    const Mat& logits = t.val(out.logits);
    REQUIRE(logits.rows() == 1);
    REQUIRE(logits.cols() == cfg.num_classes);
    CHECK(logits.allFinite());
    REQUIRE(out.loss >= 0);
    CHECK(std::isfinite(t.val(out.loss)(0, 0)));
    CHECK(t.val(out.loss)(0, 0) > 0.0);

    Tape t2;
    if (variant == "full") bn = model::put_bank(t2, pb);
    CHECK_THROWS_WITH(net.forward(t2, s, sample, bp, nullptr, cfg.num_classes),
                      ContainsSubstring("LABEL_OUT_OF_RANGE"));
  }

  // The full variant refuses to run without prototypes.
  model::ModelConfig cfg = model::preset_model("grad-probe");
  model::AORNet net(cfg);
  aornet::nn::ParamStore s(1);
  net.init(s);
  model::ModelSample sample = first_sample(ds, cfg);
  Tape t;
  CHECK_THROWS_WITH(net.forward(t, s, sample, nullptr), ContainsSubstring("prototype bank"));
}

TEST_CASE("evaluation passes are bitwise repeatable") {
  const harness::Dataset& ds = micro_ds();
  model::ModelConfig cfg = model::preset_model("grad-probe");
  model::AORNet net(cfg);
  aornet::nn::ParamStore s(2);
  net.init(s);
  aornet::bank::PrototypeBank pb = bank_for(ds, cfg.encoder.d);

  auto run = [&]() {
    model::ModelSample sample = first_sample(ds, cfg);
    Tape t;
    model::BankNodes bn = model::put_bank(t, pb);
    model::ForwardOutput out = net.forward(t, s, sample, &bn);
    return Mat(t.val(out.logits));
  };
  Mat a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), std::size_t(a.size()) * sizeof(double)) == 0);
}

TEST_CASE("full model gradients match finite differences in soft mode") {
  const harness::Dataset& ds = micro_ds();
  model::ModelConfig cfg = model::preset_model("grad-probe");
  cfg.align.straight_through = false;  // the hard path's estimator is checked in the MoT tests
  cfg.align.gumbel_noise = false;
  model::AORNet net(cfg);
  aornet::nn::ParamStore s(3);
  net.init(s);
  aornet::bank::PrototypeBank pb = bank_for(ds, cfg.encoder.d);
  model::ModelSample sample = first_sample(ds, cfg);
  const int label = 1;

  auto loss_value = [&]() {
    Tape t;
    model::BankNodes bn = model::put_bank(t, pb);
    model::ForwardOutput out = net.forward(t, s, sample, &bn, nullptr, label);
    return t.val(out.loss)(0, 0);
  };

  // One analytic pass...
  s.zero_grads();
  {
    Tape t;
    model::BankNodes bn = model::put_bank(t, pb);
    model::ForwardOutput out = net.forward(t, s, sample, &bn, nullptr, label);
    t.backward(out.loss);
  }

  // ...probed at 10 uniformly drawn parameter coordinates.
  std::vector<std::pair<std::string, Eigen::Index>> coords;
  {
    std::vector<std::pair<std::string, Eigen::Index>> spans;
    Eigen::Index total = 0;
    for (const auto& [name, e] : s.entries()) {
      spans.emplace_back(name, e.w.size());
      total += e.w.size();
    }
    Rng pick(99);
    for (int k = 0; k < 10; ++k) {
      Eigen::Index idx = Eigen::Index(pick.uniform_int(int(total)));
      for (const auto& [name, span] : spans) {
        if (idx < span) {
          coords.emplace_back(name, idx);
          break;
        }
        idx -= span;
      }
    }
  }
  REQUIRE(coords.size() == 10);

  const double h = 1e-5;
  for (const auto& [name, flat] : coords) {
    auto& e = s.at(name);
    double* w = e.w.data() + flat;
    const double keep = *w;
    *w = keep + h;
    const double up = loss_value();
    *w = keep - h;
    const double dn = loss_value();
    *w = keep;
    const double fd = (up - dn) / (2.0 * h);
    const double ad = e.g.data()[flat];
    const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-6});
    INFO(name << "[" << flat << "] fd=" << fd << " ad=" << ad);
    CHECK(rel <= 1e-3);
  }
}

TEST_CASE("checkpoints round-trip and reject mismatched architectures") {
  const fs::path path = fs::temp_directory_path() / "aornet_model_ckpt.bin";
  model::ModelConfig cfg = model::preset_model("grad-probe");
  model::AORNet net(cfg);
  aornet::nn::ParamStore trained(11);
  net.init(trained);
  net.save_checkpoint(path.string(), trained);

  aornet::nn::ParamStore fresh(5);
  net.init(fresh);
  net.load_checkpoint(path.string(), fresh);
  for (const auto& [name, e] : trained.entries()) {
    CHECK(std::memcmp(e.w.data(), fresh.at(name).w.data(),
                      std::size_t(e.w.size()) * sizeof(double)) == 0);
  }

  CHECK(aornet::ckpt::peek_arch(path.string()) == net.arch());

  model::ModelConfig other = cfg;
  other.encoder.d = 32;
  model::AORNet net2(other);
  aornet::nn::ParamStore s2(0);
  net2.init(s2);
  CHECK_THROWS_WITH(net2.load_checkpoint(path.string(), s2),
                    ContainsSubstring("CONFIG_MISMATCH"));
  fs::remove(path);
}

TEST_CASE("multiple modalities run disjoint encoders into one head") {
  const harness::Dataset& ds = toy_ds();
  model::ModelConfig cfg = model::preset_model("grad-probe");
  cfg.modalities = {"RGB", "IR"};
  model::AORNet net(cfg);
  aornet::nn::ParamStore s(4);
  net.init(s);
  aornet::bank::PrototypeBank pb = bank_for(ds, cfg.encoder.d);

  model::ModelSample sample = first_sample(ds, cfg);
  CHECK(sample.clips.at("RGB").channels == 3);
  CHECK(sample.clips.at("IR").channels == 1);

  Tape t;
  model::BankNodes bn = model::put_bank(t, pb);
  std::map<std::string, std::vector<Mat>> attn;
  model::ForwardOutput out = net.forward(t, s, sample, &bn, nullptr, -1, 0.1, &attn);
  CHECK(t.val(out.logits).allFinite());

  const int n = 1 + 2 * 2 * 2;  // class token + (2,2,2) grid
  for (const std::string m : {"RGB", "IR"}) {
    REQUIRE(attn.count(m));
    REQUIRE(attn.at(m).size() == std::size_t(cfg.encoder.heads));
    for (const Mat& a : attn.at(m)) {
      REQUIRE(a.rows() == n);
      REQUIRE(a.cols() == n);
      for (Eigen::Index r = 0; r < a.rows(); ++r)
        CHECK(a.row(r).sum() == Catch::Approx(1.0).margin(1e-9));
    }
  }

  // Mixture weights cover both modality branches and stay a distribution.
  const Mat& w = t.val(out.w);
  REQUIRE(w.cols() == 2 * (1 + cfg.coa.o_max + cfg.coa.resolved_r_max()));
  CHECK(w.sum() == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("eval sampling is the identity on native-length clips") {
  const harness::Dataset& ds = micro_ds();
  const harness::LoadedClip& clip = ds.clips.front();
  const int native = clip.rec.num_frames();

  model::ModelSample sample = harness::make_sample(ds, clip, {"RGB"}, native, 48, "fine",
                                                   /*train_mode=*/false, Rng(0));
  const auto& sc = sample.clips.at("RGB");
  REQUIRE(sc.frame_count() == native);
  CHECK_FALSE(sc.flipped);
  for (int f = 0; f < native; ++f) CHECK(sc.frame_index_map[std::size_t(f)] == f);

  // Pixels land untouched: same values as decoding the source frame directly.
  const auto& rel = clip.rec.modality_paths.at("RGB").front();
  std::vector<Mat> raw = aornet::backbone::image_to_planes(aornet::img::read_png(ds.root / rel));
  REQUIRE(sc.frames.front().size() == raw.size());
  for (std::size_t c = 0; c < raw.size(); ++c)
    CHECK((sc.frames.front()[c] - raw[c]).cwiseAbs().maxCoeff() == 0.0);

  // Tracks keep their original boxes frame-for-frame.
  REQUIRE(sample.tracks.at("RGB").tracks.size() == clip.tracks.tracks.size());
  const auto& t0 = clip.tracks.tracks.front();
  const auto& r0 = sample.tracks.at("RGB").tracks.front();
  REQUIRE(r0.boxes.size() == t0.boxes.size());
  for (std::size_t f = 0; f < t0.boxes.size(); ++f) {
    REQUIRE(r0.boxes[f].has_value() == t0.boxes[f].has_value());
    if (t0.boxes[f].has_value()) CHECK(*r0.boxes[f] == *t0.boxes[f]);
  }

  // Train-mode draws are a pure function of the stream handed in.
  model::ModelSample ta = harness::make_sample(ds, clip, {"RGB"}, 4, 16, "fine", true, Rng(5));
  model::ModelSample tb = harness::make_sample(ds, clip, {"RGB"}, 4, 16, "fine", true, Rng(5));
  CHECK(ta.clips.at("RGB").frame_index_map == tb.clips.at("RGB").frame_index_map);
  CHECK(ta.clips.at("RGB").flipped == tb.clips.at("RGB").flipped);
  const Mat& pa = ta.clips.at("RGB").frames.front().front();
  const Mat& pb = tb.clips.at("RGB").frames.front().front();
  CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
}
