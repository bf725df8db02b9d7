#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "aornet/bank/bank.hpp"

using aornet::Mat;
using aornet::ValidationError;
using namespace aornet::bank;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bank_test_" + std::to_string(std::uintptr_t(this)) + "_" +
            std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// Wraps a generator so the test can count how often it was actually invoked.
DescriptionGenerator counting(const DescriptionGenerator& inner, int* calls) {
  DescriptionGenerator g;
  g.id = inner.id;
  g.fn = [inner, calls](const Prompt& p) {
    ++*calls;
    return inner.fn(p);
  };
  return g;
}

}  // namespace

TEST_CASE("template descriptions pass validation for every shipped action") {
  auto gen = template_generator();
  auto actions = aornet::data::default_actions();
  for (const auto& label : actions.fine_labels) {
    DescriptionSet ds = generate_action_descriptions(label, gen, action_validator(label), 0, 3);
    REQUIRE(ds.texts.size() == 3);
    CHECK(ds.attempts == 1);
    CHECK(ds.generator_id == "template/v1");
    std::set<std::string> distinct(ds.texts.begin(), ds.texts.end());
    CHECK(distinct.size() == 3);
    for (const auto& t : ds.texts) {
      CHECK(contains(t, label));
      CHECK(contains(t, "cabin"));
    }
  }
}

TEST_CASE("validator rules trip one by one with actionable hints") {
  Validator v;
  v.required_terms = {"drinking", "cabin"};
  auto code = [&](const std::vector<std::string>& texts) {
    auto f = v.first_failure(texts);
    return f ? f->code : std::string("OK");
  };
  CHECK(code({}) == "EMPTY_SET");
  CHECK(code({""}) == "TOO_SHORT");
  CHECK(code({"tiny text"}) == "TOO_SHORT");
  CHECK(code({std::string(300, 'x')}) == "TOO_LONG");
  CHECK(code({"the driver is drinking in the cabin", "the driver is drinking in the cabin"}) ==
        "DUPLICATE_TEXT");
  CHECK(code({"the driver is drinking water quietly"}) == "MISSING_TERM");  // no "cabin"
  v.banned_terms = {"latte"};
  CHECK(code({"the driver is drinking a latte in the cabin"}) == "BANNED_TERM");
  v.banned_terms.clear();
  CHECK(code({"the driver is drinking in the cabin"}) == "OK");

  // Near-identical wording across the set trips the diversity floor.
  Validator div;
  div.min_distinct_token_ratio = 0.5;
  CHECK(div.first_failure({"one two three four one two three four",
                           "one two three four one two four three"})
            ->code == "LOW_DIVERSITY");

  // Relation rule: at least two of the focus terms per text.
  Validator rel = relation_validator({"person", "bottle"});
  CHECK(rel.first_failure({"the person reaches across the seat"})->code == "MISSING_TERM");
  CHECK_FALSE(rel.first_failure({"the person lifts the bottle to drink"}));
}

TEST_CASE("the refine loop feeds failure hints back into the prompt") {
  int calls = 0;
  auto gen = counting(hint_following_generator(), &calls);
  DescriptionSet ds =
      generate_action_descriptions("drinking", gen, action_validator("drinking"), 3, 3);
  CHECK(ds.attempts == 2);  // attempt 1 fails, refined attempt 2 succeeds
  CHECK(calls == 2);
  REQUIRE(ds.refine_hints.size() == 1);
  CHECK(contains(ds.refine_hints[0], "characters"));
  CHECK(ds.texts.size() == 3);

  // A generator that never recovers exhausts the retry budget.
  DescriptionGenerator dead{"dead/v1", [](const Prompt&) {
    return std::vector<std::string>{""};
  }};
  CHECK_THROWS_MATCHES(
      generate_action_descriptions("drinking", dead, action_validator("drinking"), 2, 3),
      ValidationError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("VALIDATION_EXHAUSTED")));
}

TEST_CASE("retry loop success rate matches the independent probability model") {
  // Each attempt fails with probability 1/2; with a budget of 1 + 5 retries
  // the chance that all six attempts fail is 0.5^6, so success probability
  // is 1 - 0.5^6 = 0.984375. Measure it over 10000 independent runs.
  auto gen = flaky_generator(0.5, 20260814);
  int successes = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    try {
      generate_action_descriptions("drinking", gen, action_validator("drinking"), 5, 3);
      ++successes;
    } catch (const ValidationError&) {
    }
  }
  const double expected = 1.0 - std::pow(0.5, 6);
  CHECK(double(successes) / trials == Catch::Approx(expected).margin(0.02));
}

TEST_CASE("object lookup follows the rule table") {
  auto objects = aornet::data::default_objects();
  auto rules = aornet::data::default_rules();
  CHECK(get_objects("drinking", objects, rules) ==
        std::vector<std::string>({"person", "bottle"}));
  CHECK(get_objects("looking around", objects, rules).empty());
  CHECK_THROWS_MATCHES(get_objects("juggling", objects, rules), ValidationError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("UNKNOWN_ACTION")));
}

TEST_CASE("relation descriptions mention the objects or are skipped entirely") {
  auto gen = template_generator();
  std::vector<std::string> objs = {"person", "bottle"};
  DescriptionSet ds =
      generate_relation_descriptions("drinking", objs, gen, relation_validator(objs), 0, 2);
  REQUIRE(ds.texts.size() == 2);
  for (const auto& t : ds.texts) {
    CHECK(contains(t, "person"));
    CHECK(contains(t, "bottle"));
  }

  int calls = 0;
  auto counted = counting(gen, &calls);
  DescriptionSet empty = generate_relation_descriptions(
      "looking around", {}, counted, relation_validator({}), 0, 2);
  CHECK(empty.texts.empty());
  CHECK(empty.attempts == 0);
  CHECK(calls == 0);  // skipped sets never invoke the generator

  auto hinted = counting(hint_following_generator(), &calls);
  calls = 0;
  DescriptionSet retried =
      generate_relation_descriptions("drinking", objs, hinted, relation_validator(objs), 3, 2);
  CHECK(retried.attempts == 2);
  CHECK(calls == 2);
}

TEST_CASE("hashed n-gram encoder is deterministic, unit-norm, and discriminative") {
  HashNgramEncoder enc(64);
  CHECK(enc.dim() == 64);
  auto a1 = enc.encode("holding a bottle");
  auto a2 = enc.encode("holding a bottle");
  CHECK((a1 - a2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a1.norm() == Catch::Approx(1.0).margin(1e-12));

  auto b = enc.encode("holding a phone");
  CHECK(b.norm() == Catch::Approx(1.0).margin(1e-12));
  const double cosine = a1.dot(b);
  INFO("cosine " << cosine);
  CHECK(cosine < 0.99);

  // Case and punctuation do not matter; genuinely different text does.
  CHECK((enc.encode("Holding a Bottle!") - a1).cwiseAbs().maxCoeff() == 0.0);

  Mat rows = encode_texts({"one text here", "another text there"}, enc);
  CHECK(rows.rows() == 2);
  CHECK(rows.cols() == 64);
  CHECK_THROWS_MATCHES(encode_texts({"one text here"}, enc, 32), ValidationError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("ENCODER_DIM_MISMATCH")));
}

TEST_CASE("full bank build matches the count oracle and is a pure function") {
  auto actions = aornet::data::default_actions();
  auto objects = aornet::data::default_objects();
  auto rules = aornet::data::default_rules();
  HashNgramEncoder enc(64);

  BankBuildOptions opt;  // K=3, M=2
  PrototypeBank bank = build_bank(actions, objects, rules, template_generator(), enc, opt);

  // Independent count: K rows per action; M relation rows per action whose
  // rule lists at least two object classes.
  int expected_r = 0;
  for (const auto& label : actions.fine_labels)
    if (rules.at(label).objects.size() >= 2) expected_r += opt.m_relation;
  CHECK(bank.n_a() == actions.num_fine() * opt.k_action);
  CHECK(bank.n_a() == 108);
  CHECK(bank.n_o() == 15);
  CHECK(bank.n_r() == expected_r);
  CHECK(bank.n_r() == 60);

  // Grouped by action: each action owns a contiguous block of K rows.
  for (int a = 0; a < actions.num_fine(); ++a) {
    auto [lo, hi] = bank.action_row_range(a);
    CHECK(lo == a * opt.k_action);
    CHECK(hi == (a + 1) * opt.k_action);
  }
  // Every relation prototype points at one action and >= 2 object classes.
  for (const auto& r : bank.relation_protos) {
    CHECK(r.action >= 0);
    CHECK(r.action < actions.num_fine());
    CHECK(r.objects.size() >= 2);
  }

  PrototypeBank again = build_bank(actions, objects, rules, template_generator(), enc, opt);
  CHECK(banks_equal(bank, again));

  BankBuildOptions single;
  single.k_action = 1;
  single.m_relation = 2;
  PrototypeBank small = build_bank(actions, objects, rules, template_generator(), enc, single);
  CHECK(small.n_a() == 36);
}

TEST_CASE("bank export and import round-trip bit-exactly") {
  TempDir dir;
  auto actions = aornet::data::default_actions();
  auto objects = aornet::data::default_objects();
  auto rules = aornet::data::default_rules();
  HashNgramEncoder enc(32);
  PrototypeBank bank = build_bank(actions, objects, rules, template_generator(), enc, {});

  const fs::path path = dir.path / "bank.json";
  save_bank(bank, path);
  REQUIRE(fs::exists(path));
  REQUIRE(fs::exists(dir.path / "bank.vec"));
  // Atomic write protocol leaves no temp files behind.
  for (const auto& e : fs::directory_iterator(dir.path))
    CHECK_FALSE(contains(e.path().filename().string(), ".tmp"));

  PrototypeBank loaded = load_bank(path);
  CHECK(banks_equal(bank, loaded));

  // The JSON side is self-describing: texts, provenance, encoder, shapes.
  auto j = aornet::data::read_json_file(path);
  CHECK(j.at("encoder_id").get<std::string>() == enc.id());
  CHECK(j.at("dims").at("n_a").get<int>() == bank.n_a());
  CHECK(j.at("action_rows").size() == std::size_t(bank.n_a()));
  CHECK(j.at("provenance").at("generator").get<std::string>() == "template/v1");
}

TEST_CASE("tampered or truncated sidecars are rejected") {
  TempDir dir;
  auto actions = aornet::data::default_actions();
  auto objects = aornet::data::default_objects();
  auto rules = aornet::data::default_rules();
  HashNgramEncoder enc(32);
  PrototypeBank bank = build_bank(actions, objects, rules, template_generator(), enc, {});
  const fs::path path = dir.path / "bank.json";
  save_bank(bank, path);

  SECTION("bit flip in the vector blob") {
    const fs::path vec = dir.path / "bank.vec";
    std::fstream f(vec, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(128);
    char c;
    f.seekg(128);
    f.get(c);
    f.seekp(128);
    f.put(char(c ^ 0x40));
    f.close();
    CHECK_THROWS_MATCHES(load_bank(path), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("BANK_HASH_MISMATCH")));
  }

  SECTION("truncated blob") {
    const fs::path vec = dir.path / "bank.vec";
    fs::resize_file(vec, fs::file_size(vec) - 16);
    CHECK_THROWS_MATCHES(load_bank(path), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("BANK_HASH_MISMATCH")));
  }
}

TEST_CASE("external generator replays a provided description file") {
  json doc;
  doc["action"]["drinking"] = {"the driver is drinking slowly inside the car cabin",
                               "a cabin shot of the driver drinking from a flask",
                               "the driver keeps drinking while the cabin stays quiet"};
  auto gen = external_generator(doc);
  DescriptionSet ds =
      generate_action_descriptions("drinking", gen, action_validator("drinking"), 0, 3);
  CHECK(ds.texts.size() == 3);
  CHECK(contains(ds.generator_id, "external/v1"));

  // Labels absent from the file fail validation rather than inventing text.
  CHECK_THROWS_MATCHES(
      generate_action_descriptions("smoking", gen, action_validator("smoking"), 1, 3),
      ValidationError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("VALIDATION_EXHAUSTED")));
}
