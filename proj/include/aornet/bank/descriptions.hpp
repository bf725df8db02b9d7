#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aornet/core/common.hpp"
#include "aornet/core/rng.hpp"
#include "aornet/data/taxonomy.hpp"

// Text-description side of the prototype pipeline: a pluggable generator
// produces candidate description strings, a rule-based validator accepts or
// rejects them, and rejected batches trigger a prompt refinement (the failed
// rule's remediation hint is appended) before the next attempt. The default
// generator is a deterministic template engine, so the whole pipeline is a
// pure function of its inputs; mock generators exist to exercise the retry
// loop, and an external generator replays pre-written descriptions from JSON.
namespace aornet::bank {

using json = nlohmann::ordered_json;

struct Prompt {
  std::string task;                      // "action" or "relation"
  std::string label;                     // action label being described
  std::vector<std::string> focus_terms;  // object names, for relation prompts
  int want = 3;                          // how many descriptions to produce
  int version = 1;
  std::vector<std::string> hints;        // appended by refine_prompt on failure

  std::string render() const {
    std::ostringstream os;
    if (task == "relation") {
      os << "Describe, in " << want << " short sentences, how the ";
      for (std::size_t i = 0; i < focus_terms.size(); ++i)
        os << (i ? (i + 1 == focus_terms.size() ? " and " : ", ") : "") << focus_terms[i];
      os << " interact while the driver is " << label << ".";
    } else {
      os << "Write " << want << " short descriptions of a driver " << label
         << " inside a car cabin.";
    }
    for (const auto& h : hints) os << " Note: " << h << ".";
    return os.str();
  }
};

struct DescriptionGenerator {
  std::string id;
  std::function<std::vector<std::string>(const Prompt&)> fn;
};

struct DescriptionSet {
  std::string label;
  std::vector<std::string> texts;
  std::string generator_id;
  int prompt_version = 1;
  int attempts = 0;  // generator calls consumed; 0 only for skipped (empty) sets
  std::vector<std::string> refine_hints;
};

struct RuleFailure {
  std::string code;
  std::string hint;
};

// Machine-checkable stand-in for expert review. Every rule is a pure
// predicate over the batch of texts; the first violated rule is reported
// together with a remediation hint suitable for appending to the prompt.
struct Validator {
  std::size_t min_chars = 12;
  std::size_t max_chars = 240;
  std::vector<std::string> required_terms;  // case-insensitive substrings
  // 0 = every text must contain every required term; n>0 = every text must
  // contain at least n distinct required terms (relation texts use 2).
  std::size_t min_term_mentions = 0;
  std::vector<std::string> banned_terms;
  double min_distinct_token_ratio = 0.3;

  std::optional<RuleFailure> first_failure(const std::vector<std::string>& texts) const {
    if (texts.empty())
      return RuleFailure{"EMPTY_SET", "produce at least one description"};
    std::set<std::string> seen;
    std::size_t total_tokens = 0;
    std::set<std::string> distinct_tokens;
    for (const auto& raw : texts) {
      const std::string text = lowercase(raw);
      if (text.size() < min_chars)
        return RuleFailure{"TOO_SHORT",
                           "write at least " + std::to_string(min_chars) + " characters"};
      if (text.size() > max_chars)
        return RuleFailure{"TOO_LONG",
                           "stay under " + std::to_string(max_chars) + " characters"};
      if (!seen.insert(text).second)
        return RuleFailure{"DUPLICATE_TEXT", "make every description distinct"};
      for (const auto& banned : banned_terms)
        if (text.find(lowercase(banned)) != std::string::npos)
          return RuleFailure{"BANNED_TERM", "avoid the term '" + banned + "'"};
      std::size_t mentions = 0;
      for (const auto& term : required_terms)
        if (text.find(lowercase(term)) != std::string::npos) ++mentions;
      if (min_term_mentions == 0 && mentions < required_terms.size())
        return RuleFailure{"MISSING_TERM", "mention every one of: " + join(required_terms)};
      if (min_term_mentions > 0 && mentions < min_term_mentions)
        return RuleFailure{"MISSING_TERM", "mention at least " +
                                               std::to_string(min_term_mentions) + " of: " +
                                               join(required_terms)};
      std::istringstream words(text);
      std::string w;
      while (words >> w) {
        ++total_tokens;
        distinct_tokens.insert(w);
      }
    }
    if (total_tokens == 0 ||
        double(distinct_tokens.size()) / double(total_tokens) < min_distinct_token_ratio)
      return RuleFailure{"LOW_DIVERSITY", "vary the wording between descriptions"};
    return std::nullopt;
  }

  bool valid(const std::vector<std::string>& texts) const { return !first_failure(texts); }

  json to_json() const {
    return json{{"min_chars", min_chars},
                {"max_chars", max_chars},
                {"required_terms", required_terms},
                {"min_term_mentions", min_term_mentions},
                {"banned_terms", banned_terms},
                {"min_distinct_token_ratio", min_distinct_token_ratio}};
  }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
    return out;
  }
};

inline Prompt refine_prompt(Prompt p, const RuleFailure& failure) {
  p.hints.push_back(failure.hint);
  return p;
}

// ---- built-in generators ----------------------------------------------------

// Deterministic template engine: same prompt in, same texts out. Every frame
// embeds the action label and the word "cabin" (for action prompts) or at
// least two of the focus terms (for relation prompts), so the default
// validator passes on the first attempt.
inline DescriptionGenerator template_generator() {
  DescriptionGenerator g;
  g.id = "template/v1";
  g.fn = [](const Prompt& p) {
    std::vector<std::string> out;
    if (p.task == "relation") {
      require(p.focus_terms.size() >= 2, "relation templates need at least two object names");
      const std::string& a = p.focus_terms[0];
      const std::string& b = p.focus_terms[1];
      const std::string extra =
          p.focus_terms.size() > 2 ? " near the " + p.focus_terms[2] : "";
      std::vector<std::string> frames = {
          "while " + p.label + ", the " + a + " keeps the " + b + " close at hand" + extra,
          "the " + a + " angles the " + b + " toward " + p.label + extra,
          "between glances at the road, the " + a + " steadies the " + b + extra,
      };
      require(p.want >= 1 && p.want <= int(frames.size()),
              "template generator ships " + std::to_string(frames.size()) +
                  " relation frames, asked for " + std::to_string(p.want));
      out.assign(frames.begin(), frames.begin() + p.want);
    } else {
      std::vector<std::string> frames = {
          "a dashboard view of the driver " + p.label + " inside the car cabin",
          "the driver is " + p.label + " while seated in the cabin, hands in plain sight",
          "seen from the front row of the cabin, the driver keeps " + p.label +
              " without looking away for long",
          "a grainy interior shot of the cabin catches the driver " + p.label,
          "midway through " + p.label + ", the driver shifts in the cabin seat",
          "cabin camera frame of the driver " + p.label + " at the wheel",
      };
      require(p.want >= 1 && p.want <= int(frames.size()),
              "template generator ships " + std::to_string(frames.size()) +
                  " action frames, asked for " + std::to_string(p.want));
      out.assign(frames.begin(), frames.begin() + p.want);
    }
    return out;
  };
  return g;
}

// Coin-flip mock: with probability fail_rate the batch is a single empty
// string (trips the length rule), otherwise it delegates to the templates.
// Used to measure the retry loop's success probability.
inline DescriptionGenerator flaky_generator(double fail_rate, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  auto tpl = template_generator();
  DescriptionGenerator g;
  std::ostringstream id;
  id << "mock/v1:fail=" << fail_rate << ":seed=" << seed;
  g.id = id.str();
  g.fn = [rng, tpl, fail_rate](const Prompt& p) {
    if (rng->uniform() < fail_rate) return std::vector<std::string>{""};
    return tpl.fn(p);
  };
  return g;
}

// Fails until the prompt carries a remediation hint — i.e. it only succeeds
// once the refine step has actually fed the failure back into the prompt.
inline DescriptionGenerator hint_following_generator() {
  auto tpl = template_generator();
  DescriptionGenerator g;
  g.id = "mock-hints/v1";
  g.fn = [tpl](const Prompt& p) {
    if (p.hints.empty()) return std::vector<std::string>{""};
    return tpl.fn(p);
  };
  return g;
}

// Replays pre-written descriptions keyed by task and label, for teams that
// bring their own (e.g. LLM-produced) text. Missing entries yield an empty
// batch, which the validator rejects.
inline DescriptionGenerator external_generator(const json& doc) {
  DescriptionGenerator g;
  const std::string dump = doc.dump();
  std::ostringstream id;
  id << "external/v1:fnv=" << std::hex << fnv1a64(dump.data(), dump.size());
  g.id = id.str();
  g.fn = [doc](const Prompt& p) {
    std::vector<std::string> out;
    if (doc.contains(p.task) && doc.at(p.task).contains(p.label))
      out = doc.at(p.task).at(p.label).get<std::vector<std::string>>();
    return out;
  };
  return g;
}

// ---- generation ops ----------------------------------------------------------

inline DescriptionSet generate_validated(const std::string& label,
                                         const DescriptionGenerator& gen, Prompt prompt,
                                         const Validator& v, int max_retries) {
  require(max_retries >= 0, "max_retries must be >= 0");
  require(bool(gen.fn), "generator is not callable");
  DescriptionSet out;
  out.label = label;
  out.generator_id = gen.id;
  out.prompt_version = prompt.version;
  std::optional<RuleFailure> last;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    std::vector<std::string> texts = gen.fn(prompt);
    out.attempts = attempt + 1;
    last = v.first_failure(texts);
    if (!last) {
      out.texts = std::move(texts);
      return out;
    }
    out.refine_hints.push_back(last->hint);
    prompt = refine_prompt(std::move(prompt), *last);
  }
  throw ValidationError("VALIDATION_EXHAUSTED: '" + label + "' still invalid after " +
                        std::to_string(max_retries + 1) + " attempts; last failure " +
                        last->code);
}

inline Validator action_validator(const std::string& label) {
  Validator v;
  v.required_terms = {lowercase(label), "cabin"};
  return v;
}

inline Prompt action_prompt(const std::string& label, int k) {
  Prompt p;
  p.task = "action";
  p.label = label;
  p.want = k;
  return p;
}

inline DescriptionSet generate_action_descriptions(const std::string& label,
                                                   const DescriptionGenerator& gen,
                                                   const Validator& v, int max_retries,
                                                   int k = 3) {
  return generate_validated(label, gen, action_prompt(label, k), v, max_retries);
}

inline std::vector<std::string> get_objects(const std::string& action_label,
                                            const data::ObjectTaxonomy& objects,
                                            const data::RuleTable& rules) {
  const auto& names = rules.at(action_label).objects;  // throws UNKNOWN_ACTION
  for (const auto& n : names) (void)objects.object_index(n);
  return names;
}

inline Validator relation_validator(const std::vector<std::string>& object_names) {
  Validator v;
  v.required_terms = object_names;
  v.min_term_mentions = 2;
  return v;
}

inline Prompt relation_prompt(const std::string& action_label,
                              const std::vector<std::string>& object_names, int m) {
  Prompt p;
  p.task = "relation";
  p.label = action_label;
  p.focus_terms = object_names;
  p.want = m;
  return p;
}

// Relation texts must name at least two of the involved object classes, so
// actions with fewer than two associated objects contribute nothing — the
// generator is never called for them.
inline DescriptionSet generate_relation_descriptions(const std::string& action_label,
                                                     const std::vector<std::string>& objects,
                                                     const DescriptionGenerator& gen,
                                                     const Validator& v, int max_retries,
                                                     int m = 2) {
  if (objects.size() < 2) {
    DescriptionSet out;
    out.label = action_label;
    out.generator_id = gen.id;
    return out;
  }
  return generate_validated(action_label, gen, relation_prompt(action_label, objects, m), v,
                            max_retries);
}

}  // namespace aornet::bank
