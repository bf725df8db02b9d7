#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aornet/core/common.hpp"

namespace aornet::data {

using json = nlohmann::ordered_json;

struct ActionTaxonomy {
  std::vector<std::string> fine_labels;    // 36 by default
  std::vector<std::string> coarse_labels;  // 12 by default
  std::vector<int> fine_to_coarse;         // index-aligned with fine_labels

  int num_fine() const { return int(fine_labels.size()); }
  int num_coarse() const { return int(coarse_labels.size()); }

  int fine_index(const std::string& name) const {
    auto it = std::find(fine_labels.begin(), fine_labels.end(), name);
    require(it != fine_labels.end(), "UNKNOWN_ACTION: " + name);
    return int(it - fine_labels.begin());
  }

  void validate() const {
    require(fine_to_coarse.size() == fine_labels.size(), "fine_to_coarse must be total");
    std::set<std::string> f(fine_labels.begin(), fine_labels.end());
    std::set<std::string> c(coarse_labels.begin(), coarse_labels.end());
    require(f.size() == fine_labels.size(), "duplicate fine label");
    require(c.size() == coarse_labels.size(), "duplicate coarse label");
    std::set<int> hit;
    for (int ci : fine_to_coarse) {
      require(ci >= 0 && ci < num_coarse(), "fine_to_coarse index out of range");
      hit.insert(ci);
    }
    require(int(hit.size()) == num_coarse(), "fine_to_coarse must be surjective");
  }
};

struct ObjectTaxonomy {
  std::vector<std::string> object_labels;  // 15 by default, includes "person"
  std::vector<int> human_indices;

  int num_objects() const { return int(object_labels.size()); }

  int object_index(const std::string& name) const {
    auto it = std::find(object_labels.begin(), object_labels.end(), name);
    require(it != object_labels.end(), "unknown object class: " + name);
    return int(it - object_labels.begin());
  }

  bool is_human(int class_index) const {
    return std::find(human_indices.begin(), human_indices.end(), class_index) !=
           human_indices.end();
  }

  void validate() const {
    require(!human_indices.empty(), "human_indices must be nonempty");
    std::set<std::string> o(object_labels.begin(), object_labels.end());
    require(o.size() == object_labels.size(), "duplicate object label");
    for (int i : human_indices)
      require(i >= 0 && i < num_objects(), "human index out of range");
  }
};

// One action's data-generation and description contract: which object classes
// the action requires on screen, and which hand/head motion pattern renders
// it. Actions sharing a motion id but requiring different objects are the
// "identical motion, object decides" fixture used throughout testing.
struct ActionRule {
  std::vector<std::string> objects;  // object class names; may be empty
  int motion_id = 0;
};

struct RuleTable {
  std::map<std::string, ActionRule> rules;  // fine label → rule

  const ActionRule& at(const std::string& fine_label) const {
    auto it = rules.find(fine_label);
    require(it != rules.end(), "UNKNOWN_ACTION: " + fine_label);
    return it->second;
  }

  void validate(const ActionTaxonomy& actions, const ObjectTaxonomy& objects) const {
    for (const auto& name : actions.fine_labels)
      require(rules.count(name), "rule table missing action: " + name);
    for (const auto& [name, rule] : rules) {
      (void)actions.fine_index(name);
      for (const auto& obj : rule.objects) (void)objects.object_index(obj);
    }
  }
};

// ---- shipped defaults -------------------------------------------------------
// 12 coarse groups × 3 fine actions, 15 object classes. The car-cabin nouns
// here double as rendering colors/roles in the synthetic generator and as the
// vocabulary for prototype descriptions.

inline ObjectTaxonomy default_objects() {
  ObjectTaxonomy t;
  t.object_labels = {"person",     "phone",   "bottle", "cup",   "cigarette",
                     "lighter",    "bag",     "glasses", "mask",  "headphones",
                     "child",      "child seat", "steering wheel", "food", "tissue"};
  t.human_indices = {0, 10};  // person, child
  t.validate();
  return t;
}

inline ActionTaxonomy default_actions() {
  ActionTaxonomy t;
  t.coarse_labels = {"drinking",        "phone use",    "smoking",
                     "eating",          "grooming",     "wearing a mask",
                     "using headphones", "bag handling", "child care",
                     "steering",        "looking",      "body movement"};
  const std::vector<std::pair<std::string, int>> fine = {
      {"drinking", 0},
      {"opening a bottle", 0},
      {"putting down a bottle", 0},
      {"talking on the phone", 1},
      {"texting on the phone", 1},
      {"picking up a phone", 1},
      {"lighting a cigarette", 2},
      {"smoking", 2},
      {"putting out a cigarette", 2},
      {"eating a snack", 3},
      {"unwrapping food", 3},
      {"putting down food", 3},
      {"putting on glasses", 4},
      {"taking off glasses", 4},
      {"wiping face with a tissue", 4},
      {"putting on a mask", 5},
      {"taking off a mask", 5},
      {"adjusting a mask", 5},
      {"putting on headphones", 6},
      {"taking off headphones", 6},
      {"adjusting headphones", 6},
      {"reaching into a bag", 7},
      {"placing a bag on the seat", 7},
      {"closing a bag", 7},
      {"checking on the child", 8},
      {"adjusting the child seat", 8},
      {"handing an item to the child", 8},
      {"gripping the steering wheel", 9},
      {"turning the steering wheel", 9},
      {"releasing the steering wheel", 9},
      {"looking around", 10},
      {"looking down", 10},
      {"looking back", 10},
      {"stretching arms", 11},
      {"yawning", 11},
      {"leaning to the side", 11},
  };
  for (const auto& [name, coarse] : fine) {
    t.fine_labels.push_back(name);
    t.fine_to_coarse.push_back(coarse);
  }
  t.validate();
  return t;
}

inline RuleTable default_rules() {
  RuleTable rt;
  auto rule = [&](const std::string& action, std::vector<std::string> objs, int motion) {
    rt.rules[action] = ActionRule{std::move(objs), motion};
  };
  // Motion ids are shared across actions on purpose: within one motion id the
  // rendered trajectory is identical and only the attached object differs.
  rule("drinking", {"person", "bottle"}, 0);
  rule("smoking", {"person", "cigarette"}, 0);
  rule("eating a snack", {"person", "food"}, 0);
  rule("opening a bottle", {"person", "bottle"}, 1);
  rule("texting on the phone", {"person", "phone"}, 1);
  rule("unwrapping food", {"person", "food"}, 1);
  rule("putting down a bottle", {"person", "bottle"}, 2);
  rule("putting out a cigarette", {"person", "cigarette"}, 2);
  rule("putting down food", {"person", "food"}, 2);
  rule("talking on the phone", {"person", "phone"}, 3);
  rule("picking up a phone", {"person", "phone"}, 4);
  rule("lighting a cigarette", {"person", "cigarette", "lighter"}, 0);
  rule("putting on glasses", {"person", "glasses"}, 5);
  rule("putting on a mask", {"person", "mask"}, 5);
  rule("putting on headphones", {"person", "headphones"}, 5);
  rule("taking off glasses", {"person", "glasses"}, 6);
  rule("taking off a mask", {"person", "mask"}, 6);
  rule("taking off headphones", {"person", "headphones"}, 6);
  rule("adjusting a mask", {"person", "mask"}, 7);
  rule("adjusting headphones", {"person", "headphones"}, 7);
  rule("closing a bag", {"person", "bag"}, 7);
  rule("wiping face with a tissue", {"person", "tissue"}, 5);
  rule("reaching into a bag", {"person", "bag"}, 8);
  rule("placing a bag on the seat", {"person", "bag"}, 9);
  rule("checking on the child", {"person", "child"}, 10);
  rule("adjusting the child seat", {"person", "child seat"}, 10);
  rule("handing an item to the child", {"person", "child", "food"}, 10);
  rule("gripping the steering wheel", {"person", "steering wheel"}, 11);
  rule("turning the steering wheel", {"person", "steering wheel"}, 12);
  rule("releasing the steering wheel", {"person", "steering wheel"}, 13);
  rule("looking around", {}, 14);
  rule("looking down", {}, 15);
  rule("looking back", {}, 10);
  rule("stretching arms", {}, 16);
  rule("yawning", {}, 17);
  rule("leaning to the side", {}, 18);
  return rt;
}

inline constexpr int kNumMotionPatterns = 19;

// ---- JSON (taxonomy/rule files shipped with every generated dataset) --------

inline json taxonomy_to_json(const ActionTaxonomy& a, const ObjectTaxonomy& o) {
  json j;
  j["fine_labels"] = a.fine_labels;
  j["coarse_labels"] = a.coarse_labels;
  j["fine_to_coarse"] = a.fine_to_coarse;
  j["object_labels"] = o.object_labels;
  j["human_indices"] = o.human_indices;
  return j;
}

inline std::pair<ActionTaxonomy, ObjectTaxonomy> taxonomy_from_json(const json& j) {
  ActionTaxonomy a;
  a.fine_labels = j.at("fine_labels").get<std::vector<std::string>>();
  a.coarse_labels = j.at("coarse_labels").get<std::vector<std::string>>();
  a.fine_to_coarse = j.at("fine_to_coarse").get<std::vector<int>>();
  ObjectTaxonomy o;
  o.object_labels = j.at("object_labels").get<std::vector<std::string>>();
  o.human_indices = j.at("human_indices").get<std::vector<int>>();
  a.validate();
  o.validate();
  return {a, o};
}

inline json rules_to_json(const RuleTable& rt) {
  json j;
  for (const auto& [name, rule] : rt.rules)
    j[name] = {{"objects", rule.objects}, {"motion", rule.motion_id}};
  return j;
}

inline RuleTable rules_from_json(const json& j) {
  RuleTable rt;
  for (auto it = j.begin(); it != j.end(); ++it) {
    ActionRule r;
    r.objects = it.value().at("objects").get<std::vector<std::string>>();
    r.motion_id = it.value().at("motion").get<int>();
    rt.rules[it.key()] = std::move(r);
  }
  return rt;
}

}  // namespace aornet::data
