#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "aornet/bank/descriptions.hpp"
#include "aornet/bank/text_encoder.hpp"
#include "aornet/data/annotation_io.hpp"
#include "aornet/data/taxonomy.hpp"

// Assembly and persistence of the textual prototype bank: one embedded row
// per action description (grouped by action, taxonomy order), one per object
// label, and one per relation description. The JSON file carries all source
// texts and provenance; the raw vectors live in a sidecar binary referenced
// by content hash, so a reloaded bank is bit-identical or loudly rejected.
namespace aornet::bank {

namespace fs = std::filesystem;

struct ActionProto {
  int action = -1;  // index into the action taxonomy
  std::string text;
};

struct RelationProto {
  int action = -1;
  std::vector<std::string> objects;  // >= 2 object class names
  std::string text;
};

struct PrototypeBank {
  Mat t_a;  // action rows, K per action, grouped
  Mat t_o;  // object rows, one per object label
  Mat t_r;  // relation rows, M per object-bearing action
  std::vector<ActionProto> action_protos;
  std::vector<std::string> object_labels;
  std::vector<RelationProto> relation_protos;
  int num_actions = 0;
  std::string encoder_id;
  json provenance;

  Eigen::Index d() const { return t_a.cols(); }
  int n_a() const { return int(t_a.rows()); }
  int n_o() const { return int(t_o.rows()); }
  int n_r() const { return int(t_r.rows()); }

  // Rows of t_a belonging to one action; construction keeps them contiguous.
  std::pair<int, int> action_row_range(int action) const {
    int lo = -1, hi = -1;
    for (int i = 0; i < n_a(); ++i) {
      if (action_protos[std::size_t(i)].action == action) {
        if (lo < 0) lo = i;
        hi = i + 1;
      }
    }
    require(lo >= 0, "bank has no rows for action index " + std::to_string(action));
    return {lo, hi};
  }

  void validate() const {
    require(num_actions > 0, "bank covers no actions");
    require(t_a.rows() == Eigen::Index(action_protos.size()), "T_A rows vs index mismatch");
    require(t_o.rows() == Eigen::Index(object_labels.size()), "T_O rows vs index mismatch");
    require(t_r.rows() == Eigen::Index(relation_protos.size()), "T_R rows vs index mismatch");
    require(t_a.rows() > 0 && t_o.rows() > 0, "bank must cover actions and objects");
    require(t_o.cols() == d() && (t_r.rows() == 0 || t_r.cols() == d()),
            "bank levels disagree on d");
    for (const Mat* m : {&t_a, &t_o, &t_r})
      for (Eigen::Index i = 0; i < m->rows(); ++i)
        require(std::abs(m->row(i).norm() - 1.0) <= 1e-6,
                "bank row " + std::to_string(i) + " is not unit length");
    int prev = 0;
    for (const auto& p : action_protos) {
      require(p.action >= 0 && p.action < num_actions, "action index out of range");
      require(p.action >= prev, "T_A rows must stay grouped by action");
      require(!p.text.empty(), "empty action description");
      prev = p.action;
    }
    for (const auto& r : relation_protos) {
      require(r.action >= 0 && r.action < num_actions, "relation action out of range");
      require(r.objects.size() >= 2, "relation prototype must reference >= 2 object classes");
      require(!r.text.empty(), "empty relation description");
    }
  }
};

inline bool mats_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 ||
          std::memcmp(a.data(), b.data(), std::size_t(a.size()) * sizeof(double)) == 0);
}

inline bool operator==(const ActionProto& a, const ActionProto& b) {
  return a.action == b.action && a.text == b.text;
}
inline bool operator==(const RelationProto& a, const RelationProto& b) {
  return a.action == b.action && a.objects == b.objects && a.text == b.text;
}

inline bool banks_equal(const PrototypeBank& a, const PrototypeBank& b) {
  return mats_equal(a.t_a, b.t_a) && mats_equal(a.t_o, b.t_o) && mats_equal(a.t_r, b.t_r) &&
         a.action_protos == b.action_protos && a.object_labels == b.object_labels &&
         a.relation_protos == b.relation_protos && a.num_actions == b.num_actions &&
         a.encoder_id == b.encoder_id && a.provenance == b.provenance;
}

// ---- construction ------------------------------------------------------------

struct BankBuildOptions {
  int k_action = 3;    // descriptions kept per action
  int m_relation = 2;  // relation descriptions per object-bearing action
  int max_retries = 5;
  std::uint64_t seed = 0;  // recorded for provenance; generators own their state
};

template <class Encoder>
PrototypeBank build_bank(const data::ActionTaxonomy& actions,
                         const data::ObjectTaxonomy& objects, const data::RuleTable& rules,
                         const DescriptionGenerator& gen, const Encoder& enc,
                         const BankBuildOptions& opt = {}) {
  actions.validate();
  objects.validate();
  rules.validate(actions, objects);
  require(opt.k_action >= 1 && opt.m_relation >= 1, "k and m must be positive");

  PrototypeBank bank;
  bank.num_actions = actions.num_fine();
  bank.encoder_id = enc.id();

  json attempts = json::object();
  std::vector<std::string> action_texts, relation_texts;
  for (int a = 0; a < actions.num_fine(); ++a) {
    const std::string& label = actions.fine_labels[std::size_t(a)];
    DescriptionSet ds = generate_action_descriptions(label, gen, action_validator(label),
                                                     opt.max_retries, opt.k_action);
    for (const auto& text : ds.texts) {
      bank.action_protos.push_back({a, text});
      action_texts.push_back(text);
    }
    std::vector<std::string> objs = get_objects(label, objects, rules);
    DescriptionSet rs = generate_relation_descriptions(label, objs, gen,
                                                       relation_validator(objs),
                                                       opt.max_retries, opt.m_relation);
    for (const auto& text : rs.texts) {
      bank.relation_protos.push_back({a, objs, text});
      relation_texts.push_back(text);
    }
    attempts[label] = {{"action", ds.attempts}, {"relation", rs.attempts}};
  }

  bank.object_labels = objects.object_labels;
  bank.t_a = encode_texts(action_texts, enc);
  bank.t_o = encode_texts(objects.object_labels, enc);
  bank.t_r = relation_texts.empty() ? Mat(0, enc.dim()) : encode_texts(relation_texts, enc);
  bank.provenance = json{{"generator", gen.id},
                         {"prompt_version", 1},
                         {"k_action", opt.k_action},
                         {"m_relation", opt.m_relation},
                         {"max_retries", opt.max_retries},
                         {"seed", opt.seed},
                         {"attempts", attempts}};
  bank.validate();
  return bank;
}

// ---- persistence ---------------------------------------------------------------
// bank.json (texts, provenance, shapes, sidecar reference) + bank.vec (raw
// little-endian doubles: T_A rows, then T_O, then T_R). Both written via
// temp-file + rename; the JSON records an FNV-1a hash of the blob.

inline constexpr int kBankSchemaVersion = 1;

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void append_rows(std::vector<double>& blob, const Mat& m) {
  blob.insert(blob.end(), m.data(), m.data() + m.size());
}

}  // namespace detail

inline fs::path bank_sidecar_path(const fs::path& json_path) {
  fs::path p = json_path;
  p.replace_extension(".vec");
  return p;
}

inline void save_bank(const PrototypeBank& bank, const fs::path& json_path) {
  bank.validate();
  std::vector<double> blob;
  blob.reserve(std::size_t(bank.t_a.size() + bank.t_o.size() + bank.t_r.size()));
  detail::append_rows(blob, bank.t_a);
  detail::append_rows(blob, bank.t_o);
  detail::append_rows(blob, bank.t_r);
  const std::uint64_t hash = fnv1a64(blob.data(), blob.size() * sizeof(double));

  const fs::path sidecar = bank_sidecar_path(json_path);
  {
    fs::path tmp = sidecar;
    tmp += ".tmp";
    std::ofstream f(tmp, std::ios::binary);
    require(f.good(), "cannot open for writing: " + tmp.string());
    f.write(reinterpret_cast<const char*>(blob.data()),
            std::streamsize(blob.size() * sizeof(double)));
    require(f.good(), "short write: " + tmp.string());
    f.close();
    fs::rename(tmp, sidecar);
  }

  json j;
  j["schema_version"] = kBankSchemaVersion;
  j["encoder_id"] = bank.encoder_id;
  j["provenance"] = bank.provenance;
  j["dims"] = {{"d", bank.d()},
               {"n_a", bank.n_a()},
               {"n_o", bank.n_o()},
               {"n_r", bank.n_r()},
               {"num_actions", bank.num_actions}};
  j["action_rows"] = json::array();
  for (const auto& p : bank.action_protos)
    j["action_rows"].push_back({{"action", p.action}, {"text", p.text}});
  j["object_rows"] = bank.object_labels;
  j["relation_rows"] = json::array();
  for (const auto& r : bank.relation_protos)
    j["relation_rows"].push_back(
        {{"action", r.action}, {"objects", r.objects}, {"text", r.text}});
  j["vectors"] = {{"file", sidecar.filename().string()},
                  {"count", blob.size()},
                  {"fnv64", detail::hex64(hash)}};
  data::write_json_file(json_path, j);
}

inline PrototypeBank load_bank(const fs::path& json_path) {
  const json j = data::read_json_file(json_path);
  require(j.at("schema_version").get<int>() == kBankSchemaVersion,
          "unsupported bank schema in " + json_path.string());

  PrototypeBank bank;
  bank.encoder_id = j.at("encoder_id").get<std::string>();
  bank.provenance = j.at("provenance");
  bank.num_actions = j.at("dims").at("num_actions").get<int>();
  const Eigen::Index d = j.at("dims").at("d").get<Eigen::Index>();
  const Eigen::Index na = j.at("dims").at("n_a").get<Eigen::Index>();
  const Eigen::Index no = j.at("dims").at("n_o").get<Eigen::Index>();
  const Eigen::Index nr = j.at("dims").at("n_r").get<Eigen::Index>();

  for (const auto& p : j.at("action_rows"))
    bank.action_protos.push_back(
        {p.at("action").get<int>(), p.at("text").get<std::string>()});
  bank.object_labels = j.at("object_rows").get<std::vector<std::string>>();
  for (const auto& r : j.at("relation_rows"))
    bank.relation_protos.push_back({r.at("action").get<int>(),
                                    r.at("objects").get<std::vector<std::string>>(),
                                    r.at("text").get<std::string>()});

  const fs::path sidecar =
      json_path.parent_path() / j.at("vectors").at("file").get<std::string>();
  const std::size_t count = j.at("vectors").at("count").get<std::size_t>();
  require(count == std::size_t((na + no + nr) * d),
          "BANK_HASH_MISMATCH: vector count disagrees with shapes in " + json_path.string());
  std::vector<double> blob(count);
  {
    std::ifstream f(sidecar, std::ios::binary);
    require(f.good(), "cannot open: " + sidecar.string());
    f.read(reinterpret_cast<char*>(blob.data()), std::streamsize(count * sizeof(double)));
    require(f.good() && std::size_t(f.gcount()) == count * sizeof(double),
            "BANK_HASH_MISMATCH: sidecar truncated: " + sidecar.string());
    f.get();
    require(f.eof(), "BANK_HASH_MISMATCH: sidecar has trailing bytes: " + sidecar.string());
  }
  const std::string hash = detail::hex64(fnv1a64(blob.data(), blob.size() * sizeof(double)));
  if (hash != j.at("vectors").at("fnv64").get<std::string>())
    throw ValidationError("BANK_HASH_MISMATCH: sidecar content hash differs for " +
                          sidecar.string());

  const double* ptr = blob.data();
  bank.t_a = Mat::Map(ptr, na, d);
  ptr += na * d;
  bank.t_o = Mat::Map(ptr, no, d);
  ptr += no * d;
  bank.t_r = Mat::Map(ptr, nr, d);
  bank.validate();
  return bank;
}

}  // namespace aornet::bank
