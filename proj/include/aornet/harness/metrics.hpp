#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aornet/core/common.hpp"

namespace aornet::harness {

using json = nlohmann::ordered_json;

// Accuracy summary for one split. Percentages in [0,100]; mean1 averages
// per-class Top-1 over the classes that actually appear.
struct EvalReport {
  double top1 = 0.0;
  double top5 = 0.0;
  double mean1 = 0.0;
  std::vector<double> per_class_top1;  // -1 for classes with no samples
  std::vector<int> per_class_count;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  int n_samples = 0;

  json to_json() const {
    json pc = json::object();
    for (std::size_t c = 0; c < per_class_top1.size(); ++c)
      if (per_class_count[c] > 0) pc[std::to_string(c)] = per_class_top1[c];
    return json{{"top1", top1},       {"top5", top5},           {"mean1", mean1},
                {"n_samples", n_samples}, {"per_class_top1", pc}, {"confusion", confusion}};
  }
};

// The rank of the true class under "ties go to the lower index": classes with
// a strictly larger logit outrank it, and among equal logits only lower
// indices do. Top-k hits are rank < k; the argmax prediction is rank-0.
inline int label_rank(const std::vector<double>& logits, int label) {
  int rank = 0;
  for (int c = 0; c < int(logits.size()); ++c) {
    if (logits[std::size_t(c)] > logits[std::size_t(label)]) ++rank;
    else if (logits[std::size_t(c)] == logits[std::size_t(label)] && c < label) ++rank;
  }
  return rank;
}

inline int argmax_lowest(const std::vector<double>& logits) {
  int best = 0;
  for (int c = 1; c < int(logits.size()); ++c)
    if (logits[std::size_t(c)] > logits[std::size_t(best)]) best = c;
  return best;
}

inline EvalReport compute_metrics(const std::vector<std::vector<double>>& logits,
                                  const std::vector<int>& labels, int num_classes) {
  require(logits.size() == labels.size(), "metrics: logits/labels length mismatch");
  require(!logits.empty(), "EMPTY_SPLIT: no samples to score");
  EvalReport r;
  r.n_samples = int(logits.size());
  r.per_class_top1.assign(std::size_t(num_classes), -1.0);
  r.per_class_count.assign(std::size_t(num_classes), 0);
  r.confusion.assign(std::size_t(num_classes), std::vector<int>(std::size_t(num_classes), 0));
  std::vector<int> per_class_hits(std::size_t(num_classes), 0);

  int top1_hits = 0, top5_hits = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const int y = labels[i];
    require(y >= 0 && y < num_classes, "metrics: label out of range");
    require(int(logits[i].size()) == num_classes, "metrics: logit width mismatch");
    const int rank = label_rank(logits[i], y);
    if (rank == 0) {
      ++top1_hits;
      ++per_class_hits[std::size_t(y)];
    }
    if (rank < 5) ++top5_hits;
    ++r.per_class_count[std::size_t(y)];
    ++r.confusion[std::size_t(y)][std::size_t(argmax_lowest(logits[i]))];
  }

  r.top1 = 100.0 * double(top1_hits) / double(r.n_samples);
  r.top5 = 100.0 * double(top5_hits) / double(r.n_samples);
  double sum = 0.0;
  int seen = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (r.per_class_count[std::size_t(c)] == 0) continue;
    r.per_class_top1[std::size_t(c)] = 100.0 * double(per_class_hits[std::size_t(c)]) /
                                       double(r.per_class_count[std::size_t(c)]);
    sum += r.per_class_top1[std::size_t(c)];
    ++seen;
  }
  r.mean1 = seen > 0 ? sum / double(seen) : 0.0;
  return r;
}

}  // namespace aornet::harness
