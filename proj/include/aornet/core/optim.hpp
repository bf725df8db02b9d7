#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "aornet/core/nn.hpp"

namespace aornet::opt {

// Piecewise-constant step schedule: (start_epoch, lr) pairs; the rate in
// effect at epoch e is the entry with the largest start_epoch <= e.
struct LrSchedule {
  std::vector<std::pair<int, double>> steps{{0, 1e-4}, {15, 1e-5}, {25, 1e-6}};

  void validate() const {
    require(!steps.empty(), "lr_schedule: empty");
    require(steps.front().first == 0, "lr_schedule: must start at epoch 0");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      require(steps[i].second > 0.0, "lr_schedule: lr must be positive");
      if (i > 0)
        require(steps[i].first > steps[i - 1].first,
                "lr_schedule: start epochs must be strictly increasing");
    }
  }

  double at(int epoch) const {
    double lr = steps.front().second;
    for (const auto& [e, v] : steps)
      if (e <= epoch) lr = v;
    return lr;
  }
};

// Decoupled-weight-decay Adam. Moments live inside the ParamStore entries so
// checkpoint/restore of optimizer state is possible if ever needed; decay is
// applied to the weights directly, not through the gradient.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  explicit AdamW(Options o) : o_(o) {}

  void step(nn::ParamStore& store, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(o_.beta1, t_);
    const double bc2 = 1.0 - std::pow(o_.beta2, t_);
    for (auto& [name, e] : store.entries()) {
      e.m = o_.beta1 * e.m + (1.0 - o_.beta1) * e.g;
      e.v = o_.beta2 * e.v + (1.0 - o_.beta2) * e.g.cwiseProduct(e.g);
      Mat mhat = e.m / bc1;
      Mat vhat = e.v / bc2;
      e.w -= lr * (mhat.array() / (vhat.array().sqrt() + o_.eps)).matrix();
      if (o_.weight_decay > 0.0) e.w -= lr * o_.weight_decay * e.w;
    }
  }

  long step_count() const { return t_; }

 private:
  Options o_{};
  long t_ = 0;
};

}  // namespace aornet::opt
