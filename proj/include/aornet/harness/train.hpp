#pragma once

#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aornet/core/optim.hpp"
#include "aornet/harness/dataset.hpp"
#include "aornet/harness/metrics.hpp"

namespace aornet::harness {

// Loss went non-finite; the trainer aborts rather than writing NaN weights.
// Carried as its own type so the CLI can map it to its own exit code.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  model::ModelConfig model;
  std::string dataset_root;
  std::string out_dir;
  std::string bank_path;  // empty: build from the dataset's taxonomy
  std::string level = "fine";
  std::string train_split = "train";
  std::string eval_split = "val";
  int epochs = 30;
  int batch_size = 8;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;
  opt::LrSchedule schedule;
  bool auto_num_classes = true;  // resolve from taxonomy + level at train time

  void validate() const {
    require(!dataset_root.empty(), "train config: dataset_root required");
    require(!out_dir.empty(), "train config: out_dir required");
    require(epochs >= 1, "train config: epochs must be >= 1");
    require(batch_size >= 1, "train config: batch_size must be >= 1");
    require(label_smoothing >= 0.0 && label_smoothing < 1.0,
            "train config: label_smoothing must be in [0,1)");
    require(level == "fine" || level == "coarse", "train config: level must be fine or coarse");
    schedule.validate();
    model.validate();
  }

  json to_json() const {
    json steps = json::array();
    for (const auto& [e, lr] : schedule.steps) steps.push_back({e, lr});
    return json{{"data", dataset_root},
                {"out", out_dir},
                {"bank", bank_path},
                {"level", level},
                {"train_split", train_split},
                {"eval_split", eval_split},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"label_smoothing", label_smoothing},
                {"seed", seed},
                {"lr_schedule", steps},
                {"model", model.to_json()}};
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    if (j.contains("model")) {
      c.model = model::ModelConfig::from_json(j.at("model"));
      c.auto_num_classes = !j.at("model").contains("num_classes");
    }
    if (j.contains("data")) c.dataset_root = j.at("data").get<std::string>();
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    if (j.contains("bank")) c.bank_path = j.at("bank").get<std::string>();
    if (j.contains("level")) c.level = j.at("level").get<std::string>();
    if (j.contains("train_split")) c.train_split = j.at("train_split").get<std::string>();
    if (j.contains("eval_split")) c.eval_split = j.at("eval_split").get<std::string>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("label_smoothing"))
      c.label_smoothing = j.at("label_smoothing").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("lr_schedule")) {
      c.schedule.steps.clear();
      for (const auto& s : j.at("lr_schedule"))
        c.schedule.steps.emplace_back(s.at(0).get<int>(), s.at(1).get<double>());
    }
    return c;
  }
};

// Scores one split in eval mode: deterministic sampling, no Gumbel noise.
inline EvalReport evaluate(const model::AORNet& net, nn::ParamStore& store,
                           const bank::PrototypeBank* pbank, const Dataset& ds,
                           const std::vector<std::string>& ids, const std::string& level,
                           FrameCache* cache = nullptr) {
  require(!ids.empty(), "EMPTY_SPLIT: nothing to evaluate");
  const auto& mc = net.config();
  std::vector<std::vector<double>> all_logits;
  std::vector<int> labels;
  for (const auto& id : ids) {
    const LoadedClip& clip = ds.at(id);
    model::ModelSample sample =
        make_sample(ds, clip, mc.modalities, mc.encoder.frame_count, mc.encoder.input_size,
                    level, /*train_mode=*/false, Rng(0), cache);
    ad::Tape t;
    model::BankNodes bn;
    const model::BankNodes* bp = nullptr;
    if (mc.variant == "full") {
      require(pbank != nullptr, "full variant needs a prototype bank to evaluate");
      bn = model::put_bank(t, *pbank);
      bp = &bn;
    }
    model::ForwardOutput out = net.forward(t, store, sample, bp);
    const Mat& l = t.val(out.logits);
    all_logits.emplace_back(l.data(), l.data() + l.size());
    labels.push_back(sample.label);
  }
  return compute_metrics(all_logits, labels, ds.num_classes(level));
}

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  EvalReport eval;
};

struct TrainResult {
  fs::path out_dir, best_ckpt, last_ckpt, metrics_path, config_path, bank_file;
  int best_epoch = -1;
  double best_top1 = -1.0;
  EvalReport best_report;
  std::vector<EpochLog> log;
};

// The training loop: seeded init, per-epoch shuffled batches, decoupled-decay
// adaptive steps on the piecewise-constant schedule, one eval pass per epoch,
// best-Top-1 checkpointing, and a JSON-lines metrics stream.
inline TrainResult train(const TrainConfig& cfg_in,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  TrainConfig cfg = cfg_in;
  Dataset ds = Dataset::load(cfg.dataset_root);
  if (cfg.auto_num_classes) cfg.model.num_classes = ds.num_classes(cfg.level);
  require(cfg.model.num_classes == ds.num_classes(cfg.level),
          "CONFIG_MISMATCH: model has " + std::to_string(cfg.model.num_classes) +
              " classes but the dataset's " + cfg.level + " level has " +
              std::to_string(ds.num_classes(cfg.level)));
  cfg.validate();

  model::AORNet net(cfg.model);
  nn::ParamStore store(cfg.seed);
  net.init(store);

  fs::create_directories(cfg.out_dir);
  TrainResult res;
  res.out_dir = cfg.out_dir;
  res.config_path = fs::path(cfg.out_dir) / "config.json";
  res.metrics_path = fs::path(cfg.out_dir) / "metrics.jsonl";
  res.best_ckpt = fs::path(cfg.out_dir) / "best.ckpt";
  res.last_ckpt = fs::path(cfg.out_dir) / "last.ckpt";

  // The prototype bank: load if given, otherwise build deterministically from
  // the dataset's own taxonomy; either way a copy lands next to the weights.
  bank::PrototypeBank pbank;
  if (cfg.model.variant == "full") {
    if (!cfg.bank_path.empty()) {
      pbank = bank::load_bank(cfg.bank_path);
    } else {
      bank::BankBuildOptions opt;
      opt.seed = cfg.seed;
      pbank = model::default_bank(ds.actions, ds.objects, ds.rules, cfg.model.encoder.d, opt);
    }
    require(pbank.d() == cfg.model.encoder.d,
            "CONFIG_MISMATCH: bank embeds at d=" + std::to_string(pbank.d()) +
                " but the model runs d=" + std::to_string(cfg.model.encoder.d));
    require(pbank.num_actions == ds.actions.num_fine(),
            "CONFIG_MISMATCH: bank covers " + std::to_string(pbank.num_actions) +
                " actions, taxonomy has " + std::to_string(ds.actions.num_fine()));
    res.bank_file = fs::path(cfg.out_dir) / "bank.json";
    bank::save_bank(pbank, res.bank_file);
  }

  // Resolved-config snapshot before the first step.
  data::write_json_file(res.config_path, cfg.to_json());

  const std::vector<std::string> train_ids = ds.split_ids(cfg.train_split);
  const std::vector<std::string> eval_ids = ds.split_ids(cfg.eval_split);

  FrameCache cache;
  opt::AdamW optimizer;
  std::ofstream metrics(res.metrics_path);
  require(metrics.good(), "cannot open metrics stream: " + res.metrics_path.string());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.at(epoch);
    std::vector<std::string> order = train_ids;
    Rng order_rng = Rng(cfg.seed).fork("order", std::uint64_t(epoch));
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    int seen = 0, batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + std::size_t(cfg.batch_size));
      ad::Tape t;
      model::BankNodes bn;
      const model::BankNodes* bp = nullptr;
      if (cfg.model.variant == "full") {
        bn = model::put_bank(t, pbank);
        bp = &bn;
      }
      Rng gumbel =
          Rng(cfg.seed).fork("gumbel", std::uint64_t(epoch) * 1000003ull + std::uint64_t(batch_index));
      std::vector<int> losses;
      for (std::size_t i = start; i < stop; ++i) {
        const LoadedClip& clip = ds.at(order[i]);
        Rng aug = Rng(cfg.seed).fork("aug", std::uint64_t(epoch)).fork(order[i]);
        model::ModelSample sample =
            make_sample(ds, clip, cfg.model.modalities, cfg.model.encoder.frame_count,
                        cfg.model.encoder.input_size, cfg.level, /*train_mode=*/true, aug,
                        &cache);
        model::ForwardOutput out = net.forward(t, store, sample, bp, &gumbel, sample.label,
                                               cfg.label_smoothing);
        losses.push_back(out.loss);
      }
      int batch_loss = losses.size() == 1 ? losses[0]
                                          : ad::mean_all(t, ad::concat_rows(t, losses));
      const double lv = t.val(batch_loss)(0, 0);
      if (!std::isfinite(lv))
        throw DivergenceError("DIVERGED: non-finite loss at epoch " + std::to_string(epoch) +
                              " batch " + std::to_string(batch_index) + " (first clip " +
                              order[start] + ")");
      store.zero_grads();
      t.backward(batch_loss);
      optimizer.step(store, lr);
      loss_sum += lv * double(stop - start);
      seen += int(stop - start);
      ++batch_index;
    }

    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    el.train_loss = loss_sum / double(seen);
    el.eval = evaluate(net, store, cfg.model.variant == "full" ? &pbank : nullptr, ds, eval_ids,
                       cfg.level, &cache);
    res.log.push_back(el);
    if (on_epoch) on_epoch(el);

    json line{{"epoch", el.epoch},
              {"lr", el.lr},
              {"train_loss", el.train_loss},
              {"eval_split", cfg.eval_split},
              {"eval", el.eval.to_json()}};
    metrics << line.dump() << "\n";
    metrics.flush();

    if (el.eval.top1 > res.best_top1) {
      res.best_top1 = el.eval.top1;
      res.best_epoch = epoch;
      res.best_report = el.eval;
      net.save_checkpoint(res.best_ckpt.string(), store);
    }
  }

  net.save_checkpoint(res.last_ckpt.string(), store);
  return res;
}

}  // namespace aornet::harness
