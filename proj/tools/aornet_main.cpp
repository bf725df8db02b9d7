// Command-line front end: dataset generation, bank construction, training,
// evaluation, ablation sweeps, and attention export. Every subcommand is a
// thin shell over the headers; all real behavior lives in the library so the
// tests exercise the same code paths.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aornet/harness/ablation.hpp"
#include "aornet/harness/attention_export.hpp"
#include "aornet/harness/train.hpp"
#include "aornet/synth/generate.hpp"

namespace fs = std::filesystem;
using aornet::ValidationError;
using nlohmann::ordered_json;
namespace harness = aornet::harness;
namespace model = aornet::model;

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Shared by eval and export-attention: prefer an explicit bank file, then the
// bank the training run saved next to the checkpoint, then a deterministic
// rebuild from the dataset's own taxonomy.
aornet::bank::PrototypeBank resolve_bank(const std::string& flag, const fs::path& ckpt,
                                         const harness::Dataset& ds, Eigen::Index d) {
  aornet::bank::PrototypeBank b;
  if (!flag.empty()) {
    b = aornet::bank::load_bank(flag);
  } else if (fs::exists(ckpt.parent_path() / "bank.json")) {
    b = aornet::bank::load_bank(ckpt.parent_path() / "bank.json");
  } else {
    b = model::default_bank(ds.actions, ds.objects, ds.rules, d);
  }
  aornet::require(b.d() == d, "CONFIG_MISMATCH: bank embeds at d=" + std::to_string(b.d()) +
                                  " but the checkpoint's model runs d=" + std::to_string(d));
  return b;
}

// Reconstructs the trained model around a checkpoint's own arch document.
model::AORNet model_from_ckpt(const fs::path& ckpt, aornet::nn::ParamStore& store) {
  model::AORNet net(model::ModelConfig::from_json(aornet::ckpt::peek_arch(ckpt.string())));
  net.init(store);
  net.load_checkpoint(ckpt.string(), store);
  return net;
}

int cmd_generate(const std::string& preset, const std::string& scenario_file,
                 const std::string& out, long long seed) {
  aornet::require(preset.empty() != scenario_file.empty(),
                  "pass exactly one of --preset or --scenario");
  aornet::synth::ScenarioSpec spec =
      preset.empty()
          ? aornet::synth::scenario_from_json(aornet::data::read_json_file(scenario_file))
          : aornet::synth::preset_scenario(preset);
  if (seed >= 0) spec.seed = std::uint64_t(seed);
  aornet::synth::GeneratedDataset ds = aornet::synth::write_dataset(spec, out);
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << ds.clip_count << " clips to " << ds.root.string() << "\n";
  return 0;
}

int cmd_build_bank(const std::string& data, const std::string& out, int dim, int k, int m,
                   std::uint64_t seed) {
  harness::Dataset ds = harness::Dataset::load(data);
  aornet::bank::BankBuildOptions opt;
  opt.k_action = k;
  opt.m_relation = m;
  opt.seed = seed;
  aornet::bank::PrototypeBank bank =
      model::default_bank(ds.actions, ds.objects, ds.rules, dim, opt);
  aornet::bank::save_bank(bank, out);
  std::cout << "bank: " << bank.t_a.rows() << " action rows, " << bank.t_o.rows()
            << " object rows, " << bank.t_r.rows() << " relation rows at d=" << bank.d()
            << " -> " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_file) {
  harness::TrainConfig cfg =
      harness::TrainConfig::from_json(aornet::data::read_json_file(config_file));
  harness::TrainResult res = harness::train(cfg, [](const harness::EpochLog& el) {
    std::fprintf(stderr, "epoch %3d  lr %.2e  loss %.4f  top1 %.2f  top5 %.2f  mean1 %.2f\n",
                 el.epoch, el.lr, el.train_loss, el.eval.top1, el.eval.top5, el.eval.mean1);
  });
  std::cout << "best epoch " << res.best_epoch << ": top1 " << res.best_top1 << "\n"
            << "checkpoints: " << res.best_ckpt.string() << ", " << res.last_ckpt.string()
            << "\nmetrics: " << res.metrics_path.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& split,
             const std::string& level, const std::string& bank_flag, const std::string& out) {
  harness::Dataset ds = harness::Dataset::load(data);
  aornet::nn::ParamStore store(0);
  model::AORNet net = model_from_ckpt(ckpt, store);
  aornet::require(net.config().num_classes == ds.num_classes(level),
                  "CONFIG_MISMATCH: checkpoint classifies " +
                      std::to_string(net.config().num_classes) + " classes but the " + level +
                      " level has " + std::to_string(ds.num_classes(level)) +
                      " — pass the matching --level");
  aornet::bank::PrototypeBank bank;
  const aornet::bank::PrototypeBank* pb = nullptr;
  if (net.config().variant == "full") {
    bank = resolve_bank(bank_flag, ckpt, ds, net.config().encoder.d);
    pb = &bank;
  }
  harness::EvalReport r =
      harness::evaluate(net, store, pb, ds, ds.split_ids(split), level);
  ordered_json doc = r.to_json();
  doc["split"] = split;
  doc["level"] = level;
  if (!out.empty()) aornet::data::write_json_file(out, doc);
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_file, const std::string& axis,
               const std::string& values, const std::string& seeds, const std::string& out) {
  harness::TrainConfig base =
      harness::TrainConfig::from_json(aornet::data::read_json_file(config_file));
  std::vector<std::uint64_t> seed_list;
  for (const auto& s : split_commas(seeds))
    seed_list.push_back(std::uint64_t(harness::detail::parse_int(s, "seed")));
  harness::AblationTable table =
      harness::run_ablation(base, axis, split_commas(values), seed_list, out);
  std::cout << table.to_markdown();
  return 0;
}

int cmd_export_attention(const std::string& ckpt, const std::string& data,
                         const std::string& clip, const std::string& out,
                         const std::string& level, const std::string& bank_flag) {
  harness::Dataset ds = harness::Dataset::load(data);
  aornet::nn::ParamStore store(0);
  model::AORNet net = model_from_ckpt(ckpt, store);
  aornet::bank::PrototypeBank bank;
  const aornet::bank::PrototypeBank* pb = nullptr;
  if (net.config().variant == "full") {
    bank = resolve_bank(bank_flag, ckpt, ds, net.config().encoder.d);
    pb = &bank;
  }
  harness::AttentionExport ex = harness::export_attention(net, store, pb, ds, clip, out, level);
  std::cout << "wrote " << ex.heatmaps.size() << " heatmaps and "
            << ex.json_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driver action recognition pipeline"};
  app.require_subcommand(1);

  // generate-data
  std::string gen_preset, gen_scenario, gen_out;
  long long gen_seed = -1;
  auto* gen = app.add_subcommand("generate-data", "render a synthetic labeled video corpus");
  gen->add_option("--preset", gen_preset,
                  "scenario preset (daos-synth-small, toy, micro, overfit64, relation-pairs, "
                  "omax-stress)");
  gen->add_option("--scenario", gen_scenario, "scenario spec JSON file");
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "override the scenario seed");

  // build-bank
  std::string bb_data, bb_out;
  int bb_dim = 64, bb_k = 3, bb_m = 2;
  std::uint64_t bb_seed = 0;
  auto* bb = app.add_subcommand("build-bank", "build the textual prototype bank");
  bb->add_option("--data", bb_data, "dataset directory (taxonomy + rules)")->required();
  bb->add_option("--out", bb_out, "bank JSON path")->required();
  bb->add_option("--dim", bb_dim, "embedding width (must match the model d)");
  bb->add_option("--k", bb_k, "descriptions per action");
  bb->add_option("--m", bb_m, "relation descriptions per object-bearing action");
  bb->add_option("--seed", bb_seed, "provenance seed");

  // train
  std::string tr_config;
  auto* tr = app.add_subcommand("train", "train a model from a JSON config");
  tr->add_option("--config", tr_config, "train config JSON")->required();

  // eval
  std::string ev_ckpt, ev_data, ev_split = "val", ev_level = "fine", ev_bank, ev_out;
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a split");
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train | val | test");
  ev->add_option("--level", ev_level, "fine | coarse");
  ev->add_option("--bank", ev_bank, "prototype bank JSON (default: next to the checkpoint)");
  ev->add_option("--out", ev_out, "also write the report JSON here");

  // ablate
  std::string ab_config, ab_axis, ab_values, ab_seeds = "0", ab_out;
  auto* ab = app.add_subcommand("ablate", "sweep one config axis and tabulate");
  ab->add_option("--config", ab_config, "base train config JSON")->required();
  ab->add_option("--axis", ab_axis, "o_max | tau | relation_depth | modules | modality")
      ->required();
  ab->add_option("--values", ab_values, "comma-separated axis values")->required();
  ab->add_option("--seeds", ab_seeds, "comma-separated seeds (default 0)");
  ab->add_option("--out", ab_out, "output directory")->required();

  // export-attention
  std::string ex_ckpt, ex_data, ex_clip, ex_out, ex_level = "fine", ex_bank;
  auto* ex = app.add_subcommand("export-attention", "dump attention heatmaps for one clip");
  ex->add_option("--ckpt", ex_ckpt, "checkpoint file")->required();
  ex->add_option("--data", ex_data, "dataset directory")->required();
  ex->add_option("--clip", ex_clip, "clip id")->required();
  ex->add_option("--out", ex_out, "output directory")->required();
  ex->add_option("--level", ex_level, "fine | coarse");
  ex->add_option("--bank", ex_bank, "prototype bank JSON (default: next to the checkpoint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad usage is a validation failure
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_preset, gen_scenario, gen_out, gen_seed);
    if (bb->parsed()) return cmd_build_bank(bb_data, bb_out, bb_dim, bb_k, bb_m, bb_seed);
    if (tr->parsed()) return cmd_train(tr_config);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_split, ev_level, ev_bank, ev_out);
    if (ab->parsed()) return cmd_ablate(ab_config, ab_axis, ab_values, ab_seeds, ab_out);
    if (ex->parsed())
      return cmd_export_attention(ex_ckpt, ex_data, ex_clip, ex_out, ex_level, ex_bank);
  } catch (const harness::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
