#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semcur/harness.hpp"

using namespace semcur;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<int> seed_index;
  std::vector<std::string> roster;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--out", c.out, "override output directory");
  sub->add_option("-w,--workers", c.workers, "override worker count");
  sub->add_option("-s,--seed-index", c.seed_index, "run only this seed index");
  sub->add_option("--roster", c.roster, "override method roster");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = load_config(c.config_path);
  if (c.out) cfg.output_dir = *c.out;
  if (c.workers) cfg.workers = *c.workers;
  if (!c.roster.empty()) cfg.roster = c.roster;
  cfg.validate();
  return cfg;
}

std::vector<int> seed_indices(const ExperimentConfig& cfg, const Common& c) {
  if (c.seed_index) {
    if (*c.seed_index < 0 || *c.seed_index >= cfg.num_seeds) throw std::invalid_argument("seed index out of range");
    return {*c.seed_index};
  }
  std::vector<int> out;
  for (int k = 0; k < cfg.num_seeds; ++k) out.push_back(k);
  return out;
}

template <typename F>
void for_seeds(const std::string& stage, const Common& c, F&& f) {
  ExperimentConfig cfg;
  try {
    cfg = resolve(c);
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
  for (int k : seed_indices(cfg, c)) {
    try {
      f(cfg, make_seed_context(cfg, k));
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-curiosity exploration laboratory"};
  app.require_subcommand(1);

  Common gen_c, train_c, collect_c, finetune_c, eval_c, report_c, all_c;
  std::string reward;
  std::string policy;
  std::string finetune_policy;

  auto* gen = app.add_subcommand("gen-scenes", "generate and write the scene split");
  add_common(gen, gen_c);
  auto* train = app.add_subcommand("train-policy", "train an exploration policy on the unlabeled scenes");
  add_common(train, train_c);
  train->add_option("--reward", reward, "semantic_curiosity | coverage | object_count | curiosity")->required();
  auto* col = app.add_subcommand("collect", "collect oracle-labeled trajectories on the training scenes");
  add_common(col, collect_c);
  col->add_option("--policy", policy, "method name, e.g. random, semantic_curiosity, greedy_coverage")->required();
  auto* ft = app.add_subcommand("finetune", "finetune the detector on a method's trajectories");
  add_common(ft, finetune_c);
  ft->add_option("--policy", finetune_policy, "method name (default: every roster method)");
  auto* ev = app.add_subcommand("eval", "exploration metrics and held-out detector evaluation");
  add_common(ev, eval_c);
  auto* rep = app.add_subcommand("report", "pretrained accuracy on collected data and median tables");
  add_common(rep, report_c);
  auto* all = app.add_subcommand("run-all", "run every stage for every seed");
  add_common(all, all_c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      for_seeds("gen-scenes", gen_c, [](const ExperimentConfig& cfg, const SeedContext& ctx) {
        stage_gen_scenes(cfg, ctx);
        std::printf("seed %d: %zu/%zu/%zu scenes -> %s\n", ctx.index, ctx.unlabeled.size(), ctx.train.size(),
                    ctx.test.size(), (ctx.dir / "scenes").c_str());
      });
    } else if (*train) {
      const RewardKind kind = reward_kind_from_string(reward);
      for_seeds("train-policy", train_c, [&](const ExperimentConfig& cfg, const SeedContext& ctx) {
        const TrainResult r = stage_train_policy(cfg, ctx, kind);
        std::printf("seed %d: %s trained, %zu updates\n", ctx.index, to_string(kind), r.curve.size());
      });
    } else if (*col) {
      for_seeds("collect", collect_c, [&](const ExperimentConfig& cfg, const SeedContext& ctx) {
        const CollectResult r = stage_collect(cfg, ctx, policy);
        std::printf("seed %d: %s collected %zu samples\n", ctx.index, policy.c_str(), r.dataset.samples.size());
      });
    } else if (*ft) {
      for_seeds("finetune", finetune_c, [&](const ExperimentConfig& cfg, const SeedContext& ctx) {
        const std::vector<std::string> names = finetune_policy.empty() ? cfg.roster : std::vector{finetune_policy};
        for (const auto& name : names) {
          const DetectorModel m = stage_finetune(cfg, ctx, name);
          std::printf("seed %d: %s finetuned (version %d)\n", ctx.index, name.c_str(), m.version());
        }
      });
    } else if (*ev) {
      for_seeds("eval", eval_c, [](const ExperimentConfig& cfg, const SeedContext& ctx) {
        stage_table1(cfg, ctx);
        stage_table3(cfg, ctx);
        std::printf("seed %d: table1.csv, table3.csv -> %s\n", ctx.index, ctx.dir.c_str());
      });
    } else if (*rep) {
      for_seeds("report", report_c, [](const ExperimentConfig& cfg, const SeedContext& ctx) { stage_table2(cfg, ctx); });
      ExperimentConfig cfg = resolve(report_c);
      try {
        stage_report(cfg);
        write_manifest(cfg.output_dir, build_manifest(cfg.output_dir));
      } catch (const std::exception& e) {
        throw StageError("report", e.what());
      }
      std::printf("report -> %s\n", cfg.output_dir.c_str());
    } else if (*all) {
      ExperimentConfig cfg;
      try {
        cfg = resolve(all_c);
      } catch (const std::exception& e) {
        throw StageError("config", e.what());
      }
      const Manifest m = run_all(cfg);
      std::printf("run-all: %zu artifacts -> %s/manifest.json\n", m.files.size(), cfg.output_dir.c_str());
    }
  } catch (const StageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
