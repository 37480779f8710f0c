#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gatedbev/commands.hpp"
#include "gatedbev/fusion.hpp"

using namespace gatedbev;

namespace {

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-gated lidar/camera BEV fusion on a synthetic adverse-condition dataset"};
  app.require_subcommand(1);

  std::string config;
  app.add_option("--config", config, "run config JSON (gatedbev-config/1)");

  GenOptions gen;
  std::string gen_out;
  auto* g = app.add_subcommand("gen", "generate a context-balanced dataset");
  g->add_option("--out", gen_out, "output directory")->required();
  g->add_option("--samples", gen.samples, "sample count, a multiple of 4")->default_val(400);
  g->add_option("--seed", gen.seed, "dataset seed")->default_val(7);
  g->add_option("--config", config, "run config JSON");

  TrainOptions tr;
  std::string tr_data, tr_out, tr_init, tr_variant;
  auto* t = app.add_subcommand("train", "train a detector variant");
  t->add_option("--data", tr_data, "dataset directory")->required();
  t->add_option("--out", tr_out, "output directory")->required();
  t->add_option("--variant", tr_variant, "constrained | independent | agnostic")
      ->check(CLI::IsMember({"constrained", "independent", "agnostic"}));
  t->add_flag("--gates-only", tr.gates_only, "train only the gate network");
  t->add_option("--init", tr_init, "initial checkpoint");
  t->add_option("--config", config, "run config JSON");

  EvalOptions ev;
  std::string ev_data, ev_ckpt, ev_out;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  e->add_option("--data", ev_data, "dataset directory")->required();
  e->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  e->add_option("--out", ev_out, "output directory")->required();
  e->add_option("--config", config, "run config JSON");

  CompareOptions cmp;
  std::string c_data, c_a, c_b, c_out;
  auto* c = app.add_subcommand("compare", "per-context mAP and per-class AP deltas of two checkpoints");
  c->add_option("--data", c_data, "dataset directory")->required();
  c->add_option("--ckpt-a", c_a, "baseline checkpoint")->required();
  c->add_option("--ckpt-b", c_b, "candidate checkpoint")->required();
  c->add_option("--out", c_out, "output directory")->required();
  c->add_option("--config", config, "run config JSON");

  BenchOptions bench;
  std::string b_ckpt, b_out;
  auto* b = app.add_subcommand("bench", "gated vs plain fusion conv latency");
  b->add_option("--ckpt", b_ckpt, "checkpoint")->required();
  b->add_option("--iters", bench.iters, "timed iterations per path")->default_val(50);
  b->add_option("--out", b_out, "output directory (default: checkpoint directory)");
  b->add_option("--config", config, "run config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitConfig;
  }

  return run_guarded(
      [&] {
        if (*g) {
          gen.out = gen_out;
          gen.config = opt_path(config);
          cmd_gen(gen, std::cout);
        } else if (*t) {
          tr.data = tr_data;
          tr.out = tr_out;
          if (!tr_variant.empty()) tr.variant = parse_variant(tr_variant);
          tr.init = opt_path(tr_init);
          tr.config = opt_path(config);
          cmd_train(tr, std::cout);
        } else if (*e) {
          ev.data = ev_data;
          ev.ckpt = ev_ckpt;
          ev.out = ev_out;
          ev.config = opt_path(config);
          cmd_eval(ev, std::cout);
        } else if (*c) {
          cmp.data = c_data;
          cmp.ckpt_a = c_a;
          cmp.ckpt_b = c_b;
          cmp.out = c_out;
          cmp.config = opt_path(config);
          cmd_compare(cmp, std::cout);
        } else if (*b) {
          bench.ckpt = b_ckpt;
          bench.out = opt_path(b_out);
          bench.config = opt_path(config);
          cmd_bench(bench, std::cout);
        }
      },
      std::cerr);
}
