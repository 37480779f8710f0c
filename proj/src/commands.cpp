#include "gatedbev/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "gatedbev/checkpoint.hpp"
#include "gatedbev/errors.hpp"
#include "gatedbev/json_io.hpp"
#include "gatedbev/kernels.hpp"
#include "gatedbev/rng.hpp"
#include "gatedbev/svg.hpp"

namespace gatedbev {

namespace fs = std::filesystem;

namespace {

RunConfig resolve_config(const std::optional<fs::path>& path, const std::string& fallback_json = "") {
  if (path) return load_config(*path);
  if (!fallback_json.empty()) return parse_config(fallback_json);
  return RunConfig{};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(IoError::Kind::unwritable, "cannot create directory '" + dir.string() + "'");
}

void echo_config(const fs::path& dir, const RunConfig& cfg) { write_file(dir / "config.json", config_to_json(cfg)); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string opt_str(const std::optional<double>& v) { return v ? fmt("%.4f", *v) : "-"; }

// Loads a checkpoint and checks it against a dataset's grid and class table.
Checkpoint load_matching(const fs::path& path, const Dataset& ds) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.grid == ds.manifest.grid))
    throw IoError(IoError::Kind::schema_mismatch, "checkpoint '" + path.string() + "' was trained on a different grid");
  if (static_cast<std::size_t>(ck.model.config.num_classes) != ds.manifest.classes.size())
    throw IoError(IoError::Kind::schema_mismatch,
                  "checkpoint '" + path.string() + "' has " + std::to_string(ck.model.config.num_classes) +
                      " classes, dataset has " + std::to_string(ds.manifest.classes.size()));
  return ck;
}

std::vector<std::string> class_names(const Dataset& ds) {
  std::vector<std::string> names;
  for (const auto& c : ds.manifest.classes) names.push_back(c.name);
  return names;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int run_guarded(const std::function<void()>& fn, std::ostream& err) {
  try {
    fn();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric abort at epoch " << e.epoch() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

std::vector<TrainingExample> build_examples(const Dataset& ds, Split split, const FeatureConfig& features,
                                            int num_classes) {
  std::vector<TrainingExample> out;
  for (std::size_t i : ds.indices(split))
    out.push_back(make_example(ds.samples[i], ds.manifest.grid, features, num_classes));
  return out;
}

std::vector<FrameBoxes> predict(const Model& model, const Dataset& ds, Split split, const FeatureConfig& features,
                                const DecodeConfig& decode) {
  std::vector<FrameBoxes> frames;
  const BEVGridSpec& grid = ds.manifest.grid;
  for (std::size_t i : ds.indices(split)) {
    const Sample& s = ds.samples[i];
    const DetectionMaps maps = model_forward(model, lidar_bev(s.cloud, grid, features), camera_bev(s.cameras, grid, features),
                                             s.context);
    frames.push_back({decode_detections(maps, grid, decode), s.annotations, s.context});
  }
  return frames;
}

EvalReport evaluate(const Model& model, const Dataset& ds, Split split, const RunConfig& cfg) {
  return context_breakdown(predict(model, ds, split, cfg.features, cfg.decode), class_names(ds), cfg.eval_thresholds);
}

ModelConfig model_config_for(const RunConfig& cfg, const BEVGridSpec& grid, std::size_t num_classes) {
  ModelConfig mc = cfg.model;
  mc.c1 = lidar_channels(grid);
  mc.c2 = camera_channels(cfg.features);
  mc.num_classes = static_cast<int>(num_classes);
  return mc;
}

DatasetManifest cmd_gen(const GenOptions& opt, std::ostream& log) {
  RunConfig cfg = resolve_config(opt.config);
  cfg.seed = opt.seed;
  if (opt.samples == 0 || opt.samples % kContextBuckets != 0)
    throw ConfigError("--samples must be a positive multiple of 4, got " + std::to_string(opt.samples));
  const auto classes = default_class_table();
  const auto samples = generate_samples(cfg.seed, opt.samples, cfg.grid, classes, cfg.synth);
  ensure_dir(opt.out);
  const DatasetManifest m = write_dataset(samples, cfg.train_fraction, cfg.seed, cfg.grid, classes, opt.out);
  echo_config(opt.out, cfg);

  log << "context        train    val  total\n";
  for (int b = 0; b < kContextBuckets; ++b) {
    const auto tr = m.context_counts[0][static_cast<std::size_t>(b)];
    const auto va = m.context_counts[1][static_cast<std::size_t>(b)];
    char line[96];
    std::snprintf(line, sizeof line, "%-12s %7zu %6zu %6zu\n", std::string(context_name(b)).c_str(), tr, va, tr + va);
    log << line;
  }
  return m;
}

TrainResult cmd_train(const TrainOptions& opt, std::ostream& log) {
  RunConfig cfg = resolve_config(opt.config);
  if (opt.variant) cfg.model.variant = *opt.variant;
  const Dataset ds = read_dataset(opt.data);
  cfg.grid = ds.manifest.grid;
  const ModelConfig mc = model_config_for(cfg, cfg.grid, ds.manifest.classes.size());
  cfg.model = mc;

  Model model = init_model(mc, cfg.train.seed, cfg.init);
  if (opt.init) {
    const Checkpoint ck = load_matching(*opt.init, ds);
    const ModelConfig& src = ck.model.config;
    if (src.c1 != mc.c1 || src.c2 != mc.c2 || src.c_out != mc.c_out)
      throw IoError(IoError::Kind::schema_mismatch, "--init checkpoint has different channel counts");
    model.fusion = ck.model.fusion;
    model.head = ck.model.head;
    if (src.variant == mc.variant) model.gate = ck.model.gate;
  }
  if (opt.gates_only) {
    if (mc.variant == Variant::agnostic) throw ConfigError("--gates-only needs a gated variant");
    const auto rest = non_gate_parameter_names(model);
    cfg.train.freeze.insert(rest.begin(), rest.end());
  }

  const auto examples = build_examples(ds, Split::train, cfg.features, mc.num_classes);
  if (examples.empty()) throw ConfigError("dataset '" + opt.data.string() + "' has no training samples");
  ensure_dir(opt.out);
  echo_config(opt.out, cfg);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(model, examples, cfg.train, [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << "/" << cfg.train.epochs << " loss " << fmt("%.6f", r.loss) << " focal "
        << fmt("%.6f", r.focal) << " l1 " << fmt("%.6f", r.regression) << "\n";
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_checkpoint({result.model, cfg.grid, config_to_json(cfg)}, opt.out / "ckpt.bin");
  json hist = json::array();
  Series loss{"total", {}}, focal{"focal", {}}, reg{"l1 x lambda", {}};
  for (const auto& r : result.history) {
    hist.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"focal", r.focal}, {"regression", r.regression}});
    loss.values.push_back(r.loss);
    focal.values.push_back(r.focal);
    reg.values.push_back(r.regression * cfg.train.loss.lambda_reg);
  }
  const json doc = {{"variant", variant_name(mc.variant)},
                    {"train_samples", examples.size()},
                    {"seconds", secs},
                    {"history", hist},
                    {"config", json::parse(config_to_json(cfg))}};
  write_file(opt.out / "loss.json", doc.dump(2) + "\n");
  write_file(opt.out / "loss.svg",
             svg_line_chart("training loss (" + std::string(variant_name(mc.variant)) + ")", {loss, focal, reg}, "epoch",
                            "loss"));
  log << "trained " << variant_name(mc.variant) << " on " << examples.size() << " samples in " << fmt("%.1f", secs)
      << " s\n";
  return result;
}

EvalReport cmd_eval(const EvalOptions& opt, std::ostream& log) {
  const Dataset ds = read_dataset(opt.data);
  const Checkpoint ck = load_matching(opt.ckpt, ds);
  RunConfig cfg = resolve_config(opt.config, ck.config_json);
  cfg.grid = ds.manifest.grid;
  cfg.model = ck.model.config;
  const EvalReport report = evaluate(ck.model, ds, Split::val, cfg);
  ensure_dir(opt.out);
  echo_config(opt.out, cfg);
  write_report(report, opt.out, config_to_json(cfg));
  log << "context        mAP\n";
  log << "overall        " << opt_str(report.overall.map) << "\n";
  for (const auto& t : report.contexts) {
    char line[64];
    std::snprintf(line, sizeof line, "%-14s %s\n", t.name.c_str(), opt_str(t.map).c_str());
    log << line;
  }
  return report;
}

std::optional<double> CompareRow::delta() const {
  if (!a || !b) return std::nullopt;
  return *b - *a;
}

std::vector<CompareRow> cmd_compare(const CompareOptions& opt, std::ostream& log) {
  const Dataset ds = read_dataset(opt.data);
  const Checkpoint ca = load_matching(opt.ckpt_a, ds);
  const Checkpoint cb = load_matching(opt.ckpt_b, ds);
  if (ca.model.config.num_classes != cb.model.config.num_classes)
    throw ConfigError("checkpoints have mismatched class tables");
  RunConfig cfg = resolve_config(opt.config, ca.config_json);
  cfg.grid = ds.manifest.grid;
  const EvalReport ra = evaluate(ca.model, ds, Split::val, cfg);
  const EvalReport rb = evaluate(cb.model, ds, Split::val, cfg);

  std::vector<CompareRow> rows;
  std::vector<std::string> cats;
  Series sa{"a: " + std::string(variant_name(ca.model.config.variant)), {}};
  Series sb{"b: " + std::string(variant_name(cb.model.config.variant)), {}};
  auto add = [&](const ContextTable& ta, const ContextTable& tb) {
    for (std::size_t c = 0; c < ra.class_names.size(); ++c) rows.push_back({ta.name, ra.class_names[c], ta.ap[c], tb.ap[c]});
    rows.push_back({ta.name, "all", ta.map, tb.map});
    cats.push_back(ta.name);
    sa.values.push_back(ta.map.value_or(0.0));
    sb.values.push_back(tb.map.value_or(0.0));
  };
  add(ra.overall, rb.overall);
  for (std::size_t b = 0; b < kContextBuckets; ++b) add(ra.contexts[b], rb.contexts[b]);

  ensure_dir(opt.out);
  echo_config(opt.out, cfg);
  std::string csv = "context,class,ap_a,ap_b,delta\n";
  for (const auto& r : rows)
    csv += r.context + "," + r.class_name + "," + opt_str(r.a) + "," + opt_str(r.b) + "," + opt_str(r.delta()) + "\n";
  write_file(opt.out / "compare.csv", csv);
  write_file(opt.out / "compare.svg", svg_bar_chart("mAP by context", cats, {sa, sb}, "mAP (%)"));
  log << "context        mAP a     mAP b     delta\n";
  for (const auto& r : rows) {
    if (r.class_name != "all") continue;
    char line[96];
    std::snprintf(line, sizeof line, "%-14s %-9s %-9s %s\n", r.context.c_str(), opt_str(r.a).c_str(),
                  opt_str(r.b).c_str(), opt_str(r.delta()).c_str());
    log << line;
  }
  return rows;
}

BenchResult run_bench(const Model& model, int height, int width, int iters, std::uint64_t seed) {
  if (iters < 1) throw ConfigError("--iters must be >= 1");
  const ModelConfig& mc = model.config;
  Rng rng(seed);
  const auto h = static_cast<std::size_t>(height), w = static_cast<std::size_t>(width);
  Tensor f1({static_cast<std::size_t>(mc.c1), h, w}), f2({static_cast<std::size_t>(mc.c2), h, w});
  for (double& v : f1.data) v = rng.uniform();
  for (double& v : f2.data) v = rng.uniform();
  const GateVectors gates = gate_from_context(model.gate, mc.variant, Context{true, true}, mc.c1, mc.c2);

  using clock = std::chrono::steady_clock;
  std::vector<double> tg, tp;
  double sink = 0.0;
  // Warm both paths, then alternate so drift hits them equally.
  sink += gated_conv(f1, f2, gates, model.fusion).data[0] + plain_conv(f1, f2, model.fusion).data[0];
  for (int i = 0; i < iters; ++i) {
    const bool gated_first = i % 2 == 0;
    for (int k = 0; k < 2; ++k) {
      const bool gated = (k == 0) == gated_first;
      const auto t0 = clock::now();
      const Tensor out = gated ? gated_conv(f1, f2, gates, model.fusion) : plain_conv(f1, f2, model.fusion);
      const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      sink += out.data[0];
      (gated ? tg : tp).push_back(ms);
    }
  }
  if (!std::isfinite(sink)) throw NumericError("benchmark produced a non-finite output", 0);
  BenchResult r{iters, height, width, median(tg), median(tp), 0.0};
  r.ratio = r.gated_median_ms / r.plain_median_ms;
  return r;
}

BenchResult cmd_bench(const BenchOptions& opt, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(opt.ckpt);
  RunConfig cfg = resolve_config(opt.config, ck.config_json);
  cfg.grid = ck.grid;
  cfg.model = ck.model.config;
  const BenchResult r = run_bench(ck.model, ck.grid.height(), ck.grid.width(), opt.iters, cfg.seed);
  const fs::path dir = opt.out ? *opt.out : opt.ckpt.parent_path().empty() ? fs::path(".") : opt.ckpt.parent_path();
  ensure_dir(dir);
  const json doc = {{"iters", r.iters},
                    {"height", r.height},
                    {"width", r.width},
                    {"c1", ck.model.config.c1},
                    {"c2", ck.model.config.c2},
                    {"c_out", ck.model.config.c_out},
                    {"isa", kernels::isa_name(kernels::active_isa())},
                    {"gated_median_ms", r.gated_median_ms},
                    {"plain_median_ms", r.plain_median_ms},
                    {"ratio", r.ratio},
                    {"config", json::parse(config_to_json(cfg))}};
  write_file(dir / "bench.json", doc.dump(2) + "\n");
  log << "gated " << fmt("%.4f", r.gated_median_ms) << " ms, plain " << fmt("%.4f", r.plain_median_ms)
      << " ms, ratio " << fmt("%.4f", r.ratio) << "\n";
  return r;
}

}  // namespace gatedbev
