#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mipan/baselines.hpp"
#include "mipan/checkpoint.hpp"
#include "mipan/data.hpp"
#include "mipan/metrics.hpp"
#include "mipan/model.hpp"
#include "mipan/train.hpp"

namespace {

using namespace mipan;

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

std::string fmt_f(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key, std::size_t line) {
  try {
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::runtime_error("config: line " + std::to_string(line) + ": bad value for " + key);
  }
}

double parse_f64(const std::string& v, const std::string& key, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::runtime_error("config: line " + std::to_string(line) + ": bad value for " + key);
  }
}

bool parse_bool(const std::string& v, const std::string& key, std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: line " + std::to_string(line) + ": bad value for " + key);
}

struct FileConfig {
  ModelConfig model;
  TrainConfig train;
};

// `key = value` lines, `#` starts a comment, unknown keys are an error
FileConfig read_config(const std::string& path) {
  FileConfig fc;
  if (path.empty()) return fc;
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "bands")
      fc.model.bands = parse_u64(val, key, n);
    else if (key == "width")
      fc.model.width = parse_u64(val, key, n);
    else if (key == "blocks")
      fc.model.blocks = parse_u64(val, key, n);
    else if (key == "state_dim")
      fc.model.state_dim = parse_u64(val, key, n);
    else if (key == "patch")
      fc.model.patch = parse_u64(val, key, n);
    else if (key == "ratio")
      fc.model.ratio = parse_u64(val, key, n);
    else if (key == "variant")
      fc.model.variant = variant_from_name(val);
    else if (key == "mode") {
      if (val == "dual")
        fc.model.mode = ModalityMode::dual;
      else if (val == "ms_only")
        fc.model.mode = ModalityMode::ms_only;
      else
        throw std::runtime_error("config: line " + std::to_string(n) + ": bad value for mode");
    } else if (key == "steps")
      fc.train.steps = parse_u64(val, key, n);
    else if (key == "batch")
      fc.train.batch = parse_u64(val, key, n);
    else if (key == "lr_start")
      fc.train.lr_start = parse_f64(val, key, n);
    else if (key == "lr_end")
      fc.train.lr_end = parse_f64(val, key, n);
    else if (key == "clip_norm")
      fc.train.clip_norm = parse_f64(val, key, n);
    else if (key == "seed")
      fc.train.seed = parse_u64(val, key, n);
    else if (key == "parallel_scan")
      fc.train.parallel_scan = parse_bool(val, key, n);
    else
      throw std::runtime_error("config: line " + std::to_string(n) + ": unknown key " + key);
  }
  return fc;
}

void echo(const std::string& k, const std::string& v) { std::cerr << k << " = " << v << "\n"; }

void echo_model(const ModelConfig& c) {
  echo("bands", std::to_string(c.bands));
  echo("width", std::to_string(c.width));
  echo("blocks", std::to_string(c.blocks));
  echo("state_dim", std::to_string(c.state_dim));
  echo("patch", std::to_string(c.patch));
  echo("ratio", std::to_string(c.ratio));
  echo("variant", variant_name(c.variant));
  echo("mode", c.mode == ModalityMode::dual ? "dual" : "ms_only");
}

Tensor<double> batch1(const Tensor<double>& t) {
  Shape s{1};
  s.insert(s.end(), t.shape().begin(), t.shape().end());
  Tensor<double> out(std::move(s));
  std::copy(t.data(), t.data() + t.size(), out.data());
  return out;
}

Tensor<double> unbatch(const Tensor<double>& t) {
  Shape s(t.shape().begin() + 1, t.shape().end());
  Tensor<double> out(std::move(s));
  std::copy(t.data(), t.data() + t.size(), out.data());
  return out;
}

Tensor<double> clamp01(Tensor<double> t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::clamp(t[i], 0.0, 1.0);
  return t;
}

std::vector<Scene> load_split(const DatasetManifest& m, const std::string& split) {
  std::vector<Scene> out;
  for (const auto& e : m.scenes)
    if (e.split == split) out.push_back(load_scene(m, e.id));
  if (out.empty()) throw std::runtime_error("no scenes in split '" + split + "'");
  return out;
}

MetricsReport reduced_metrics(const Tensor<double>& fused, const Tensor<double>& gt) {
  MetricsReport r;
  r.psnr = psnr(fused, gt);
  r.ssim = ssim(fused, gt);
  r.sam = sam(fused, gt);
  r.ergas = ergas(fused, gt);
  return r;
}

MetricsReport fullres_metrics(const Tensor<double>& fused, const Tensor<double>& lms,
                              const Tensor<double>& pan) {
  auto q = qnr(fused, lms, pan);
  MetricsReport r;
  r.d_lambda = q.d_lambda;
  r.d_s = q.d_s;
  r.qnr = q.qnr;
  return r;
}

MetricsReport mean_report(const std::vector<MetricsReport>& rows) {
  MetricsReport m;
  auto avg = [&](std::optional<double> MetricsReport::*f) {
    if (!(rows.front().*f)) return;
    double acc = 0;
    for (const auto& r : rows) acc += *(r.*f);
    m.*f = acc / double(rows.size());
  };
  avg(&MetricsReport::psnr);
  avg(&MetricsReport::ssim);
  avg(&MetricsReport::sam);
  avg(&MetricsReport::ergas);
  avg(&MetricsReport::d_lambda);
  avg(&MetricsReport::d_s);
  avg(&MetricsReport::qnr);
  return m;
}

int run_synth(const std::string& out, std::size_t scenes, std::uint64_t seed, std::size_t size,
              std::size_t bands) {
  echo("command", "synth");
  echo("out", out);
  echo("scenes", std::to_string(scenes));
  echo("seed", std::to_string(seed));
  echo("size", std::to_string(size));
  echo("bands", std::to_string(bands));
  build_dataset(out, scenes, seed, size, size, bands);
  return 0;
}

int run_train(const std::string& data, const std::string& config, const std::string& out,
              std::optional<std::size_t> steps, std::optional<std::uint64_t> seed, bool parallel) {
  FileConfig fc = read_config(config);
  if (steps) fc.train.steps = *steps;
  if (seed) fc.train.seed = *seed;
  if (parallel) fc.train.parallel_scan = true;
  fc.train.checkpoint_path = out;
  fc.train.curve_path = out + ".curve.csv";

  echo("command", "train");
  echo("data", data);
  echo_model(fc.model);
  echo("steps", std::to_string(fc.train.steps));
  echo("batch", std::to_string(fc.train.batch));
  echo("lr_start", fmt_f(fc.train.lr_start));
  echo("lr_end", fmt_f(fc.train.lr_end));
  echo("clip_norm", fmt_f(fc.train.clip_norm));
  echo("seed", std::to_string(fc.train.seed));
  echo("parallel_scan", fc.train.parallel_scan ? "true" : "false");
  echo("checkpoint", fc.train.checkpoint_path);
  echo("curve", fc.train.curve_path);

  auto manifest = load_manifest(data);
  if (manifest.bands != fc.model.bands)
    throw std::runtime_error("train: dataset has " + std::to_string(manifest.bands) +
                             " bands, model expects " + std::to_string(fc.model.bands));
  const bool dual = fc.model.mode == ModalityMode::dual;
  std::vector<TrainSample<double>> samples;
  for (auto& sc : load_split(manifest, "train")) {
    TrainSample<double> s;
    s.lms = batch1(sc.lms);
    if (dual) s.pan = batch1(sc.pan);
    s.gt = batch1(sc.gt);
    samples.push_back(std::move(s));
  }

  Model<double> model(fc.model, fc.train.seed);
  auto curve = train(model, samples, fc.train);
  if (!curve.empty()) std::cout << "final_loss = " << fmt_f(curve.back().loss) << "\n";
  return 0;
}

int run_eval(const std::string& data, const std::string& ckpt, const std::string& config,
             const std::string& split, bool full_res, bool csv, bool parallel) {
  FileConfig fc = read_config(config);
  echo("command", "eval");
  echo("data", data);
  echo("ckpt", ckpt);
  echo("split", split);
  echo("full_res", full_res ? "true" : "false");
  echo_model(fc.model);

  Model<double> model(fc.model, 0);
  load_checkpoint(ckpt, model.params());
  const bool dual = fc.model.mode == ModalityMode::dual;

  auto manifest = load_manifest(data);
  std::vector<MetricsReport> base_rows, model_rows;
  for (const auto& sc : load_split(manifest, split)) {
    auto base = run_baseline(BaselineKind::bicubic, sc.lms, nullptr).fused;
    Tensor<double> lms = batch1(sc.lms), pan = batch1(sc.pan);
    auto fwd = model.forward(lms, dual ? &pan : nullptr, parallel);
    auto fused = clamp01(unbatch(fwd.hms->value));
    if (full_res) {
      base_rows.push_back(fullres_metrics(base, sc.lms, sc.pan));
      model_rows.push_back(fullres_metrics(fused, sc.lms, sc.pan));
    } else {
      base_rows.push_back(reduced_metrics(base, sc.gt));
      model_rows.push_back(reduced_metrics(fused, sc.gt));
    }
  }
  std::vector<std::pair<std::string, MetricsReport>> rows{
      {"bicubic", mean_report(base_rows)}, {"model", mean_report(model_rows)}};
  std::cout << (csv ? metrics_csv(rows) : metrics_table(rows));
  return 0;
}

int run_infer(const std::string& lms_path, const std::string& pan_path, const std::string& ckpt,
              const std::string& config, const std::string& out, bool parallel) {
  FileConfig fc = read_config(config);
  echo("command", "infer");
  echo("lms", lms_path);
  echo("pan", pan_path);
  echo("ckpt", ckpt);
  echo("out", out);
  echo_model(fc.model);

  Model<double> model(fc.model, 0);
  load_checkpoint(ckpt, model.params());
  Tensor<double> lms = batch1(load_tensor<double>(lms_path));
  Tensor<double> pan = batch1(load_tensor<double>(pan_path));
  auto fwd = model.forward(lms, &pan, parallel);
  save_tensor(out, clamp01(unbatch(fwd.hms->value)));
  return 0;
}

int run_sr(const std::string& lms_path, const std::string& ckpt, const std::string& config,
           const std::string& out, bool parallel) {
  FileConfig fc = read_config(config);
  fc.model.mode = ModalityMode::ms_only;
  echo("command", "sr");
  echo("lms", lms_path);
  echo("ckpt", ckpt);
  echo("out", out);
  echo_model(fc.model);

  Model<double> model(fc.model, 0);
  load_checkpoint(ckpt, model.params());
  Tensor<double> lms = batch1(load_tensor<double>(lms_path));
  auto fwd = model.forward(lms, nullptr, parallel);
  save_tensor(out, clamp01(unbatch(fwd.hms->value)));
  return 0;
}

int run_baseline_cmd(const std::string& kind_name, const std::string& data,
                     const std::string& split, bool full_res, bool csv) {
  const BaselineKind kind = baseline_from_name(kind_name);
  echo("command", "baseline");
  echo("kind", kind_name);
  echo("data", data);
  echo("split", split);
  echo("full_res", full_res ? "true" : "false");

  auto manifest = load_manifest(data);
  std::vector<MetricsReport> rows;
  double floor_acc = 0;
  std::size_t n = 0;
  for (const auto& sc : load_split(manifest, split)) {
    auto out = run_baseline(kind, sc.lms, kind == BaselineKind::bicubic ? nullptr : &sc.pan);
    floor_acc += out.floor_fraction;
    ++n;
    rows.push_back(full_res ? fullres_metrics(out.fused, sc.lms, sc.pan)
                            : reduced_metrics(out.fused, sc.gt));
  }
  const double floor_mean = floor_acc / double(n);
  if (floor_mean > 0.01)
    std::cerr << "warning: division floor engaged on " << fmt_f(100.0 * floor_mean)
              << "% of pixels\n";
  std::vector<std::pair<std::string, MetricsReport>> table{{kind_name, mean_report(rows)}};
  std::cout << (csv ? metrics_csv(table) : metrics_table(table));
  return 0;
}

int run_bench_scan(std::size_t len, std::size_t trials) {
  echo("command", "bench-scan");
  echo("len", std::to_string(len));
  echo("trials", std::to_string(trials));

  const std::size_t C = 16, N = 8;
  std::mt19937_64 g(0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> ua(0.05, 0.95);
  std::vector<ScanStep<double>> steps;
  steps.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    ScanStep<double> s{Tensor<double>({C, N}), Tensor<double>({C, N}), Tensor<double>({N}),
                       Tensor<double>({C})};
    for (std::size_t i = 0; i < C * N; ++i) {
      s.a[i] = ua(g);
      s.b[i] = u(g);
    }
    for (std::size_t i = 0; i < N; ++i) s.c[i] = u(g);
    for (std::size_t i = 0; i < C; ++i) s.x[i] = u(g);
    steps.push_back(std::move(s));
  }
  Tensor<double> d_skip(Shape{C});
  d_skip.fill(1.0);

  auto time_min = [&](auto&& fn) {
    double best = 1e300;
    for (std::size_t t = 0; t < trials; ++t) {
      auto t0 = std::chrono::steady_clock::now();
      auto y = fn();
      auto t1 = std::chrono::steady_clock::now();
      // fold the result in so the call cannot be elided
      volatile double sink = y[0];
      (void)sink;
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
  };
  const double t_seq = time_min([&] { return scan_sequential(steps, d_skip); });
  const double t_par = time_min([&] { return scan_parallel(steps, d_skip); });
  std::cout << "sequential_tokens_per_s = " << fmt_f(double(len) / t_seq) << "\n";
  std::cout << "parallel_tokens_per_s = " << fmt_f(double(len) / t_par) << "\n";
  return 0;
}

int run_count_params(const std::string& config) {
  FileConfig fc = read_config(config);
  echo("command", "count-params");
  echo_model(fc.model);
  Model<double> model(fc.model, 0);
  std::cout << model.count_params() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pan-sharpening workbench"};
  app.require_subcommand(1);

  std::string out, data, config, ckpt, lms_path, pan_path, split = "test", kind;
  std::size_t scenes = 8, size = 64, bands = 4, len = 4096, trials = 5;
  std::uint64_t seed_v = 0;
  std::optional<std::size_t> steps_opt;
  std::optional<std::uint64_t> seed_opt;
  bool full_res = false, csv = false, parallel = false;
  std::size_t steps_v = 0;

  int rc = 0;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--scenes", scenes, "number of scenes");
  synth->add_option("--seed", seed_v, "generator seed");
  synth->add_option("--size", size, "scene height and width");
  synth->add_option("--bands", bands, "spectral bands");
  synth->callback([&] { rc = run_synth(out, scenes, seed_v, size, bands); });

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--data", data, "dataset directory")->required();
  tr->add_option("--config", config, "config file");
  auto* tr_steps = tr->add_option("--steps", steps_v, "training steps");
  auto* tr_seed = tr->add_option("--seed", seed_v, "training seed");
  tr->add_flag("--parallel", parallel, "use the parallel scan");
  tr->add_option("--out", ckpt, "checkpoint path")->required();
  tr->callback([&] {
    if (tr_steps->count()) steps_opt = steps_v;
    if (tr_seed->count()) seed_opt = seed_v;
    rc = run_train(data, config, ckpt, steps_opt, seed_opt, parallel);
  });

  auto* ev = app.add_subcommand("eval", "score a checkpoint against the bicubic baseline");
  ev->add_option("--data", data, "dataset directory")->required();
  ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
  ev->add_option("--config", config, "config file");
  ev->add_option("--split", split, "dataset split")->check(CLI::IsMember({"train", "test"}));
  ev->add_flag("--full-res", full_res, "no-reference protocol on full-resolution inputs");
  ev->add_flag("--csv", csv, "machine-readable output");
  ev->add_flag("--parallel", parallel, "use the parallel scan");
  ev->callback([&] { rc = run_eval(data, ckpt, config, split, full_res, csv, parallel); });

  auto* in = app.add_subcommand("infer", "fuse one scene");
  in->add_option("--lms", lms_path, "low-resolution input tensor")->required();
  in->add_option("--pan", pan_path, "high-resolution single-band tensor")->required();
  in->add_option("--ckpt", ckpt, "checkpoint path")->required();
  in->add_option("--config", config, "config file");
  in->add_option("--out", out, "output tensor path")->required();
  in->add_flag("--parallel", parallel, "use the parallel scan");
  in->callback([&] { rc = run_infer(lms_path, pan_path, ckpt, config, out, parallel); });

  auto* sr = app.add_subcommand("sr", "upsample without the high-resolution modality");
  sr->add_option("--lms", lms_path, "low-resolution input tensor")->required();
  sr->add_option("--ckpt", ckpt, "checkpoint path")->required();
  sr->add_option("--config", config, "config file");
  sr->add_option("--out", out, "output tensor path")->required();
  sr->add_flag("--parallel", parallel, "use the parallel scan");
  sr->callback([&] { rc = run_sr(lms_path, ckpt, config, out, parallel); });

  auto* bl = app.add_subcommand("baseline", "score a classical method");
  bl->add_option("--kind", kind, "bicubic|ihs|brovey|sfim")
      ->required()
      ->check(CLI::IsMember({"bicubic", "ihs", "brovey", "sfim"}));
  bl->add_option("--data", data, "dataset directory")->required();
  bl->add_option("--split", split, "dataset split")->check(CLI::IsMember({"train", "test"}));
  bl->add_flag("--full-res", full_res, "no-reference protocol on full-resolution inputs");
  bl->add_flag("--csv", csv, "machine-readable output");
  bl->callback([&] { rc = run_baseline_cmd(kind, data, split, full_res, csv); });

  auto* bs = app.add_subcommand("bench-scan", "time the recurrence kernels");
  bs->add_option("--len", len, "sequence length");
  bs->add_option("--trials", trials, "timing repetitions");
  bs->callback([&] { rc = run_bench_scan(len, trials); });

  auto* cp = app.add_subcommand("count-params", "print the trainable parameter count");
  cp->add_option("--config", config, "config file");
  cp->callback([&] { rc = run_count_params(config); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
