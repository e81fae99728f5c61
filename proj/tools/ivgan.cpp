// ivgan: training, generation, task application, evaluation, and data
// synthesis for the video WGAN-GP.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "ivgan/config.hpp"
#include "ivgan/gradcheck.hpp"
#include "ivgan/io.hpp"

namespace fs = std::filesystem;
using namespace ivgan;

namespace {

// Network geometry is stored inside the checkpoint so generate/apply can
// rebuild the nets without the original config file.
Tensor<float> net_meta(const NetConfig& net) {
  Tensor<float> m({8});
  m[0] = net.preset == ScalePreset::Full ? 0.f : 1.f;
  m[1] = float(net.z_dim);
  m[2] = float(net.frames);
  m[3] = float(net.height);
  m[4] = float(net.width);
  m[5] = float(net.channels);
  m[6] = float(net.base_width);
  m[7] = float(net.gen_blocks);
  return m;
}

NetConfig net_from_meta(const Tensor<float>& m) {
  if (m.numel() != 8) throw std::runtime_error("checkpoint: bad meta.net");
  NetConfig net = m[0] == 0.f ? NetConfig::full() : NetConfig::desk();
  net.z_dim = int64_t(m[1]);
  net.frames = int64_t(m[2]);
  net.height = int64_t(m[3]);
  net.width = int64_t(m[4]);
  net.channels = int64_t(m[5]);
  net.base_width = int64_t(m[6]);
  net.gen_blocks = int64_t(m[7]);
  net.validate();
  return net;
}

NamedTensors snapshot(std::vector<std::pair<std::string, Tensor<float>*>> state,
                      const NetConfig& net, int64_t encoder_channels = 0) {
  NamedTensors out;
  out.emplace_back("meta.net", net_meta(net));
  if (encoder_channels > 0)
    out.emplace_back("meta.encoder_channels",
                     Tensor<float>({1}, float(encoder_channels)));
  for (auto& [name, t] : state) out.emplace_back(name, *t);
  return out;
}

const Tensor<float>& find_tensor(const NamedTensors& ts, const std::string& name) {
  for (const auto& [n, t] : ts)
    if (n == name) return t;
  throw std::runtime_error("checkpoint: missing tensor \"" + name + "\"");
}

void restore(std::vector<std::pair<std::string, Tensor<float>*>> state,
             const NamedTensors& ts) {
  for (auto& [name, ptr] : state) {
    const Tensor<float>& src = find_tensor(ts, name);
    if (src.shape() != ptr->shape())
      throw std::runtime_error("checkpoint: shape mismatch for \"" + name +
                               "\": " + shape_str(src.shape()) + " vs " +
                               shape_str(ptr->shape()));
    *ptr = src;
  }
}

std::string report_json(const StepReport& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["wasserstein"] = r.wasserstein;
  j["penalty"] = r.penalty;
  j["critic_loss"] = r.critic_loss;
  j["generator_loss"] = r.generator_loss;
  j["critic_grad_norm"] = r.critic_grad_norm;
  j["generator_grad_norm"] = r.generator_grad_norm;
  j["l_ap"] = r.l_ap;
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

void prepare_out_dir(const RunConfig& cfg, const std::string& out) {
  fs::create_directories(out);
  detail::write_file_atomic((fs::path(out) / "resolved_config.json").string(),
                            resolved_config_text(cfg));
}

ClipDataset make_dataset(const RunConfig& cfg) {
  return ClipDataset::synthetic(cfg.data, cfg.dataset_size);
}

std::string ckpt_name(const std::string& out, int64_t step) {
  std::ostringstream ss;
  ss << "ckpt_" << std::setw(7) << std::setfill('0') << step << ".ivgc";
  return (fs::path(out) / ss.str()).string();
}

int cmd_train(const std::string& config_path, const std::string& out) {
  RunConfig cfg = config_path.empty() ? config_from_json_text("{}")
                                      : load_config(config_path);
  prepare_out_dir(cfg, out);
  ClipDataset ds = make_dataset(cfg);
  Batcher batcher(ds, cfg.train.batch_size, Rng::mix(cfg.train.seed, 100));
  GanTrainer<float> tr(cfg.train, cfg.net);
  MetricsWriter metrics((fs::path(out) / "metrics.jsonl").string());
  tr.train_loop(
      batcher,
      [&](const StepReport& r) {
        metrics.write_line(report_json(r));
        if ((r.step + 1) % 50 == 0 || r.step == 0)
          std::cerr << "step " << r.step << " w=" << r.wasserstein
                    << " gp=" << r.penalty << "\n";
      },
      [&](int64_t step) {
        save_checkpoint(ckpt_name(out, step), snapshot(tr.state_tensors(), cfg.net));
      });
  return 0;
}

int cmd_task_train(const std::string& task, const std::string& config_path,
                   const std::string& out) {
  RunConfig cfg = config_path.empty() ? config_from_json_text("{}")
                                      : load_config(config_path);
  if (!task.empty()) cfg.task.task = detail::task_from(task);
  prepare_out_dir(cfg, out);
  ClipDataset ds = make_dataset(cfg);
  Batcher batcher(ds, cfg.train.batch_size, Rng::mix(cfg.train.seed, 100));
  TaskTrainer<float> tr(cfg.train, cfg.net, cfg.task);
  MetricsWriter metrics((fs::path(out) / "metrics.jsonl").string());
  tr.train_loop(
      batcher,
      [&](const StepReport& r) {
        metrics.write_line(report_json(r));
        if ((r.step + 1) % 50 == 0 || r.step == 0)
          std::cerr << "step " << r.step << " l_ap=" << r.l_ap
                    << " gp=" << r.penalty << "\n";
      },
      [&](int64_t step) {
        save_checkpoint(ckpt_name(out, step),
                        snapshot(tr.state_tensors(), cfg.net,
                                 cfg.task.condition_channels()));
      });
  return 0;
}

int cmd_generate(const std::string& ckpt, int64_t n, uint64_t seed,
                 const std::string& out) {
  NamedTensors ts = load_checkpoint(ckpt);
  NetConfig net = net_from_meta(find_tensor(ts, "meta.net"));
  GeneratorNet<float> G = build_generator<float>(net, 0);
  restore(G.state_tensors(), ts);
  fs::create_directories(out);
  for (int64_t i = 0; i < n; ++i) {
    Var<float> z = Var<float>::constant(
        rng_fill<float>(Dist::Normal01, {1, net.z_dim}, Rng::mix(seed, uint64_t(i))));
    Tensor<float> clip = generator_forward(G, z, /*training=*/false).value();
    Clip c = reshape(clip, {net.frames, net.height, net.width, net.channels});
    std::ostringstream name;
    name << "sample_" << std::setw(4) << std::setfill('0') << i << ".ivc";
    save_clip((fs::path(out) / name.str()).string(), c);
  }
  return 0;
}

int cmd_apply(const std::string& task_name_str, const std::string& ckpt,
              const std::string& input, uint64_t seed, const std::string& out) {
  NamedTensors ts = load_checkpoint(ckpt);
  NetConfig net = net_from_meta(find_tensor(ts, "meta.net"));
  int64_t enc_ch = int64_t(find_tensor(ts, "meta.encoder_channels")[0]);
  TaskSpec spec;
  spec.task = detail::task_from(task_name_str);
  if (spec.condition_channels() != enc_ch)
    throw std::runtime_error("checkpoint was trained for a " +
                             std::to_string(enc_ch) +
                             "-channel condition; task \"" + task_name_str +
                             "\" does not match");
  GeneratorNet<float> G = build_generator<float>(net, 0);
  EncoderNet<float> E = build_encoder<float>(net, enc_ch, 0);
  restore(G.state_tensors(), ts);
  restore(E.state_tensors(), ts);

  Clip clip = load_clip(input);
  Shape want{net.frames, net.height, net.width, net.channels};
  if (clip.shape() != want)
    throw std::runtime_error("input clip is " + shape_str(clip.shape()) +
                             ", the checkpoint expects " + shape_str(want));
  Tensor<float> real = reshape(clip, {1, want[0], want[1], want[2], want[3]});
  Tensor<float> cond = make_condition(spec, real, seed);

  fs::create_directories(out);
  Var<float> code = encoder_forward(E, Var<float>::constant(cond), false);
  Tensor<float> fake = generator_forward(G, code, false).value();
  Clip result = reshape(fake, want);
  save_clip((fs::path(out) / "reconstruction.ivc").string(), result);
  Shape cond_shape{want[0], want[1], want[2], int64_t(cond.shape().back())};
  save_clip((fs::path(out) / "condition.ivc").string(),
            reshape(cond, cond_shape));
  fs::create_directories(fs::path(out) / "frames");
  export_frames(result, (fs::path(out) / "frames").string());
  return 0;
}

int cmd_eval_psnr(const std::string& a, const std::string& b,
                  const std::string& space) {
  PsnrSpace s;
  if (space == "gray") {
    s = PsnrSpace::Gray;
  } else if (space == "rgb") {
    s = PsnrSpace::Rgb;
  } else {
    throw CLI::ValidationError("--space must be gray or rgb");
  }
  double db = psnr(load_clip(a), load_clip(b), s);
  std::cout << db << "\n";
  return 0;
}

int cmd_data_synth(const std::string& preset, int64_t n, uint64_t seed,
                   const std::string& out) {
  SynthSpec spec;
  spec.preset = detail::preset_from(preset);
  spec.seed = seed;
  fs::create_directories(out);
  for (int64_t i = 0; i < n; ++i) {
    std::ostringstream name;
    name << "clip_" << std::setw(4) << std::setfill('0') << i << ".ivc";
    save_clip((fs::path(out) / name.str()).string(), synth_clip(spec, i));
  }
  return 0;
}

int cmd_gradcheck() {
  auto results = run_gradcheck(1e-4);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "pass" : "FAIL") << "  " << r.op
              << "  max_rel_err=" << r.max_rel_err << "\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video WGAN-GP training and evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt, input, task, space = "gray";
  std::string preset = "moving-squares-static-bg";
  std::string path_a, path_b;
  int64_t n = 1;
  uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "unconditional WGAN-GP training");
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--out", out_dir, "output directory")->required();

  auto* task_train = app.add_subcommand("task-train", "conditional task training");
  task_train->add_option("--task", task,
                         "colorize-sup|colorize-unsup|inpaint|predict");
  task_train->add_option("--config", config_path, "JSON config file");
  task_train->add_option("--out", out_dir, "output directory")->required();

  auto* generate = app.add_subcommand("generate", "sample clips from z");
  generate->add_option("--ckpt", ckpt, "checkpoint file")->required();
  generate->add_option("--n", n, "number of clips");
  generate->add_option("--seed", seed, "sampling seed");
  generate->add_option("--out", out_dir, "output directory")->required();

  auto* apply = app.add_subcommand("apply", "run encoder+generator on a clip");
  apply->add_option("--task", task,
                    "colorize-sup|colorize-unsup|inpaint|predict")->required();
  apply->add_option("--ckpt", ckpt, "checkpoint file")->required();
  apply->add_option("--input", input, "input .ivc clip")->required();
  apply->add_option("--seed", seed, "corruption seed");
  apply->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "metrics");
  auto* eval_psnr = eval->add_subcommand("psnr", "PSNR between two clips");
  eval_psnr->add_option("--a", path_a, "first .ivc clip")->required();
  eval_psnr->add_option("--b", path_b, "second .ivc clip")->required();
  eval_psnr->add_option("--space", space, "gray|rgb");
  eval->require_subcommand(1);

  auto* data_synth = app.add_subcommand("data-synth", "write synthetic clips");
  data_synth->add_option("--preset", preset,
                         "moving-squares-static-bg|moving-squares-panning-bg");
  data_synth->add_option("--n", n, "number of clips");
  data_synth->add_option("--seed", seed, "dataset seed");
  data_synth->add_option("--out", out_dir, "output directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference suite");
  (void)gradcheck;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors -> 2
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir);
    if (task_train->parsed()) return cmd_task_train(task, config_path, out_dir);
    if (generate->parsed()) return cmd_generate(ckpt, n, seed, out_dir);
    if (apply->parsed()) return cmd_apply(task, ckpt, input, seed, out_dir);
    if (eval->parsed()) return cmd_eval_psnr(path_a, path_b, space);
    if (data_synth->parsed()) return cmd_data_synth(preset, n, seed, out_dir);
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
