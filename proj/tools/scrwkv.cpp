#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "scrwkv/dywkv.hpp"
#include "scrwkv/functional.hpp"
#include "scrwkv/gradsuite.hpp"
#include "scrwkv/io.hpp"
#include "scrwkv/metrics.hpp"
#include "scrwkv/network.hpp"
#include "scrwkv/train.hpp"

using namespace scrwkv;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kIo = 2;

// Raised when a command ran but its checks did not pass.
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  if (!fs::exists(path)) throw IoError("config file not found: " + path);
  return load_run_config(path);
}

Tensor<float> resize_image(const Tensor<float>& img, Index h, Index w) {
  const Tensor<float> batched = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  return bilinear_resize(batched, h, w).reshaped({img.dim(0), h, w});
}

int cmd_infer(const std::string& config_path, const std::string& weights, const std::string& input,
              const std::string& output, double threshold) {
  const RunConfig rc = config_or_default(config_path);
  if (!fs::exists(weights)) throw IoError("weights not found: " + weights);
  if (!fs::exists(input)) throw IoError("input not found: " + input);
  Model<float> model(rc.model);
  load_checkpoint(weights, model.params());
  const ModelConfig& cfg = model.config();

  std::vector<fs::path> images;
  if (fs::is_directory(input))
    images = list_images(input);
  else
    images.push_back(input);
  if (images.empty()) throw IoError("no PNG/PGM images in " + input);
  fs::create_directories(fs::path(output) / "masks");
  fs::create_directories(fs::path(output) / "probs");

  NoGradGuard no_grad;
  for (const auto& path : images) {
    Tensor<float> img = read_image(path);
    const Index h = img.dim(1), w = img.dim(2);
    if (h != cfg.height || w != cfg.width) {
      std::cerr << "warning: " << path.filename().string() << " is " << h << "x" << w
                << ", resized to " << cfg.height << "x" << cfg.width << "\n";
      img = resize_image(img, cfg.height, cfg.width);
    }
    const Var<float> logits = model.forward(Var<float>(img.reshaped({1, 3, cfg.height, cfg.width})));
    Tensor<float> prob = sigmoid(logits.value());
    if (h != cfg.height || w != cfg.width) prob = bilinear_resize(prob, h, w);
    prob.reshape({h, w});
    const std::string name = path.stem().string() + ".png";
    write_mask(fs::path(output) / "masks" / name, prob, threshold);
    write_gray(fs::path(output) / "probs" / name, prob);
    std::cout << path.filename().string() << " -> masks/" << name << ", probs/" << name << "\n";
  }
  return kOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& report_path,
             const std::string& config_path) {
  const RunConfig rc = config_or_default(config_path);
  const auto preds = list_images(pred_dir);
  if (preds.empty()) throw IoError("no prediction images in " + pred_dir);
  std::vector<Tensor<float>> p, g;
  for (const auto& pred : preds) {
    fs::path gt;
    for (const char* ext : {".png", ".pgm"}) {
      const fs::path candidate = fs::path(gt_dir) / (pred.stem().string() + ext);
      if (fs::exists(candidate)) gt = candidate;
    }
    if (gt.empty()) throw ShapeError("no ground-truth mask for " + pred.filename().string());
    p.push_back(read_gray(pred));
    Tensor<float> mask = read_gray(gt);
    for (auto& v : mask.values()) v = v > 0.5f ? 1.0f : 0.0f;
    if (mask.shape() != p.back().shape())
      throw ShapeError(pred.filename().string() + ": prediction " + shape_str(p.back().shape()) +
                       " vs mask " + shape_str(mask.shape()));
    g.push_back(std::move(mask));
  }
  const MetricReport report = compute_metrics(p, g, rc.thresholds);
  std::ostringstream csv;
  write_report_csv(csv, report);
  write_file_atomic(report_path, csv.str());
  std::cout << "images     " << preds.size() << "\n";
  write_report_text(std::cout, report);
  return kOk;
}

std::vector<CrackSample> load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const auto images = list_images(root / "images");
  if (images.empty()) throw IoError("no images in " + (root / "images").string());
  std::vector<CrackSample> out;
  for (const auto& path : images) {
    const fs::path mask_path = root / "masks" / (path.stem().string() + ".png");
    if (!fs::exists(mask_path)) throw IoError("missing mask " + mask_path.string());
    CrackSample s{read_image(path), read_gray(mask_path), 0};
    for (auto& v : s.mask.values()) v = v > 0.5f ? 1.0f : 0.0f;
    out.push_back(std::move(s));
  }
  return out;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              Index steps) {
  RunConfig rc = config_or_default(config_path);
  if (steps >= 0) rc.optim.max_steps = steps;
  std::vector<CrackSample> samples;
  if (data == "synthetic") {
    samples = synth_cracks(rc.data.samples, rc.data.size, rc.data.seed, rc.data.synth);
    if (rc.model.height != rc.data.size || rc.model.width != rc.data.size)
      throw ShapeError("synthetic size " + std::to_string(rc.data.size) +
                       " does not match model resolution " + std::to_string(rc.model.height) + "x" +
                       std::to_string(rc.model.width));
  } else {
    samples = load_dataset(data);
    for (const auto& s : samples)
      if (s.mask.dim(0) != rc.model.height || s.mask.dim(1) != rc.model.width)
        throw ShapeError("training images must match the model resolution");
  }
  fs::create_directories(out);
  Model<float> model(rc.model);
  TrainOptions opt;
  opt.loss = rc.loss;
  opt.optim = rc.optim;
  opt.batch_size = rc.batch_size;
  const auto start = std::chrono::steady_clock::now();
  opt.on_step = [&](const TrainLogRow& r) {
    if (r.step % 10 == 0 || r.step + 1 == rc.optim.max_steps)
      std::cout << "step " << std::setw(5) << r.step << "  lr " << std::scientific
                << std::setprecision(3) << r.lr << std::defaultfloat << "  loss "
                << std::setprecision(5) << r.loss << "  dice " << r.dice << std::endl;
    return true;
  };
  const TrainResult result = train(model, samples, opt);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_checkpoint(fs::path(out) / "model.ckpt", rc.model, model.params());
  std::ostringstream log;
  write_train_log(log, result.log);
  write_file_atomic(fs::path(out) / "loss_log.csv", log.str());
  std::cout << "final loss " << result.final_loss << "  dice " << result.final_dice << "  ("
            << std::fixed << std::setprecision(1) << seconds << " s)\n"
            << "wrote " << (fs::path(out) / "model.ckpt").string() << " and loss_log.csv\n";
  return kOk;
}

int cmd_gradcheck(const std::string& module, const std::string& report_path) {
  const auto reports = run_gradient_suite(module);
  std::ostringstream csv;
  csv << "op,max_rel_error,tolerance,coords,pass\n";
  bool all = true;
  for (const auto& r : reports) {
    std::cout << std::left << std::setw(24) << r.op << std::scientific << std::setprecision(3)
              << r.max_rel_error << "  < " << r.tolerance << "  " << (r.pass ? "PASS" : "FAIL")
              << std::defaultfloat << "\n";
    csv << r.op << ',' << r.max_rel_error << ',' << r.tolerance << ',' << r.coords_checked << ','
        << (r.pass ? 1 : 0) << '\n';
    all = all && r.pass;
  }
  if (!report_path.empty()) write_file_atomic(report_path, csv.str());
  if (!all) throw CheckFailure("gradient check failed");
  return kOk;
}

int cmd_bench(const std::string& op, const std::vector<Index>& sizes, Index channels, bool naive,
              const std::string& csv_path) {
  if (op != "dywkv") throw ShapeError("bench: unsupported op '" + op + "' (only dywkv)");
  WkvBenchOptions opt;
  if (!sizes.empty()) opt.tokens = sizes;
  opt.channels = channels;
  opt.include_naive = naive;
  std::vector<WkvBenchRow> rows;
  try {
    rows = bench_wkv(opt);
  } catch (const std::runtime_error& e) {
    throw CheckFailure(e.what());
  }
  std::ostringstream csv;
  write_bench_csv(csv, rows);
  std::cout << csv.str();
  if (!csv_path.empty()) write_file_atomic(csv_path, csv.str());
  return kOk;
}

int cmd_count(const std::string& config_path) {
  const RunConfig rc = config_or_default(config_path);
  const auto items = count_flops(rc.model);
  const Index pos_embed = rc.model.tokens() * rc.model.channels;
  Index total = 0;
  double flops = 0;
  std::cout << std::left << std::setw(14) << "module" << std::right << std::setw(12) << "params"
            << std::setw(16) << "GFLOPs" << "\n";
  for (const auto& it : items) {
    std::cout << std::left << std::setw(14) << it.module << std::right << std::setw(12) << it.params
              << std::setw(16) << std::fixed << std::setprecision(3) << it.flops / 1e9 << "\n";
    total += it.params;
    flops += it.flops;
  }
  std::cout << std::left << std::setw(14) << "total" << std::right << std::setw(12) << total
            << std::setw(16) << flops / 1e9 << "\n"
            << "input " << rc.model.height << "x" << rc.model.width << ", total "
            << std::setprecision(2) << static_cast<double>(total) / 1e6 << "M params, "
            << flops / 1e9 << "G FLOPs\n"
            << "without positional embedding: "
            << static_cast<double>(total - pos_embed) / 1e6 << "M params\n"
            << "published reference: 1.22M params, 22.78G FLOPs\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SCRWKV crack segmentation operators and tools"};
  app.require_subcommand(1);

  std::string config, weights, input, output, pred_dir, gt_dir, report, data = "synthetic",
                                                                        module = "all", op = "dywkv",
                                                                        csv;
  double threshold = 0.5;
  Index steps = -1, channels = 32;
  std::vector<Index> sizes;
  bool no_naive = false;

  auto* infer = app.add_subcommand("infer", "Segment images with a trained checkpoint");
  infer->add_option("--config", config, "Run configuration JSON")->required();
  infer->add_option("--weights", weights, "Checkpoint file")->required();
  infer->add_option("--input", input, "Image file or directory")->required();
  infer->add_option("--output", output, "Output directory (masks/, probs/)")->required();
  infer->add_option("--threshold", threshold, "Mask threshold")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Score probability maps against masks");
  eval->add_option("--pred-dir", pred_dir, "Probability maps (8-bit PNG/PGM)")->required();
  eval->add_option("--gt-dir", gt_dir, "Ground-truth masks with matching names")->required();
  eval->add_option("--report", report, "Output CSV report")->required();
  eval->add_option("--config", config, "Run configuration (thresholds)");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config, "Run configuration JSON");
  train_cmd->add_option("--data", data, "'synthetic' or a directory with images/ and masks/")
      ->capture_default_str();
  train_cmd->add_option("--out", output, "Output directory")->required();
  train_cmd->add_option("--steps", steps, "Override optim.max_steps");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("--module", module, "all or one module name")->capture_default_str();
  grad->add_option("--report", report, "Optional CSV report");

  auto* bench = app.add_subcommand("bench", "Time the WKV kernels");
  bench->add_option("--op", op, "Operator")->capture_default_str();
  bench->add_option("--sizes", sizes, "Token counts")->delimiter(',');
  bench->add_option("--channels", channels, "Channel count")->capture_default_str();
  bench->add_flag("--no-naive", no_naive, "Skip the quadratic variant");
  bench->add_option("--csv", csv, "Optional CSV output");

  auto* count = app.add_subcommand("count", "Parameter and FLOP counts");
  count->add_option("--config", config, "Run configuration JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*infer) return cmd_infer(config, weights, input, output, threshold);
    if (*eval) return cmd_eval(pred_dir, gt_dir, report, config);
    if (*train_cmd) return cmd_train(config, data, output, steps);
    if (*grad) return cmd_gradcheck(module, report);
    if (*bench) return cmd_bench(op, sizes, channels, !no_naive, csv);
    if (*count) return cmd_count(config);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const CheckFailure& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kValidation;
}
