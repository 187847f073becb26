// Command-line driver: train, evaluate, matrix, plot-iou, watermark-probe.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cyseg/cityscapes.hpp"
#include "cyseg/config.hpp"
#include "cyseg/data.hpp"
#include "cyseg/eval.hpp"
#include "cyseg/report.hpp"
#include "cyseg/trainer.hpp"

namespace {

using namespace cyseg;

struct DataOpts {
  std::string data = "synthetic";  // "synthetic" or a cityscapes root dir
  std::string resolution = "64x64";
  int samples = 32;
  int val_samples = 16;
};

std::pair<int, int> parse_resolution(const std::string& s) {
  auto x = s.find('x');
  if (x == std::string::npos)
    throw std::invalid_argument("resolution must look like 64x64 (HxW)");
  return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
}

void apply_data_opts(KeyValueConfig& kv, const DataOpts& d, bool as_default) {
  auto put = [&](const std::string& k, const std::string& v) {
    if (!as_default || !kv.has(k)) kv.set(k, v);
  };
  put("data", d.data);
  put("resolution", d.resolution);
  put("samples", std::to_string(d.samples));
  put("val_samples", std::to_string(d.val_samples));
}

std::unique_ptr<Dataset> make_dataset(const KeyValueConfig& kv, const TrainConfig& tc,
                                      DataSplit split) {
  auto [h, w] = parse_resolution(kv.get("resolution", "64x64"));
  DatasetSpec spec;
  spec.height = h;
  spec.width = w;
  spec.class_count = tc.class_count;
  spec.split = split;
  spec.seed = tc.seed;
  spec.sample_count = split == DataSplit::kTrain ? kv.get_int("samples", 32)
                                                 : kv.get_int("val_samples", 16);
  std::string src = kv.get("data", "synthetic");
  if (src == "synthetic") {
    spec.source = "synthetic";
    return std::make_unique<SyntheticDataset>(spec);
  }
  spec.source = src;
  spec.class_count = kCityscapesClasses;
  return std::make_unique<CityscapesDataset>(src, spec);
}

KeyValueConfig load_config_with_overrides(const std::string& config_path,
                                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  KeyValueConfig kv;
  if (!config_path.empty()) kv = KeyValueConfig::load(config_path);
  for (const auto& [k, v] : overrides) kv.set(k, v);  // CLI beats file
  return kv;
}

// Options shared by train/matrix; only explicitly-passed flags override the
// config file.
struct TrainCliOpts {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  DataOpts data;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (flat key = value with [sections])");
    auto cap = [this, cmd](const std::string& key, const std::string& flag, const std::string& help) {
      auto holder = std::make_shared<std::string>();
      cmd->add_option(flag, *holder, help)->each([this, key, holder](const std::string& v) {
        overrides.emplace_back(key, v);
      });
    };
    cap("noise", "--noise", "noise spec: none | max-only | quant:<n> | gauss:<snr_db>");
    cap("seed", "--seed", "global seed");
    cap("epochs", "--epochs", "total epochs");
    cap("epochs_constant_lr", "--epochs-constant-lr", "epochs at the initial learning rate");
    cap("lr", "--lr", "initial learning rate");
    cap("batch_size", "--batch-size", "batch size");
    cap("alpha", "--alpha", "forward-cycle weight");
    cap("beta", "--beta", "backward-cycle adversarial weight");
    cap("gamma", "--gamma", "forward/backward mix");
    cap("scale", "--scale", "network scale: full | tiny");
    cap("classes", "--classes", "segmentation class count S");
    cap("data", "--data", "synthetic | <cityscapes root>");
    cap("resolution", "--resolution", "HxW, multiples of 8");
    cap("samples", "--samples", "synthetic train sample count");
    cap("val_samples", "--val-samples", "synthetic val sample count");
    cap("pool_policy", "--pool-policy", "uniform | keep-or-swap");
    cap("noise_at_eval", "--noise-at-eval", "true | false");
    cap("checkpoint_every", "--checkpoint-every", "epochs between checkpoints");
  }

  KeyValueConfig resolve() const {
    KeyValueConfig kv = load_config_with_overrides(config_path, overrides);
    apply_data_opts(kv, data, /*as_default=*/true);
    return kv;
  }
};

int cmd_train(const TrainCliOpts& opts, const std::string& out_dir) {
  KeyValueConfig kv = opts.resolve();
  TrainConfig tc = TrainConfig::from_config(kv);
  auto dataset = make_dataset(kv, tc, DataSplit::kTrain);
  Trainer trainer(tc);
  std::filesystem::create_directories(out_dir);
  {
    // record the fully resolved config next to the trainer's manifest
    std::ofstream f(out_dir + "/config.resolved");
    f << kv.to_text();
  }
  trainer.train(*dataset, out_dir);
  std::cout << "run complete: " << out_dir << "\n";
  return 0;
}

EvalReport evaluate_checkpoint(const std::string& ckpt_path, const KeyValueConfig& kv,
                               bool noise_at_eval, std::string label) {
  auto trainer = Trainer::load_checkpoint(ckpt_path);
  auto dataset = make_dataset(kv, trainer->config(), DataSplit::kVal);
  EvalReport rep = evaluate(*trainer, *dataset, noise_at_eval);
  rep.label = std::move(label);
  return rep;
}

std::string last_checkpoint(const std::string& run_dir) {
  namespace fs = std::filesystem;
  std::string best;
  int best_epoch = -1;
  for (const auto& e : fs::directory_iterator(run_dir)) {
    std::string name = e.path().filename().string();
    if (name.rfind("checkpoint_epoch_", 0) == 0 && name.ends_with(".ckpt")) {
      int ep = std::stoi(name.substr(17));
      if (ep > best_epoch) {
        best_epoch = ep;
        best = e.path().string();
      }
    }
  }
  if (best.empty()) throw std::runtime_error("no checkpoint found in " + run_dir);
  return best;
}

int cmd_matrix(const TrainCliOpts& opts, const std::string& runs_arg, const std::string& out_dir) {
  // runs_arg: comma-separated label=noisespec entries
  std::vector<std::pair<std::string, NoiseSpec>> runs;
  std::stringstream ss(runs_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("matrix runs must be label=noisespec, got '" + item + "'");
    runs.emplace_back(item.substr(0, eq), NoiseSpec::parse(item.substr(eq + 1)));
  }
  if (runs.empty()) throw std::invalid_argument("matrix: no runs given");
  for (size_t i = 0; i < runs.size(); ++i)
    for (size_t j = i + 1; j < runs.size(); ++j)
      if (runs[i].first == runs[j].first)
        throw std::invalid_argument("matrix: duplicate run label '" + runs[i].first + "'");

  std::vector<MatrixRow> rows;
  std::vector<EvalReport> reports;
  for (const auto& [label, nspec] : runs) {
    KeyValueConfig kv = opts.resolve();
    kv.set("noise", nspec.to_string());
    TrainConfig tc = TrainConfig::from_config(kv);
    const std::string run_dir = out_dir + "/" + label;
    std::string ckpt;
    try {
      ckpt = last_checkpoint(run_dir);
      std::cout << "reusing " << ckpt << "\n";
    } catch (const std::exception&) {
      auto dataset = make_dataset(kv, tc, DataSplit::kTrain);
      Trainer trainer(tc);
      std::filesystem::create_directories(run_dir);
      trainer.train(*dataset, run_dir);
      ckpt = last_checkpoint(run_dir);
    }
    EvalReport rep = evaluate_checkpoint(ckpt, kv, tc.noise_at_eval, label);
    write_report_csv(rep, run_dir + "/report.csv");
    reports.push_back(rep);

    MatrixRow row;
    row.label = label;
    row.noise = nspec;
    row.miou = rep.miou_strict;
    row.psnr_db = rep.mean_psnr_db;
    switch (nspec.kind) {
      case NoiseKind::kGaussian:
        row.snr_db = nspec.target_snr_db;
        row.snr_semantics = "set";
        break;
      case NoiseKind::kNone:
        row.snr_db = std::nan("");
        row.snr_semantics = "-";
        break;
      default:
        row.snr_db = rep.mean_snr_db;
        row.snr_semantics = "measured";
    }
    rows.push_back(row);
  }
  std::string table = format_matrix_table(rows);
  std::cout << table;
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir + "/matrix.txt") << table;
  write_matrix_csv(rows, out_dir + "/matrix.csv");
  write_iou_chart_svg(reports, out_dir + "/iou_chart.svg");
  write_iou_chart_csv(reports, out_dir + "/iou_chart.csv");
  return 0;
}

EvalReport read_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open report " + path);
  EvalReport r;
  r.label = std::filesystem::path(path).parent_path().filename().string();
  if (r.label.empty()) r.label = path;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    auto c = line.find(',');
    if (c == std::string::npos) continue;
    std::string key = line.substr(0, c), val = line.substr(c + 1);
    if (key == "summary") continue;
    if (val == "undefined")
      r.class_iou.push_back(std::nullopt);
    else
      r.class_iou.push_back(std::stod(val));
  }
  r.class_count = static_cast<int>(r.class_iou.size());
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycle-consistent segmentation with latent noise injection"};
  app.require_subcommand(1);

  TrainCliOpts train_opts;
  std::string out_dir = "run";
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_opts.attach(train_cmd);
  train_cmd->add_option("--out", out_dir, "run directory");

  TrainCliOpts eval_opts;
  std::string ckpt_path, report_path = "report.csv";
  std::string noise_at_eval_s = "default";
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  eval_opts.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval_cmd->add_option("--report", report_path, "output report CSV");
  eval_cmd->add_option("--noise-at-eval-flag", noise_at_eval_s,
                       "override reconstruction-branch noise: true | false | default");

  TrainCliOpts matrix_opts;
  std::string runs_arg, matrix_out = "matrix";
  auto* matrix_cmd = app.add_subcommand("matrix", "run an experiment matrix");
  matrix_opts.attach(matrix_cmd);
  matrix_cmd->add_option("--runs", runs_arg, "comma-separated label=noisespec entries")->required();
  matrix_cmd->add_option("--out", matrix_out, "matrix output directory");

  std::vector<std::string> report_files;
  std::string chart_out = "iou_chart.svg";
  auto* plot_cmd = app.add_subcommand("plot-iou", "grouped per-class IoU bar chart");
  plot_cmd->add_option("reports", report_files, "report CSV files")->required();
  plot_cmd->add_option("--out", chart_out, "output SVG path (CSV twin written alongside)");

  TrainCliOpts probe_opts;
  std::string probe_ckpt, probe_out;
  auto* probe_cmd = app.add_subcommand("watermark-probe",
                                       "reconstruction reliance on sub-max latent structure");
  probe_opts.attach(probe_cmd);
  probe_cmd->add_option("--checkpoint", probe_ckpt, "checkpoint file")->required();
  probe_cmd->add_option("--report", probe_out, "optional output text file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_opts, out_dir);

    if (eval_cmd->parsed()) {
      auto trainer = Trainer::load_checkpoint(ckpt_path);
      KeyValueConfig kv = eval_opts.resolve();
      bool nae = trainer->config().noise_at_eval;
      if (noise_at_eval_s == "true") nae = true;
      else if (noise_at_eval_s == "false") nae = false;
      auto dataset = make_dataset(kv, trainer->config(), DataSplit::kVal);
      EvalReport rep = evaluate(*trainer, *dataset, nae);
      rep.label = std::filesystem::path(ckpt_path).stem().string();
      write_report_csv(rep, report_path);
      std::cout << "miou_strict " << fmt_db(rep.miou_strict) << " miou_skip "
                << fmt_db(rep.miou_skip) << " psnr_db " << fmt_db(rep.mean_psnr_db)
                << " snr_db " << fmt_db(rep.mean_snr_db) << "\n";
      return 0;
    }

    if (matrix_cmd->parsed()) return cmd_matrix(matrix_opts, runs_arg, matrix_out);

    if (plot_cmd->parsed()) {
      std::vector<EvalReport> reports;
      for (const auto& p : report_files) reports.push_back(read_report_csv(p));
      write_iou_chart_svg(reports, chart_out);
      std::string csv_twin = chart_out;
      auto dot = csv_twin.rfind('.');
      csv_twin = (dot == std::string::npos ? csv_twin : csv_twin.substr(0, dot)) + ".csv";
      write_iou_chart_csv(reports, csv_twin);
      std::cout << "wrote " << chart_out << " and " << csv_twin << "\n";
      return 0;
    }

    if (probe_cmd->parsed()) {
      auto trainer = Trainer::load_checkpoint(probe_ckpt);
      KeyValueConfig kv = probe_opts.resolve();
      auto dataset = make_dataset(kv, trainer->config(), DataSplit::kVal);
      WatermarkProbeResult r = watermark_probe(*trainer, *dataset);
      std::ostringstream os;
      os << "images " << r.images << "\npsnr_soft_db " << fmt_db(r.mean_psnr_soft_db)
         << "\npsnr_hard_db " << fmt_db(r.mean_psnr_hard_db) << "\ndelta_psnr_db "
         << fmt_db(r.delta_db) << "\n";
      std::cout << os.str();
      if (!probe_out.empty()) std::ofstream(probe_out) << os.str();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
