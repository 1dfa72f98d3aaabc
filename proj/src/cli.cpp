#include "hfn/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hfn/compress.hpp"
#include "hfn/costmodel.hpp"
#include "hfn/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hfn {

namespace {

struct CliOptions {
  // architecture
  std::string arch = "resnet50";
  std::string stem = "cifar";
  std::string stage_blocks;  // "a,b,c,d" overrides the named depth
  std::string fold;
  double width = 0.0;  // 0 = take from the arch name
  int base_channels = 64;
  int classes = 100;
  double topk = 30.0;  // percent
  int input_size = 0;  // 0 = stem default
  bool no_ubn = false;
  std::string init;  // "", "sc", "kn"

  // training
  std::string method = "hfn";
  int epochs = 200;
  int batch = 128;
  double lr = 0.1;
  int warmup = 5;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  uint64_t seed = 1;
  int eval_cadence = 1;
  std::string augment = "crop_flip";

  // data
  std::string data = "synthetic";
  std::string data_dir;
  int synth_train = 1280;
  int synth_val = 256;
  int synth_test = 384;
  double synth_sep = 3.0;
  int val_count = 5000;

  // io
  std::string out_dir = "hfn_run";
};

void apply_preset(const std::string& name, CliOptions& o) {
  if (name.empty()) return;
  if (name == "desk-hfn" || name == "desk-hnn") {
    o.arch = "custom";
    o.stage_blocks = "1,1,3,3";
    o.base_channels = 16;
    o.classes = 10;
    o.input_size = 12;
    o.stem = "cifar";
    o.topk = 30;
    o.method = name == "desk-hfn" ? "hfn" : "hnn";
    o.fold = name == "desk-hfn" ? "3,4" : "";
    o.epochs = 30;
    o.batch = 64;
    o.lr = 0.1;
    o.warmup = 5;
    o.data = "synthetic";
    o.synth_train = 1280;
    o.synth_val = 256;
    o.synth_test = 384;
    o.synth_sep = 3.0;
    o.augment = "none";
    o.seed = 7;
  } else if (name == "paper-cifar100") {
    o.arch = "resnet50";
    o.stem = "cifar";
    o.classes = 100;
    o.input_size = 32;
    o.method = "hfn";
    o.fold = "3,4";
    o.topk = 30;
    o.epochs = 200;
    o.batch = 128;
    o.lr = 0.1;
    o.warmup = 5;
    o.momentum = 0.9;
    o.weight_decay = 0.0005;
    o.data = "cifar100";
    o.augment = "crop_flip";
  } else if (name == "paper-imagenet") {
    o.arch = "resnet50";
    o.stem = "imagenet";
    o.classes = 1000;
    o.input_size = 224;
    o.method = "hfn";
    o.fold = "3,4";
    o.topk = 30;
    o.epochs = 100;
    o.batch = 128;
    o.data = "cifar100";  // ingestion pipeline placeholder; full-scale data is configured by hand
    o.augment = "crop_flip";
  } else {
    throw ConfigError("unknown preset '" + name + "' (have desk-hfn, desk-hnn, paper-cifar100, paper-imagenet)");
  }
}

std::array<int, 4> parse_stage_blocks(const std::string& csv) {
  std::array<int, 4> out{};
  std::stringstream ss(csv);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= 4) throw ConfigError("stage blocks: expected 4 comma-separated values");
    try {
      out[static_cast<size_t>(i++)] = std::stoi(tok);
    } catch (...) {
      throw ConfigError("bad stage block count '" + tok + "'");
    }
  }
  if (i != 4) throw ConfigError("stage blocks: expected 4 comma-separated values");
  return out;
}

ArchConfig resolve_arch(const CliOptions& o) {
  const StemKind stem = stem_from_string(o.stem);
  ArchConfig cfg;
  if (o.arch == "custom") {
    if (o.stage_blocks.empty()) throw ConfigError("--arch custom needs --stage-blocks");
    cfg.stem = stem;
    cfg.num_classes = o.classes;
  } else {
    int depth = 0;
    bool wide = false;
    if (o.arch == "resnet34") depth = 34;
    else if (o.arch == "resnet50") depth = 50;
    else if (o.arch == "resnet101") depth = 101;
    else if (o.arch == "resnet152") depth = 152;
    else if (o.arch == "resnet200") depth = 200;
    else if (o.arch == "wide_resnet50") { depth = 50; wide = true; }
    else throw ConfigError("unknown arch '" + o.arch + "'");
    cfg = make_arch(depth, wide, stem, o.classes);
  }
  if (!o.stage_blocks.empty()) cfg.stage_blocks = parse_stage_blocks(o.stage_blocks);
  if (o.width > 0.0) cfg.width_mult = o.width;
  cfg.base_channels = o.base_channels;
  cfg.k_permille = static_cast<int>(std::lround(o.topk * 10.0));
  cfg.folded = parse_fold_set(o.fold);
  cfg.ubn = !o.no_ubn;
  cfg.input_size = o.input_size > 0 ? o.input_size
                                    : (stem == StemKind::cifar_3x3 ? 32 : 224);
  return cfg;
}

std::optional<InitKind> resolve_init(const CliOptions& o) {
  if (o.init.empty()) return std::nullopt;
  if (o.init == "sc" || o.init == "signed_constant") return InitKind::signed_constant;
  if (o.init == "kn" || o.init == "kaiming_normal") return InitKind::kaiming_normal;
  throw ConfigError("unknown init '" + o.init + "' (expected sc|kn)");
}

AugmentMode resolve_augment(const std::string& s) {
  if (s == "none") return AugmentMode::none;
  if (s == "crop") return AugmentMode::crop;
  if (s == "crop_flip" || s == "crop+flip") return AugmentMode::crop_flip;
  throw ConfigError("unknown augment mode '" + s + "'");
}

struct LoadedData {
  Dataset train, val, test;
};

LoadedData load_data(const CliOptions& o, const ArchConfig& arch) {
  LoadedData d;
  if (o.data == "synthetic") {
    d.train = synthetic_dataset(o.seed, o.synth_train, arch.num_classes, arch.input_size,
                                o.synth_sep, 0);
    d.val = synthetic_dataset(o.seed, o.synth_val, arch.num_classes, arch.input_size, o.synth_sep,
                              1 << 20);
    d.test = synthetic_dataset(o.seed, o.synth_test, arch.num_classes, arch.input_size,
                               o.synth_sep, 1 << 21);
    d.val.split = "val";
    d.test.split = "test";
    return d;
  }
  if (o.data == "cifar100" || o.data == "cifar10") {
    std::string dir = o.data_dir;
    if (dir.empty()) {
      const char* env = std::getenv("HFN_DATA_DIR");
      dir = env ? env : ".";
    }
    const auto variant = o.data == "cifar100" ? CifarVariant::cifar100 : CifarVariant::cifar10;
    auto full = load_cifar_binary(dir + "/train.bin", variant);
    if (full.classes != arch.num_classes) {
      throw ConfigError("dataset has " + std::to_string(full.classes) + " classes but model has " +
                        std::to_string(arch.num_classes));
    }
    auto [train, val] = split_train_val(full, o.val_count, o.seed);
    d.train = std::move(train);
    d.val = std::move(val);
    d.test = load_cifar_binary(dir + "/test.bin", variant);
    d.test.split = "test";
    return d;
  }
  throw ConfigError("unknown data source '" + o.data + "' (expected synthetic|cifar100|cifar10)");
}

json arch_json(const ArchConfig& cfg) {
  return json{{"stem", to_string(cfg.stem)},
              {"block", to_string(cfg.block)},
              {"stage_blocks", cfg.stage_blocks},
              {"folded_stages", cfg.fold_string()},
              {"width_mult", cfg.width_mult},
              {"base_channels", cfg.base_channels},
              {"num_classes", cfg.num_classes},
              {"k_permille", cfg.k_permille},
              {"input_size", cfg.input_size},
              {"ubn", cfg.ubn}};
}

json train_json(const TrainConfig& tc) {
  return json{{"method", to_string(tc.method)},
              {"epochs", tc.epochs},
              {"batch_size", tc.batch_size},
              {"base_lr", tc.base_lr},
              {"warmup_epochs", tc.warmup_epochs},
              {"momentum", tc.momentum},
              {"weight_decay", tc.weight_decay},
              {"seed", tc.seed},
              {"eval_cadence", tc.eval_cadence}};
}

void write_manifest(const std::string& dir, const json& manifest) {
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

// --- train ------------------------------------------------------------------

struct TrainOutcome {
  double best_val = 0.0;
  int best_epoch = -1;
  double test_top1 = -1.0;
  double final_train_loss = 0.0;
  std::string checkpoint_path;
};

TrainOutcome run_single_training(const CliOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Method method = method_from_string(o.method);
  ArchConfig arch = resolve_arch(o);
  arch.validate_for(method);

  TrainConfig tc;
  tc.method = method;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.base_lr = o.lr;
  tc.warmup_epochs = o.warmup;
  tc.momentum = o.momentum;
  tc.weight_decay = o.weight_decay;
  tc.seed = o.seed;
  tc.eval_cadence = o.eval_cadence;
  tc.augment = resolve_augment(o.augment);

  auto data = load_data(o, arch);
  auto model = build_model<float>(arch, o.seed, method, resolve_init(o));

  fs::create_directories(o.out_dir);
  std::ofstream metrics(o.out_dir + "/metrics.csv");
  if (!metrics) throw IoError("cannot write metrics log in " + o.out_dir);

  auto result = train(model, data.train, data.val, tc, &metrics);
  metrics.flush();

  TrainOutcome outcome;
  outcome.best_val = result.best_val;
  outcome.best_epoch = result.best_epoch;
  outcome.final_train_loss = result.history.empty() ? 0.0 : result.history.back().train_loss;
  Model<float>& best = result.best_model ? *result.best_model : model;
  if (data.test.size() > 0) outcome.test_top1 = evaluate(best, data.test);

  if (is_supermask(method)) {
    auto bytes = compress_model(best, true, static_cast<uint32_t>(o.epochs));
    outcome.checkpoint_path = o.out_dir + "/checkpoint.hfn";
    write_checkpoint(outcome.checkpoint_path, bytes);
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json manifest{
      {"command", "train"},
      {"config", {{"arch", arch_json(arch)},
                  {"train", train_json(tc)},
                  {"augment", o.augment},
                  {"init", o.init.empty() ? (is_supermask(method) ? "sc" : "kn") : o.init},
                  {"data", {{"source", o.data},
                            {"normalization_mean", data.train.mean},
                            {"normalization_std", data.train.stddev},
                            {"train_n", data.train.size()},
                            {"val_n", data.val.size()},
                            {"test_n", data.test.size()}}}}},
      {"seeds", {{"model", o.seed}, {"shuffle", o.seed}, {"augment", o.seed}}},
      {"artifacts",
       {{"checkpoint", outcome.checkpoint_path},
        {"metrics", o.out_dir + "/metrics.csv"}}},
      {"metrics", {{"best_val_top1", outcome.best_val},
                   {"best_epoch", outcome.best_epoch},
                   {"test_top1", outcome.test_top1},
                   {"final_train_loss", outcome.final_train_loss}}},
      {"wall_clock_sec", wall}};
  write_manifest(o.out_dir, manifest);

  out << "trained " << to_string(method) << " model: best val top-1 " << outcome.best_val
      << " (epoch " << outcome.best_epoch << ")";
  if (outcome.test_top1 >= 0) out << ", test top-1 " << outcome.test_top1;
  out << "\n";
  if (!outcome.checkpoint_path.empty()) out << "checkpoint: " << outcome.checkpoint_path << "\n";
  out << "manifest: " << o.out_dir << "/manifest.json\n";
  return outcome;
}

// --- report -----------------------------------------------------------------

struct PaperRow {
  std::string table;
  std::string name;
  ArchConfig cfg;
  Method method;
};

std::vector<PaperRow> paper_rows(const std::string& dataset) {
  const bool cifar = dataset == "cifar100";
  if (!cifar && dataset != "imagenet") {
    throw ConfigError("unknown dataset '" + dataset + "' (expected cifar100|imagenet)");
  }
  const StemKind stem = cifar ? StemKind::cifar_3x3 : StemKind::imagenet_7x7;
  const int classes = cifar ? 100 : 1000;
  auto arch = [&](int depth, bool wide, const char* fold) {
    ArchConfig c = make_arch(depth, wide, stem, classes);
    c.folded = parse_fold_set(fold);
    return c;
  };

  std::vector<PaperRow> rows;
  // same-model comparison
  rows.push_back({"same-model", "ResNet50", arch(50, false, ""), Method::vanilla});
  rows.push_back({"same-model", "Folded ResNet50 (2,3,4)", arch(50, false, "2,3,4"), Method::folding});
  rows.push_back({"same-model", "HNN-ResNet50", arch(50, false, ""), Method::hnn});
  rows.push_back({"same-model", "HFN-ResNet50 (3,4)", arch(50, false, "3,4"), Method::hfn});
  // similar-accuracy comparison
  if (cifar) {
    rows.push_back({"same-accuracy", "ResNet50", arch(50, false, ""), Method::vanilla});
    rows.push_back({"same-accuracy", "HNN-WideResNet50", arch(50, true, ""), Method::hnn});
    rows.push_back({"same-accuracy", "HFN-ResNet200 (3,4)", arch(200, false, "3,4"), Method::hfn});
    rows.push_back({"same-accuracy", "HFN-ResNet152 (3,4)", arch(152, false, "3,4"), Method::hfn});
  } else {
    rows.push_back({"same-accuracy", "ResNet34", arch(34, false, ""), Method::vanilla});
    rows.push_back({"same-accuracy", "HNN-WideResNet50", arch(50, true, ""), Method::hnn});
    rows.push_back({"same-accuracy", "HFN-WideResNet50 (3,4)", arch(50, true, "3,4"), Method::hfn});
    rows.push_back({"same-accuracy", "HFN-ResNet200 (3,4)", arch(200, false, "3,4"), Method::hfn});
  }
  return rows;
}

struct ReportRow {
  std::string table, name, method;
  double params_m = 0.0;
  int64_t paper_bytes = 0;
  int64_t file_bytes = 0;
  double reduction = 1.0;  // vs the first row of its table
  double energy_pj = 0.0;
  double energy_ratio = 1.0;
};

std::vector<ReportRow> build_paper_report(const std::string& dataset) {
  std::vector<ReportRow> out;
  std::string current_table;
  int64_t baseline_bytes = 0;
  for (const auto& row : paper_rows(dataset)) {
    const auto s = size_report(row.cfg, row.method);
    ReportRow r;
    r.table = row.table;
    r.name = row.name;
    r.method = to_string(row.method);
    r.params_m = static_cast<double>(reported_params(row.cfg, row.method)) / 1e6;
    r.paper_bytes = s.paper_bytes;
    r.file_bytes = s.file_bytes;
    if (row.table != current_table) {
      current_table = row.table;
      baseline_bytes = s.paper_bytes;
    }
    r.reduction = static_cast<double>(baseline_bytes) / static_cast<double>(s.paper_bytes);
    r.energy_pj = dram_load_energy_pj(s.paper_bytes);
    r.energy_ratio = r.reduction;  // energy is linear in size
    out.push_back(std::move(r));
  }
  return out;
}

void print_report(const std::vector<ReportRow>& rows, std::ostream& out) {
  out << std::left << std::setw(15) << "table" << std::setw(28) << "model" << std::setw(9)
      << "method" << std::right << std::setw(10) << "params_M" << std::setw(10) << "size_MB"
      << std::setw(10) << "file_MB" << std::setw(11) << "reduction" << std::setw(28) << "dram_energy"
      << std::setw(10) << "e_ratio" << "\n";
  auto fixed2 = [](double v, const char* suffix = "") {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v << suffix;
    return os.str();
  };
  for (const auto& r : rows) {
    out << std::left << std::setw(15) << r.table << std::setw(28) << r.name << std::setw(9)
        << r.method << std::right << std::setw(10) << fixed2(r.params_m) << std::setw(10)
        << fixed2(r.paper_bytes / 1e6) << std::setw(10) << fixed2(r.file_bytes / 1e6)
        << std::setw(11) << fixed2(r.reduction, "x") << std::setw(28) << format_energy(r.energy_pj)
        << std::setw(10) << fixed2(r.energy_ratio, "x") << "\n";
  }
}

std::string csv_escape(const std::string& s) {
  if (s.find(',') == std::string::npos && s.find('"') == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
  out << "table,model,method,params_millions,size_mb,file_mb,reduction,energy_pj,energy_ratio\n";
  for (const auto& r : rows) {
    out << r.table << ',' << csv_escape(r.name) << ',' << r.method << ',' << std::setprecision(10)
        << r.params_m << ',' << r.paper_bytes / 1e6 << ',' << r.file_bytes / 1e6 << ','
        << r.reduction << ',' << r.energy_pj << ',' << r.energy_ratio << "\n";
  }
}

void write_plot_data(const std::vector<ReportRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write plot data: " + path);
  out << "# model\tsize_bytes\tdram_energy_pj\n";
  for (const auto& r : rows) {
    out << r.name << '\t' << r.paper_bytes << '\t' << std::setprecision(12) << r.energy_pj << "\n";
  }
}

std::vector<ReportRow> build_checkpoint_report(const std::vector<std::string>& paths) {
  std::vector<ReportRow> rows;
  int64_t baseline = 0;
  for (const auto& path : paths) {
    auto bytes = read_checkpoint(path);
    auto model = decompress_model(bytes);
    const auto s = size_report(model.cfg, model.method);
    ReportRow r;
    r.table = "checkpoints";
    r.name = path;
    r.method = to_string(model.method);
    r.params_m = static_cast<double>(reported_params(model.cfg, model.method)) / 1e6;
    r.paper_bytes = s.paper_bytes;
    r.file_bytes = static_cast<int64_t>(bytes.size());
    if (baseline == 0) baseline = s.paper_bytes;
    r.reduction = static_cast<double>(baseline) / static_cast<double>(s.paper_bytes);
    r.energy_pj = dram_load_energy_pj(s.paper_bytes);
    r.energy_ratio = r.reduction;
    rows.push_back(std::move(r));
  }
  return rows;
}

// --- sweep ------------------------------------------------------------------

std::vector<std::string> split_list(const std::string& values, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(values);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

int run_sweep(const CliOptions& base, const std::string& axis, const std::string& values,
              int jobs, std::ostream& out) {
  std::vector<std::string> points;
  if (axis == "topk" || axis == "depth") points = split_list(values, ',');
  else if (axis == "fold") points = split_list(values, ';');
  else throw ConfigError("unknown sweep axis '" + axis + "' (expected topk|fold|depth)");
  if (points.empty()) throw ConfigError("sweep: no axis values given");

  struct Point {
    std::string value;
    CliOptions opts;
    TrainOutcome outcome;
    int64_t params = 0;
    int64_t paper_bytes = 0;
  };
  std::vector<Point> runs;
  for (const auto& v : points) {
    CliOptions o = base;
    if (axis == "topk") o.topk = std::stod(v);
    else if (axis == "fold") o.fold = (v == "-" ? "" : v);
    else o.arch = "resnet" + v;
    o.out_dir = base.out_dir + "/sweep_" + axis + "_" + (v == "-" ? "none" : v);
    std::string safe = o.out_dir;
    std::replace(safe.begin(), safe.end(), ',', '_');
    o.out_dir = safe;
    runs.push_back({v, o, {}, 0, 0});
  }

  auto run_point = [](Point& p) {
    std::ostringstream sink;
    p.outcome = run_single_training(p.opts, sink);
    const Method m = method_from_string(p.opts.method);
    ArchConfig arch = resolve_arch(p.opts);
    p.params = reported_params(arch, m);
    p.paper_bytes = size_report(arch, m).paper_bytes;
  };

  if (jobs > 1) {
    std::vector<std::future<void>> futs;
    size_t next = 0;
    while (next < runs.size() || !futs.empty()) {
      while (next < runs.size() && static_cast<int>(futs.size()) < jobs) {
        futs.push_back(std::async(std::launch::async, run_point, std::ref(runs[next++])));
      }
      futs.front().get();
      futs.erase(futs.begin());
    }
  } else {
    for (auto& p : runs) run_point(p);
  }

  fs::create_directories(base.out_dir);
  std::ofstream csv(base.out_dir + "/sweep_summary.csv");
  csv << "axis,value,params,size_bytes,best_val_top1,test_top1,run_dir\n";
  out << std::left << std::setw(10) << axis << std::right << std::setw(14) << "params"
      << std::setw(14) << "size_bytes" << std::setw(10) << "best_val" << std::setw(10) << "test"
      << "\n";
  for (const auto& p : runs) {
    csv << axis << ',' << p.value << ',' << p.params << ',' << p.paper_bytes << ','
        << p.outcome.best_val << ',' << p.outcome.test_top1 << ',' << p.opts.out_dir << "\n";
    out << std::left << std::setw(10) << p.value << std::right << std::setw(14) << p.params
        << std::setw(14) << p.paper_bytes << std::setw(10) << p.outcome.best_val << std::setw(10)
        << p.outcome.test_top1 << "\n";
  }
  out << "summary: " << base.out_dir << "/sweep_summary.csv\n";

  json manifest{{"command", "sweep"},
                {"axis", axis},
                {"values", points},
                {"runs", json::array()},
                {"artifacts", {{"summary", base.out_dir + "/sweep_summary.csv"}}}};
  for (const auto& p : runs) manifest["runs"].push_back(p.opts.out_dir);
  write_manifest(base.out_dir, manifest);
  return 0;
}

void add_arch_options(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--arch", o.arch,
                  "architecture: resnet34|resnet50|resnet101|resnet152|resnet200|wide_resnet50|custom");
  cmd->add_option("--stage-blocks", o.stage_blocks, "blocks per stage, e.g. 3,4,6,3");
  cmd->add_option("--stem", o.stem, "input stem: cifar|imagenet");
  cmd->add_option("--fold", o.fold, "folded stages, e.g. 3,4");
  cmd->add_option("--width", o.width, "bottleneck width multiplier");
  cmd->add_option("--base-channels", o.base_channels, "stem width");
  cmd->add_option("--classes", o.classes, "number of classes");
  cmd->add_option("--topk", o.topk, "supermask density in percent");
  cmd->add_option("--input-size", o.input_size, "input resolution");
  cmd->add_flag("--no-ubn", o.no_ubn, "share BN parameters across fold iterations");
  cmd->add_option("--init", o.init, "weight init: sc|kn");
  cmd->add_option("--seed", o.seed, "random seed");
}

void add_data_options(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--data", o.data, "data source: synthetic|cifar100|cifar10");
  cmd->add_option("--data-dir", o.data_dir, "dataset directory (or HFN_DATA_DIR)");
  cmd->add_option("--synth-train", o.synth_train, "synthetic training samples");
  cmd->add_option("--synth-val", o.synth_val, "synthetic validation samples");
  cmd->add_option("--synth-test", o.synth_test, "synthetic test samples");
  cmd->add_option("--separation", o.synth_sep, "synthetic class separation");
  cmd->add_option("--val-count", o.val_count, "validation split size for file datasets");
}

void add_train_options(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--method", o.method, "training method: vanilla|folding|hnn|hfn");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--batch", o.batch, "batch size");
  cmd->add_option("--lr", o.lr, "base learning rate");
  cmd->add_option("--warmup", o.warmup, "warmup epochs");
  cmd->add_option("--momentum", o.momentum, "SGD momentum");
  cmd->add_option("--wd", o.weight_decay, "weight decay");
  cmd->add_option("--eval-cadence", o.eval_cadence, "epochs between validation passes");
  cmd->add_option("--augment", o.augment, "augmentation: none|crop|crop_flip");
  cmd->add_option("--out", o.out_dir, "output directory");
}

}  // namespace

int cli_main(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  try {
    // presets set defaults; explicit flags override them
    std::string preset;
    for (size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--preset") {
        preset = args[i + 1];
        args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
        break;
      }
    }
    CliOptions o;
    apply_preset(preset, o);

    CLI::App app{"hidden-fold networks: supermask training, folding, compression, cost model"};
    app.name("hfn");
    app.set_config("--config", "", "read options from an INI config file");
    app.fallthrough();  // lets --config appear after the subcommand name

    auto* t = app.add_subcommand("train", "train a model and write a compressed checkpoint");
    add_arch_options(t, o);
    add_data_options(t, o);
    add_train_options(t, o);

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ckpt_path;
    ev->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
    add_data_options(ev, o);
    ev->add_option("--seed", o.seed, "data seed (synthetic)");
    std::string eval_split = "test";
    ev->add_option("--split", eval_split, "which split to score: train|val|test");

    auto* rep = app.add_subcommand("report", "size and energy accounting");
    std::string tables;
    std::vector<std::string> ckpts;
    std::string csv_path, plot_path;
    rep->add_option("--paper-tables", tables, "print the published table rows: cifar100|imagenet");
    rep->add_option("checkpoints", ckpts, "checkpoint files to compare");
    rep->add_option("--csv", csv_path, "write machine-readable rows here");
    rep->add_option("--plot-data", plot_path, "write plot-ready size/energy series here");

    auto* sw = app.add_subcommand("sweep", "run a family of trainings along one axis");
    std::string axis, values;
    int jobs = 1;
    sw->add_option("--axis", axis, "sweep axis: topk|fold|depth")->required();
    sw->add_option("--values", values, "axis values (comma list; fold uses ';')");
    sw->add_option("--jobs", jobs, "parallel runs (independent, no shared state)");
    add_arch_options(sw, o);
    add_data_options(sw, o);
    add_train_options(sw, o);

    auto* ins = app.add_subcommand("inspect", "print checkpoint header fields");
    std::string ins_path;
    bool dump_header_only = false, with_density = false;
    ins->add_option("checkpoint", ins_path, "checkpoint file")->required();
    ins->add_flag("--dump-header", dump_header_only, "print header fields only");
    ins->add_flag("--density", with_density, "also print per-layer supermask density");

    auto* est = app.add_subcommand("estimate", "DRAM-load energy for a size or checkpoint");
    int64_t est_bytes = -1;
    std::string est_ckpt;
    est->add_option("--bytes", est_bytes, "model size in bytes");
    est->add_option("--checkpoint", est_ckpt, "checkpoint file");

    auto* dig = app.add_subcommand("digest", "print the regenerated-weight checksum for a config");
    add_arch_options(dig, o);
    dig->add_option("--method", o.method, "method the model would be built for");

    app.require_subcommand(1);

    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp& e) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    }

    if (t->parsed()) {
      run_single_training(o, out);
      return 0;
    }

    if (ev->parsed()) {
      auto model = decompress_model(read_checkpoint(ckpt_path));
      CliOptions eo = o;
      eo.classes = model.cfg.num_classes;
      eo.input_size = model.cfg.input_size;
      auto data = load_data(eo, model.cfg);
      const Dataset& split = eval_split == "train" ? data.train
                             : eval_split == "val" ? data.val
                                                   : data.test;
      const double top1 = evaluate(model, split);
      out << "top1 " << top1 << "\n";
      return 0;
    }

    if (rep->parsed()) {
      std::vector<ReportRow> rows;
      if (!tables.empty()) rows = build_paper_report(tables);
      else if (!ckpts.empty()) rows = build_checkpoint_report(ckpts);
      else throw ConfigError("report: give --paper-tables or checkpoint files");
      print_report(rows, out);
      if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw IoError("cannot write csv: " + csv_path);
        write_report_csv(rows, f);
      }
      if (!plot_path.empty()) write_plot_data(rows, plot_path);
      return 0;
    }

    if (sw->parsed()) return run_sweep(o, axis, values, jobs, out);

    if (ins->parsed()) {
      auto bytes = read_checkpoint(ins_path);
      for (const auto& [k, v] : dump_header(bytes)) {
        out << k << " = " << v << "\n";
      }
      if (with_density && !dump_header_only) {
        auto model = decompress_model(bytes);
        out << "\nlayer density (n, ones, density):\n";
        int64_t total_n = 0, total_ones = 0;
        for (const auto& row : model.density_report()) {
          out << "  " << std::left << std::setw(18) << row.name << std::right << std::setw(10)
              << row.n << std::setw(10) << row.ones << std::setw(10) << std::fixed
              << std::setprecision(4) << row.density() << "\n";
          total_n += row.n;
          total_ones += row.ones;
          out.unsetf(std::ios::fixed);
        }
        out << "  total surviving: " << total_ones << " of " << total_n << "\n";
      }
      return 0;
    }

    if (est->parsed()) {
      int64_t bytes = est_bytes;
      if (!est_ckpt.empty()) {
        auto model = decompress_model(read_checkpoint(est_ckpt));
        bytes = size_report(model.cfg, model.method).paper_bytes;
        out << "mult_ops " << mult_count(model.cfg) << "\n";
        out << "mult_ops_sparse " << mult_count(model.cfg, true) << "\n";
        out << "mult_energy " << format_energy(mult_energy_pj(mult_count(model.cfg))) << "\n";
      }
      if (bytes < 0) throw ConfigError("estimate: give --bytes or --checkpoint");
      out << "size_bytes " << bytes << "\n";
      out << "dram_energy " << format_energy(dram_load_energy_pj(bytes)) << "\n";
      return 0;
    }

    if (dig->parsed()) {
      const Method method = method_from_string(o.method);
      ArchConfig arch = resolve_arch(o);
      arch.validate_for(method);
      auto model = build_model<float>(arch, o.seed, method, resolve_init(o));
      std::ostringstream hex;
      hex << std::hex << std::setw(16) << std::setfill('0') << model.weights_checksum();
      out << "weights_fnv1a64 " << hex.str() << "\n";
      out << "params " << model.parameter_count() << "\n";
      return 0;
    }

    err << "error: no subcommand given\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace hfn
