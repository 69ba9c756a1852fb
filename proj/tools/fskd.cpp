// fskd: teacher-student training with feature-similarity distillation.
//
// Subcommands: train-teacher, train-student, eval, analyze, ablate,
// convert-dataset. Exit codes: 0 success, 2 config error, 3 data error,
// 4 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fskd/cli/config.hpp"
#include "fskd/data/eval.hpp"
#include "fskd/data/synthetic.hpp"
#include "fskd/io/checkpoint.hpp"
#include "fskd/stats/analysis.hpp"
#include "fskd/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace fskd;

namespace {

const std::vector<std::string> kConfigKeys = {
    "task",        "preset",          "widths",      "blocks_per_stage", "embedding_dim",
    "input_size",  "in_channels",     "scale",       "margin",           "distill",
    "lambda",      "flatten_mode",    "resolution_mode", "ratios",       "lr",
    "milestones",  "decay",           "epochs",      "batch_size",       "momentum",
    "weight_decay", "seed",           "train_data",  "eval_data",        "checkpoint_dir",
    "report_dir",  "pair_list",       "gallery_data", "eval_every",      "norm_mean",
    "norm_std",    "cache_teacher",   "verification_folds10"};

struct ConfigCli {
  std::string config_file;
  std::map<std::string, std::string> kv;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value config file (# comments)");
    for (const auto& key : kConfigKeys) {
      cmd->add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { kv[key] = v; }, "config override");
    }
  }

  RunConfig build() const {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    // preset first so explicit flags keep the last word
    if (auto it = kv.find("preset"); it != kv.end()) apply_config_kv(cfg, "preset", it->second);
    for (const auto& [k, v] : kv)
      if (k != "preset") apply_config_kv(cfg, k, v);
    cfg.validate();
    return cfg;
  }
};

Dataset load_for_task(const RunConfig& cfg, const std::string& path) {
  if (path.empty()) throw ConfigError("missing dataset path");
  Dataset ds = load_dataset(path);
  ds.face_domain = cfg.task != Task::digit_classification;
  return ds;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot create '" + path + "'");
  os << content;
  if (!os) throw DataError("failed writing '" + path + "'");
}

void save_trained(const RunConfig& cfg, TrainedModel& tm, const std::string& ckpt_name,
                  const std::string& metrics_name, const std::string& metrics) {
  fs::create_directories(cfg.checkpoint_dir);
  fs::create_directories(cfg.report_dir);
  Checkpoint ckpt = make_checkpoint(tm.model, tm.head, &tm.optimizer, tm.rng_state, tm.steps);
  save_checkpoint(ckpt, (fs::path(cfg.checkpoint_dir) / ckpt_name).string());
  write_text((fs::path(cfg.report_dir) / metrics_name).string(), metrics);
}

int cmd_train_teacher(const ConfigCli& cli) {
  RunConfig cfg = cli.build();
  Dataset train = load_for_task(cfg, cfg.train_data);
  Dataset eval_ds;
  if (!cfg.eval_data.empty()) eval_ds = load_for_task(cfg, cfg.eval_data);
  std::ostringstream metrics;
  TrainedModel tm = train_teacher(cfg, train, cfg.eval_data.empty() ? nullptr : &eval_ds, metrics);
  save_trained(cfg, tm, "teacher.ckpt", "teacher_metrics.csv", metrics.str());
  std::cout << "teacher: " << tm.model.parameter_count() + tm.head.W.size() << " parameters, " << tm.steps
            << " steps";
  if (tm.final_eval_acc >= 0.0) std::cout << ", eval accuracy " << tm.final_eval_acc;
  std::cout << "\n";
  return 0;
}

int cmd_train_student(const ConfigCli& cli, const std::string& teacher_path) {
  RunConfig cfg = cli.build();
  Dataset train = load_for_task(cfg, cfg.train_data);
  Dataset eval_ds;
  if (!cfg.eval_data.empty()) eval_ds = load_for_task(cfg, cfg.eval_data);

  Backbone teacher;
  Backbone* teacher_ptr = nullptr;
  if (!teacher_path.empty()) {
    Checkpoint tc = load_checkpoint(teacher_path);
    if (!(tc.config == cfg.backbone))
      throw ConfigError("teacher checkpoint backbone config does not match the run config");
    teacher = backbone_from_checkpoint(tc);
    teacher_ptr = &teacher;
  } else if (cfg.distill.kind != DistillKind::none) {
    throw ConfigError("train-student: --teacher is required unless distill = none");
  }

  std::ostringstream metrics;
  TrainedModel tm = train_student(cfg, train, cfg.eval_data.empty() ? nullptr : &eval_ds, teacher_ptr, metrics);
  const std::string kind = to_string(cfg.distill.kind);
  save_trained(cfg, tm, "student_" + kind + ".ckpt", "student_" + kind + "_metrics.csv", metrics.str());
  std::cout << "student(" << kind << "): " << tm.steps << " steps";
  if (tm.final_eval_acc >= 0.0) std::cout << ", eval accuracy " << tm.final_eval_acc;
  std::cout << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& protocol, unsigned ratio, const ConfigCli& cli,
             const std::string& out_path) {
  RunConfig cfg = cli.build();
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  Backbone model = backbone_from_checkpoint(ckpt);
  MarginHeadParams head = head_from_checkpoint(ckpt);

  double acc = 0.0;
  if (protocol == "classification") {
    Dataset ds = load_for_task(cfg, cfg.eval_data);
    acc = eval_classification(model, head, ds, ratio, 128, cfg.norm_mean, cfg.norm_std);
  } else if (protocol == "verification") {
    if (cfg.pair_list.empty()) throw ConfigError("eval verification: set --pair_list");
    auto pairs = load_pair_list(cfg.pair_list);
    acc = eval_verification(model, pairs, ratio, cfg.verification_folds10 ? 10 : 1, cfg.norm_mean, cfg.norm_std);
  } else if (protocol == "identification") {
    if (cfg.gallery_data.empty()) throw ConfigError("eval identification: set --gallery_data");
    Dataset gallery = load_for_task(cfg, cfg.gallery_data);
    Dataset probes = load_for_task(cfg, cfg.eval_data);
    acc = eval_identification(model, gallery, probes, ratio, cfg.norm_mean, cfg.norm_std);
  } else {
    throw ConfigError("eval: protocol must be classification, verification or identification");
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s,%u,%.6f\n", protocol.c_str(), ratio, acc);
  std::cout << "protocol,ratio,accuracy\n" << buf;
  if (!out_path.empty()) write_text(out_path, std::string("protocol,ratio,accuracy\n") + buf);
  return 0;
}

int cmd_analyze(const std::string& teacher_path, const std::string& student_path, unsigned ratio,
                const ConfigCli& cli, const std::string& out_dir, std::size_t n_images, std::size_t n_maps,
                bool raw_correlation, double alpha) {
  RunConfig cfg = cli.build();
  Checkpoint tc = load_checkpoint(teacher_path), sc = load_checkpoint(student_path);
  Backbone teacher = backbone_from_checkpoint(tc);
  Backbone student = backbone_from_checkpoint(sc);
  if (!(teacher.config() == student.config()))
    throw ConfigError("analyze: teacher and student checkpoints have different backbone configs");
  Dataset ds = load_for_task(cfg, cfg.eval_data);
  fs::create_directories(out_dir);

  const std::size_t L = teacher.config().num_blocks();
  std::ostringstream ttest_csv;
  ttest_csv << "block_id,statistic,value\n";
  const std::size_t limit = n_images == 0 ? ds.size() : std::min(n_images, ds.size());
  for (std::size_t b = 0; b < L; ++b) {
    auto hr_norms = stats::norm_distribution(teacher, ds, 1, b, limit);
    auto lr_norms = stats::norm_distribution(student, ds, ratio, b, limit);
    auto res = stats::t_test(hr_norms, lr_norms, alpha);
    ttest_csv << b + 1 << ",t," << detail::format_g(res.t_statistic) << "\n";
    ttest_csv << b + 1 << ",p," << detail::format_g(res.p_value) << "\n";
    ttest_csv << b + 1 << ",critical," << detail::format_g(res.critical_value) << "\n";
    ttest_csv << b + 1 << ",reject," << (res.reject_null ? 1 : 0) << "\n";
  }
  write_text((fs::path(out_dir) / "ttest.csv").string(), ttest_csv.str());

  auto corr = stats::pixel_correlation(teacher, student, ds, ratio, limit, !raw_correlation);
  std::ostringstream corr_csv;
  corr_csv << "block_id,statistic,value\n";
  for (std::size_t b = 0; b < corr.r.size(); ++b)
    corr_csv << corr.block_ids[b] << ",r," << detail::format_g(corr.r[b]) << "\n";
  write_text((fs::path(out_dir) / "correlation.csv").string(), corr_csv.str());

  // attention maps for the first n_maps samples, teacher on HR / student on LR
  const std::size_t maps = std::min(n_maps, ds.size());
  NoGradScope ng;
  for (std::size_t i = 0; i < maps; ++i) {
    ImageU8 hr = ds.samples[i].image;
    ImageU8 lr = make_lr(hr, ratio);
    for (auto& [model, img, tag] :
         std::vector<std::tuple<Backbone*, ImageU8*, const char*>>{{&teacher, &hr, "teacher"}, {&student, &lr, "student"}}) {
      // batch of 2 duplicated rows keeps eval-mode batch norm happy everywhere
      std::vector<const ImageU8*> ptrs{img, img};
      auto out = model->forward_with_taps(standardize_images(ptrs, cfg.norm_mean, cfg.norm_std), false);
      for (std::size_t b = 0; b < out.taps.size(); ++b) {
        const Tensor& tap = out.taps[b];
        const std::size_t chw = tap.size() / tap.dim(0);
        Tensor one = Tensor::from_data(Shape{tap.dim(1), tap.dim(2), tap.dim(3)},
                                       std::vector<double>(tap.data().begin(), tap.data().begin() + chw));
        auto map = stats::attention_map(one);
        char name[96];
        std::snprintf(name, sizeof(name), "attention_%s_b%zu_s%zu.pgm", tag, b + 1, i);
        stats::write_pgm((fs::path(out_dir) / name).string(), map);
      }
    }
  }
  std::cout << "analyze: wrote ttest.csv, correlation.csv and " << maps * 2 * L << " attention maps to " << out_dir
            << "\n";
  return 0;
}

int cmd_ablate(const ConfigCli& cli, const std::string& teacher_path) {
  RunConfig cfg = cli.build();
  Dataset train = load_for_task(cfg, cfg.train_data);
  Dataset eval_ds;
  if (cfg.eval_data.empty()) throw ConfigError("ablate: eval_data is required");
  eval_ds = load_for_task(cfg, cfg.eval_data);

  Checkpoint tc = load_checkpoint(teacher_path);
  if (!(tc.config == cfg.backbone))
    throw ConfigError("teacher checkpoint backbone config does not match the run config");
  Backbone teacher = backbone_from_checkpoint(tc);

  std::ostringstream table;
  table << "kind,lr_accuracy\n";
  for (DistillKind kind : {DistillKind::none, DistillKind::fitnet_l2, DistillKind::norm_kd, DistillKind::fskd}) {
    RunConfig run = cfg;
    run.distill.kind = kind;
    std::ostringstream metrics;
    TrainedModel tm = train_student(run, train, &eval_ds, kind == DistillKind::none ? nullptr : &teacher, metrics);
    const double acc =
        eval_classification(tm.model, tm.head, eval_ds, cfg.eval_ratio(), 128, cfg.norm_mean, cfg.norm_std);
    const std::string kname = kind == DistillKind::none ? "base" : to_string(kind);
    char row[64];
    std::snprintf(row, sizeof(row), "%s,%.6f\n", kname.c_str(), acc);
    table << row;
    std::cout << row << std::flush;
    save_trained(run, tm, "student_" + std::string(to_string(kind)) + ".ckpt",
                 "student_" + std::string(to_string(kind)) + "_metrics.csv", metrics.str());
  }
  fs::create_directories(cfg.report_dir);
  write_text((fs::path(cfg.report_dir) / "ablation.csv").string(), table.str());
  return 0;
}

std::uint32_t read_u32be(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError(std::string("idx: truncated ") + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

// idx (ubyte) digit files: big-endian magic 2051 for images, 2049 for labels.
int cmd_convert_dataset(const std::string& from, const std::string& input, const std::string& images,
                        const std::string& labels, const std::string& output, std::size_t limit) {
  Dataset ds;
  if (from == "dir") {
    if (input.empty()) throw ConfigError("convert-dataset --from dir needs --input");
    ds = load_dataset_dir(input);
  } else if (from == "idx") {
    if (images.empty() || labels.empty()) throw ConfigError("convert-dataset --from idx needs --images and --labels");
    std::ifstream im(images, std::ios::binary), lb(labels, std::ios::binary);
    if (!im) throw DataError("cannot open '" + images + "'");
    if (!lb) throw DataError("cannot open '" + labels + "'");
    if (read_u32be(im, "image magic") != 2051) throw DataError("'" + images + "' is not an idx image file");
    if (read_u32be(lb, "label magic") != 2049) throw DataError("'" + labels + "' is not an idx label file");
    const std::uint32_t n_img = read_u32be(im, "image count");
    const std::uint32_t rows = read_u32be(im, "rows");
    const std::uint32_t cols = read_u32be(im, "cols");
    const std::uint32_t n_lab = read_u32be(lb, "label count");
    if (n_img != n_lab) throw DataError("idx: image/label counts differ");
    const std::size_t n = limit == 0 ? n_img : std::min<std::size_t>(limit, n_img);
    for (std::size_t i = 0; i < n; ++i) {
      ImageSample s;
      s.image = ImageU8(rows, cols, 1);
      if (!im.read(reinterpret_cast<char*>(s.image.pixels.data()), rows * cols))
        throw DataError("idx: truncated image data");
      const int label = lb.get();
      if (label < 0) throw DataError("idx: truncated label data");
      s.label = label;
      s.id = "idx" + std::to_string(i);
      ds.samples.push_back(std::move(s));
    }
    ds.finalize();
  } else {
    throw ConfigError("convert-dataset: --from must be 'dir' or 'idx'");
  }
  if (output.empty()) throw ConfigError("convert-dataset: --output is required");
  save_dataset_binary(ds, output);
  std::cout << "wrote " << ds.size() << " samples (" << ds.input_size << "x" << ds.input_size << "x" << ds.channels
            << ", " << ds.num_classes << " classes) to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-similarity knowledge distillation for low-resolution recognition"};
  app.require_subcommand(1);

  ConfigCli teacher_cli, student_cli, eval_cli, analyze_cli, ablate_cli;
  std::string student_teacher_path;
  std::string eval_ckpt, eval_protocol = "classification", eval_out;
  unsigned eval_ratio_flag = 1;
  std::string an_teacher, an_student, an_out = "analysis";
  unsigned an_ratio = 4;
  std::size_t an_images = 1000, an_maps = 4;
  bool an_raw = false;
  double an_alpha = 0.01;
  std::string ablate_teacher;
  std::string cv_from = "idx", cv_input, cv_images, cv_labels, cv_output;
  std::size_t cv_limit = 0;

  auto* t = app.add_subcommand("train-teacher", "train the HR teacher with CosFace");
  teacher_cli.attach(t);

  auto* s = app.add_subcommand("train-student", "train an LR student, optionally distilling from a teacher");
  student_cli.attach(s);
  s->add_option("--teacher", student_teacher_path, "teacher checkpoint path");

  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cli.attach(e);
  e->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  e->add_option("--protocol", eval_protocol, "classification | verification | identification");
  e->add_option("--ratio", eval_ratio_flag, "degradation ratio (1,2,4,8)");
  e->add_option("--out", eval_out, "write the accuracy report CSV here");

  auto* a = app.add_subcommand("analyze", "norm t-tests, direction correlation, attention maps");
  analyze_cli.attach(a);
  a->add_option("--teacher", an_teacher, "teacher checkpoint")->required();
  a->add_option("--student", an_student, "student checkpoint")->required();
  a->add_option("--ratio", an_ratio, "student degradation ratio");
  a->add_option("--out", an_out, "output directory");
  a->add_option("--n-images", an_images, "images to scan (0 = all)");
  a->add_option("--n-maps", an_maps, "attention map sample count");
  a->add_option("--alpha", an_alpha, "t-test significance level");
  a->add_flag("--raw-correlation", an_raw, "correlate raw activations instead of per-sample normalized ones");

  auto* ab = app.add_subcommand("ablate", "run base / fitnet_l2 / norm_kd / fskd with one seed");
  ablate_cli.attach(ab);
  ab->add_option("--teacher", ablate_teacher, "teacher checkpoint")->required();

  auto* cv = app.add_subcommand("convert-dataset", "convert idx digit files or a PNG tree to the FSKD binary format");
  cv->add_option("--from", cv_from, "idx | dir");
  cv->add_option("--input", cv_input, "PNG tree root (--from dir)");
  cv->add_option("--images", cv_images, "idx image file (--from idx)");
  cv->add_option("--labels", cv_labels, "idx label file (--from idx)");
  cv->add_option("--output", cv_output, "output .fskd file")->required();
  cv->add_option("--limit", cv_limit, "keep only the first N samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (t->parsed()) return cmd_train_teacher(teacher_cli);
    if (s->parsed()) return cmd_train_student(student_cli, student_teacher_path);
    if (e->parsed()) return cmd_eval(eval_ckpt, eval_protocol, eval_ratio_flag, eval_cli, eval_out);
    if (a->parsed())
      return cmd_analyze(an_teacher, an_student, an_ratio, analyze_cli, an_out, an_images, an_maps, an_raw, an_alpha);
    if (ab->parsed()) return cmd_ablate(ablate_cli, ablate_teacher);
    if (cv->parsed()) return cmd_convert_dataset(cv_from, cv_input, cv_images, cv_labels, cv_output, cv_limit);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return 3;
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return 4;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
