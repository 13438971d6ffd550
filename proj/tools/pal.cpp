// pal: dataset generation, training runs, evaluation and plots.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include "pal/cli.hpp"
#include "pal/datagen.hpp"
#include "pal/image_io.hpp"
#include "pal/model.hpp"
#include "pal/scheduler.hpp"

namespace fs = std::filesystem;
using namespace pal;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

nlohmann::json error_json(const std::string& kind, const std::string& message) {
  return {{"error", kind}, {"message", message}};
}

int fail(int code, const std::string& kind, const std::string& message, const std::optional<fs::path>& out_dir = {}) {
  const auto j = error_json(kind, message);
  std::cerr << j.dump() << '\n';
  if (out_dir) {
    std::error_code ec;
    fs::create_directories(*out_dir, ec);
    if (!ec) write_text(*out_dir / "error.json", j.dump(2) + "\n");
  }
  return code;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

cli::Config config_or_default(const std::string& path) {
  return path.empty() ? cli::parse_config(nlohmann::json::object()) : cli::load_config(path);
}

PointKind parse_labels(const std::string& s) { return point_kind_from_string(s); }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string labels = "coarse";
};

int cmd_generate(const Common& common, const std::string& out) {
  cli::Config cfg;
  try {
    cfg = config_or_default(common.config);
    if (common.seed) cfg.hp.seed = *common.seed;
  } catch (const Error& e) {
    return fail(cli::kBadConfig, "config", e.what());
  }
  const auto ds = datagen::generate_dataset(cli::dataset_options(cfg, parse_labels(common.labels)));
  datagen::write_dataset(out, ds);

  std::size_t targets = 0, area = 0, easy = 0;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    targets += ds.records[i].annotation.points.size();
    area += count_nonzero(ds.ground_truth.mask_for_evaluation(ds.records[i].id));
    easy += ds.difficulty[i] == datagen::Difficulty::easy;
  }
  const nlohmann::json summary = {
      {"samples", ds.records.size()},
      {"easy", easy},
      {"hard", ds.records.size() - easy},
      {"test", ds.test.size()},
      {"targets", targets},
      {"mean_target_area", targets ? static_cast<double>(area) / static_cast<double>(targets) : 0.0},
      {"seed", cfg.hp.seed}};
  std::cout << summary.dump(2) << '\n';
  return cli::kValid;
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string mode = "pal";
  bool dump_epg = false;
  int snapshot_every = 0;
};

int cmd_train(const Common& common, const TrainArgs& args) {
  const fs::path out = args.out;
  cli::Config cfg;
  sched::RunOptions opt;
  PointKind labels{};
  try {
    cfg = config_or_default(common.config);
    if (common.seed) cfg.hp.seed = *common.seed;
    opt = cli::run_options(cfg);
    opt.mode = sched::mode_from_string(args.mode);
    labels = parse_labels(common.labels);
    if (args.snapshot_every < 0) throw FormatError("--snapshot-every must be >= 0");
  } catch (const Error& e) {
    return fail(cli::kBadConfig, "config", e.what(), out);
  }
  opt.out_dir = out;
  opt.dump_epg = args.dump_epg;
  opt.snapshot_every = args.snapshot_every;

  datagen::Dataset ds;
  try {
    ds = datagen::read_dataset(args.dataset, labels);
  } catch (const Error& e) {
    return fail(cli::kAborted, "dataset", e.what(), out);
  }

  fs::create_directories(out);
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  nn::AdamWConfig adam;
  adam.learning_rate = cfg.hp.learning_rate;
  nn::TinySegNet model(cli::model_seed(cfg.hp.seed), adam);

  std::ofstream csv(out / "metrics.csv", std::ios::binary | std::ios::trunc);
  csv << sched::kCsvHeader << '\n';
  std::vector<sched::EpochSink> sinks = {sched::csv_sink(csv), [](const sched::EpochRecord& e) {
                                           std::cerr << "epoch " << e.epoch << " " << sched::to_string(e.phase)
                                                     << " loss " << e.train_loss << " iou " << e.test.iou << " pd "
                                                     << e.test.pd << " fa " << e.test.fa << " train "
                                                     << e.pool_train << " prep " << e.pool_prep << '\n';
                                         }};

  sched::RunReport report;
  try {
    report = sched::run_experiment(ds, cfg.hp, model, opt, sinks);
  } catch (const sched::AuditFailure& e) {
    return fail(cli::kAborted, "audit", e.what(), out);
  } catch (const sched::RunAborted& e) {
    return fail(cli::kAborted, "aborted", e.what(), out);
  } catch (const ParameterError& e) {
    return fail(cli::kBadConfig, "config", e.what(), out);
  }
  csv.close();

  write_text(out / "report.json", sched::to_json(report).dump(2) + "\n");
  write_text(out / "model.bin", model.save());

  // Final test predictions, so `pal eval` can re-derive the report numbers.
  fs::create_directories(out / "predictions");
  for (const auto& s : ds.test) {
    const auto prob = model.predict(s.image);
    io::write_mask(out / "predictions" / (s.id + ".png"), binarize(prob, metrics::kEvalThreshold));
  }

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const nlohmann::json meta = {{"started_utc", started},
                               {"finished_utc", utc_now()},
                               {"wall_seconds", seconds},
                               {"dataset", fs::absolute(args.dataset).string()},
                               {"config", cli::to_json(cfg)},
                               {"mode", args.mode},
                               {"labels", common.labels}};
  write_text(out / "meta.json", meta.dump(2) + "\n");

  std::cout << cli::to_json(report.final_metrics).dump(2) << '\n';
  return report.final_metrics.valid ? cli::kValid : cli::kInvalid;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& out, double deviation) {
  metrics::Summary s;
  try {
    s = cli::evaluate_dirs(pred, gt, deviation);
  } catch (const cli::MismatchError& e) {
    nlohmann::json j = error_json("mismatch", e.what());
    j["only_in_pred"] = e.only_pred;
    j["only_in_gt"] = e.only_gt;
    std::cerr << j.dump() << '\n';
    return cli::kFailure;
  }
  const auto j = cli::to_json(s);
  std::cout << j.dump(2) << '\n';
  if (!out.empty()) write_text(out, j.dump(2) + "\n");
  return s.valid ? cli::kValid : cli::kInvalid;
}

int cmd_plot(const std::string& report_path, const std::string& out) {
  std::ifstream in(report_path);
  if (!in) return fail(cli::kFailure, "io", "cannot read " + report_path);
  const auto report = nlohmann::json::parse(in);
  for (const auto& p : cli::write_plots(report, out)) std::cout << p.string() << '\n';
  return cli::kValid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive active learning for point-supervised small-target segmentation"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Flat JSON config");
    sub->add_option("--seed", common.seed, "Overrides the config seed");
    sub->add_option("--labels", common.labels, "Point labels to use")->check(CLI::IsMember({"coarse", "centroid"}));
  };

  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  add_common(gen);
  gen->add_option("--out", gen_out, "Dataset directory")->required();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Run one experiment");
  add_common(train);
  train->add_option("--dataset", train_args.dataset, "Dataset directory")->required();
  train->add_option("--out", train_args.out, "Run output directory")->required();
  train->add_option("--mode", train_args.mode, "Training regime")
      ->check(CLI::IsMember({"pal", "full-supervision", "points-only", "epg-only"}));
  train->add_flag("--dump-epg", train_args.dump_epg, "Write every initial pseudo-label");
  train->add_option("--snapshot-every", train_args.snapshot_every,
                    "Pseudo-label snapshot period in epochs (0: every update epoch)");

  std::string eval_pred, eval_gt, eval_out;
  double deviation = metrics::kDefaultDeviation;
  auto* eval = app.add_subcommand("eval", "Score a directory of predicted masks");
  eval->add_option("pred", eval_pred, "Predicted masks")->required();
  eval->add_option("gt", eval_gt, "Ground-truth masks")->required();
  eval->add_option("--out", eval_out, "Also write the metrics JSON here");
  eval->add_option("--deviation", deviation, "Centroid distance for a detection, pixels");

  std::string plot_report, plot_out;
  auto* plot = app.add_subcommand("plot", "Render report curves as SVG");
  plot->add_option("report", plot_report, "report.json")->required();
  plot->add_option("--out", plot_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kBadConfig;
  }

  try {
    if (*gen) return cmd_generate(common, gen_out);
    if (*train) return cmd_train(common, train_args);
    if (*eval) return cmd_eval(eval_pred, eval_gt, eval_out, deviation);
    if (*plot) return cmd_plot(plot_report, plot_out);
  } catch (const FormatError& e) {
    return fail(cli::kBadConfig, "format", e.what());
  } catch (const std::exception& e) {
    return fail(cli::kFailure, "error", e.what());
  }
  return cli::kFailure;
}
