#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pal/core_types.hpp"
#include "pal/datagen.hpp"
#include "pal/metrics.hpp"
#include "pal/scheduler.hpp"

namespace pal::cli {

enum ExitCode : int { kValid = 0, kFailure = 1, kInvalid = 2, kAborted = 3, kBadConfig = 4 };

/// Everything a config file can set. The file is one flat JSON object whose
/// keys are Hyperparams fields plus the dataset and run keys below; any other
/// key is rejected.
struct Config {
  Hyperparams hp;
  // dataset
  int n = 200;
  double easy_frac = 0.5;
  int test_n = 100;
  // run
  loss::Kind loss = loss::Kind::eedm;
  bool enable_cou = true;
  bool enable_fiu = true;
  int crop = 32;
  double deviation = metrics::kDefaultDeviation;
  int snapshot_samples = 4;
};

/// Throws FormatError on unknown keys or wrong value types.
Config parse_config(const nlohmann::json& j);
Config load_config(const std::filesystem::path& path);
nlohmann::json to_json(const Config& c);

datagen::DatasetOptions dataset_options(const Config& c, PointKind labels);
sched::RunOptions run_options(const Config& c);

/// Seed of the network initialisation, derived from the run seed.
std::uint64_t model_seed(std::uint64_t run_seed);

// -----------------------------------------------------------------------------
// Evaluation of mask directories
// -----------------------------------------------------------------------------

/// Raised when two directories do not hold the same file names.
class MismatchError : public Error {
 public:
  MismatchError(std::vector<std::string> only_pred, std::vector<std::string> only_gt);
  std::vector<std::string> only_pred;
  std::vector<std::string> only_gt;
};

/// Pairs mask files by name (.png/.pgm) and scores them.
metrics::Summary evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                               double deviation = metrics::kDefaultDeviation);

nlohmann::json to_json(const metrics::Summary& s);

// -----------------------------------------------------------------------------
// Plots
// -----------------------------------------------------------------------------

struct Series {
  std::string name;
  std::string colour;
  std::vector<double> y;
};

/// Standalone SVG line chart over x = 0..n-1 (or the given xs). The y-range
/// always contains every value.
std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<double>& xs,
                       const std::vector<Series>& series);

/// iou.svg, pools.svg, label_quality.svg from a report.json document.
std::vector<std::filesystem::path> write_plots(const nlohmann::json& report, const std::filesystem::path& out_dir);

}  // namespace pal::cli
