#include "pal/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "pal/image_io.hpp"

namespace pal::cli {
namespace {

const std::set<std::string> kDatasetKeys = {"n", "easy_frac", "test_n"};
const std::set<std::string> kRunKeys = {"loss", "enable_cou", "enable_fiu", "crop", "deviation", "snapshot_samples"};

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>)
    ok = it->is_boolean();
  else if constexpr (std::is_integral_v<T>)
    ok = it->is_number_integer();
  else if constexpr (std::is_floating_point_v<T>)
    ok = it->is_number();
  else
    ok = it->is_string();
  if (!ok) throw FormatError(std::string("config key '") + key + "' has the wrong type");
  out = it->get<T>();
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::vector<std::string> mask_names(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".png" || ext == ".pgm") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<double> column(const nlohmann::json& epochs, const char* key) {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.at(key).get<double>());
  return out;
}

}  // namespace

Config parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  Config c;
  nlohmann::json hp_part = nlohmann::json::object();
  for (const auto& [key, value] : j.items()) {
    if (kDatasetKeys.count(key) || kRunKeys.count(key)) continue;
    hp_part[key] = value;
  }
  c.hp = hyperparams_from_json(hp_part);
  take(j, "n", c.n);
  take(j, "easy_frac", c.easy_frac);
  take(j, "test_n", c.test_n);
  std::string loss_name = loss::to_string(c.loss);
  take(j, "loss", loss_name);
  try {
    c.loss = loss::kind_from_string(loss_name);
  } catch (const ParameterError& e) {
    throw FormatError(e.what());
  }
  take(j, "enable_cou", c.enable_cou);
  take(j, "enable_fiu", c.enable_fiu);
  take(j, "crop", c.crop);
  take(j, "deviation", c.deviation);
  take(j, "snapshot_samples", c.snapshot_samples);

  if (c.n < 1) throw FormatError("n must be >= 1");
  if (c.test_n < 1) throw FormatError("test_n must be >= 1");
  if (!(c.easy_frac >= 0.0 && c.easy_frac <= 1.0)) throw FormatError("easy_frac must lie in [0,1]");
  if (c.crop < 4 || c.crop % 4 != 0) throw FormatError("crop must be a positive multiple of 4");
  if (c.deviation < 0.0) throw FormatError("deviation must be >= 0");
  if (c.snapshot_samples < 0) throw FormatError("snapshot_samples must be >= 0");
  const auto problems = check_hyperparams(c.hp);
  if (!problems.empty()) throw FormatError("invalid hyperparameters: " + problems.front());
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

nlohmann::json to_json(const Config& c) {
  nlohmann::json j;
  pal::to_json(j, c.hp);
  j["n"] = c.n;
  j["easy_frac"] = c.easy_frac;
  j["test_n"] = c.test_n;
  j["loss"] = loss::to_string(c.loss);
  j["enable_cou"] = c.enable_cou;
  j["enable_fiu"] = c.enable_fiu;
  j["crop"] = c.crop;
  j["deviation"] = c.deviation;
  j["snapshot_samples"] = c.snapshot_samples;
  return j;
}

datagen::DatasetOptions dataset_options(const Config& c, PointKind labels) {
  datagen::DatasetOptions o;
  o.n = c.n;
  o.easy_frac = c.easy_frac;
  o.test_n = c.test_n;
  o.labels = labels;
  o.seed = c.hp.seed;
  return o;
}

sched::RunOptions run_options(const Config& c) {
  sched::RunOptions o;
  o.loss = c.loss;
  o.enable_cou = c.enable_cou;
  o.enable_fiu = c.enable_fiu;
  o.crop = c.crop;
  o.deviation = c.deviation;
  o.snapshot_samples = c.snapshot_samples;
  return o;
}

std::uint64_t model_seed(std::uint64_t run_seed) { return datagen::stream_seed(run_seed, 4, 0); }

MismatchError::MismatchError(std::vector<std::string> p, std::vector<std::string> g)
    : Error("prediction and ground-truth directories hold different files"), only_pred(std::move(p)), only_gt(std::move(g)) {}

metrics::Summary evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                               double deviation) {
  const auto pred_names = mask_names(pred_dir);
  const auto gt_names = mask_names(gt_dir);
  std::vector<std::string> only_pred, only_gt;
  std::set_difference(pred_names.begin(), pred_names.end(), gt_names.begin(), gt_names.end(),
                      std::back_inserter(only_pred));
  std::set_difference(gt_names.begin(), gt_names.end(), pred_names.begin(), pred_names.end(),
                      std::back_inserter(only_gt));
  if (!only_pred.empty() || !only_gt.empty()) throw MismatchError(only_pred, only_gt);

  std::vector<BinaryMask> pred, gt;
  for (const auto& name : gt_names) {
    pred.push_back(io::read_mask(pred_dir / name));
    gt.push_back(io::read_mask(gt_dir / name));
  }
  return metrics::evaluate(std::span<const BinaryMask>(pred), std::span<const BinaryMask>(gt), deviation);
}

nlohmann::json to_json(const metrics::Summary& s) {
  return {{"iou", s.iou}, {"niou", s.niou}, {"pd", s.pd}, {"fa", s.fa}, {"valid", s.valid}};
}

std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<double>& xs,
                       const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, left = 60, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!xs.empty()) {
    x0 = *std::min_element(xs.begin(), xs.end());
    x1 = *std::max_element(xs.begin(), xs.end());
  }
  for (const auto& s : series)
    for (double v : s.y) {
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" data-xmin=\"" << x0 << "\" data-xmax=\"" << x1 << "\" data-ymin=\"" << y0 << "\" data-ymax=\""
    << y1 << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << escape_xml(title) << "</text>\n"
    << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double xv = x0 + (x1 - x0) * i / 4.0;
    o << "<line x1=\"" << left << "\" y1=\"" << fmt(sy(yv)) << "\" x2=\"" << left + pw << "\" y2=\"" << fmt(sy(yv))
      << "\" stroke=\"#ddd\"/>\n"
      << "<text x=\"" << left - 6 << "\" y=\"" << fmt(sy(yv) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick_label(yv) << "</text>\n"
      << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << top + ph + 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << tick_label(xv) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(x_label) << "</text>\n";

  int legend = 0;
  for (const auto& s : series) {
    const std::size_t n = std::min(s.y.size(), xs.size());
    o << "<g fill=\"none\" stroke=\"" << s.colour << "\" stroke-width=\"2\">\n";
    if (n > 1) {
      o << "<polyline points=\"";
      for (std::size_t i = 0; i < n; ++i) o << (i ? " " : "") << fmt(sx(xs[i])) << ',' << fmt(sy(s.y[i]));
      o << "\"/>\n";
    }
    for (std::size_t i = 0; i < n; ++i)
      o << "<circle cx=\"" << fmt(sx(xs[i])) << "\" cy=\"" << fmt(sy(s.y[i])) << "\" r=\"1.5\"/>\n";
    o << "</g>\n";
    const double ly = top + 10 + 18 * legend++;
    o << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << s.colour << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << left + pw + 36 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << escape_xml(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> write_plots(const nlohmann::json& report, const std::filesystem::path& out_dir) {
  const auto& epochs = report.at("epochs");
  const std::vector<double> xs = column(epochs, "epoch");
  std::filesystem::create_directories(out_dir);

  struct Chart {
    const char* file;
    const char* title;
    std::vector<Series> series;
  };
  const std::vector<Chart> charts = {
      {"iou.svg",
       "Test metrics per epoch",
       {{"IoU", "#1f77b4", column(epochs, "iou")},
        {"nIoU", "#ff7f0e", column(epochs, "niou")},
        {"Pd", "#2ca02c", column(epochs, "pd")}}},
      {"pools.svg",
       "Pool sizes per epoch",
       {{"training", "#1f77b4", column(epochs, "pool_train")},
        {"preparation", "#d62728", column(epochs, "pool_prep")}}},
      {"label_quality.svg",
       "Pseudo-label IoU vs ground truth",
       {{"label IoU", "#9467bd", column(epochs, "label_iou_gt")}}},
  };

  std::vector<std::filesystem::path> written;
  for (const auto& c : charts) {
    const auto path = out_dir / c.file;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << line_chart(c.title, "epoch", xs, c.series);
    written.push_back(path);
  }
  return written;
}

}  // namespace pal::cli
