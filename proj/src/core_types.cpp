#include "pal/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pal {

std::size_t count_nonzero(const BinaryMask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.data().begin(), mask.data().end(), [](auto v) { return v != 0; }));
}

void check_gray_image(const GrayImage& img) {
  if (img.height() < 8 || img.width() < 8) throw ParameterError("image smaller than 8x8");
  for (float v : img.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ParameterError("image intensity outside [0,1]");
  }
}

SoftLabel point_label(Extent extent, const PointAnnotation& annotation) {
  SoftLabel label(extent, 0.0f);
  stamp_points(label, annotation);
  return label;
}

void stamp_points(SoftLabel& label, const PointAnnotation& annotation) {
  for (const Pixel& p : annotation.points) {
    if (label.contains(p)) label[p] = 1.0f;
  }
}

std::vector<std::string> check_hyperparams(const Hyperparams& hp) {
  std::vector<std::string> out;
  if (hp.total_epochs < 1) out.emplace_back("total_epochs >= 1");
  if (!(hp.prestart_frac > 0.0 && hp.prestart_frac < hp.refine_frac && hp.refine_frac < 1.0))
    out.emplace_back("0 < prestart_frac < refine_frac < 1");
  if (hp.update_period < 1) out.emplace_back("update_period >= 1");
  if (!(hp.lambda_decay > 0.0 && hp.lambda_decay <= 1.0)) out.emplace_back("lambda_decay in (0,1]");
  if (!(hp.tb > 0.0 && hp.tb < 1.0)) out.emplace_back("tb in (0,1)");
  if (!(hp.k > 0.0 && hp.k < 1.0)) out.emplace_back("k in (0,1)");
  if (!(hp.r > 0.0)) out.emplace_back("r > 0");
  if (hp.d < 3 || hp.d % 2 == 0) out.emplace_back("d odd and >= 3");
  if (!(hp.tm_init >= 0.0 && hp.tm_init <= 1.0)) out.emplace_back("tm_init in [0,1]");
  if (!(hp.tf >= 0.0)) out.emplace_back("tf >= 0");
  if (!(hp.alpha_edge > 0.0)) out.emplace_back("alpha_edge > 0");
  if (!(hp.recall_threshold >= 0.0 && hp.recall_threshold <= 1.0)) out.emplace_back("recall_threshold in [0,1]");
  if (!(hp.learning_rate >= 0.0)) out.emplace_back("learning_rate >= 0");
  if (hp.batch_size < 1) out.emplace_back("batch_size >= 1");
  if (!(hp.binarize_threshold > 0.0 && hp.binarize_threshold < 1.0)) out.emplace_back("binarize_threshold in (0,1)");
  if (!(hp.pred_threshold > 0.0 && hp.pred_threshold < 1.0)) out.emplace_back("pred_threshold in (0,1)");
  return out;
}

void require_valid(const Hyperparams& hp) {
  auto problems = check_hyperparams(hp);
  if (problems.empty()) return;
  std::string msg = "invalid hyperparameters:";
  for (const auto& p : problems) msg += " [" + p + "]";
  throw ParameterError(msg);
}

std::vector<Violation> validate(const SampleRecord& record) {
  std::vector<Violation> out;
  const Extent extent = record.image.extent();

  if (extent.height < 8 || extent.width < 8) out.push_back({"image too small", "height and width must be >= 8"});
  for (float v : record.image.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      out.push_back({"intensity out of range", "image values must lie in [0,1]"});
      break;
    }
  }

  bool label_shape_ok = true;
  if (record.pseudo_label.extent() != extent) {
    out.push_back({"label shape mismatch", "pseudo_label extent differs from image"});
    label_shape_ok = false;
  } else {
    for (float v : record.pseudo_label.data()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        out.push_back({"label out of range", "pseudo_label values must lie in [0,1]"});
        break;
      }
    }
  }

  std::set<Pixel> seen;
  for (const Pixel& p : record.annotation.points) {
    if (!extent.contains(p)) {
      out.push_back({"point out of bounds", "(" + std::to_string(p.row) + ", " + std::to_string(p.col) + ")"});
    } else if (!seen.insert(p).second) {
      out.push_back({"duplicate point", "(" + std::to_string(p.row) + ", " + std::to_string(p.col) + ")"});
    }
  }

  if (record.pool == Pool::training && label_shape_ok) {
    for (const Pixel& p : record.annotation.points) {
      if (extent.contains(p) && !(record.pseudo_label[p] > 0.0f)) {
        out.push_back({"point not positive", "(" + std::to_string(p.row) + ", " + std::to_string(p.col) + ")"});
      }
    }
  }

  const bool training = record.pool == Pool::training;
  if (training != record.admitted_epoch.has_value()) {
    out.push_back({"admission mismatch", "admitted_epoch must be set iff pool = training"});
  }
  return out;
}

// -----------------------------------------------------------------------------
// JSON
// -----------------------------------------------------------------------------

std::string to_string(PointKind kind) { return kind == PointKind::coarse ? "coarse" : "centroid"; }
std::string to_string(Pool pool) { return pool == Pool::training ? "training" : "preparation"; }

PointKind point_kind_from_string(const std::string& s) {
  if (s == "coarse") return PointKind::coarse;
  if (s == "centroid") return PointKind::centroid;
  throw FormatError("unknown point kind '" + s + "'");
}

Pool pool_from_string(const std::string& s) {
  if (s == "training") return Pool::training;
  if (s == "preparation") return Pool::preparation;
  throw FormatError("unknown pool '" + s + "'");
}

void to_json(nlohmann::json& j, const Pixel& p) { j = nlohmann::json::array({p.row, p.col}); }

void from_json(const nlohmann::json& j, Pixel& p) {
  if (!j.is_array() || j.size() != 2) throw FormatError("point must be [row, col]");
  p.row = j.at(0).get<int>();
  p.col = j.at(1).get<int>();
}

void to_json(nlohmann::json& j, const PointAnnotation& a) {
  j = nlohmann::json{{"points", a.points}, {"kind", to_string(a.kind)}};
}

void from_json(const nlohmann::json& j, PointAnnotation& a) {
  a.points = j.at("points").get<std::vector<Pixel>>();
  a.kind = point_kind_from_string(j.at("kind").get<std::string>());
}

void to_json(nlohmann::json& j, const Hyperparams& hp) {
  j = nlohmann::json{{"total_epochs", hp.total_epochs},
                     {"prestart_frac", hp.prestart_frac},
                     {"refine_frac", hp.refine_frac},
                     {"update_period", hp.update_period},
                     {"tm_init", hp.tm_init},
                     {"tf", hp.tf},
                     {"lambda_decay", hp.lambda_decay},
                     {"tb", hp.tb},
                     {"k", hp.k},
                     {"r", hp.r},
                     {"d", hp.d},
                     {"alpha_edge", hp.alpha_edge},
                     {"recall_threshold", hp.recall_threshold},
                     {"learning_rate", hp.learning_rate},
                     {"batch_size", hp.batch_size},
                     {"binarize_threshold", hp.binarize_threshold},
                     {"pred_threshold", hp.pred_threshold},
                     {"seed", hp.seed}};
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw FormatError(std::string("'") + key + "' must be an integer");
    } else {
      if (!it->is_number()) throw FormatError(std::string("'") + key + "' must be a number");
    }
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("hyperparameters must be a JSON object");
  Hyperparams hp;
  const nlohmann::json defaults = hp;
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw FormatError("unknown hyperparameter '" + key + "'");
  }
  read_field(j, "total_epochs", hp.total_epochs);
  read_field(j, "prestart_frac", hp.prestart_frac);
  read_field(j, "refine_frac", hp.refine_frac);
  read_field(j, "update_period", hp.update_period);
  read_field(j, "tm_init", hp.tm_init);
  read_field(j, "tf", hp.tf);
  read_field(j, "lambda_decay", hp.lambda_decay);
  read_field(j, "tb", hp.tb);
  read_field(j, "k", hp.k);
  read_field(j, "r", hp.r);
  read_field(j, "d", hp.d);
  read_field(j, "alpha_edge", hp.alpha_edge);
  read_field(j, "recall_threshold", hp.recall_threshold);
  read_field(j, "learning_rate", hp.learning_rate);
  read_field(j, "batch_size", hp.batch_size);
  read_field(j, "binarize_threshold", hp.binarize_threshold);
  read_field(j, "pred_threshold", hp.pred_threshold);
  read_field(j, "seed", hp.seed);
  return hp;
}

nlohmann::json record_metadata(const SampleRecord& record) {
  nlohmann::json j{{"id", record.id},
                   {"points", record.annotation.points},
                   {"kind", to_string(record.annotation.kind)},
                   {"pool", to_string(record.pool)}};
  j["admitted_epoch"] = record.admitted_epoch ? nlohmann::json(*record.admitted_epoch) : nlohmann::json(nullptr);
  return j;
}

RecordMetadata record_metadata_from_json(const nlohmann::json& j) {
  try {
    RecordMetadata m;
    m.id = j.at("id").get<std::string>();
    m.annotation.points = j.at("points").get<std::vector<Pixel>>();
    m.annotation.kind = point_kind_from_string(j.at("kind").get<std::string>());
    m.pool = pool_from_string(j.at("pool").get<std::string>());
    const auto& ae = j.at("admitted_epoch");
    if (!ae.is_null()) m.admitted_epoch = ae.get<int>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad sample metadata: ") + e.what());
  }
}

}  // namespace pal
