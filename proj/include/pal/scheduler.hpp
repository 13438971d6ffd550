#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pal/core_types.hpp"
#include "pal/datagen.hpp"
#include "pal/loss.hpp"
#include "pal/metrics.hpp"
#include "pal/model.hpp"

namespace pal::sched {

enum class Phase { prestart, enhancement, refinement };
std::string to_string(Phase p);

struct PhaseSchedule {
  int total_epochs = 0;
  int prestart_end = 0;   // first enhancement epoch
  int refine_start = 0;   // first refinement epoch
  int update_period = 1;

  /// Throws ParameterError unless 0 < prestart_end < refine_start < total_epochs.
  static PhaseSchedule from(const Hyperparams& hp);
  Phase phase(int epoch) const;
};

/// Linear from hp.tm_init at prestart_end to 1.0 at refine_start, then 1.0.
/// Undefined (throws) before prestart_end.
double tm_at(int epoch, const PhaseSchedule& s, const Hyperparams& hp);

/// Sample admission: every update_period epochs inside enhancement, counted
/// from prestart_end but not at prestart_end itself.
bool fires_cou(int epoch, const PhaseSchedule& s);

/// Label refinement: same period, enhancement and refinement.
bool fires_fiu(int epoch, const PhaseSchedule& s);

/// Epoch at which leftover preparation samples are admitted with point labels:
/// the last admission firing, or refine_start when there is none.
int force_admit_epoch(const PhaseSchedule& s);

// -----------------------------------------------------------------------------
// Runs
// -----------------------------------------------------------------------------

enum class Mode { pal, full_supervision, points_only, epg_only };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct RunOptions {
  Mode mode = Mode::pal;
  loss::Kind loss = loss::Kind::eedm;
  bool enable_cou = true;
  bool enable_fiu = true;
  int crop = 32;  // training crop side; smaller images are used whole
  // Cosine decay from hp.learning_rate at epoch 0 to lr_floor at the last
  // epoch; constant when false.
  bool cosine_lr = true;
  double lr_floor = 1e-5;
  double deviation = metrics::kDefaultDeviation;

  // Audit trail on disk; nothing is written when out_dir is empty.
  std::filesystem::path out_dir;
  bool dump_epg = false;
  int snapshot_every = 0;  // 0: every firing epoch; N: every N epochs
  int snapshot_samples = 4;
};

/// Per-epoch measurements. Metrics are taken on the held-out test set after
/// the epoch's training pass.
struct EpochRecord {
  int epoch = 0;
  Phase phase = Phase::prestart;
  std::optional<double> tm;
  bool cou_fired = false;
  bool fiu_fired = false;
  int admitted = 0;
  int force_admitted = 0;
  int pool_train = 0;
  int pool_prep = 0;
  double train_loss = 0.0;
  int train_steps = 0;
  metrics::Summary test;
  double label_iou_gt = 0.0;  // mean IoU of training-pool pseudo-labels vs hidden masks
};

struct EpgSummary {
  int easy = 0;
  int hard = 0;
  double mean_recall = 0.0;
};

struct RunReport {
  Mode mode = Mode::pal;
  PointKind labels = PointKind::coarse;
  loss::Kind loss = loss::Kind::eedm;
  Hyperparams hp;
  PhaseSchedule schedule;
  std::size_t parameter_count = 0;
  std::optional<EpgSummary> epg;
  std::vector<EpochRecord> epochs;
  std::vector<std::pair<std::string, int>> admissions;  // id, epoch; dataset order
  std::size_t audit_checks = 0;
  metrics::Summary final_metrics;
};

/// Raised when the run cannot continue (empty training pool, non-finite loss).
class RunAborted : public Error {
 public:
  using Error::Error;
};

/// Raised when a scheduler invariant fails during a run.
class AuditFailure : public Error {
 public:
  using Error::Error;
};

using EpochSink = std::function<void(const EpochRecord&)>;

/// Pre-start on EPG-selected easy samples, then periodic admission (COU) and
/// label refinement (FIU), then refinement with FIU only. Modes other than pal
/// skip parts of this: full_supervision and points_only put every sample in
/// the training pool at epoch 0 with its dense mask or its point label;
/// epg_only trains on the easy samples and never updates.
RunReport run_experiment(datagen::Dataset& dataset, const Hyperparams& hp, nn::Predictor& predictor,
                         const RunOptions& options = {}, const std::vector<EpochSink>& sinks = {});

/// Deterministic JSON: no timestamps or host details.
nlohmann::json to_json(const RunReport& report);

inline constexpr const char* kCsvHeader = "epoch,phase,iou,niou,pd,fa,valid,pool_train,pool_prep,label_iou_gt";
std::string csv_row(const EpochRecord& e);

/// Appends rows to an open stream as epochs complete.
EpochSink csv_sink(std::ostream& out);

}  // namespace pal::sched
