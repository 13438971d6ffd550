#include "pal/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include "pal/dual_update.hpp"
#include "pal/epg.hpp"
#include "pal/image_io.hpp"

namespace pal::sched {

std::string to_string(Phase p) {
  switch (p) {
    case Phase::prestart:
      return "prestart";
    case Phase::enhancement:
      return "enhancement";
    case Phase::refinement:
      return "refinement";
  }
  return "prestart";
}

PhaseSchedule PhaseSchedule::from(const Hyperparams& hp) {
  PhaseSchedule s;
  s.total_epochs = hp.total_epochs;
  s.prestart_end = static_cast<int>(std::floor(hp.prestart_frac * hp.total_epochs));
  s.refine_start = static_cast<int>(std::floor(hp.refine_frac * hp.total_epochs));
  s.update_period = hp.update_period;
  if (!(0 < s.prestart_end && s.prestart_end < s.refine_start && s.refine_start < s.total_epochs))
    throw ParameterError("phase schedule needs 0 < prestart_end < refine_start < total_epochs (got " +
                         std::to_string(s.prestart_end) + ", " + std::to_string(s.refine_start) + ", " +
                         std::to_string(s.total_epochs) + ")");
  if (s.update_period < 1) throw ParameterError("update_period must be >= 1");
  return s;
}

Phase PhaseSchedule::phase(int epoch) const {
  if (epoch < prestart_end) return Phase::prestart;
  if (epoch < refine_start) return Phase::enhancement;
  return Phase::refinement;
}

double tm_at(int epoch, const PhaseSchedule& s, const Hyperparams& hp) {
  if (epoch < s.prestart_end) throw ParameterError("T_m is undefined during pre-start");
  if (epoch >= s.refine_start) return 1.0;
  const double t = static_cast<double>(epoch - s.prestart_end) / static_cast<double>(s.refine_start - s.prestart_end);
  return hp.tm_init + (1.0 - hp.tm_init) * t;
}

bool fires_cou(int epoch, const PhaseSchedule& s) {
  return s.phase(epoch) == Phase::enhancement && epoch != s.prestart_end &&
         (epoch - s.prestart_end) % s.update_period == 0;
}

bool fires_fiu(int epoch, const PhaseSchedule& s) {
  return s.phase(epoch) != Phase::prestart && epoch < s.total_epochs && (epoch - s.prestart_end) % s.update_period == 0;
}

int force_admit_epoch(const PhaseSchedule& s) {
  for (int e = s.refine_start - 1; e > s.prestart_end; --e)
    if (fires_cou(e, s)) return e;
  return s.refine_start;
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::pal:
      return "pal";
    case Mode::full_supervision:
      return "full-supervision";
    case Mode::points_only:
      return "points-only";
    case Mode::epg_only:
      return "epg-only";
  }
  return "pal";
}

Mode mode_from_string(const std::string& s) {
  if (s == "pal") return Mode::pal;
  if (s == "full-supervision") return Mode::full_supervision;
  if (s == "points-only") return Mode::points_only;
  if (s == "epg-only") return Mode::epg_only;
  throw ParameterError("unknown mode '" + s + "'");
}

namespace {

constexpr std::uint64_t kShuffleStream = 3;

class Run {
 public:
  Run(datagen::Dataset& ds, const Hyperparams& hp, nn::Predictor& model, const RunOptions& opt,
      const std::vector<EpochSink>& sinks)
      : ds_(ds),
        hp_(hp),
        model_(model),
        opt_(opt),
        sinks_(sinks),
        schedule_(PhaseSchedule::from(hp)),
        loss_(loss::make_loss(opt.loss, hp.alpha_edge)),
        rng_(datagen::stream_seed(hp.seed, kShuffleStream, 0)) {
    for (const auto& s : ds_.test) {
      test_images_.push_back(s.image);
      test_gt_.push_back(s.ground_truth);
    }
    const int n = static_cast<int>(ds_.records.size());
    const int k = std::min(opt_.snapshot_samples, n);
    for (int i = 0; i < k; ++i) snapshot_ids_.push_back(static_cast<std::size_t>(i) * n / k);
  }

  RunReport execute() {
    RunReport report;
    report.mode = opt_.mode;
    report.labels = ds_.records.front().annotation.kind;
    report.loss = opt_.loss;
    report.hp = hp_;
    report.schedule = schedule_;
    report.parameter_count = model_.parameter_count();

    audit_schedule();
    report.epg = initialise_pools();
    if (train_count() == 0) throw RunAborted("training pool is empty after pseudo-label generation (dataset too hard)");
    snapshot(-1);
    previous_pool_ = pools();

    for (int e = 0; e < schedule_.total_epochs; ++e) {
      EpochRecord rec;
      rec.epoch = e;
      rec.phase = schedule_.phase(e);
      if (rec.phase != Phase::prestart) rec.tm = tm_at(e, schedule_, hp_);

      if (opt_.mode == Mode::pal) update_labels(e, rec);
      if (rec.cou_fired || rec.fiu_fired) {
        if (opt_.snapshot_every == 0) snapshot(e);
      }
      if (opt_.snapshot_every > 0 && e % opt_.snapshot_every == 0) snapshot(e);

      model_.set_learning_rate(learning_rate(e));
      train_epoch(rec);
      evaluate(rec);
      audit_epoch(rec);

      for (const auto& sink : sinks_) sink(rec);
      report.epochs.push_back(rec);
    }

    for (const auto& r : ds_.records)
      if (r.admitted_epoch) report.admissions.emplace_back(r.id, *r.admitted_epoch);
    report.audit_checks = audit_checks_;
    report.final_metrics = report.epochs.back().test;
    return report;
  }

 private:
  double learning_rate(int e) const {
    if (!opt_.cosine_lr || schedule_.total_epochs < 2) return hp_.learning_rate;
    const double t = static_cast<double>(e) / static_cast<double>(schedule_.total_epochs - 1);
    return opt_.lr_floor + 0.5 * (hp_.learning_rate - opt_.lr_floor) * (1.0 + std::cos(std::numbers::pi * t));
  }

  int train_count() const {
    return static_cast<int>(std::count_if(ds_.records.begin(), ds_.records.end(),
                                          [](const SampleRecord& r) { return r.pool == Pool::training; }));
  }

  std::vector<Pool> pools() const {
    std::vector<Pool> out;
    for (const auto& r : ds_.records) out.push_back(r.pool);
    return out;
  }

  void admit(SampleRecord& r, SoftLabel label, int epoch) {
    r.pseudo_label = std::move(label);
    r.pool = Pool::training;
    r.admitted_epoch = epoch;
  }

  std::optional<EpgSummary> initialise_pools() {
    for (auto& r : ds_.records) {
      r.pool = Pool::preparation;
      r.admitted_epoch.reset();
      r.pseudo_label = point_label(r.image.extent(), r.annotation);
    }
    switch (opt_.mode) {
      case Mode::full_supervision:
        for (auto& r : ds_.records) admit(r, convert<SoftLabel>(ds_.ground_truth.mask_for_evaluation(r.id)), 0);
        return std::nullopt;
      case Mode::points_only:
        for (auto& r : ds_.records) admit(r, point_label(r.image.extent(), r.annotation), 0);
        return std::nullopt;
      case Mode::pal:
      case Mode::epg_only:
        break;
    }

    EpgSummary summary;
    double recall_sum = 0.0;
    for (auto& r : ds_.records) {
      epg::EpgResult res = epg::epg_classify(r, hp_);
      recall_sum += res.recall;
      if (opt_.dump_epg && !opt_.out_dir.empty()) {
        std::filesystem::create_directories(opt_.out_dir / "epg");
        io::write_label_png(opt_.out_dir / "epg" / (r.id + ".png"), res.pseudo_label);
      }
      if (res.classification == epg::Classification::easy) {
        admit(r, std::move(res.pseudo_label), 0);
        ++summary.easy;
      } else {
        r.pseudo_label = std::move(res.pseudo_label);
        ++summary.hard;
      }
    }
    summary.mean_recall = recall_sum / static_cast<double>(ds_.records.size());
    return summary;
  }

  SoftLabel predict(const GrayImage& img) const {
    return model_.forward(std::span<const GrayImage>(&img, 1)).front();
  }

  void update_labels(int e, EpochRecord& rec) {
    if (opt_.enable_cou && fires_cou(e, schedule_)) {
      rec.cou_fired = true;
      for (auto& r : ds_.records) {
        if (r.pool != Pool::preparation) continue;
        update::CouDecision d = update::cou_evaluate(r, predict(r.image), *rec.tm, hp_.tf, hp_);
        if (!d.admitted) continue;
        admit(r, std::move(*d.refined_label), e);
        ++rec.admitted;
      }
    }
    if (opt_.enable_cou && e == force_admit_epoch(schedule_)) {
      for (auto& r : ds_.records) {
        if (r.pool != Pool::preparation) continue;
        admit(r, point_label(r.image.extent(), r.annotation), e);
        ++rec.force_admitted;
      }
    }
    if (opt_.enable_fiu && fires_fiu(e, schedule_)) {
      rec.fiu_fired = true;
      for (auto& r : ds_.records) {
        // Labels admitted this epoch were just derived from the same model.
        if (r.pool != Pool::training || *r.admitted_epoch == e) continue;
        r.pseudo_label = update::fiu_update(r.pseudo_label, predict(r.image), r.annotation, hp_);
      }
    }
  }

  void train_epoch(EpochRecord& rec) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < ds_.records.size(); ++i)
      if (ds_.records[i].pool == Pool::training) order.push_back(i);
    std::shuffle(order.begin(), order.end(), rng_);

    const std::size_t gt_reads = ds_.ground_truth.evaluation_reads();
    const auto batch = static_cast<std::size_t>(hp_.batch_size);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<GrayImage> images;
      std::vector<BinaryMask> labels;
      for (std::size_t j = start; j < std::min(order.size(), start + batch); ++j) {
        const SampleRecord& r = ds_.records[order[j]];
        check(r.pool == Pool::training, "training step read a preparation-pool sample (" + r.id + ")");
        auto [img, lab] = random_crop(r.image, binarize(r.pseudo_label, hp_.binarize_threshold));
        images.push_back(std::move(img));
        labels.push_back(std::move(lab));
      }
      try {
        loss_sum += model_.train_step(images, labels, loss_);
      } catch (const nn::NonFiniteLoss& err) {
        throw RunAborted(std::string("epoch ") + std::to_string(rec.epoch) + ": " + err.what());
      }
      ++rec.train_steps;
    }
    check(ds_.ground_truth.evaluation_reads() == gt_reads, "training step read hidden ground truth");
    rec.train_loss = rec.train_steps ? loss_sum / rec.train_steps : 0.0;
  }

  std::pair<GrayImage, BinaryMask> random_crop(const GrayImage& img, const BinaryMask& label) {
    const int ch = std::min(opt_.crop, img.height());
    const int cw = std::min(opt_.crop, img.width());
    const int r0 = std::uniform_int_distribution<int>(0, img.height() - ch)(rng_);
    const int c0 = std::uniform_int_distribution<int>(0, img.width() - cw)(rng_);
    GrayImage ci(ch, cw);
    BinaryMask cl(ch, cw);
    for (int r = 0; r < ch; ++r)
      for (int c = 0; c < cw; ++c) {
        ci(r, c) = img(r0 + r, c0 + c);
        cl(r, c) = label(r0 + r, c0 + c);
      }
    return {std::move(ci), std::move(cl)};
  }

  void evaluate(EpochRecord& rec) {
    const auto prob = model_.forward(test_images_);
    rec.test = metrics::evaluate(std::span<const SoftLabel>(prob), test_gt_, opt_.deviation);

    double sum = 0.0;
    int n = 0;
    for (const auto& r : ds_.records) {
      if (r.pool != Pool::training) continue;
      sum += metrics::sample_iou(binarize(r.pseudo_label, hp_.binarize_threshold),
                                 ds_.ground_truth.mask_for_evaluation(r.id));
      ++n;
    }
    rec.label_iou_gt = n ? sum / n : 0.0;
    rec.pool_train = train_count();
    rec.pool_prep = static_cast<int>(ds_.records.size()) - rec.pool_train;
  }

  void check(bool ok, const std::string& what) {
    ++audit_checks_;
    if (!ok) throw AuditFailure(what);
  }

  void audit_schedule() {
    const double lo = tm_at(schedule_.prestart_end, schedule_, hp_);
    const double hi = tm_at(schedule_.refine_start, schedule_, hp_);
    check(lo == hp_.tm_init, "T_m at the start of enhancement is " + std::to_string(lo));
    check(hi == 1.0, "T_m at the start of refinement is " + std::to_string(hi));
  }

  void audit_epoch(const EpochRecord& rec) {
    const auto now = pools();
    int train = 0, prep = 0;
    for (std::size_t i = 0; i < now.size(); ++i) {
      check(!(previous_pool_[i] == Pool::training && now[i] == Pool::preparation),
            "sample " + ds_.records[i].id + " left the training pool at epoch " + std::to_string(rec.epoch));
      (now[i] == Pool::training ? train : prep) += 1;
    }
    check(train + prep == static_cast<int>(ds_.records.size()), "pool sizes do not add up");
    check(train == rec.pool_train && prep == rec.pool_prep, "reported pool sizes disagree with records");
    if (opt_.mode == Mode::pal && opt_.enable_cou && rec.epoch >= schedule_.refine_start)
      check(prep == 0, "preparation pool not empty at refinement epoch " + std::to_string(rec.epoch));
    for (const auto& r : ds_.records) {
      const auto violations = validate(r);
      check(violations.empty(), violations.empty() ? "" : r.id + ": " + violations.front().name);
    }
    previous_pool_ = now;
  }

  void snapshot(int epoch) {
    if (opt_.out_dir.empty() || snapshot_ids_.empty()) return;
    const auto dir = opt_.out_dir / "snapshots";
    std::filesystem::create_directories(dir);
    char tag[32];
    if (epoch < 0)
      std::snprintf(tag, sizeof tag, "init");
    else
      std::snprintf(tag, sizeof tag, "e%03d", epoch);
    for (std::size_t i : snapshot_ids_) {
      const auto& r = ds_.records[i];
      io::write_label_png(dir / (std::string(tag) + "_" + r.id + ".png"), r.pseudo_label);
    }
  }

  datagen::Dataset& ds_;
  const Hyperparams& hp_;
  nn::Predictor& model_;
  const RunOptions& opt_;
  const std::vector<EpochSink>& sinks_;
  PhaseSchedule schedule_;
  loss::LossFn loss_;
  std::mt19937_64 rng_;
  std::vector<GrayImage> test_images_;
  std::vector<BinaryMask> test_gt_;
  std::vector<std::size_t> snapshot_ids_;
  std::vector<Pool> previous_pool_;
  std::size_t audit_checks_ = 0;
};

nlohmann::json summary_json(const metrics::Summary& s) {
  return {{"iou", s.iou}, {"niou", s.niou}, {"pd", s.pd}, {"fa", s.fa}, {"valid", s.valid}};
}

}  // namespace

RunReport run_experiment(datagen::Dataset& dataset, const Hyperparams& hp, nn::Predictor& predictor,
                         const RunOptions& options, const std::vector<EpochSink>& sinks) {
  require_valid(hp);
  if (dataset.records.empty()) throw ParameterError("run_experiment: dataset is empty");
  if (dataset.test.empty()) throw ParameterError("run_experiment: dataset has no test split");
  if (options.crop < 4 || options.crop % 4 != 0) throw ParameterError("training crop must be a positive multiple of 4");
  return Run(dataset, hp, predictor, options, sinks).execute();
}

nlohmann::json to_json(const RunReport& report) {
  nlohmann::json j;
  j["mode"] = to_string(report.mode);
  j["labels"] = to_string(report.labels);
  j["loss"] = loss::to_string(report.loss);
  nlohmann::json hp;
  pal::to_json(hp, report.hp);
  j["hyperparams"] = hp;
  j["schedule"] = {{"total_epochs", report.schedule.total_epochs},
                   {"prestart_end", report.schedule.prestart_end},
                   {"refine_start", report.schedule.refine_start},
                   {"update_period", report.schedule.update_period},
                   {"force_admit_epoch", force_admit_epoch(report.schedule)}};
  j["parameter_count"] = report.parameter_count;
  if (report.epg)
    j["epg"] = {{"easy", report.epg->easy}, {"hard", report.epg->hard}, {"mean_recall", report.epg->mean_recall}};
  else
    j["epg"] = nullptr;

  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : report.epochs) {
    nlohmann::json row = {{"epoch", e.epoch},
                          {"phase", to_string(e.phase)},
                          {"tm", e.tm ? nlohmann::json(*e.tm) : nlohmann::json(nullptr)},
                          {"cou_fired", e.cou_fired},
                          {"fiu_fired", e.fiu_fired},
                          {"admitted", e.admitted},
                          {"force_admitted", e.force_admitted},
                          {"pool_train", e.pool_train},
                          {"pool_prep", e.pool_prep},
                          {"train_loss", e.train_loss},
                          {"train_steps", e.train_steps},
                          {"label_iou_gt", e.label_iou_gt}};
    row.update(summary_json(e.test));
    epochs.push_back(std::move(row));
  }
  j["epochs"] = std::move(epochs);

  nlohmann::json adm = nlohmann::json::array();
  for (const auto& [id, epoch] : report.admissions) adm.push_back({{"id", id}, {"epoch", epoch}});
  j["admissions"] = std::move(adm);
  j["audit"] = {{"checks", report.audit_checks}, {"violations", 0}};
  j["final"] = summary_json(report.final_metrics);
  return j;
}

std::string csv_row(const EpochRecord& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.9f,%d,%d,%d,%.6f", e.epoch, to_string(e.phase).c_str(),
                e.test.iou, e.test.niou, e.test.pd, e.test.fa, e.test.valid ? 1 : 0, e.pool_train, e.pool_prep,
                e.label_iou_gt);
  return buf;
}

EpochSink csv_sink(std::ostream& out) {
  return [&out](const EpochRecord& e) { out << csv_row(e) << '\n' << std::flush; };
}

}  // namespace pal::sched
