#include <doctest.h>

#include <random>

#include "pal/core_types.hpp"

using namespace pal;

namespace {

SampleRecord make_record() {
  SampleRecord r;
  r.id = "000001";
  r.image = GrayImage(16, 16, 0.2f);
  r.annotation.points = {{3, 4}, {10, 12}};
  r.pseudo_label = point_label(r.image.extent(), r.annotation);
  return r;
}

bool has(const std::vector<Violation>& v, const std::string& name) {
  for (const auto& x : v)
    if (x.name == name) return true;
  return false;
}

}  // namespace

TEST_CASE("validate accepts a well-formed record") {
  SampleRecord r = make_record();
  CHECK(validate(r).empty());
  r.pool = Pool::training;
  r.admitted_epoch = 0;
  CHECK(validate(r).empty());
}

TEST_CASE("validate reports each broken invariant by name") {
  SUBCASE("point out of bounds") {
    SampleRecord r = make_record();
    r.annotation.points.push_back({-1, 0});
    CHECK(has(validate(r), "point out of bounds"));
  }
  SUBCASE("training label zero at a point") {
    SampleRecord r = make_record();
    r.pool = Pool::training;
    r.admitted_epoch = 3;
    r.pseudo_label(3, 4) = 0.0f;
    const auto v = validate(r);
    REQUIRE(v.size() == 1);
    CHECK(v[0].name == "point not positive");
  }
  SUBCASE("duplicate point") {
    SampleRecord r = make_record();
    r.annotation.points.push_back({3, 4});
    CHECK(has(validate(r), "duplicate point"));
  }
  SUBCASE("admitted_epoch without training pool") {
    SampleRecord r = make_record();
    r.admitted_epoch = 2;
    CHECK(has(validate(r), "admission mismatch"));
  }
  SUBCASE("label value outside [0,1]") {
    SampleRecord r = make_record();
    r.pseudo_label(0, 0) = 1.5f;
    CHECK(has(validate(r), "label out of range"));
  }
  SUBCASE("label shape") {
    SampleRecord r = make_record();
    r.pseudo_label = SoftLabel(8, 8, 0.0f);
    CHECK(has(validate(r), "label shape mismatch"));
  }
}

TEST_CASE("validate is pure") {
  SampleRecord r = make_record();
  r.annotation.points.push_back({40, 2});
  const auto a = validate(r);
  const auto b = validate(r);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].detail == b[i].detail);
  }
}

TEST_CASE("point labels") {
  PointAnnotation a{{{1, 1}, {2, 5}}, PointKind::centroid};
  const SoftLabel l = point_label({4, 6}, a);
  float sum = 0;
  for (float v : l.data()) sum += v;
  CHECK(sum == 2.0f);
  CHECK(l(1, 1) == 1.0f);
  CHECK(l(2, 5) == 1.0f);
  SoftLabel m(4, 6, 0.25f);
  stamp_points(m, a);
  CHECK(m(2, 5) == 1.0f);
  CHECK(m(0, 0) == 0.25f);
}

TEST_CASE("binarize is strict") {
  SoftLabel l(1, 3);
  l(0, 0) = 0.5f;
  l(0, 1) = 0.50001f;
  l(0, 2) = 0.0f;
  const BinaryMask m = binarize(l, 0.5);
  CHECK(m(0, 0) == 0);
  CHECK(m(0, 1) == 1);
  CHECK(m(0, 2) == 0);
}

TEST_CASE("raster rejects mismatched data") {
  CHECK_THROWS_AS(GrayImage(2, 2, std::vector<float>(3)), ParameterError);
  CHECK_THROWS_AS(GrayImage(-1, 2), ParameterError);
}

TEST_CASE("hyperparameter defaults are valid") {
  const Hyperparams hp;
  CHECK(check_hyperparams(hp).empty());
  CHECK(hp.update_period == 5);
  CHECK(hp.tm_init == 0.2);
  CHECK(hp.tb == 0.5);
  CHECK(hp.k == 0.5);
  CHECK(hp.alpha_edge == 4.0);
  CHECK(hp.recall_threshold == 0.8);
  CHECK(hp.lambda_decay == 0.823);
  CHECK(hp.r == 0.006);
}

TEST_CASE("hyperparameter invariants") {
  Hyperparams hp;
  hp.prestart_frac = 0.9;
  CHECK_FALSE(check_hyperparams(hp).empty());
  CHECK_THROWS_AS(require_valid(hp), ParameterError);
  hp = {};
  hp.lambda_decay = 1.0;
  CHECK(check_hyperparams(hp).empty());
  hp.lambda_decay = 0.0;
  CHECK_FALSE(check_hyperparams(hp).empty());
  hp = {};
  hp.d = 32;
  CHECK_FALSE(check_hyperparams(hp).empty());
  hp = {};
  hp.tb = 1.0;
  CHECK_FALSE(check_hyperparams(hp).empty());
  hp = {};
  hp.r = 0.0;
  CHECK_FALSE(check_hyperparams(hp).empty());
}

TEST_CASE("hyperparameter JSON round trip") {
  Hyperparams hp;
  hp.total_epochs = 17;
  hp.lambda_decay = 0.9;
  hp.seed = 0xFFFFFFFFFFFFull;
  const nlohmann::json j = hp;
  CHECK(hyperparams_from_json(nlohmann::json::parse(j.dump())) == hp);
}

TEST_CASE("hyperparameter JSON is strict") {
  CHECK_THROWS_AS(hyperparams_from_json({{"epochs", 3}}), FormatError);
  CHECK_THROWS_AS(hyperparams_from_json({{"total_epochs", 3.5}}), FormatError);
  CHECK_THROWS_AS(hyperparams_from_json({{"tb", "half"}}), FormatError);
  CHECK_THROWS_AS(hyperparams_from_json(nlohmann::json::array()), FormatError);
  CHECK(hyperparams_from_json({{"tb", 0.4}}).tb == 0.4);
}

TEST_CASE("record metadata round trip") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pos(0, 63);
  for (int t = 0; t < 20; ++t) {
    SampleRecord r;
    r.id = "id" + std::to_string(t);
    r.annotation.kind = t % 2 ? PointKind::coarse : PointKind::centroid;
    for (int i = 0; i < t % 4; ++i) r.annotation.points.push_back({pos(rng), pos(rng)});
    if (t % 3 == 0) {
      r.pool = Pool::training;
      r.admitted_epoch = t;
    }
    const auto m = record_metadata_from_json(nlohmann::json::parse(record_metadata(r).dump()));
    CHECK(m.id == r.id);
    CHECK(m.annotation == r.annotation);
    CHECK(m.pool == r.pool);
    CHECK(m.admitted_epoch == r.admitted_epoch);
  }
  CHECK_THROWS_AS(record_metadata_from_json({{"id", "x"}}), FormatError);
  CHECK_THROWS_AS(point_kind_from_string("dense"), FormatError);
}
