#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "covreg/dataset_io.hpp"
#include "support.hpp"

using namespace covreg;
using namespace covreg::testsupport;

namespace {

const char* kScalarToy = R"({
  "schema": 1, "family": "linear", "n": 2, "p": 1, "K": 1,
  "X": [[[[1.0]]], [[[1.0]]]],
  "Y": [[1.0], [2.0]]
})";

}  // namespace

TEST_CASE("scalar toy dataset loads") {
  io::LoadedDataset loaded = io::dataset_from_json(kScalarToy);
  CHECK(loaded.data.n() == 2);
  CHECK(loaded.data.p() == 1);
  CHECK(loaded.data.family.K == 1);
  CHECK(loaded.warnings.empty());
  CHECK(loaded.data.Y(1, 0) == 2.0);
}

TEST_CASE("load/save round trip is a fixed point") {
  io::LoadedDataset loaded = io::dataset_from_json(kScalarToy);
  const std::string canonical = io::dataset_to_json(loaded.data);
  io::LoadedDataset again = io::dataset_from_json(canonical);
  CHECK(io::dataset_to_json(again.data) == canonical);
}

TEST_CASE("outer-product datasets expand to rank-one designs") {
  const char* doc = R"({
    "schema": 1, "family": "linear", "n": 1, "p": 2, "K": 2,
    "outer_product": true,
    "X": [[[1.0, 0.0]]],
    "Y": [[0.5, -0.5]]
  })";
  io::LoadedDataset loaded = io::dataset_from_json(doc);
  CHECK(loaded.data.family.K == 2);
  CHECK(loaded.data.X[0].designs[0].mat().isApprox(Matrix::Identity(2, 2)));
  Matrix expect(2, 2);
  expect << 1, 0, 0, 0;
  CHECK(loaded.data.X[0].designs[1].mat().isApprox(expect));
}

TEST_CASE("near-symmetric matrices are symmetrized with a warning") {
  const char* doc = R"({
    "schema": 1, "family": "linear", "n": 1, "p": 2, "K": 1,
    "X": [[[[1.0, 1e-12], [0.0, 1.0]]]],
    "Y": [[0.0, 0.0]]
  })";
  io::LoadedDataset loaded = io::dataset_from_json(doc);
  CHECK(loaded.warnings.size() == 1);
  CHECK(loaded.data.X[0].designs[0](0, 1) == loaded.data.X[0].designs[0](1, 0));
}

TEST_CASE("asymmetry beyond tolerance is an error") {
  const char* doc = R"({
    "schema": 1, "family": "linear", "n": 1, "p": 2, "K": 1,
    "X": [[[[1.0, 0.5], [0.0, 1.0]]]],
    "Y": [[0.0, 0.0]]
  })";
  CHECK_THROWS_AS(io::dataset_from_json(doc), ValidationError);
}

TEST_CASE("schema and field validation name the offending field") {
  CHECK_THROWS_WITH_AS(io::dataset_from_json("{\"schema\": 2}"),
                       doctest::Contains("schema"), ValidationError);
  const char* bad_n = R"({"schema":1,"family":"linear","n":0,"p":1,"K":1,
                          "X":[], "Y":[]})";
  CHECK_THROWS_WITH_AS(io::dataset_from_json(bad_n), doctest::Contains("n"),
                       ValidationError);
  const char* bad_family = R"({"schema":1,"family":"spatial","n":1,"p":1,"K":1,
                               "X":[[[1.0]]], "Y":[[1.0]]})";
  CHECK_THROWS_WITH_AS(io::dataset_from_json(bad_family),
                       doctest::Contains("family"), ValidationError);
}

TEST_CASE("network datasets validate adjacency structure") {
  const char* good = R"({
    "schema": 1, "family": "network_ar", "n": 1, "p": 3, "K": 2,
    "X": [[[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]],
    "Y": [[0.1, 0.2, 0.3]]
  })";
  io::LoadedDataset loaded = io::dataset_from_json(good);
  CHECK(loaded.data.family.kind == FamilyKind::NetworkAr);

  const char* bad = R"({
    "schema": 1, "family": "network_ar", "n": 1, "p": 2, "K": 2,
    "X": [[[0.0, 0.3], [0.3, 0.0]]],
    "Y": [[0.1, 0.2]]
  })";
  CHECK_THROWS_AS(io::dataset_from_json(bad), ValidationError);
}

TEST_CASE("sim config from JSON") {
  SimConfig c = io::sim_config_from_json(R"({
    "model": "A", "n": 25, "p": 5, "reps": 10,
    "setting": "random", "errors": "mixture",
    "estimators": ["ols", "gls"], "criteria": ["cp", "ocv"],
    "seed": 99, "workers": 2
  })");
  CHECK(c.n == 25);
  CHECK(c.estimators.size() == 2);
  CHECK(c.criteria.size() == 2);
  CHECK(c.seed == 99);

  CHECK_THROWS_WITH_AS(io::sim_config_from_json(R"({"model":"A","n":0})"),
                       doctest::Contains("n"), ValidationError);
  CHECK_THROWS_WITH_AS(io::sim_config_from_json(R"({"model":"Z"})"),
                       doctest::Contains("model"), ValidationError);
}

TEST_CASE("report serialization echoes the config") {
  SimConfig cfg;
  cfg.model = SimModel::A;
  cfg.n = 10;
  cfg.p = 5;
  cfg.reps = 2;
  cfg.estimators = {EstimatorKind::OLS};
  cfg.criteria = {};
  cfg.with_test_errors = false;
  cfg.seed = 123;
  SimReport r = simulate::run_study(cfg);
  const std::string j = io::report_to_json(r);
  CHECK(j.find("\"seed\": 123") != std::string::npos);
  CHECK(j.find("\"model\": \"A\"") != std::string::npos);
  const std::string csv = io::metrics_csv(r);
  CHECK(csv.find("estimator,component") == 0);
  CHECK(csv.find("ols,1,") != std::string::npos);
}
