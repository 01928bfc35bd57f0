#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <qgeom/experiments.hpp>

namespace {

using qgeom::ExperimentConfig;
using qgeom::ExperimentKind;
using qgeom::ExperimentOutput;
using qgeom::json;

ExperimentConfig small_false_flatness() {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);
  cfg.d = 2;
  cfg.m = 4;
  cfg.n = 3;
  cfg.seed = 7;
  cfg.lr = 0.1;
  cfg.steps = 40000;
  cfg.num_orbit_reps = 2;
  return cfg;
}

ExperimentConfig small_local_dynamics() {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kLocalDynamics);
  cfg.d = 2;
  cfg.m = 3;
  cfg.n = 8;
  cfg.seed = 11;
  cfg.lr = 0.1;
  cfg.steps = 400;
  cfg.num_orbit_reps = 2;
  cfg.num_perturbations = 2;
  cfg.num_seeds = 2;
  return cfg;
}

ExperimentConfig small_implicit_bias() {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kImplicitBias);
  cfg.d = 3;
  cfg.m = 4;
  cfg.n = 4;
  cfg.seed = 21;
  cfg.lr = 0.05;
  cfg.steps = 100000;
  cfg.num_orbit_reps = 2;
  cfg.num_perturbations = 3;
  return cfg;
}

void require_all_assertions_pass(const ExperimentOutput& out) {
  for (const qgeom::AssertionResult& a : out.assertions) {
    INFO(out.name << " assertion " << a.name << ": measured " << a.measured
                  << " vs tolerance " << a.tolerance);
    CHECK(a.pass);
  }
  REQUIRE(out.all_pass());
}

void require_byte_identical(const ExperimentOutput& lhs, const ExperimentOutput& rhs) {
  REQUIRE(lhs.tables.size() == rhs.tables.size());
  for (std::size_t i = 0; i < lhs.tables.size(); ++i) {
    REQUIRE(lhs.tables[i].first == rhs.tables[i].first);
    REQUIRE(lhs.tables[i].second.to_csv() == rhs.tables[i].second.to_csv());
  }
  REQUIRE(lhs.json_files.size() == rhs.json_files.size());
  for (std::size_t i = 0; i < lhs.json_files.size(); ++i) {
    REQUIRE(lhs.json_files[i].first == rhs.json_files[i].first);
    REQUIRE(lhs.json_files[i].second.dump(2) == rhs.json_files[i].second.dump(2));
  }
  REQUIRE(lhs.provenance.dump(2) == rhs.provenance.dump(2));
}

std::size_t count_rows_where(const qgeom::Table& table, std::size_t column,
                             const std::string& value) {
  std::size_t count = 0;
  for (const auto& row : table.rows()) {
    if (row[column] == value) ++count;
  }
  return count;
}

std::filesystem::path fresh_temp_dir(const std::string& stem) {
  return std::filesystem::temp_directory_path() /
         (stem + "-" + std::to_string(::getpid()));
}

}  // namespace

TEST_CASE("experiment names", "[experiments]") {
  CHECK(qgeom::experiment_name(ExperimentKind::kFalseFlatness) == "false-flatness");
  CHECK(qgeom::experiment_name(ExperimentKind::kLocalDynamics) == "local-dynamics");
  CHECK(qgeom::experiment_name(ExperimentKind::kImplicitBias) == "implicit-bias");
}

TEST_CASE("default configs pin the per-experiment regimes", "[experiments]") {
  const ExperimentConfig ff = qgeom::default_config(ExperimentKind::kFalseFlatness);
  CHECK(ff.d == 4);
  CHECK(ff.m == 6);
  CHECK(ff.n == 30);
  CHECK(ff.loss == qgeom::LossKind::squared);
  CHECK(ff.lr == 0.02);
  CHECK(ff.steps == 20000);
  CHECK(ff.num_orbit_reps == 6);
  CHECK(ff.scale_log_lo == -1.0);
  CHECK(ff.scale_log_hi == 1.0);
  CHECK(ff.interpolation_threshold == 1e-10);
  CHECK(ff.tol.rank_tol == 1e-8);
  CHECK(ff.tol.angle_tol == 1e-6);
  CHECK(ff.tol.spectra_tol == 1e-8);

  const ExperimentConfig ld = qgeom::default_config(ExperimentKind::kLocalDynamics);
  CHECK(ld.loss == qgeom::LossKind::logistic);
  CHECK(ld.n == 60);
  CHECK(ld.lr == 0.05);
  CHECK(ld.steps == 4000);
  CHECK(ld.num_orbit_reps == 3);
  CHECK(ld.num_seeds == 5);
  CHECK(ld.scale_log_lo == -0.15);
  CHECK(ld.scale_log_hi == 0.15);
  CHECK(ld.perturbation_scale == 0.05);

  const ExperimentConfig ib = qgeom::default_config(ExperimentKind::kImplicitBias);
  CHECK(ib.d == 6);
  CHECK(ib.m == 8);
  CHECK(ib.n == 12);
  CHECK(ib.loss == qgeom::LossKind::squared);
  CHECK(ib.num_perturbations == 8);
  CHECK(ib.n < qgeom::vech_dim(ib.d));
}

TEST_CASE("config json round trip", "[experiments]") {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kLocalDynamics);
  cfg.seed = 99;
  cfg.lr = 0.125;
  cfg.tol.angle_tol = 5e-7;
  const json j = qgeom::config_to_json(cfg);

  const ExperimentConfig back = qgeom::config_from_json(j, ExperimentKind::kLocalDynamics);
  CHECK(qgeom::config_to_json(back).dump() == j.dump());

  SECTION("partial documents merge onto the defaults") {
    const ExperimentConfig merged =
        qgeom::config_from_json(json{{"lr", 0.25}, {"seed", 3}},
                                ExperimentKind::kFalseFlatness);
    CHECK(merged.lr == 0.25);
    CHECK(merged.seed == 3);
    CHECK(merged.d == 4);
    CHECK(merged.steps == 20000);
  }
}

TEST_CASE("config parsing rejects malformed documents", "[experiments]") {
  ExperimentConfig cfg;
  CHECK_THROWS_AS(qgeom::merge_config_json(cfg, json{{"bogus", 1}}),
                  qgeom::ValidationError);
  CHECK_THROWS_AS(qgeom::merge_config_json(cfg, json{{"tol_block", {{"bogus", 1.0}}}}),
                  qgeom::ValidationError);
  CHECK_THROWS_AS(qgeom::merge_config_json(cfg, json{{"scale_log_range", {1.0}}}),
                  qgeom::ValidationError);
  CHECK_THROWS_AS(qgeom::merge_config_json(cfg, json{{"loss", "hinge"}}),
                  qgeom::ValidationError);
  CHECK_THROWS_AS(qgeom::merge_config_json(cfg, json{{"lr", "fast"}}),
                  qgeom::ValidationError);
  CHECK_THROWS_AS(qgeom::merge_config_json(cfg, json::array({1, 2})),
                  qgeom::ValidationError);
}

TEST_CASE("config validation rejects bad values", "[experiments]") {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);
  CHECK_NOTHROW(cfg.validate());
  SECTION("lr") {
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), qgeom::ValidationError);
  }
  SECTION("dimensions") {
    cfg.m = 0;
    CHECK_THROWS_AS(cfg.validate(), qgeom::ValidationError);
  }
  SECTION("scale range order") {
    cfg.scale_log_lo = 0.5;
    cfg.scale_log_hi = -0.5;
    CHECK_THROWS_AS(cfg.validate(), qgeom::ValidationError);
  }
  SECTION("tolerances") {
    cfg.tol.spectra_tol = 0.0;
    CHECK_THROWS_AS(cfg.validate(), qgeom::ValidationError);
  }
}

TEST_CASE("command line overrides", "[experiments]") {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);

  qgeom::apply_override(cfg, "lr=0.5");
  CHECK(cfg.lr == 0.5);

  qgeom::apply_override(cfg, "seed=42");
  CHECK(cfg.seed == 42);

  qgeom::apply_override(cfg, "loss=logistic");
  CHECK(cfg.loss == qgeom::LossKind::logistic);

  qgeom::apply_override(cfg, "tol_block.angle_tol=1e-5");
  CHECK(cfg.tol.angle_tol == 1e-5);
  CHECK(cfg.tol.rank_tol == 1e-8);

  qgeom::apply_override(cfg, "scale_log_range=[-0.2,0.2]");
  CHECK(cfg.scale_log_lo == -0.2);
  CHECK(cfg.scale_log_hi == 0.2);

  CHECK_THROWS_AS(qgeom::apply_override(cfg, "lr"), qgeom::ValidationError);
  CHECK_THROWS_AS(qgeom::apply_override(cfg, "=3"), qgeom::ValidationError);
  CHECK_THROWS_AS(qgeom::apply_override(cfg, "bogus=1"), qgeom::ValidationError);
  CHECK_THROWS_AS(qgeom::apply_override(cfg, "tol_block.bogus=1"), qgeom::ValidationError);
}

TEST_CASE("teacher data generation", "[experiments]") {
  SECTION("regression targets are exactly realizable by the teacher") {
    ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);
    cfg.d = 3;
    cfg.m = 2;
    cfg.n = 12;
    cfg.seed = 5;
    const auto [data, teacher] = qgeom::generate_teacher_data(cfg);
    CHECK(data.task == qgeom::Task::regression);
    CHECK(data.X.rows() == 12);
    CHECK(data.X.cols() == 3);
    CHECK(teacher.m() == 2);
    CHECK(teacher.d() == 3);
    const qgeom::dvec margins = qgeom::realize(teacher, data.X);
    CHECK((data.y - margins).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("classification labels are a balanced median split") {
    ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kLocalDynamics);
    cfg.d = 3;
    cfg.m = 2;
    cfg.n = 14;
    cfg.seed = 6;
    const auto [data, teacher] = qgeom::generate_teacher_data(cfg);
    CHECK(data.task == qgeom::Task::classification);
    int plus = 0;
    int minus = 0;
    for (int k = 0; k < cfg.n; ++k) {
      if (data.y(k) == 1.0) ++plus;
      else if (data.y(k) == -1.0) ++minus;
    }
    CHECK(plus + minus == cfg.n);
    CHECK(plus == cfg.n / 2);
    CHECK(minus == cfg.n / 2);
  }

  SECTION("deterministic in the seed") {
    ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);
    cfg.d = 2;
    cfg.m = 2;
    cfg.n = 6;
    cfg.seed = 17;
    const auto [data_a, teacher_a] = qgeom::generate_teacher_data(cfg);
    const auto [data_b, teacher_b] = qgeom::generate_teacher_data(cfg);
    CHECK((data_a.X - data_b.X).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((data_a.y - data_b.y).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((teacher_a.flatten() - teacher_b.flatten()).lpNorm<Eigen::Infinity>() == 0.0);

    cfg.seed = 18;
    const auto [data_c, teacher_c] = qgeom::generate_teacher_data(cfg);
    CHECK((data_a.X - data_c.X).lpNorm<Eigen::Infinity>() > 0.0);
  }
}

TEST_CASE("initialization draws are deterministic and generic", "[experiments]") {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);
  cfg.d = 2;
  cfg.m = 4;
  cfg.n = 3;
  cfg.seed = 23;
  const auto [data, teacher] = qgeom::generate_teacher_data(cfg);

  const qgeom::Theta init_a = qgeom::initialization(cfg, data.X);
  const qgeom::Theta init_b = qgeom::initialization(cfg, data.X);
  CHECK((init_a.flatten() - init_b.flatten()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(init_a.m() == cfg.m);
  CHECK(init_a.d() == cfg.d);

  const qgeom::RegularityReport report = qgeom::regularity_check(
      init_a, data.X, qgeom::kQuadraticDegree, cfg.tol.rank_tol, cfg.tol.angle_tol);
  CHECK(report.is_generic);

  const qgeom::Theta tagged = qgeom::initialization(cfg, data.X, "init-1");
  CHECK((init_a.flatten() - tagged.flatten()).lpNorm<Eigen::Infinity>() > 0.0);

  const qgeom::Theta convenience = qgeom::initialization(cfg);
  CHECK((convenience.flatten() - init_a.flatten()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("correlation helpers", "[experiments]") {
  const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> up = {2.0, 4.0, 6.0, 8.0};
  const std::vector<double> down = {8.0, 6.0, 4.0, 2.0};
  const std::vector<double> cubes = {1.0, 8.0, 27.0, 64.0};

  CHECK(qgeom::detail::pearson(xs, up) == Catch::Approx(1.0).margin(1e-12));
  CHECK(qgeom::detail::pearson(xs, down) == Catch::Approx(-1.0).margin(1e-12));
  CHECK(qgeom::detail::pearson(xs, cubes) < 1.0);
  CHECK(qgeom::detail::spearman(xs, cubes) == Catch::Approx(1.0).margin(1e-12));
  CHECK(qgeom::detail::spearman(xs, down) == Catch::Approx(-1.0).margin(1e-12));

  SECTION("non-finite pairs are dropped") {
    const std::vector<double> with_nan = {1.0, std::numeric_limits<double>::quiet_NaN(),
                                          3.0, 4.0};
    CHECK(qgeom::detail::pearson(with_nan, up) == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("degenerate inputs give NaN") {
    CHECK(std::isnan(qgeom::detail::pearson({1.0}, {2.0})));
    CHECK(std::isnan(qgeom::detail::pearson({1.0, 1.0, 1.0}, up)));
    CHECK(std::isnan(qgeom::detail::spearman({1.0, 2.0}, {1.0})));
  }

  SECTION("ties receive averaged ranks") {
    const std::vector<double> tied = {1.0, 2.0, 2.0, 3.0};
    const std::vector<double> ranks = qgeom::detail::ranks_with_ties(tied);
    CHECK(ranks[0] == 1.0);
    CHECK(ranks[1] == 2.5);
    CHECK(ranks[2] == 2.5);
    CHECK(ranks[3] == 4.0);
  }
}

TEST_CASE("false-flatness driver passes and reruns byte-identically",
          "[experiments][drivers]") {
  const ExperimentConfig cfg = small_false_flatness();
  const ExperimentOutput out = qgeom::run_experiment(ExperimentKind::kFalseFlatness, cfg);

  CHECK(out.name == "false-flatness");
  require_all_assertions_pass(out);

  REQUIRE(out.tables.size() == 1);
  CHECK(out.tables[0].first == "spectra.csv");
  const qgeom::Table& spectra = out.tables[0].second;
  CHECK(spectra.columns() ==
        std::vector<std::string>{"rep_id", "rep_kind", "space", "index", "eigenvalue"});
  CHECK(spectra.num_rows() > 0);

  const std::size_t q_rows = count_rows_where(spectra, 2, "q");
  CHECK(q_rows % (cfg.num_orbit_reps + 1) == 0);
  CHECK(count_rows_where(spectra, 1, "base") > 0);
  CHECK(count_rows_where(spectra, 1, "perm") > 0);
  CHECK(count_rows_where(spectra, 1, "scale") > 0);

  REQUIRE(out.json_files.size() == 1);
  CHECK(out.json_files[0].first == "thetas.json");
  const json& thetas = out.json_files[0].second;
  CHECK(thetas.contains("base"));
  CHECK(thetas["reps"].size() == static_cast<std::size_t>(cfg.num_orbit_reps));

  CHECK(out.provenance["experiment"] == "false-flatness");
  CHECK(out.provenance["config"].dump() == qgeom::config_to_json(cfg).dump());

  const ExperimentOutput rerun = qgeom::run_experiment(ExperimentKind::kFalseFlatness, cfg);
  require_byte_identical(out, rerun);
}

TEST_CASE("false-flatness input validation", "[experiments]") {
  ExperimentConfig cfg = small_false_flatness();
  SECTION("requires squared loss") {
    cfg.loss = qgeom::LossKind::logistic;
    CHECK_THROWS_AS(qgeom::exp_false_flatness(cfg), qgeom::ValidationError);
  }
  SECTION("requires enough samples to pin the Q-chart") {
    cfg.n = qgeom::vech_dim(cfg.d) - 1;
    CHECK_THROWS_AS(qgeom::exp_false_flatness(cfg), qgeom::ValidationError);
  }
  SECTION("requires at least two orbit representatives") {
    cfg.num_orbit_reps = 1;
    CHECK_THROWS_AS(qgeom::exp_false_flatness(cfg), qgeom::ValidationError);
  }
}

TEST_CASE("local-dynamics driver passes and reruns byte-identically",
          "[experiments][drivers]") {
  const ExperimentConfig cfg = small_local_dynamics();
  const ExperimentOutput out = qgeom::run_experiment(ExperimentKind::kLocalDynamics, cfg);

  CHECK(out.name == "local-dynamics");
  require_all_assertions_pass(out);

  REQUIRE(out.tables.size() == 1);
  CHECK(out.tables[0].first == "local_dynamics.csv");
  const qgeom::Table& pooled = out.tables[0].second;
  CHECK(pooled.columns() ==
        std::vector<std::string>{"seed", "point_id", "point_kind", "loss", "q_trace",
                                 "q_frob", "q_lambda_min_pos", "theta_cond", "decay_rate"});
  const std::size_t points_per_seed =
      1 + static_cast<std::size_t>(cfg.num_orbit_reps + cfg.num_perturbations);
  CHECK(pooled.num_rows() == points_per_seed * static_cast<std::size_t>(cfg.num_seeds));
  CHECK(count_rows_where(pooled, 2, "checkpoint") ==
        static_cast<std::size_t>(cfg.num_seeds));
  CHECK(count_rows_where(pooled, 2, "orbit") ==
        static_cast<std::size_t>(cfg.num_seeds * cfg.num_orbit_reps));
  CHECK(count_rows_where(pooled, 2, "perturb") ==
        static_cast<std::size_t>(cfg.num_seeds * cfg.num_perturbations));

  REQUIRE(out.json_files.size() == 1);
  CHECK(out.json_files[0].second.size() ==
        points_per_seed * static_cast<std::size_t>(cfg.num_seeds));

  REQUIRE(out.extra.contains("decay_rate_correlations"));
  const json& corr = out.extra["decay_rate_correlations"];
  for (const char* key : {"q_trace", "q_frob", "q_lambda_min_pos", "theta_cond"}) {
    REQUIRE(corr.contains(key));
    CHECK(corr[key].contains("spearman"));
    CHECK(corr[key].contains("pearson"));
  }

  const ExperimentOutput rerun = qgeom::run_experiment(ExperimentKind::kLocalDynamics, cfg);
  require_byte_identical(out, rerun);
}

TEST_CASE("local-dynamics requires logistic loss", "[experiments]") {
  ExperimentConfig cfg = small_local_dynamics();
  cfg.loss = qgeom::LossKind::squared;
  CHECK_THROWS_AS(qgeom::exp_local_dynamics(cfg), qgeom::ValidationError);
}

TEST_CASE("implicit-bias driver passes and reruns byte-identically",
          "[experiments][drivers]") {
  const ExperimentConfig cfg = small_implicit_bias();
  const ExperimentOutput out = qgeom::run_experiment(ExperimentKind::kImplicitBias, cfg);

  CHECK(out.name == "implicit-bias");
  require_all_assertions_pass(out);

  REQUIRE(out.tables.size() == 2);
  CHECK(out.tables[0].first == "orbit_complexity.csv");
  CHECK(out.tables[1].first == "seed_complexity.csv");

  const qgeom::Table& orbit = out.tables[0].second;
  CHECK(orbit.num_rows() == static_cast<std::size_t>(cfg.num_orbit_reps + 1));
  CHECK(orbit.columns().at(0) == "rep_id");
  CHECK(orbit.columns().at(1) == "rep_kind");
  CHECK(orbit.columns().at(2) == "theta_norm_sq");

  const qgeom::Table& seeds = out.tables[1].second;
  CHECK(seeds.num_rows() == static_cast<std::size_t>(cfg.num_perturbations));
  CHECK(seeds.columns().at(0) == "seed_index");
  CHECK(seeds.columns().at(1) == "final_loss");
  CHECK(seeds.columns().at(2) == "interpolated");

  REQUIRE(out.json_files.size() == 1);
  const json& thetas = out.json_files[0].second;
  CHECK(thetas.contains("base"));
  CHECK(thetas["reps"].size() == static_cast<std::size_t>(cfg.num_orbit_reps));
  CHECK(thetas["seeds"].size() == static_cast<std::size_t>(cfg.num_perturbations));

  REQUIRE(out.extra.contains("across_seed_dispersion"));
  CHECK(out.extra["across_seed_dispersion"].contains("q_frobenius"));

  const ExperimentOutput rerun = qgeom::run_experiment(ExperimentKind::kImplicitBias, cfg);
  require_byte_identical(out, rerun);
}

TEST_CASE("implicit-bias input validation", "[experiments]") {
  ExperimentConfig cfg = small_implicit_bias();
  SECTION("requires squared loss") {
    cfg.loss = qgeom::LossKind::logistic;
    CHECK_THROWS_AS(qgeom::exp_implicit_bias(cfg), qgeom::ValidationError);
  }
  SECTION("requires an underdetermined sample") {
    cfg.n = qgeom::vech_dim(cfg.d);
    CHECK_THROWS_AS(qgeom::exp_implicit_bias(cfg), qgeom::ValidationError);
  }
}

TEST_CASE("write_run_dir writes the bundle and refuses to overwrite",
          "[experiments]") {
  ExperimentOutput out;
  out.name = "false-flatness";
  qgeom::Table table({"alpha", "beta"});
  table.add_row({"1", "2"});
  out.tables.emplace_back("numbers.csv", table);
  out.json_files.emplace_back("aux.json", json{{"key", "value"}});
  out.assertions.push_back({"toy_assertion", true, 0.5, 1.0});
  const ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);
  out.provenance = json{{"experiment", out.name}};

  const std::filesystem::path dir = fresh_temp_dir("qgeom-run-dir-test");
  std::filesystem::remove_all(dir);

  qgeom::write_run_dir(out, cfg, dir.string());
  CHECK(std::filesystem::exists(dir / "config.json"));
  CHECK(std::filesystem::exists(dir / "numbers.csv"));
  CHECK(std::filesystem::exists(dir / "aux.json"));
  CHECK(std::filesystem::exists(dir / "summary.json"));

  {
    std::ifstream in(dir / "config.json");
    const json parsed = json::parse(in);
    CHECK(parsed.dump() == qgeom::config_to_json(cfg).dump());
  }
  {
    std::ifstream in(dir / "numbers.csv");
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == "alpha,beta\n1,2\n");
  }
  {
    std::ifstream in(dir / "summary.json");
    const json summary = json::parse(in);
    CHECK(summary["experiment"] == "false-flatness");
    CHECK(summary["all_pass"] == true);
    REQUIRE(summary["assertions"].size() == 1);
    CHECK(summary["assertions"][0]["name"] == "toy_assertion");
    CHECK(summary["assertions"][0]["pass"] == true);
  }

  CHECK_THROWS_AS(qgeom::write_run_dir(out, cfg, dir.string()), qgeom::ValidationError);
  std::filesystem::remove_all(dir);
}
