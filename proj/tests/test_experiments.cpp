#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "sfl/cli.hpp"
#include "sfl/error.hpp"
#include "sfl/experiments.hpp"

using namespace sfl;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.dataset = BlobsConfig{4, 8, 40, 1.0};
  cfg.n_clients = 8;
  cfg.clients_per_round = 8;
  cfg.rounds = 3;
  cfg.malicious_fraction = 0.25;
  return cfg;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sfl_test_experiments";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("accuracy_drop") {
  CHECK(accuracy_drop(62.4, 13.1) == doctest::Approx(49.3).epsilon(1e-12));
  CHECK(accuracy_drop(87.0, 87.0) == 0.0);
  CHECK(accuracy_drop(40.0, 45.5) == -5.5);
  CHECK_THROWS_AS(accuracy_drop(101.0, 3.0), ValidationError);
  CHECK_THROWS_AS(accuracy_drop(50.0, -0.1), ValidationError);
}

TEST_CASE("final_accuracy averages the last ten evaluations") {
  std::vector<RoundRecord> recs;
  for (std::size_t r = 0; r < 30; ++r) {
    RoundRecord rec;
    rec.round = r;
    if (r % 2 == 1) rec.test_accuracy = double(r) / 100.0;
    recs.push_back(rec);
  }
  // Evaluated rounds 11, 13, ..., 29 form the window.
  CHECK(final_accuracy(recs) == doctest::Approx(20.0).epsilon(1e-12));
  recs.resize(6);  // only 1, 3, 5
  CHECK(final_accuracy(recs) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS(final_accuracy({}));
}

TEST_CASE("config parsing and errors") {
  const auto cfg = parse_config(
      "# comment\nseed=7\nmode=fl\ncut=v2\ndefense=trmean\nattack=agropt(std,10,1e-05)\n"
      "partition=dirichlet(0.3)\nrounds=11\nmalicious_fraction=0.1\n");
  CHECK(cfg.seed == 7);
  CHECK(cfg.mode == Mode::FL);
  CHECK(cfg.defense == Defense::TrMean);
  CHECK(cfg.partition.dirichlet);
  CHECK(cfg.partition.alpha == 0.3);
  CHECK(std::holds_alternative<AgrOptAttack>(cfg.attack.kind));
  CHECK(parse_config(format_config(cfg)) == cfg);
  CHECK(resolved_attack_start(cfg) == 2);

  CHECK(message_of([] { parse_config("sede=1\n"); }).find("'sede'") != std::string::npos);
  CHECK(message_of([] { parse_config("rounds=abc\n"); }).find("'rounds'") != std::string::npos);
  CHECK(message_of([] { parse_config("attack=agropt(std,0,1e-5)\n"); }).find("'attack'") != std::string::npos);
  CHECK_THROWS_AS(parse_config("malicious_fraction=1.0\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("clients_per_round=30\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("defense=trmean\nmalicious_fraction=0.5\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("justtext\n"), ValidationError);

  CHECK(malicious_count(0.2, 20) == 4);
  CHECK(malicious_count(0.02, 20) == 1);
  CHECK(malicious_count(0.0, 20) == 0);
  CHECK(to_string(parse_attack("lie(1.5)")) == "lie(1.5)");
  CHECK(to_string(parse_attack("none")) == "none");
  CHECK_FALSE(fingerprint(cfg) == fingerprint(small_config()));
}

TEST_CASE("add_axis") {
  SweepAxes axes;
  add_axis(axes, "cut=v1,v2,v3");
  add_axis(axes, "attack=agropt(std,10,1e-05),lie(1)");
  add_axis(axes, "frac=0,0.1");
  CHECK(axes.cuts.size() == 3);
  CHECK(axes.attacks.size() == 2);
  CHECK(axes.fractions == std::vector<double>{0.0, 0.1});
  CHECK_THROWS_AS(add_axis(axes, "colour=red"), ValidationError);
  CHECK_THROWS_AS(add_axis(axes, "cut=v7"), ValidationError);
  CHECK_THROWS_AS(add_axis(axes, "cut"), ValidationError);
}

TEST_CASE("a single-cell sweep equals a direct pair of train() runs") {
  auto base = small_config();
  base.defense = Defense::Median;
  base.attack = parse_attack("agropt(std,10,1e-05)");
  const auto sr = run_sweep(base, {});
  REQUIRE(sr.rows.size() == 1);
  auto ref = base;
  ref.attack = AttackSpec{};
  const double acc = final_accuracy(train(ref).records);
  const auto attacked = train(base);
  const double acc_attack = final_accuracy(attacked.records);
  CHECK(sr.rows[0].acc == acc);
  CHECK(sr.rows[0].acc_attack == acc_attack);
  CHECK(sr.rows[0].acc_drop == accuracy_drop(acc, acc_attack));
  CHECK(sr.rows[0].gamma_last == *attacked.records.back().gamma);
}

TEST_CASE("zero malicious fraction gives zero drop for every defense") {
  auto base = small_config();
  base.attack = parse_attack("agropt(std,10,1e-05)");
  SweepAxes axes;
  add_axis(axes, "defense=fedavg,trmean,median");
  add_axis(axes, "frac=0");
  const auto sr = run_sweep(base, axes);
  REQUIRE(sr.rows.size() == 3);
  for (const auto& r : sr.rows) CHECK(r.acc_drop == 0.0);
}

TEST_CASE("infeasible cells are skipped with a reason") {
  auto base = small_config();
  base.attack = parse_attack("lie(1)");
  SweepAxes axes;
  add_axis(axes, "defense=trmean");
  add_axis(axes, "frac=0.25,0.5");
  const auto sr = run_sweep(base, axes);
  CHECK(sr.rows.size() == 1);
  REQUIRE(sr.skipped.size() == 1);
  CHECK(sr.skipped[0].reason.find("clients_per_round") != std::string::npos);
}

TEST_CASE("results CSV round-trips and is byte-stable") {
  SweepResult empty;
  CHECK(format_results(empty) == std::string(kResultsHeader) + "\n");

  auto base = small_config();
  base.defense = Defense::TrMean;
  base.attack = parse_attack("agropt(std,10,1e-05)");
  SweepAxes axes;
  add_axis(axes, "mode=fl,splitfed");
  add_axis(axes, "cut=v1,v3");
  const auto sr = run_sweep(base, axes, 2);
  CHECK(sr.rows.size() == 3);
  const std::string csv = format_results(sr);
  CHECK(csv == format_results(run_sweep(base, axes, 1)));
  const auto parsed = parse_results(csv);
  REQUIRE(parsed.size() == sr.rows.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].mode == sr.rows[i].mode);
    CHECK(parsed[i].cut == sr.rows[i].cut);
    CHECK(parsed[i].attack == sr.rows[i].attack);
    CHECK(std::abs(parsed[i].acc - sr.rows[i].acc) <= 5e-5 + 1e-12);
    CHECK(std::abs(parsed[i].acc_drop - sr.rows[i].acc_drop) <= 5e-5 + 1e-12);
    CHECK(std::abs(parsed[i].gamma_last - sr.rows[i].gamma_last) <= 5e-5 + 1e-12);
  }
  CHECK(format_results(SweepResult{parsed, {}}) == csv);

  const auto path = temp_file("results.csv");
  write_results(sr, path.string());
  CHECK(read_text(path.string()) == csv);
  CHECK_THROWS(write_results(sr, "/nonexistent-dir/x.csv"));

  const std::string svg = render_svg(parsed);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("cli exit codes") {
  const auto cfg_path = temp_file("cli.cfg");
  write_text(cfg_path.string(), "rounds=0\n");
  const auto out = temp_file("cli.csv");
  CHECK(cli_main({"train", "--config", cfg_path.string(), "--out", out.string()}) == 0);
  CHECK(read_text(out.string()) == std::string(kHistoryHeader) + "\n");

  write_text(cfg_path.string(), "roundz=3\n");
  CHECK(cli_main({"train", "--config", cfg_path.string()}) == 1);
  CHECK(cli_main({"train", "--bogus"}) == 1);
  CHECK(cli_main({"train", "--config", "/nonexistent/cfg"}) == 2);
  CHECK(cli_main({"gradcheck", "--instances", "2"}) == 0);
  CHECK(cli_main({"plot", "--in", "/nonexistent/in.csv", "--out", out.string()}) == 2);
}
