// Experiment orchestration: flat-key config parsing/fingerprints, config ->
// pipeline translation, grid sweeps, run determinism, the class-incremental
// protocol, and report emission.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gift/config.hpp"
#include "gift/harness.hpp"

using namespace gift;
namespace fs = std::filesystem;

namespace {

// Small corpus that keeps every harness test under a couple of seconds:
// 10 well-separated blob classes, a short Adam teacher, a 5-epoch student.
const char* kFastCfg =
    "dataset.source = blobs\n"
    "dataset.classes = 10\n"
    "dataset.dim = 20\n"
    "dataset.per_class = 12\n"
    "dataset.test_per_class = 5\n"
    "dataset.noise = 0.3\n"
    "dataset.seed = 1\n"
    "dataset.ipc = 3\n"
    "teacher.hidden = 16\n"
    "teacher.epochs = 20\n"
    "teacher.optimizer = adam\n"
    "teacher.lr = 0.01\n"
    "teacher.seed = 7\n"
    "labels.alpha = 0.1\n"
    "labels.gamma = 0.1\n"
    "labels.target = refined\n"
    "loss = cosine\n"
    "optimizer = adam\n"
    "optimizer.lr = 0.01\n"
    "optimizer.weight_decay = 0.0\n"
    "train.epochs = 5\n"
    "student.hidden = 8\n"
    "repeats = 2\n"
    "seed = 0\n"
    "output = out/test\n";

harness::ExperimentConfig fast_config(const std::string& extra = "") {
  return harness::ExperimentConfig::from_config(
      config::Config::parse_text(std::string(kFastCfg) + extra));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

// ------------------------------------------------------------------ config

TEST_CASE("config: comments, blanks, and values parse; duplicates fail") {
  const auto cfg = config::Config::parse_text(
      "# leading comment\n"
      "\n"
      "a.b = 1  # trailing comment\n"
      "  c = hello world \n");
  CHECK(cfg.size() == 2);
  CHECK(cfg.get("a.b") == "1");
  CHECK(cfg.get("c") == "hello world");
  CHECK(cfg.has("a.b"));
  CHECK_FALSE(cfg.has("a"));

  CHECK_THROWS_WITH_AS(
      (void)config::Config::parse_text("x = 1\nx = 2\n"),
      doctest::Contains("duplicate"), std::invalid_argument);
  CHECK_THROWS_AS((void)config::Config::parse_text("just words\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)config::Config::parse_text("bad key! = 1\n"),
                  std::invalid_argument);
}

TEST_CASE("config: typed getters convert or fall back") {
  const auto cfg = config::Config::parse_text(
      "d = 2.5\nn = -3\nu = 18446744073709551615\nb1 = true\nb0 = off\n");
  CHECK(cfg.get_double("d", 0.0) == 2.5);
  CHECK(cfg.get_double("missing", 7.5) == 7.5);
  CHECK(cfg.get_long("n", 0) == -3);
  CHECK(cfg.get_u64("u", 0) == 18446744073709551615ULL);
  CHECK(cfg.get_bool("b1", false));
  CHECK_FALSE(cfg.get_bool("b0", true));
  CHECK(cfg.get_bool("missing", true));
  CHECK_THROWS_WITH_AS((void)cfg.get("missing"),
                       doctest::Contains("missing key \"missing\""),
                       std::invalid_argument);
  CHECK_THROWS_AS((void)cfg.get_double("b1", 0.0), std::invalid_argument);
}

TEST_CASE("config: canonical form is sorted and drives the fingerprint") {
  auto a = config::Config::parse_text("b = 2\na = 1\n");
  const auto b = config::Config::parse_text("a = 1\nb = 2\n");
  CHECK(a.canonical() == "a=1\nb=2\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint().size() == 16);
  for (char c : a.fingerprint()) {
    CHECK(((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')));
  }
  const std::string before = a.fingerprint();
  a.set("b", "3");
  CHECK(a.fingerprint() != before);
  a.erase("b");
  CHECK(a.canonical() == "a=1\n");
}

TEST_CASE("config: list helpers split and validate") {
  CHECK(config::split_list("a, b ,c") ==
        std::vector<std::string>{"a", "b", "c"});
  CHECK(config::split_list("") == std::vector<std::string>{});
  CHECK(config::parse_size_list("64,32", "hidden") ==
        std::vector<std::size_t>{64, 32});
  CHECK_THROWS_AS((void)config::parse_size_list("64,-1", "hidden"),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)config::parse_bool("maybe", "flag"),
                  std::invalid_argument);
}

// --------------------------------------------------------- experiment cfg

TEST_CASE("experiment config: unknown keys are rejected by name") {
  auto raw = config::Config::parse_text(kFastCfg);
  raw.set("dataset.typo", "1");
  CHECK_THROWS_WITH_AS(
      (void)harness::ExperimentConfig::from_config(raw),
      doctest::Contains("unrecognized key \"dataset.typo\""),
      std::invalid_argument);
}

TEST_CASE("experiment config: defaults fill the gaps, values land") {
  const auto cfg = fast_config();
  CHECK(cfg.classes == 10);
  CHECK(cfg.ipc == 3);
  CHECK(cfg.teacher_hidden == std::vector<std::size_t>{16});
  CHECK(cfg.loss.text() == "cosine");
  CHECK(cfg.optimizer.kind == optim::Kind::kAdam);
  CHECK(cfg.optimizer.lr == 0.01);
  CHECK(cfg.target_role == "refined");
  CHECK(cfg.repeats == 2);
  CHECK(cfg.use_schedule);  // default on
  CHECK(cfg.batch_size == 0);
  CHECK(cfg.fingerprint() == cfg.raw.fingerprint());
  CHECK(harness::ExperimentConfig::known_keys().size() == 47);
}

TEST_CASE("experiment config: validate rejects inconsistent settings") {
  CHECK_THROWS_WITH_AS(fast_config("dataset.ipc2 = 1\n"),
                       doctest::Contains("unrecognized"),
                       std::invalid_argument);
  auto bad_ipc = fast_config();
  bad_ipc.ipc = 13;  // > per_class
  CHECK_THROWS_AS(bad_ipc.validate(), std::invalid_argument);
  auto bad_dim = fast_config();
  bad_dim.dim = 5;  // blobs need dim >= classes
  CHECK_THROWS_AS(bad_dim.validate(), std::invalid_argument);
  auto bad_source = fast_config();
  bad_source.dataset_source = "imagenet";
  CHECK_THROWS_AS(bad_source.validate(), std::invalid_argument);
  auto bad_role = fast_config();
  bad_role.target_role = "fuzzy";
  CHECK_THROWS_AS(bad_role.validate(), std::invalid_argument);
  auto bad_out = fast_config();
  bad_out.output_dir = "";
  CHECK_THROWS_AS(bad_out.validate(), std::invalid_argument);
}

// -------------------------------------------------------------- run basics

TEST_CASE("run_experiment: record shape, aggregates, and determinism") {
  const auto cfg = fast_config();
  const harness::RunRecord a = harness::run_experiment(cfg);
  CHECK(a.fingerprint == cfg.fingerprint());
  CHECK(a.loss == "cosine");
  CHECK(a.optimizer == "adam");
  CHECK(a.ipc == 3);
  CHECK(a.gamma == 0.1);
  REQUIRE(a.seeds == std::vector<std::uint64_t>{0, 1});
  REQUIRE(a.accuracies.size() == 2);
  REQUIRE(a.epoch_loss.size() == 2);
  CHECK(a.epoch_loss[0].size() == 5);
  CHECK(a.teacher_accuracy > 0.5);  // easy corpus, the probe should separate
  for (double acc : a.accuracies) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  const double mean = (a.accuracies[0] + a.accuracies[1]) / 2.0;
  CHECK(a.mean == doctest::Approx(mean).epsilon(1e-15));
  const double var =
      ((a.accuracies[0] - mean) * (a.accuracies[0] - mean) +
       (a.accuracies[1] - mean) * (a.accuracies[1] - mean)) /
      2.0;  // population variance
  CHECK(a.stddev == doctest::Approx(std::sqrt(var)).epsilon(1e-12));

  const harness::RunRecord b = harness::run_experiment(cfg);
  REQUIRE(b.accuracies.size() == a.accuracies.size());
  for (std::size_t i = 0; i < a.accuracies.size(); ++i) {
    CHECK(a.accuracies[i] == b.accuracies[i]);  // bitwise
    CHECK(a.epoch_loss[i] == b.epoch_loss[i]);
  }
}

TEST_CASE("run_experiment: explicit repeat seeds reproduce the default run") {
  const auto cfg = fast_config();
  const harness::RunRecord both = harness::run_experiment(cfg);

  harness::RunContext ctx;
  ctx.repeat_seeds = {1};
  const harness::RunRecord only_second = harness::run_experiment(cfg, ctx);
  REQUIRE(only_second.accuracies.size() == 1);
  CHECK(only_second.accuracies[0] == both.accuracies[1]);
  CHECK(only_second.stddev == 0.0);

  // A different cell index re-seeds the repeat stream.
  harness::RunContext cell1;
  cell1.cell_index = 1;
  cell1.repeat_seeds = {1};
  const harness::RunRecord other_cell = harness::run_experiment(cfg, cell1);
  CHECK(other_cell.accuracies[0] != both.accuracies[1]);
}

// ------------------------------------------------------------------ sweep

TEST_CASE("grid_sweep: row-major cells, seed axis becomes repeats") {
  auto base = config::Config::parse_text(kFastCfg);
  base.set("repeats", "1");
  const std::vector<harness::Axis> axes = {
      {"optimizer", {"sgd", "adam"}},
      {"labels.gamma", {"0", "0.5"}},
      {"seed", {"3", "9"}},
  };
  const auto records = harness::grid_sweep(base, axes);
  REQUIRE(records.size() == 4);
  // Last axis fastest: (sgd,0), (sgd,0.5), (adam,0), (adam,0.5).
  CHECK(records[0].optimizer == "sgd");
  CHECK(records[0].gamma == 0.0);
  CHECK(records[1].optimizer == "sgd");
  CHECK(records[1].gamma == 0.5);
  CHECK(records[2].optimizer == "adam");
  CHECK(records[2].gamma == 0.0);
  CHECK(records[3].optimizer == "adam");
  CHECK(records[3].gamma == 0.5);
  for (const auto& r : records) {
    CHECK(r.seeds == std::vector<std::uint64_t>{3, 9});
    CHECK(r.accuracies.size() == 2);
  }
  // Four distinct configurations, four distinct fingerprints.
  CHECK(records[0].fingerprint != records[1].fingerprint);
  CHECK(records[0].fingerprint != records[2].fingerprint);
  CHECK(records[1].fingerprint != records[3].fingerprint);
}

TEST_CASE("grid_sweep: bad axes fail before any cell runs") {
  const auto base = config::Config::parse_text(kFastCfg);
  CHECK_THROWS_WITH_AS(
      (void)harness::grid_sweep(base, {{"bogus.key", {"1"}}}),
      doctest::Contains("unknown sweep axis"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      (void)harness::grid_sweep(base, {{"loss", {"kl"}}, {"loss", {"ce"}}}),
      doctest::Contains("given twice"), std::invalid_argument);
  CHECK_THROWS_WITH_AS((void)harness::grid_sweep(base, {{"loss", {}}}),
                       doctest::Contains("no values"), std::invalid_argument);
}

// ------------------------------------------------------------------ gdumb

TEST_CASE("gdumb: memory grows by ipc per new class, exactly") {
  auto cfg = fast_config();
  cfg.repeats = 1;
  const auto steps = harness::gdumb_incremental(cfg, 5, 0);
  REQUIRE(steps.size() == 5);
  for (std::size_t s = 0; s < 5; ++s) {
    CHECK(steps[s].seen_classes == 2 * (s + 1));
    CHECK(steps[s].memory_size == 2 * (s + 1) * 3);
    CHECK(steps[s].accuracy >= 0.0);
    CHECK(steps[s].accuracy <= 1.0);
  }
}

TEST_CASE("gdumb: single step equals the plain pipeline bitwise") {
  auto cfg = fast_config();
  cfg.repeats = 1;
  const auto steps = harness::gdumb_incremental(cfg, 1, 0);
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].seen_classes == 10);
  CHECK(steps[0].memory_size == 30);
  const harness::RunRecord direct = harness::run_experiment(cfg);
  CHECK(steps[0].accuracy == direct.accuracies[0]);
}

TEST_CASE("gdumb: repeats are deterministic and seed-sensitive") {
  auto cfg = fast_config();
  const auto a = harness::gdumb_incremental(cfg, 2, 0);
  const auto b = harness::gdumb_incremental(cfg, 2, 0);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].accuracy == b[i].accuracy);
  }
  const auto c = harness::gdumb_incremental(cfg, 2, 1);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].accuracy != c[i].accuracy) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("gdumb: class count must divide into steps") {
  const auto cfg = fast_config();
  CHECK_THROWS_WITH_AS((void)harness::gdumb_incremental(cfg, 3, 0),
                       doctest::Contains("not divisible"),
                       std::invalid_argument);
  CHECK_THROWS_AS((void)harness::gdumb_incremental(cfg, 0, 0),
                  std::invalid_argument);
}

// ----------------------------------------------------------------- report

TEST_CASE("emit_report: results.csv, summary.md, curves.csv layout") {
  auto base = config::Config::parse_text(kFastCfg);
  base.set("repeats", "2");
  const auto records =
      harness::grid_sweep(base, {{"labels.gamma", {"0", "0.5"}}});
  REQUIRE(records.size() == 2);

  const fs::path dir =
      fs::temp_directory_path() / "gift-report-test";
  fs::remove_all(dir);
  harness::emit_report(records, dir.string());

  const auto csv_lines = lines_of(read_file(dir / "results.csv"));
  REQUIRE(csv_lines.size() == 1 + 2 * (2 + 1));  // header + per-seed + all
  CHECK(csv_lines[0] == harness::results_csv_header());
  const std::size_t cols = fields_of(csv_lines[0]).size();
  CHECK(cols == 14);
  for (std::size_t i = 1; i < csv_lines.size(); ++i) {
    CHECK(fields_of(csv_lines[i]).size() == cols);
  }
  // Per-seed rows carry final_accuracy and leave mean/std empty.
  const auto seed_row = fields_of(csv_lines[1]);
  CHECK(seed_row[0] == records[0].fingerprint);
  CHECK(seed_row[9] == "0");
  CHECK(std::strtod(seed_row[10].c_str(), nullptr) ==
        records[0].accuracies[0]);
  CHECK(seed_row[11].empty());
  CHECK(seed_row[12].empty());
  // Aggregate row: seed column "all", empty final_accuracy, mean/std filled.
  const auto all_row = fields_of(csv_lines[3]);
  CHECK(all_row[9] == "all");
  CHECK(all_row[10].empty());
  CHECK(std::strtod(all_row[11].c_str(), nullptr) == records[0].mean);
  CHECK(std::strtod(all_row[12].c_str(), nullptr) == records[0].stddev);

  const auto curve_lines = lines_of(read_file(dir / "curves.csv"));
  CHECK(curve_lines[0] == "fingerprint,seed,epoch,train_loss,grad_norm");
  // 2 records x 2 repeats x 5 epochs.
  CHECK(curve_lines.size() == 1 + 2 * 2 * 5);

  const std::string md = read_file(dir / "summary.md");
  CHECK(md.find("| fingerprint |") != std::string::npos);
  CHECK(md.find("Axis: gamma") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("write_file_atomic round-trips content") {
  const fs::path p = fs::temp_directory_path() / "gift-atomic.txt";
  harness::write_file_atomic(p.string(), "alpha\nbeta\n");
  CHECK(read_file(p) == "alpha\nbeta\n");
  harness::write_file_atomic(p.string(), "gamma\n");
  CHECK(read_file(p) == "gamma\n");
  fs::remove(p);
}
