// Label smoothing/refinement algebra, the loss zoo's worked examples and
// invariances, and the contrastive-bound checks.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "gift/kernels.hpp"
#include "gift/labels.hpp"
#include "gift/losses.hpp"
#include "gift/rng.hpp"
#include "gift/tensor.hpp"
#include "gift/theory.hpp"

using namespace gift;

namespace {

constexpr double kLn2 = 0.6931471805599453;

labels::LabelMatrix rows_matrix(std::size_t rows, std::size_t cols,
                                std::vector<double> values,
                                labels::Role role) {
  labels::LabelMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.values = std::move(values);
  m.role = role;
  return m;
}

}  // namespace

// ----------------------------------------------------------------- labels

TEST_CASE("labels: one_hot places a single unit entry") {
  const labels::LabelMatrix m = labels::one_hot({2, 0, 1}, 4);
  CHECK(m.rows == 3);
  CHECK(m.cols == 4);
  CHECK(m.at(0, 2) == 1.0);
  CHECK(m.at(1, 0) == 1.0);
  CHECK(m.at(2, 1) == 1.0);
  double total = 0.0;
  for (double v : m.values) total += v;
  CHECK(total == 3.0);
  CHECK(m.role == labels::Role::kHard);
}

TEST_CASE("labels: smoothing worked example alpha=0.1, C=10, class 3") {
  const labels::LabelMatrix hard = labels::one_hot({3}, 10);
  const labels::LabelMatrix sm = labels::smooth_labels(hard, 0.1);
  CHECK(sm.role == labels::Role::kSmoothed);
  for (std::size_t c = 0; c < 10; ++c) {
    const double want = c == 3 ? 0.91 : 0.01;
    CHECK(sm.at(0, c) == doctest::Approx(want).epsilon(1e-12));
  }
  double s = 0.0;
  for (double v : sm.values) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("labels: smoothing endpoints") {
  const labels::LabelMatrix hard = labels::one_hot({1}, 4);
  const labels::LabelMatrix zero = labels::smooth_labels(hard, 0.0);
  for (std::size_t c = 0; c < 4; ++c) CHECK(zero.at(0, c) == hard.at(0, c));
  const labels::LabelMatrix one = labels::smooth_labels(hard, 1.0);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(one.at(0, c) == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK_THROWS_AS((void)labels::smooth_labels(hard, -0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)labels::smooth_labels(hard, 1.1),
                  std::invalid_argument);
}

TEST_CASE("labels: refinement worked example") {
  const auto smoothed =
      rows_matrix(1, 2, {0.95, 0.05}, labels::Role::kSmoothed);
  const auto soft = rows_matrix(1, 2, {0.6, 0.4}, labels::Role::kSoft);
  const labels::LabelMatrix ref = labels::refine_labels(smoothed, soft, 0.1);
  CHECK(ref.role == labels::Role::kRefined);
  CHECK(ref.at(0, 0) == doctest::Approx(0.8487).epsilon(1e-4));
  CHECK(ref.at(0, 1) == doctest::Approx(0.5045).epsilon(1e-4));
}

TEST_CASE("labels: refinement endpoints reproduce the normalized inputs") {
  Rng rng(5);
  const std::size_t C = 8;
  labels::LabelMatrix smoothed =
      rows_matrix(6, C, std::vector<double>(6 * C), labels::Role::kSmoothed);
  labels::LabelMatrix soft =
      rows_matrix(6, C, std::vector<double>(6 * C), labels::Role::kSoft);
  for (std::size_t r = 0; r < 6; ++r) {
    double ssum = 0.0, psum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      smoothed.at(r, c) = rng.uniform(0.01, 1.0);
      soft.at(r, c) = rng.uniform(0.01, 1.0);
      ssum += smoothed.at(r, c);
      psum += soft.at(r, c);
    }
    for (std::size_t c = 0; c < C; ++c) {
      smoothed.at(r, c) /= ssum;
      soft.at(r, c) /= psum;
    }
  }
  const labels::LabelMatrix at0 = labels::refine_labels(smoothed, soft, 0.0);
  const labels::LabelMatrix at1 = labels::refine_labels(smoothed, soft, 1.0);
  for (std::size_t r = 0; r < 6; ++r) {
    // The blend applies reciprocal weights (w = coeff / norm, out = w * row)
    // with the active dot kernel's norm; mirror that exactly so the endpoint
    // comparison can be bitwise.
    const auto& k = kern::active_kernels();
    const double ws = 1.0 / std::sqrt(k.dot(soft.row(r), soft.row(r), C));
    const double wm =
        1.0 / std::sqrt(k.dot(smoothed.row(r), smoothed.row(r), C));
    for (std::size_t c = 0; c < C; ++c) {
      // gamma=0 keeps exactly soft/|soft|; gamma=1 exactly smoothed/|smoothed|.
      CHECK(at0.at(r, c) == ws * soft.at(r, c));
      CHECK(at1.at(r, c) == wm * smoothed.at(r, c));
    }
  }
}

TEST_CASE("labels: argmax-flip criterion matches brute force on 1000 rows") {
  Rng rng(99);
  const std::size_t C = 12;
  const double gamma = 0.1;
  std::size_t flips = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // Random hard class + random teacher distribution.
    const std::size_t true_class = rng.below(C);
    labels::LabelMatrix hard = labels::one_hot({true_class}, C);
    labels::LabelMatrix smoothed = labels::smooth_labels(hard, 0.1);
    labels::LabelMatrix soft =
        rows_matrix(1, C, std::vector<double>(C), labels::Role::kSoft);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      soft.at(0, c) = rng.uniform(0.0, 1.0);
      sum += soft.at(0, c);
    }
    for (std::size_t c = 0; c < C; ++c) soft.at(0, c) /= sum;

    const labels::LabelMatrix refined =
        labels::refine_labels(smoothed, soft, gamma);

    // Brute-force argmax of the refined row.
    const std::size_t got = refined.argmax_row(0);

    // Definition-level prediction: recompute
    //   gamma * smoothed/|smoothed| + (1-gamma) * soft/|soft|
    // term by term and take its argmax (lowest index wins ties).
    const auto& k = kern::active_kernels();
    const double wm =
        gamma / std::sqrt(k.dot(smoothed.row(0), smoothed.row(0), C));
    const double ws =
        (1.0 - gamma) / std::sqrt(k.dot(soft.row(0), soft.row(0), C));
    std::size_t want = 0;
    double best = wm * smoothed.at(0, 0) + ws * soft.at(0, 0);
    for (std::size_t c = 1; c < C; ++c) {
      const double v = wm * smoothed.at(0, c) + ws * soft.at(0, c);
      if (v > best) {
        best = v;
        want = c;
      }
    }
    CHECK(got == want);
    if (got != soft.argmax_row(0)) ++flips;
  }
  // The blend must actually flip some argmaxes, else the test is vacuous.
  CHECK(flips > 50);
}

TEST_CASE("labels: refinement repairs most small-margin teacher errors") {
  // Teacher: correct rows get a confident distribution, 30% of rows swap
  // the top-2 with a small margin. Refinement with gamma=0.1 must push
  // label accuracy above the raw soft labels.
  Rng rng(123);
  const std::size_t C = 10, N = 500;
  std::vector<std::size_t> classes(N);
  labels::LabelMatrix soft =
      rows_matrix(N, C, std::vector<double>(N * C), labels::Role::kSoft);
  for (std::size_t r = 0; r < N; ++r) {
    classes[r] = rng.below(C);
    const bool wrong = rng.uniform() < 0.3;
    const std::size_t other = (classes[r] + 1 + rng.below(C - 1)) % C;
    for (std::size_t c = 0; c < C; ++c) soft.at(r, c) = 0.02;
    if (wrong) {
      soft.at(r, other) = 0.42;  // small-margin mistake
      soft.at(r, classes[r]) = 0.40;
    } else {
      soft.at(r, classes[r]) = 0.60;
      soft.at(r, other) = 0.22;
    }
  }
  const labels::LabelMatrix hard = labels::one_hot(classes, C);
  const labels::LabelMatrix smoothed = labels::smooth_labels(hard, 0.1);
  const labels::LabelMatrix refined =
      labels::refine_labels(smoothed, soft, 0.1);
  const double acc_soft = labels::label_accuracy(soft, hard);
  const double acc_ref = labels::label_accuracy(refined, hard);
  CHECK(acc_soft < 0.8);
  CHECK(acc_ref > acc_soft);
  CHECK(acc_ref == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("labels: refinement rejects mismatched shapes and bad gamma") {
  const auto a = rows_matrix(1, 2, {0.5, 0.5}, labels::Role::kSmoothed);
  const auto b = rows_matrix(1, 3, {0.2, 0.4, 0.4}, labels::Role::kSoft);
  CHECK_THROWS_AS((void)labels::refine_labels(a, b, 0.1),
                  std::invalid_argument);
  const auto c = rows_matrix(1, 2, {0.6, 0.4}, labels::Role::kSoft);
  CHECK_THROWS_AS((void)labels::refine_labels(a, c, -0.01),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)labels::refine_labels(a, c, 1.01),
                  std::invalid_argument);
  const auto z = rows_matrix(1, 2, {0.0, 0.0}, labels::Role::kSoft);
  CHECK_THROWS_AS((void)labels::refine_labels(a, z, 0.1),
                  std::invalid_argument);
}

TEST_CASE("labels: l1_normalized rows sum to one") {
  const auto m = rows_matrix(2, 3, {0.2, 0.2, 0.6, 1.0, 1.0, 2.0},
                             labels::Role::kRefined);
  const labels::LabelMatrix n = labels::l1_normalized(m);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += n.at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(n.at(1, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("labels: binary round-trip preserves bits, role, and shape") {
  Rng rng(7);
  labels::LabelMatrix m = rows_matrix(5, 7, std::vector<double>(35),
                                      labels::Role::kRefined);
  for (double& v : m.values) v = rng.uniform(-1.0, 2.0);
  m.source = "round-trip";
  const std::string path =
      (std::filesystem::temp_directory_path() / "gift_labels_rt.bin").string();
  labels::save_labels(m, path);
  const labels::LabelMatrix back = labels::load_labels(path);
  CHECK(back.rows == m.rows);
  CHECK(back.cols == m.cols);
  CHECK(back.role == m.role);
  CHECK(back.values == m.values);  // bit-exact
  std::filesystem::remove(path);
  CHECK_THROWS_AS((void)labels::load_labels(path + ".missing"),
                  std::runtime_error);
}

TEST_CASE("labels: argmax tie-break picks the lowest index") {
  const auto m = rows_matrix(1, 4, {0.3, 0.3, 0.3, 0.1}, labels::Role::kSoft);
  CHECK(m.argmax_row(0) == 0);
}

// ----------------------------------------------------------------- losses

TEST_CASE("losses: stable ids parse and round-trip") {
  for (const char* id : {"ce", "soft_ce", "kl", "js", "mse", "cosine",
                         "kl+ce", "mse+ce", "soft_ce+ce"}) {
    const losses::LossId parsed = losses::LossId::parse(id);
    CHECK(parsed.text() == id);
  }
  CHECK(losses::LossId::parse("kl").primary == losses::Kind::kKl);
  CHECK(losses::LossId::parse("kl+ce").with_ce);
  CHECK_FALSE(losses::LossId::parse("kl").with_ce);
  CHECK_THROWS_AS((void)losses::LossId::parse("hinge"),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)losses::LossId::parse("ce+ce"),
                  std::invalid_argument);
}

TEST_CASE("losses: cross-entropy on uniform logits is ln C") {
  const Tensor logits = Tensor::from({1, 2}, {0.0, 0.0});
  const labels::LabelMatrix hard = labels::one_hot({0}, 2);
  CHECK(losses::loss_ce(logits, hard) ==
        doctest::Approx(kLn2).epsilon(1e-12));
}

TEST_CASE("losses: soft cross-entropy worked example") {
  const Tensor logits = Tensor::from({1, 2}, {0.0, 0.0});
  const auto target = rows_matrix(1, 2, {0.9, 0.1}, labels::Role::kSoft);
  // -sum t log softmax = -(0.9 + 0.1) log 0.5 = ln 2.
  CHECK(losses::loss_soft_ce(logits, target) ==
        doctest::Approx(kLn2).epsilon(1e-12));
}

TEST_CASE("losses: KL worked example at T=1") {
  const Tensor logits = Tensor::from({1, 2}, {0.0, 0.0});
  const auto target = rows_matrix(1, 2, {0.9, 0.1}, labels::Role::kSoft);
  const double want = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
  CHECK(losses::loss_kl(logits, target, 1.0) ==
        doctest::Approx(want).epsilon(1e-12));
  CHECK(losses::loss_kl(logits, target, 1.0) ==
        doctest::Approx(0.3681).epsilon(1e-3));
}

TEST_CASE("losses: KL temperature scaling is T^2 times sharpened KL") {
  Rng rng(3);
  const Tensor logits = Tensor::from({2, 3}, {0.5, -1.0, 0.2,
                                              1.5, 0.3, -0.7});
  auto target = rows_matrix(2, 3, {0.6, 0.3, 0.1, 0.2, 0.5, 0.3},
                            labels::Role::kSoft);
  for (double t : {2.0, 4.0}) {
    // Reference: T^2 * KL(sharpen(p,T) || softmax(z/T)).
    const labels::LabelMatrix sharp = losses::sharpen(target, t);
    Tensor scaled = logits;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] /= t;
    const double ref = t * t * losses::loss_kl(scaled, sharp, 1.0);
    CHECK(losses::loss_kl(logits, target, t) ==
          doctest::Approx(ref).epsilon(1e-10));
  }
  // T=1 sharpening is the identity.
  const labels::LabelMatrix same = losses::sharpen(target, 1.0);
  for (std::size_t i = 0; i < same.values.size(); ++i) {
    CHECK(same.values[i] == doctest::Approx(target.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("losses: JS is symmetric, bounded by ln 2, zero at equality") {
  const Tensor logits = Tensor::from({1, 2}, {std::log(0.9), std::log(0.1)});
  const auto same = rows_matrix(1, 2, {0.9, 0.1}, labels::Role::kSoft);
  CHECK(losses::loss_js(logits, same) ==
        doctest::Approx(0.0).epsilon(1e-9));
  // Disjoint supports approach the ln 2 maximum.
  const Tensor extreme = Tensor::from({1, 2}, {-40.0, 40.0});
  const auto onehot = rows_matrix(1, 2, {1.0, 0.0}, labels::Role::kSoft);
  CHECK(losses::loss_js(extreme, onehot) ==
        doctest::Approx(kLn2).epsilon(1e-9));
  const double a = losses::loss_js(Tensor::from({1, 2}, {0.3, -0.3}),
                                   rows_matrix(1, 2, {0.7, 0.3},
                                               labels::Role::kSoft));
  CHECK(a > 0.0);
  CHECK(a < kLn2);
}

TEST_CASE("losses: MSE worked example averages over all entries") {
  const Tensor logits = Tensor::from({1, 2}, {1.0, 2.0});
  const Tensor target = Tensor::from({1, 2}, {3.0, 2.0});
  CHECK(losses::loss_mse(logits, target) ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("losses: cosine worked example and identities") {
  const auto target34 = rows_matrix(1, 2, {4.0, 3.0}, labels::Role::kSoft);
  const Tensor logits = Tensor::from({1, 2}, {3.0, 4.0});
  // 1 - 24/25.
  CHECK(losses::loss_cosine(logits, target34) ==
        doctest::Approx(0.04).epsilon(1e-12));

  // Parallel rows: zero loss.
  const auto par = rows_matrix(1, 2, {0.6, 0.8}, labels::Role::kSoft);
  CHECK(losses::loss_cosine(Tensor::from({1, 2}, {3.0, 4.0}), par) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // Orthogonal rows: loss exactly 1.
  const auto orth = rows_matrix(1, 2, {1.0, 0.0}, labels::Role::kSoft);
  CHECK(losses::loss_cosine(Tensor::from({1, 2}, {0.0, 5.0}), orth) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("losses: cosine is scale-invariant in the logits") {
  Rng rng(17);
  const std::size_t N = 4, C = 6;
  Tensor logits({N, C});
  labels::LabelMatrix target =
      rows_matrix(N, C, std::vector<double>(N * C), labels::Role::kRefined);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] = rng.uniform(-2.0, 2.0);
    target.values[i] = rng.uniform(0.05, 1.0);
  }
  const double base = losses::loss_cosine(logits, target);
  for (double c : {0.5, 2.0, 37.0, 1e6}) {
    Tensor scaled = logits;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= c;
    CHECK(std::abs(losses::loss_cosine(scaled, target) - base) < 1e-12);
  }
}

TEST_CASE("losses: per-sample cosine gradient is orthogonal to the logits") {
  Rng rng(29);
  const std::size_t N = 8, C = 10;
  Tensor logits({N, C});
  labels::LabelMatrix target =
      rows_matrix(N, C, std::vector<double>(N * C), labels::Role::kRefined);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] = rng.uniform(-2.0, 2.0);
    target.values[i] = rng.uniform(0.05, 1.0);
  }
  const losses::LossId id = losses::LossId::parse("cosine");
  const auto [value, grad] =
      losses::loss_with_grad(id, logits, nullptr, &target, nullptr);
  CHECK(value > 0.0);
  for (std::size_t r = 0; r < N; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      dot += grad.at(r, c) * logits.at(r, c);
    }
    CHECK(std::abs(dot) < 1e-9);
  }
}

TEST_CASE("losses: combos weight the two sides") {
  const Tensor logits = Tensor::from({1, 2}, {0.4, -0.1});
  const labels::LabelMatrix hard = labels::one_hot({0}, 2);
  const auto soft = rows_matrix(1, 2, {0.7, 0.3}, labels::Role::kSoft);
  losses::LossId id = losses::LossId::parse("kl+ce");
  id.weight_primary = 2.0;
  id.weight_ce = 0.5;
  const double combined = losses::loss_combo(id, logits, hard, soft);
  const double kl = losses::loss_kl(logits, soft, id.temperature);
  const double ce = losses::loss_ce(logits, hard);
  CHECK(combined == doctest::Approx(2.0 * kl + 0.5 * ce).epsilon(1e-12));
}

TEST_CASE("losses: target compatibility is enforced") {
  CHECK_THROWS_AS(losses::check_target_compat(losses::LossId::parse("ce"),
                                              /*has_hard=*/false, {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(losses::check_target_compat(losses::LossId::parse("kl"),
                                              true, {}),
                  std::invalid_argument);
  // Probability losses refuse refined rows (callers must L1-normalize).
  CHECK_THROWS_AS(losses::check_target_compat(losses::LossId::parse("kl"),
                                              false,
                                              labels::Role::kRefined),
                  std::invalid_argument);
  CHECK_NOTHROW(losses::check_target_compat(losses::LossId::parse("cosine"),
                                            false, labels::Role::kRefined));
  CHECK_NOTHROW(losses::check_target_compat(losses::LossId::parse("kl+ce"),
                                            true, labels::Role::kSoft));
}

TEST_CASE("losses: every zoo member passes a spot finite-difference check") {
  Rng rng(41);
  const std::size_t N = 8, C = 10;
  Tensor logits({N, C});
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] = rng.uniform(-2.0, 2.0);
  }
  std::vector<std::size_t> classes(N);
  for (auto& c : classes) c = rng.below(C);
  const labels::LabelMatrix hard = labels::one_hot(classes, C);
  labels::LabelMatrix vec =
      rows_matrix(N, C, std::vector<double>(N * C), labels::Role::kSoft);
  for (std::size_t r = 0; r < N; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      vec.at(r, c) = rng.uniform(0.01, 1.0);
      s += vec.at(r, c);
    }
    for (std::size_t c = 0; c < C; ++c) vec.at(r, c) /= s;
  }
  Tensor logit_target({N, C});
  for (std::size_t i = 0; i < logit_target.size(); ++i) {
    logit_target[i] = rng.uniform(-2.0, 2.0);
  }

  for (const char* name : {"ce", "soft_ce", "kl", "js", "mse", "cosine",
                           "kl+ce", "mse+ce", "soft_ce+ce"}) {
    const losses::LossId id = losses::LossId::parse(name);
    const auto [value, grad] = losses::loss_with_grad(
        id, logits, id.needs_hard_target() ? &hard : nullptr,
        id.needs_vector_target() ? &vec : nullptr,
        id.wants_logit_target() ? &logit_target : nullptr);
    CHECK(std::isfinite(value));
    auto f = [&](const Tensor& z) {
      return losses::loss_with_grad(
                 id, z, id.needs_hard_target() ? &hard : nullptr,
                 id.needs_vector_target() ? &vec : nullptr,
                 id.wants_logit_target() ? &logit_target : nullptr)
          .first;
    };
    const Tensor fd = ad::finite_diff_grad(f, logits, 1e-6);
    CHECK(ad::max_rel_error(grad, fd) < 1e-4);
  }
}

// ----------------------------------------------------------------- theory

TEST_CASE("theory: matched one-hot batch reproduces the closed form") {
  // z = y = I_3, tau = 1: every positive cos is 1, negatives 0, so the
  // contrastive loss is -log(e / (e + 2)).
  const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const double want = std::log((std::exp(1.0) + 2.0) / std::exp(1.0));
  CHECK(theory::infonce_loss(eye, eye, 1.0) ==
        doctest::Approx(want).epsilon(1e-12));
  CHECK(theory::infonce_loss(eye, eye, 1.0) ==
        doctest::Approx(0.5514).epsilon(1e-3));
}

TEST_CASE("theory: Jensen bound dominates the contrastive loss") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 1 + rng.below(8);
    const std::size_t D = 2 + rng.below(6);
    const double tau = 0.25 + rng.uniform() * 2.0;
    Tensor z({K, D}), y({K, D});
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = rng.normal();
      y[i] = rng.normal();
    }
    const theory::BoundReport rep = theory::check_bound(z, y, tau);
    CHECK(rep.gap_jensen >= -1e-9);
    CHECK(rep.infonce == doctest::Approx(theory::infonce_loss(z, y, tau))
                             .epsilon(1e-12));
  }
}

TEST_CASE("theory: K=1 is the exact-equality case of the Jensen step") {
  const Tensor z = Tensor::from({1, 4}, {0.3, -0.2, 0.9, 0.1});
  const Tensor y = Tensor::from({1, 4}, {1.0, 0.5, -0.25, 2.0});
  const theory::BoundReport rep = theory::check_bound(z, y, 0.7);
  // The single positive pair is the whole denominator: the loss vanishes
  // and the Jensen inequality becomes an equality.
  CHECK(std::abs(rep.infonce) < 1e-12);
  CHECK(std::abs(rep.jensen_bound) < 1e-12);
  CHECK(std::abs(rep.gap_jensen) < 1e-12);
  // The approximation bound keeps its positive-pair term (the empty cross
  // term contributes nothing and log K = 0): exactly -cos(z,y)/tau.
  double dot = 0.0, nz = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    dot += z[i] * y[i];
    nz += z[i] * z[i];
    ny += y[i] * y[i];
  }
  const double cos = dot / std::sqrt(nz * ny);
  CHECK(rep.approx_bound ==
        doctest::Approx(-cos / 0.7).epsilon(1e-12));
}

TEST_CASE("theory: zero rows are rejected") {
  Tensor z = Tensor::from({2, 2}, {0.0, 0.0, 1.0, 0.0});
  Tensor y = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  CHECK_THROWS_AS((void)theory::infonce_loss(z, y, 1.0),
                  std::invalid_argument);
}

TEST_CASE("theory: orthogonality stats on one-hot rows") {
  const labels::LabelMatrix m = labels::one_hot({0, 1, 2}, 3);
  const theory::OrthogonalityStats st = theory::orthogonality_stats(m);
  CHECK(st.mean_abs_cos == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(st.max_abs_cos == doctest::Approx(0.0).epsilon(1e-12));
  // A duplicated row drives the max to 1.
  const labels::LabelMatrix dup = labels::one_hot({1, 1}, 3);
  CHECK(theory::orthogonality_stats(dup).max_abs_cos ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("theory: gradient_norm is the global L2 norm") {
  std::map<std::string, Tensor> grads;
  grads["a"] = Tensor::from({1}, {3.0});
  grads["b"] = Tensor::from({1}, {4.0});
  CHECK(theory::gradient_norm(grads) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("theory: bound report CSV layout is stable") {
  CHECK(std::string(theory::BoundReport::csv_header()) ==
        "K,tau,infonce,jensen_bound,approx_bound,gap_jensen,gap_approx");
  theory::BoundReport rep;
  rep.k = 4;
  rep.tau = 0.5;
  const std::string row = rep.csv_row();
  CHECK(row.rfind("4,", 0) == 0);
  CHECK(std::count(row.begin(), row.end(), ',') == 6);
}
