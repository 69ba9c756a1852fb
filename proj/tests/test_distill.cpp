#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fskd/distill/losses.hpp"
#include "fskd/model/backbone.hpp"
#include "test_util.hpp"

using namespace fskd;
using fskd::test::check_gradients;
using fskd::test::random_tensor;

namespace {

std::vector<Tensor> random_taps(Rng& rng, std::size_t batch, bool requires_grad,
                                const std::vector<Shape>& shapes = {{0}}) {
  std::vector<Shape> use = shapes;
  if (shapes.size() == 1 && shapes[0] == Shape{0})
    use = {Shape{batch, 3, 4, 4}, Shape{batch, 5, 2, 2}};
  std::vector<Tensor> taps;
  for (const auto& s : use) taps.push_back(random_tensor(s, rng, -1.0, 1.0, requires_grad));
  return taps;
}

// scalar-loop Eq.3 oracle, whole-map flattening
double fskd_oracle(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student) {
  const std::size_t L = teacher.size();
  double total = 0.0;
  for (std::size_t b = 0; b < L; ++b) {
    const std::size_t N = teacher[b].dim(0);
    const std::size_t K = teacher[b].size() / N;
    double block = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double tt = 0.0, ss = 0.0, ts = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double t = teacher[b].data()[i * K + k];
        const double s = student[b].data()[i * K + k];
        tt += t * t;
        ss += s * s;
        ts += t * s;
      }
      block += 1.0 - ts / (std::sqrt(tt) * std::sqrt(ss));
    }
    total += block / static_cast<double>(N);
  }
  return total / static_cast<double>(L);
}

double fitnet_oracle(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student) {
  const std::size_t L = teacher.size();
  double total = 0.0;
  for (std::size_t b = 0; b < L; ++b) {
    const std::size_t N = teacher[b].dim(0);
    const std::size_t K = teacher[b].size() / N;
    double block = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double d = teacher[b].data()[i * K + k] - student[b].data()[i * K + k];
        d2 += d * d;
      }
      block += std::sqrt(d2);
    }
    total += block / static_cast<double>(N);
  }
  return total / static_cast<double>(L);
}

double normkd_oracle(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student) {
  const std::size_t L = teacher.size();
  double total = 0.0;
  for (std::size_t b = 0; b < L; ++b) {
    const std::size_t N = teacher[b].dim(0);
    const std::size_t K = teacher[b].size() / N;
    double block = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double tt = 0.0, ss = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        tt += teacher[b].data()[i * K + k] * teacher[b].data()[i * K + k];
        ss += student[b].data()[i * K + k] * student[b].data()[i * K + k];
      }
      block += std::fabs(std::sqrt(tt) - std::sqrt(ss));
    }
    total += block / static_cast<double>(N);
  }
  return total / static_cast<double>(L);
}

std::vector<Tensor> scale_taps(const std::vector<Tensor>& taps, double alpha) {
  std::vector<Tensor> out;
  for (const auto& t : taps) {
    Tensor s = Tensor::from_data(t.shape(), t.data());
    for (auto& v : s.data_mut()) v *= alpha;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("fskd loss") {
  Rng rng(1);

  SECTION("identical taps give zero") {
    auto t = random_taps(rng, 4, false);
    for (auto mode : {FlattenMode::whole_map, FlattenMode::per_location})
      REQUIRE(std::fabs(fskd_loss(t, t, mode).item()) < 1e-9);
  }

  SECTION("antiparallel taps give two") {
    auto t = random_taps(rng, 3, false);
    auto s = scale_taps(t, -1.0);
    REQUIRE_THAT(fskd_loss(t, s).item(), Catch::Matchers::WithinAbs(2.0, 1e-9));
  }

  SECTION("uniform positive scaling of the student is invisible") {
    auto t = random_taps(rng, 3, false);
    auto s = scale_taps(t, 3.7);
    REQUIRE(std::fabs(fskd_loss(t, s).item()) < 1e-9);
  }

  SECTION("matches the scalar Eq-style oracle") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      Rng r2(seed + 10);
      auto t = random_taps(r2, 4, false);
      auto s = random_taps(r2, 4, false);
      REQUIRE_THAT(fskd_loss(t, s, FlattenMode::whole_map).item(),
                   Catch::Matchers::WithinAbs(fskd_oracle(t, s), 1e-12));
    }
  }

  SECTION("per-location mode matches a per-position oracle") {
    Rng r2(77);
    std::vector<Shape> shapes{{2, 3, 2, 2}};
    auto t = random_taps(r2, 2, false, shapes);
    auto s = random_taps(r2, 2, false, shapes);
    // oracle: cosine over the channel vector at each of the N*H*W positions
    double expect = 0.0;
    const std::size_t N = 2, C = 3, HW = 4;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < HW; ++p) {
        double tt = 0.0, ss = 0.0, ts = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double tv = t[0].data()[(n * C + c) * HW + p];
          const double sv = s[0].data()[(n * C + c) * HW + p];
          tt += tv * tv;
          ss += sv * sv;
          ts += tv * sv;
        }
        expect += 1.0 - ts / (std::sqrt(tt) * std::sqrt(ss));
      }
    expect /= static_cast<double>(N * HW);
    REQUIRE_THAT(fskd_loss(t, s, FlattenMode::per_location).item(), Catch::Matchers::WithinAbs(expect, 1e-12));
  }

  SECTION("invariant to independent positive rescaling of both sides") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng r2(seed + 90);
      auto t = random_taps(r2, 3, false);
      auto s = random_taps(r2, 3, false);
      const double base = fskd_loss(t, s).item();
      const double alpha = r2.uniform(0.01, 50.0), beta = r2.uniform(0.01, 50.0);
      REQUIRE_THAT(fskd_loss(scale_taps(t, alpha), scale_taps(s, beta)).item(),
                   Catch::Matchers::WithinAbs(base, 1e-10));
    }
  }

  SECTION("value stays in [0, 2]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r2(seed);
      auto t = random_taps(r2, 2, false);
      auto s = random_taps(r2, 2, false);
      const double v = fskd_loss(t, s).item();
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 2.0);
    }
  }

  SECTION("gradient flows into the student only, matches finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng r2(seed + 1000);
      auto t = random_taps(r2, 2, false);
      auto s = random_taps(r2, 2, true);
      for (auto mode : {FlattenMode::whole_map, FlattenMode::per_location}) {
        auto res = check_gradients(s, [&] { return fskd_loss(t, s, mode); });
        REQUIRE(res.max_rel_err < 1e-4);
      }
    }
  }

  SECTION("shape and detachment preconditions") {
    auto t = random_taps(rng, 2, false);
    auto s = random_taps(rng, 3, false);
    REQUIRE_THROWS_AS(fskd_loss(t, s), ShapeError);  // batch mismatch
    auto t2 = random_taps(rng, 2, true);             // not detached
    auto s2 = random_taps(rng, 2, true);
    REQUIRE_THROWS_AS(fskd_loss(t2, s2), ShapeError);
    std::vector<Tensor> shorter(t.begin(), t.begin() + 1);
    REQUIRE_THROWS_AS(fskd_loss(shorter, random_taps(rng, 2, false)), ShapeError);
  }
}

TEST_CASE("fitnet loss") {
  Rng rng(2);

  SECTION("identical taps give zero") {
    auto t = random_taps(rng, 4, false);
    REQUIRE(fitnet_loss(t, t).item() < 1e-5);
  }

  SECTION("uniform offset of 1 on a k-element tap gives sqrt(k)") {
    std::vector<Shape> shapes{{2, 2, 3, 3}};  // k = 18 per sample
    auto t = random_taps(rng, 2, false, shapes);
    std::vector<Tensor> s;
    for (const auto& tap : t) {
      Tensor c = Tensor::from_data(tap.shape(), tap.data());
      for (auto& v : c.data_mut()) v += 1.0;
      s.push_back(c);
    }
    REQUIRE_THAT(fitnet_loss(t, s).item(), Catch::Matchers::WithinAbs(std::sqrt(18.0), 1e-9));
  }

  SECTION("matches the scalar oracle") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      Rng r2(seed + 20);
      auto t = random_taps(r2, 4, false);
      auto s = random_taps(r2, 4, false);
      REQUIRE_THAT(fitnet_loss(t, s).item(), Catch::Matchers::WithinAbs(fitnet_oracle(t, s), 1e-10));
    }
  }

  SECTION("NOT scale invariant: doubling both sides doubles the distance") {
    Rng r2(55);
    auto t = random_taps(r2, 3, false);
    auto s = random_taps(r2, 3, false);
    const double base = fitnet_loss(t, s).item();
    const double scaled = fitnet_loss(scale_taps(t, 2.0), scale_taps(s, 2.0)).item();
    REQUIRE(std::fabs(scaled - base) > 1e-3);
  }

  SECTION("gradient matches finite differences") {
    Rng r2(600);
    auto t = random_taps(r2, 2, false);
    auto s = random_taps(r2, 2, true);
    auto res = check_gradients(s, [&] { return fitnet_loss(t, s); });
    REQUIRE(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("norm-kd loss") {
  Rng rng(3);

  SECTION("identical taps give zero") {
    auto t = random_taps(rng, 4, false);
    REQUIRE(normkd_loss(t, t).item() < 1e-6);
  }

  SECTION("doubling the student leaves the mean teacher norm") {
    auto t = random_taps(rng, 3, false);
    auto s = scale_taps(t, 2.0);
    double expect = 0.0;
    for (const auto& tap : t) {
      const std::size_t N = tap.dim(0), K = tap.size() / tap.dim(0);
      double block = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        double q = 0.0;
        for (std::size_t k = 0; k < K; ++k) q += tap.data()[i * K + k] * tap.data()[i * K + k];
        block += std::sqrt(q);
      }
      expect += block / static_cast<double>(N);
    }
    expect /= static_cast<double>(t.size());
    REQUIRE_THAT(normkd_loss(t, s).item(), Catch::Matchers::WithinAbs(expect, 1e-9));
  }

  SECTION("matches the scalar oracle") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      Rng r2(seed + 30);
      auto t = random_taps(r2, 4, false);
      auto s = random_taps(r2, 4, false);
      REQUIRE_THAT(normkd_loss(t, s).item(), Catch::Matchers::WithinAbs(normkd_oracle(t, s), 1e-10));
    }
  }

  SECTION("gradient matches finite differences") {
    Rng r2(700);
    auto t = random_taps(r2, 2, false);
    auto s = random_taps(r2, 2, true);
    auto res = check_gradients(s, [&] { return normkd_loss(t, s); });
    REQUIRE(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("total loss") {
  SECTION("lambda zero keeps the task loss") {
    DistillConfig cfg{DistillKind::fskd, 0.0, FlattenMode::whole_map};
    Tensor total = total_loss(Tensor::scalar(1.25), Tensor::scalar(0.7), cfg);
    REQUIRE(total.item() == 1.25);
  }
  SECTION("task 1.0, distill 0.2, lambda 5 gives 2.0") {
    DistillConfig cfg{DistillKind::fskd, 5.0, FlattenMode::whole_map};
    REQUIRE_THAT(total_loss(Tensor::scalar(1.0), Tensor::scalar(0.2), cfg).item(),
                 Catch::Matchers::WithinAbs(2.0, 1e-15));
  }
  SECTION("kind none returns the task loss tensor itself") {
    DistillConfig cfg;  // kind none
    Tensor task = Tensor::scalar(0.5);
    Tensor total = total_loss(task, Tensor(), cfg);
    REQUIRE(total.impl() == task.impl());
  }
  SECTION("non-finite distill term rejected") {
    DistillConfig cfg{DistillKind::fskd, 5.0, FlattenMode::whole_map};
    REQUIRE_THROWS_AS(total_loss(Tensor::scalar(1.0), Tensor::scalar(std::nan("")), cfg), NumericError);
  }
}

TEST_CASE("no gradient reaches teacher parameters through any distillation loss") {
  BackboneConfig cfg;
  cfg.block_channel_widths = {8, 16};
  cfg.blocks_per_stage = 1;
  cfg.embedding_dim = 8;
  cfg.input_size = 16;
  Backbone teacher(cfg, 1), student(cfg, 2);
  Rng rng(9);
  Tensor batch = fskd::test::random_tensor({2, 1, 16, 16}, rng, -1.0, 1.0, false);

  for (auto kind : {DistillKind::fitnet_l2, DistillKind::norm_kd, DistillKind::fskd}) {
    GradTape tape;
    TapeScope scope(tape);
    std::vector<Tensor> teacher_taps;
    {
      NoGradScope ng;
      teacher_taps = teacher.forward_with_taps(batch, false).taps;
    }
    auto student_out = student.forward_with_taps(batch, true);
    Tensor loss = distill_loss(kind, teacher_taps, student_out.taps);
    tape.backward(loss);

    bool teacher_touched = false;
    for (auto& [name, p] : teacher.named_parameters())
      for (double g : p.grad())
        if (g != 0.0) teacher_touched = true;
    REQUIRE_FALSE(teacher_touched);

    double student_grad_norm = 0.0;
    for (auto& [name, p] : student.named_parameters())
      for (double g : p.grad()) student_grad_norm += g * g;
    REQUIRE(student_grad_norm > 0.0);

    for (auto& [name, p] : teacher.named_parameters()) p.zero_grad();
    for (auto& [name, p] : student.named_parameters()) p.zero_grad();
  }
}
