// Acceptance suite: exercises the property criteria (1-5) and the desk-scale
// digit reproduction (6-9). Prints one [PASS]/[FAIL] line per criterion and
// exits with the number of failed criteria.
//
// --smoke runs the training criteria at a reduced scale to validate wiring;
// it is NOT the acceptance configuration and says so loudly.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "fskd/core/malloc_tuning.hpp"
#include "fskd/core/parallel.hpp"
#include "fskd/data/eval.hpp"
#include "fskd/data/synthetic.hpp"
#include "fskd/distill/losses.hpp"
#include "fskd/model/margin_head.hpp"
#include "fskd/stats/analysis.hpp"
#include "fskd/train/trainer.hpp"
#include "../stats_util.hpp"
#include "../test_util.hpp"

using namespace fskd;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double grad_err(const std::vector<Tensor>& inputs, const std::function<Tensor()>& op, std::uint64_t proj_seed) {
  fskd::test::Projector proj(proj_seed);
  return fskd::test::check_gradients(inputs, [&] { return proj(op()); }).max_rel_err;
}

// ---------------------------------------------------------------------
// criterion 1: gradient oracle over every differentiable op + Eq.2 / Eq.3
// ---------------------------------------------------------------------
void criterion1() {
  double worst = 0.0;
  std::string worst_name = "none";
  auto track = [&](const char* name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed * 7919 + 13);
    const std::uint64_t ps = seed + 101;
    using fskd::test::random_tensor;

    Tensor a = random_tensor({3, 4}, rng, 0.2, 1.5);
    Tensor b = random_tensor({3, 4}, rng, 0.3, 1.5);
    Tensor row = random_tensor({3, 1}, rng, 0.3, 1.2);
    track("add", grad_err({a, b}, [&] { return add(a, b); }, ps));
    track("sub", grad_err({a, b}, [&] { return sub(a, b); }, ps + 1));
    track("mul", grad_err({a, b}, [&] { return mul(a, b); }, ps + 2));
    track("div", grad_err({a, b}, [&] { return div(a, b); }, ps + 3));
    track("div-broadcast", grad_err({a, row}, [&] { return div(a, row); }, ps + 4));
    track("affine", grad_err({a}, [&] { return affine(a, -1.7, 0.3); }, ps + 5));
    track("exp", grad_err({a}, [&] { return exp(a); }, ps + 6));
    track("log", grad_err({a}, [&] { return log(a); }, ps + 7));
    track("square", grad_err({a}, [&] { return square(a); }, ps + 8));
    track("sqrt_eps", grad_err({a}, [&] { return sqrt_eps(a, 1e-12); }, ps + 9));
    track("abs", grad_err({a, b}, [&] { return abs(sub(a, b)); }, ps + 10));
    track("reshape", grad_err({a}, [&] { return reshape(a, {4, 3}); }, ps + 11));
    track("mean_all", grad_err({a}, [&] { return mean_all(a); }, ps + 12));
    track("sum_axes", grad_err({a}, [&] { return sum_axes(a, {1}, true); }, ps + 13));
    track("l2_norm", grad_err({a}, [&] { return l2_norm(a, {1}, false); }, ps + 14));

    Tensor rl = random_tensor({4, 4}, rng, 0.05, 1.0);
    for (std::size_t i = 0; i < rl.size(); i += 2) rl.data_mut()[i] = -rl.data()[i];
    track("relu", grad_err({rl}, [&] { return relu(rl); }, ps + 15));

    Tensor mx = random_tensor({3, 5}, rng);
    Tensor mw = random_tensor({5, 4}, rng);
    track("matmul", grad_err({mx, mw}, [&] { return matmul(mx, mw); }, ps + 16));

    Tensor cx = random_tensor({2, 2, 5, 5}, rng);
    Tensor ck = random_tensor({3, 2, 3, 3}, rng);
    track("conv2d", grad_err({cx, ck}, [&] { return conv2d(cx, ck, 2, 1); }, ps + 17));

    Tensor px = random_tensor({2, 3, 4, 4}, rng);
    track("avg_pool2d", grad_err({px}, [&] { return avg_pool2d(px, 2, 2); }, ps + 18));
    track("global_avg_pool", grad_err({px}, [&] { return global_avg_pool(px); }, ps + 19));
    track("channels_last_rows", grad_err({px}, [&] { return channels_last_rows(px); }, ps + 20));

    Tensor bx = random_tensor({4, 2, 3, 3}, rng);
    Tensor bg = random_tensor({2}, rng, 0.5, 1.5);
    Tensor bb = random_tensor({2}, rng, -0.5, 0.5);
    const std::vector<double> rm{0.1, -0.2}, rv{1.3, 0.7};
    for (bool training : {true, false}) {
      track(training ? "batch_norm-train" : "batch_norm-eval",
            grad_err({bx, bg, bb},
                     [&] {
                       auto rm2 = rm;
                       auto rv2 = rv;
                       return batch_norm(bx, bg, bb, rm2, rv2, 0.1, 1e-5, training);
                     },
                     ps + 21 + (training ? 0 : 1)));
    }

    {
      Tensor logits = random_tensor({5, 3}, rng, -2.0, 2.0);
      std::vector<int> labels{0, 2, 1, 2, 0};
      track("cross_entropy",
            fskd::test::check_gradients({logits}, [&] { return cross_entropy_with_logits(logits, labels); })
                .max_rel_err);
    }
    {
      // Eq.2 composite
      MarginHeadParams params(4, 3, 8.0, 0.35, seed + 2);
      Tensor x = random_tensor({3, 4}, rng, 0.2, 1.2);
      std::vector<int> labels{0, 2, 1};
      track("cosface_loss",
            fskd::test::check_gradients({x, params.W}, [&] { return cosface_loss(x, labels, params); }).max_rel_err);
      track("softmax_loss",
            fskd::test::check_gradients({x, params.W}, [&] { return softmax_loss(x, labels, params.W); }).max_rel_err);
    }
    {
      // Eq.3 composite, both flatten modes, plus the ablation losses
      std::vector<Tensor> t{random_tensor({2, 3, 2, 2}, rng, -1, 1, false),
                            random_tensor({2, 4, 2, 2}, rng, -1, 1, false)};
      std::vector<Tensor> s{random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 4, 2, 2}, rng)};
      track("fskd_loss-whole",
            fskd::test::check_gradients(s, [&] { return fskd_loss(t, s, FlattenMode::whole_map); }).max_rel_err);
      track("fskd_loss-perloc",
            fskd::test::check_gradients(s, [&] { return fskd_loss(t, s, FlattenMode::per_location); }).max_rel_err);
      track("fitnet_loss", fskd::test::check_gradients(s, [&] { return fitnet_loss(t, s); }).max_rel_err);
      track("normkd_loss", fskd::test::check_gradients(s, [&] { return normkd_loss(t, s); }).max_rel_err);
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "gradient oracle, all ops + Eq.2/Eq.3 composites, 10 seeds: max rel err %.3g (%s), tolerance 1e-4",
                worst, worst_name.c_str());
  report(1, worst < 1e-4, buf);
}

// ---------------------------------------------------------------------
// criterion 2: F-SKD loss invariants, FitNet scale sensitivity
// ---------------------------------------------------------------------
std::vector<Tensor> random_taps2(Rng& rng, bool rg = false) {
  return {fskd::test::random_tensor({4, 3, 4, 4}, rng, -1, 1, rg),
          fskd::test::random_tensor({4, 5, 2, 2}, rng, -1, 1, rg)};
}

std::vector<Tensor> scale_taps2(const std::vector<Tensor>& taps, double alpha) {
  std::vector<Tensor> out;
  for (const auto& t : taps) {
    Tensor s = Tensor::from_data(t.shape(), t.data());
    for (auto& v : s.data_mut()) v *= alpha;
    out.push_back(s);
  }
  return out;
}

double fskd_scalar_oracle(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student) {
  double total = 0.0;
  for (std::size_t b = 0; b < teacher.size(); ++b) {
    const std::size_t N = teacher[b].dim(0), K = teacher[b].size() / teacher[b].dim(0);
    double block = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double tt = 0, ss = 0, ts = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double tv = teacher[b].data()[i * K + k], sv = student[b].data()[i * K + k];
        tt += tv * tv;
        ss += sv * sv;
        ts += tv * sv;
      }
      block += 1.0 - ts / (std::sqrt(tt) * std::sqrt(ss));
    }
    total += block / static_cast<double>(N);
  }
  return total / static_cast<double>(teacher.size());
}

void criterion2() {
  bool ok = true;
  std::ostringstream why;
  Rng rng(77);
  for (int trial = 0; trial < 20 && ok; ++trial) {
    auto t = random_taps2(rng);
    auto s = random_taps2(rng);
    const double v = fskd_loss(t, s).item();
    if (!(v >= 0.0 && v <= 2.0)) { ok = false; why << "range violation " << v; }
    if (std::fabs(v - fskd_scalar_oracle(t, s)) > 1e-12) { ok = false; why << "oracle mismatch"; }
    const double id = fskd_loss(t, t).item();
    if (std::fabs(id) > 1e-9) { ok = false; why << "identical taps gave " << id; }
    const double neg = fskd_loss(t, scale_taps2(t, -1.0)).item();
    if (std::fabs(neg - 2.0) > 1e-9) { ok = false; why << "negated taps gave " << neg; }
    const double alpha = rng.uniform(0.02, 40.0), beta = rng.uniform(0.02, 40.0);
    if (std::fabs(fskd_loss(scale_taps2(t, alpha), scale_taps2(s, beta)).item() - v) > 1e-10) {
      ok = false;
      why << "not scale invariant";
    }
    // FitNet must feel the same rescaling
    const double fit = fitnet_loss(t, s).item();
    const double fit2 = fitnet_loss(scale_taps2(t, 2.0), scale_taps2(s, 2.0)).item();
    if (std::fabs(fit2 - fit) < 1e-6) { ok = false; why << "fitnet unexpectedly scale invariant"; }
  }
  report(2, ok,
         ok ? "F-SKD in [0,2], 0 on identical, 2 on negated, scale invariant to 1e-10, matches scalar oracle to "
              "1e-12; FitNet scale-sensitive"
            : "F-SKD invariants: " + why.str());
}

// ---------------------------------------------------------------------
// criterion 3: CosFace reduction at m=0 and monotonicity in m
// ---------------------------------------------------------------------
void criterion3() {
  double max_gap = 0.0;
  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    MarginHeadParams params(6, 4, 16.0, 0.0, seed + 1);
    Tensor x = fskd::test::random_tensor({3, 6}, rng, -1.5, 1.5, false);
    std::vector<int> labels{static_cast<int>(seed % 4), 0, 3};
    const double lhs = cosface_loss(x, labels, params).item();
    const double rhs = softmax_loss(affine(normalize_rows(x), params.scale), labels, normalize_cols(params.W)).item();
    max_gap = std::max(max_gap, std::fabs(lhs - rhs));
  }
  for (std::uint64_t seed = 0; seed < 10 && monotone; ++seed) {
    Rng rng(seed + 7);
    Tensor x = fskd::test::random_tensor({4, 5}, rng, -1.0, 1.0, false);
    std::vector<int> labels{0, 1, 2, 0};
    double prev = -1.0;
    for (double m : {0.0, 0.1, 0.2, 0.35, 0.5, 0.8}) {
      MarginHeadParams params(5, 3, 24.0, m, 11);
      const double loss = cosface_loss(x, labels, params).item();
      if (loss < prev - 1e-12) monotone = false;
      prev = loss;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "CosFace m=0 equals scaled normalized softmax on 100 cases (max gap %.3g, tol 1e-10); loss monotone "
                "in m: %s",
                max_gap, monotone ? "yes" : "NO");
  report(3, max_gap < 1e-10 && monotone, buf);
}

// ---------------------------------------------------------------------
// criterion 4: statistics oracles
// ---------------------------------------------------------------------
void criterion4() {
  bool ok = true;
  std::ostringstream why;

  std::vector<double> x{1.0, 2.5, 3.0, 4.2, 5.9};
  if (std::fabs(stats::pearson_r(x, x) - 1.0) > 1e-14) { ok = false; why << "pearson(x,x) != 1; "; }
  std::vector<double> z;
  for (double v : x) z.push_back(-2.0 * v + 7.0);
  if (std::fabs(stats::pearson_r(x, z) + 1.0) > 1e-14) { ok = false; why << "pearson negative linear; "; }
  {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> u(40), v(40);
      rng.fill_uniform(u, -2, 2);
      rng.fill_uniform(v, -2, 2);
      const double base = stats::pearson_r(u, v);
      const double a = rng.uniform(0.1, 5.0), b = rng.uniform(-3.0, 3.0);
      std::vector<double> au;
      for (double w : u) au.push_back(a * w + b);
      if (std::fabs(stats::pearson_r(au, v) - base) > 1e-10) { ok = false; why << "affine invariance; "; }
    }
  }
  {
    auto res = stats::t_test(x, x, 0.01);
    if (res.t_statistic != 0.0 || res.reject_null) { ok = false; why << "t_test(x,x); "; }
  }
  {
    std::size_t rejects = 0;
    const std::size_t trials = 200;
    for (std::size_t trial = 0; trial < trials; ++trial) {
      Rng rng(mix_seed(4242, trial));
      std::vector<double> a(1000), b(1000);
      for (auto& v : a) v = rng.normal();
      for (auto& v : b) v = rng.normal();
      if (stats::t_test(a, b, 0.01).reject_null) ++rejects;
    }
    const double sigma = std::sqrt(trials * 0.01 * 0.99);
    if (std::fabs(static_cast<double>(rejects) - trials * 0.01) > 4.0 * sigma) {
      ok = false;
      why << "null rejection rate " << rejects << "/200; ";
    }
  }
  double max_p_gap = 0.0;
  for (double t : {0.1, 0.5, 1.0, 2.0, 3.5})
    for (double dof : {2.0, 5.0, 30.0, 198.0})
      max_p_gap = std::max(max_p_gap,
                           std::fabs(stats::student_t_two_sided_p(t, dof) - fskd::test::two_sided_p_quadrature(t, dof)));
  if (max_p_gap > 1e-6) { ok = false; why << "p vs quadrature gap " << max_p_gap << "; "; }

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "pearson exact/affine, t_test(x,x)=0, null FP rate within 4 sigma of 0.01, p vs quadrature on 20 "
                "(t,dof) pairs (max gap %.3g, tol 1e-6)%s%s",
                max_p_gap, ok ? "" : " -- ", ok ? "" : why.str().c_str());
  report(4, ok, buf);
}

// ---------------------------------------------------------------------
// criterion 5: pipeline determinism
// ---------------------------------------------------------------------
void criterion5() {
  bool ok = true;
  std::ostringstream why;

  Dataset ds = make_digit_dataset(64, 16, 11);
  BatchIterator a(ds, {ResolutionMode::multiple, {1, 2, 4}}, 8, 42);
  BatchIterator b(ds, {ResolutionMode::multiple, {1, 2, 4}}, 8, 42);
  for (int i = 0; i < 20; ++i) {
    PairedBatch ba = a.next(), bb = b.next();
    if (ba.hr.data() != bb.hr.data() || ba.lr.data() != bb.lr.data() || ba.labels != bb.labels ||
        ba.ratios_used != bb.ratios_used) {
      ok = false;
      why << "batch stream diverged at batch " << i << "; ";
      break;
    }
  }

  {
    RunConfig cfg;
    cfg.backbone.block_channel_widths = {8, 16};
    cfg.backbone.blocks_per_stage = 1;
    cfg.backbone.embedding_dim = 16;
    cfg.backbone.input_size = 16;
    cfg.schedule.epochs = 2;
    cfg.schedule.batch_size = 16;
    cfg.resolution = {ResolutionMode::single, {2}};
    cfg.seed = 5;
    cfg.eval_every = 1;
    Dataset train = make_digit_dataset(96, 16, 2);
    Dataset evald = make_digit_dataset(32, 16, 3);
    std::ostringstream m1, m2;
    train_teacher(cfg, train, &evald, m1);
    train_teacher(cfg, train, &evald, m2);
    if (m1.str() != m2.str()) { ok = false; why << "metrics CSV not byte-identical; "; }
  }

  ImageU8 img = render_digit(7, 32, 5);
  if (!(make_lr(img, 1) == img)) { ok = false; why << "make_lr ratio-1 not identity; "; }
  ImageU8 flat(32, 32, 1);
  std::fill(flat.pixels.begin(), flat.pixels.end(), std::uint8_t{183});
  for (unsigned r : {2u, 4u, 8u})
    if (!(make_lr(flat, r) == flat)) { ok = false; why << "make_lr constant image changed at ratio " << r << "; "; }

  report(5, ok,
         ok ? "identical seeds give byte-identical batch streams and metrics CSVs; make_lr identity at ratio 1 and "
              "on constant images"
            : "pipeline determinism: " + why.str());
}

// ---------------------------------------------------------------------
// criteria 6-9: desk-scale digit reproduction
// ---------------------------------------------------------------------
struct SeedOutcome {
  double teacher_acc = 0.0;
  double acc_base = 0.0, acc_fitnet = 0.0, acc_normkd = 0.0, acc_fskd = 0.0;
  Backbone teacher, base, fskd;
  MarginHeadParams teacher_head;
};

double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

void criteria6to9(bool smoke) {
  const std::size_t n_train = smoke ? 1000 : 8000;
  const std::size_t n_eval = smoke ? 500 : 2000;
  Dataset train = make_digit_dataset(n_train, 32, 42);
  Dataset evald = make_digit_dataset(n_eval, 32, 4242);

  RunConfig cfg;  // defaults: desk schedule, default backbone, s=64, m=0.35, lambda=5
  cfg.resolution = {ResolutionMode::single, {4}};
  cfg.eval_every = 0;
  if (smoke) {
    cfg.schedule.epochs = 6;
    cfg.schedule.milestones = {4, 5};
  }

  const auto t0 = Clock::now();
  std::vector<SeedOutcome> outcomes;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    SeedOutcome oc;
    RunConfig run = cfg;
    run.seed = seed;
    std::ostringstream sink;
    TrainedModel teacher = train_teacher(run, train, nullptr, sink);
    oc.teacher_acc = eval_classification(teacher.model, teacher.head, evald, 1);
    std::printf("  seed %llu: teacher HR acc %.4f\n", static_cast<unsigned long long>(seed), oc.teacher_acc);
    std::fflush(stdout);

    for (DistillKind kind : {DistillKind::none, DistillKind::fitnet_l2, DistillKind::norm_kd, DistillKind::fskd}) {
      RunConfig srun = run;
      srun.distill.kind = kind;
      std::ostringstream ssink;
      TrainedModel st =
          train_student(srun, train, nullptr, kind == DistillKind::none ? nullptr : &teacher.model, ssink);
      const double acc = eval_classification(st.model, st.head, evald, 4);
      std::printf("  seed %llu: %-9s LR acc %.4f\n", static_cast<unsigned long long>(seed), to_string(kind), acc);
      std::fflush(stdout);
      switch (kind) {
        case DistillKind::none: oc.acc_base = acc; oc.base = std::move(st.model); break;
        case DistillKind::fitnet_l2: oc.acc_fitnet = acc; break;
        case DistillKind::norm_kd: oc.acc_normkd = acc; break;
        case DistillKind::fskd: oc.acc_fskd = acc; oc.fskd = std::move(st.model); break;
        default: break;
      }
    }
    oc.teacher = std::move(teacher.model);
    oc.teacher_head = std::move(teacher.head);
    outcomes.push_back(std::move(oc));
  }
  const double minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;

  const double med_teacher = median3(outcomes[0].teacher_acc, outcomes[1].teacher_acc, outcomes[2].teacher_acc);
  const double med_base = median3(outcomes[0].acc_base, outcomes[1].acc_base, outcomes[2].acc_base);
  const double med_normkd = median3(outcomes[0].acc_normkd, outcomes[1].acc_normkd, outcomes[2].acc_normkd);
  const double med_fskd = median3(outcomes[0].acc_fskd, outcomes[1].acc_fskd, outcomes[2].acc_fskd);

  // runtime budget is stated for a 4-core CPU; on fewer worker threads the
  // wall time is scaled by threads/4 (documented in the README)
  const std::size_t threads = std::min<std::size_t>(worker_threads(), 4);
  const double scaled = minutes * static_cast<double>(threads) / 4.0;
  const bool time_ok = minutes <= 45.0 || scaled <= 45.0;

  {
    const bool pass = med_teacher >= 0.85 && (med_fskd - med_base) >= 0.01 && med_fskd >= med_normkd && time_ok;
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "median over 3 seeds: teacher HR %.4f (>=0.85); F-SKD LR %.4f vs base %.4f (gap %+.2fpp, need "
                  ">=1.0pp) and >= Norm-KD %.4f; runtime %.1f min on %zu thread(s), 4-core-scaled %.1f min "
                  "(budget 45)%s",
                  med_teacher, med_fskd, med_base, (med_fskd - med_base) * 100.0, med_normkd, minutes, threads,
                  scaled, smoke ? " [SMOKE SCALE - not the acceptance configuration]" : "");
    report(6, pass, buf);
  }

  // representative seed: the one whose F-SKD accuracy is the median
  std::size_t rep = 0;
  for (std::size_t i = 0; i < 3; ++i)
    if (outcomes[i].acc_fskd == med_fskd) rep = i;

  {
    auto r_fskd = stats::pixel_correlation(outcomes[rep].teacher, outcomes[rep].fskd, evald, 4, 1000);
    auto r_base = stats::pixel_correlation(outcomes[rep].teacher, outcomes[rep].base, evald, 4, 1000);
    bool all_blocks = true;
    for (std::size_t b = 0; b < r_fskd.r.size(); ++b)
      if (r_fskd.r[b] <= r_base.r[b]) all_blocks = false;
    const double final_r = r_fskd.r.back();
    std::ostringstream rs;
    for (std::size_t b = 0; b < r_fskd.r.size(); ++b)
      rs << " B" << b + 1 << " " << r_fskd.r[b] << " (base " << r_base.r[b] << ")";
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "direction correlation, F-SKD vs base per block:%s; final block r %.3f (>=0.5, relaxed from the "
                  "full-scale 0.6)",
                  rs.str().c_str(), final_r);
    report(7, all_blocks && final_r >= 0.5, buf);
  }

  {
    const std::size_t L = outcomes[rep].teacher.config().num_blocks();
    std::ostringstream ts;
    bool final_rejects = false;
    for (std::size_t b = 0; b < L; ++b) {
      auto hr = stats::norm_distribution(outcomes[rep].teacher, evald, 1, b, 1000);
      auto lr = stats::norm_distribution(outcomes[rep].fskd, evald, 4, b, 1000);
      auto res = stats::t_test(hr, lr, 0.01);
      ts << " B" << b + 1 << " t=" << res.t_statistic << (res.reject_null ? " (reject)" : " (keep)");
      if (b + 1 == L) final_rejects = res.reject_null;
    }
    report(8, final_rejects,
           "norm t-test at alpha=0.01, teacher-HR vs F-SKD-student-LR:" + ts.str() +
               "; equality must be rejected in the final block");
  }

  {
    int fskd_first = 0;
    for (const auto& oc : outcomes)
      if (oc.acc_fskd > oc.acc_base && oc.acc_fskd > oc.acc_fitnet && oc.acc_fskd > oc.acc_normkd) ++fskd_first;
    char buf[240];
    std::snprintf(buf, sizeof(buf),
                  "ablation ranks: F-SKD first on LR accuracy in %d of 3 seeds (need >=2); per-seed F-SKD/base/"
                  "fitnet/norm-kd: [%.3f %.3f %.3f %.3f] [%.3f %.3f %.3f %.3f] [%.3f %.3f %.3f %.3f]",
                  fskd_first, outcomes[0].acc_fskd, outcomes[0].acc_base, outcomes[0].acc_fitnet,
                  outcomes[0].acc_normkd, outcomes[1].acc_fskd, outcomes[1].acc_base, outcomes[1].acc_fitnet,
                  outcomes[1].acc_normkd, outcomes[2].acc_fskd, outcomes[2].acc_base, outcomes[2].acc_fitnet,
                  outcomes[2].acc_normkd);
    report(9, fskd_first >= 2, buf);
  }
}

}  // namespace

int main(int argc, char** argv) {
  tune_malloc_for_training();
  const bool smoke = argc > 1 && std::strcmp(argv[1], "--smoke") == 0;
  if (smoke)
    std::printf("== SMOKE MODE: criteria 6-9 run at reduced scale; results are not the acceptance gate ==\n");

  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criteria6to9(smoke);

  std::printf("%d of 9 criteria failed\n", g_failures);
  return g_failures;
}
