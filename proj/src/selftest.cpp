/*
 * Copyright 2026 The glore-mtl Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "gmtl/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <unistd.h>

#include "gmtl/gradcheck.hpp"
#include "gmtl/log.hpp"
#include "gmtl/model.hpp"
#include "gmtl/mtlopt.hpp"
#include "gmtl/trainer.hpp"

namespace gmtl {
namespace {

namespace fs = std::filesystem;

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

CheckResult check(const std::string& suite, const std::string& name, bool passed,
                  std::string detail) {
  return {suite, name, passed, std::move(detail)};
}

CheckResult from_gradcheck(const GradCheckResult& r) {
  std::string detail = std::to_string(r.checked) + " coordinates, max rel err " +
                       fmt("%.2e", r.max_rel_error);
  if (!r.passed) detail += " (" + r.worst + ")";
  return check("gradient", r.name, r.passed && r.checked >= 20, detail);
}

GradCheckOptions grad_options(const std::string& kernel, const std::string& fault) {
  GradCheckOptions o;
  if (kernel == fault) o.analytic_fault = 0.01;
  return o;
}

Var flat(const Var& v) { return ops::reshape(v, {v.value().numel()}); }

Box random_box(Rng& rng) {
  const double x1 = rng.uniform(0.0, 0.6), y1 = rng.uniform(0.0, 0.6);
  return {x1, y1, x1 + rng.uniform(0.1, 0.39), y1 + rng.uniform(0.1, 0.39)};
}

// Brute-force average precision: every positive's precision at its own
// rank, ranks ordered by score with ties broken by index.
double naive_ap(const std::vector<double>& s, const std::vector<double>& t) {
  const size_t n = s.size();
  auto rank = [&](size_t i) {
    size_t r = 1;
    for (size_t j = 0; j < n; ++j) {
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++r;
    }
    return r;
  };
  double sum = 0;
  int pos = 0;
  for (size_t i = 0; i < n; ++i) {
    if (t[i] < 0.5) continue;
    ++pos;
    const size_t ri = rank(i);
    int hits = 0;
    for (size_t j = 0; j < n; ++j) {
      if (t[j] > 0.5 && rank(j) <= ri) ++hits;
    }
    sum += static_cast<double>(hits) / static_cast<double>(ri);
  }
  return pos ? sum / pos : 0.0;
}

SceneSample toy_scene(int64_t h, int64_t w, Rng& rng) {
  SceneSample s;
  s.image = Tensor::randn({3, h, w}, rng);
  s.boxes = {{0.1, 0.1, 0.6, 0.6}, {0.4, 0.3, 0.9, 0.8}};
  s.semantics = {kTissueSemantic, 3};
  s.edges = {{0, 1}};
  s.targets = Tensor({1, kInteractionClasses}, 0.0);
  s.targets[kTissueSemantic] = 1.0;
  return s;
}

}  // namespace

std::vector<CheckResult> gradient_suite(const std::string& fault) {
  std::vector<CheckResult> out;
  Rng rng(11);

  {
    GloReConfig gc;
    gc.channels = 8;
    gc.nodes = 3;
    gc.latent = 5;
    GloReUnit unit(gc, rng);
    Var x(Tensor::randn({1, 8, 4, 4}, rng));
    GradCheckOptions o = grad_options("glore", fault);
    o.random_weights = false;  // loss = Σ y + Σ gisf
    out.push_back(from_gradcheck(gradcheck(
        "glore",
        {x, unit.theta.weight, unit.theta.bias, unit.phi.weight, unit.phi.bias, unit.psi.weight,
         unit.adjacency, unit.state_update, unit.gisf_compress.weight, unit.gisf_compress.bias},
        [&](const std::vector<Var>& v) {
          auto r = unit.forward(v[0]);
          std::vector<Var> parts{flat(r.y), flat(r.gisf)};
          return ops::concat(parts, 0);
        },
        o)));
  }
  {
    GloReConfig gc;
    gc.channels = 8;
    gc.nodes = 3;
    gc.latent = 5;
    gc.injection_dim = 4;
    GloReUnit unit(gc, rng);
    unit.injection_proj->weight.mutable_value() = Tensor::randn({5, 4}, rng, 0.5);
    Var x(Tensor::randn({2, 8, 4, 4}, rng));
    Var inj(Tensor::randn({2, 4}, rng));
    out.push_back(from_gradcheck(gradcheck(
        "glore_injection", {x, inj, unit.injection_proj->weight, unit.state_update},
        [&](const std::vector<Var>& v) {
          auto r = unit.forward(v[0], v[1]);
          std::vector<Var> parts{flat(r.y), flat(r.gisf)};
          return ops::concat(parts, 0);
        },
        grad_options("glore_injection", fault))));
  }
  {
    GraphAttention att(6, rng);
    Var h(Tensor::randn({3, 6}, rng));
    const std::vector<Edge> edges{{0, 1}, {0, 2}};
    out.push_back(from_gradcheck(gradcheck(
        "attention", {h, att.proj.weight, att.att_dst, att.att_src},
        [&](const std::vector<Var>& v) { return att.forward(v[0], edges).features; },
        grad_options("attention", fault))));
  }
  {
    SceneGraphConfig sc;
    sc.edge_mode = EdgeMode::kGisf;
    SceneGraphHead head(sc, rng);
    Var feats(Tensor::randn({3, kBoxFeatureDim}, rng));
    Var extra(Tensor::randn({1, kEdgeExtraDim}, rng));
    const std::vector<int> semantics{kTissueSemantic, 2, 5};
    const std::vector<Edge> edges{{0, 1}, {0, 2}};
    const std::vector<Box> boxes{random_box(rng), random_box(rng), random_box(rng)};
    const Tensor spatial = spatial_features(boxes, edges);
    out.push_back(from_gradcheck(gradcheck(
        "edge_readout",
        {feats, extra, head.fuse.weight, head.fc1.weight, head.fc1.bias, head.fc1_extra.weight,
         head.fc2.weight, head.fc2.bias},
        [&](const std::vector<Var>& v) {
          return head.edge_readout(head.build_graphs(v[0], semantics, edges), spatial, v[1]).logits;
        },
        grad_options("edge_readout", fault))));
  }
  return out;
}

std::vector<CheckResult> loss_suite() {
  std::vector<CheckResult> out;
  Rng rng(21);
  double worst_v = 0, worst_kd = 0, worst_var = 0;
  for (int i = 0; i < 1000; ++i) {
    const double l_sg = rng.uniform(0.0, 10.0), l_seg = rng.uniform(0.0, 10.0);
    const double l_kld = rng.uniform(0.0, 5.0);
    worst_v = std::max(worst_v, std::abs(compose_vmtl(l_sg, l_seg, 0.4) - (0.4 * l_sg + 0.6 * l_seg)));
    worst_kd = std::max(worst_kd,
                        std::abs(compose_kdmtl(l_sg, l_seg, l_kld, 0.4) - (0.4 * l_sg + l_seg + l_kld)));
    const Var vs(Tensor({1}, l_sg)), vg(Tensor({1}, l_seg)), vk(Tensor({1}, l_kld));
    worst_var = std::max(worst_var, std::abs(compose_vmtl(vs, vg, 0.4).value()[0] -
                                             compose_vmtl(l_sg, l_seg, 0.4)));
    worst_var = std::max(worst_var, std::abs(compose_kdmtl(vs, vg, vk, 0.4).value()[0] -
                                             compose_kdmtl(l_sg, l_seg, l_kld, 0.4)));
  }
  out.push_back(check("loss", "vmtl_closed_form", worst_v <= 1e-12, fmt("max abs err %.2e", worst_v)));
  out.push_back(check("loss", "kdmtl_closed_form", worst_kd <= 1e-12, fmt("max abs err %.2e", worst_kd)));
  out.push_back(check("loss", "graph_matches_scalar", worst_var <= 1e-12,
                      fmt("max abs err %.2e", worst_var)));

  double self_kld = 0, min_kld = 1e300;
  for (int i = 0; i < 1000; ++i) {
    const Tensor p = Tensor::randn({1, 6, 2, 3}, rng, 2.0);
    const Tensor q = Tensor::randn({1, 6, 2, 3}, rng, 2.0);
    if (i < 100) self_kld = std::max(self_kld, std::abs(encoder_kld(p, p)));
    min_kld = std::min(min_kld, encoder_kld(q, p));
  }
  out.push_back(check("loss", "kld_self_zero", self_kld <= 1e-9, fmt("max |kld(p,p)| %.2e", self_kld)));
  out.push_back(check("loss", "kld_nonnegative", min_kld >= 0.0, fmt("min over 1000 pairs %.3e", min_kld)));

  // Teacher channel distribution (3/4, 1/4), student uniform.
  const Tensor teacher({1, 2, 1, 1}, std::vector<double>{std::log(3.0), 0.0});
  const Tensor student({1, 2, 1, 1}, 0.0);
  const double hand = 0.75 * std::log(0.75 / 0.5) + 0.25 * std::log(0.25 / 0.5);
  const double got = encoder_kld(student, teacher);
  out.push_back(check("loss", "kld_two_point", std::abs(got - hand) <= 1e-9 &&
                                                   std::abs(hand - 0.13081203594113697) <= 1e-12,
                      fmt("got %.12f, expected %.12f", got, hand)));
  return out;
}

std::vector<CheckResult> metric_suite() {
  std::vector<CheckResult> out;
  Rng rng(31);
  int seg_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int32_t> gt(64), pred(64);
    for (size_t i = 0; i < 64; ++i) {
      gt[i] = static_cast<int32_t>(rng.uniform_int(kSegClasses));
      pred[i] = rng.uniform() < 0.5 ? gt[i] : static_cast<int32_t>(rng.uniform_int(kSegClasses));
    }
    const SegMetrics m = seg_metrics(pred, gt);
    int correct = 0;
    for (size_t i = 0; i < 64; ++i) correct += pred[i] == gt[i];
    double sum = 0;
    int present = 0;
    bool same = m.pixel_acc == static_cast<double>(correct) / 64.0;
    for (int c = 0; c < kSegClasses; ++c) {
      int inter = 0, uni = 0;
      for (size_t i = 0; i < 64; ++i) {
        inter += gt[i] == c && pred[i] == c;
        uni += gt[i] == c || pred[i] == c;
      }
      const double iou = uni ? static_cast<double>(inter) / uni : 0.0;
      same = same && m.per_class_iou[static_cast<size_t>(c)] == iou &&
             m.present[static_cast<size_t>(c)] == (uni > 0);
      if (uni) {
        sum += iou;
        ++present;
      }
    }
    same = same && m.miou == sum / present;
    seg_mismatch += !same;
  }
  out.push_back(check("metric", "seg_confusion_oracle", seg_mismatch == 0,
                      std::to_string(seg_mismatch) + " of 100 maps differ"));

  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t ne = 1 + rng.uniform_int(15);
    const bool ties = trial % 2 == 0;
    Tensor scores({ne, kInteractionClasses}), targets({ne, kInteractionClasses});
    for (int64_t i = 0; i < scores.numel(); ++i) {
      const double u = rng.uniform();
      scores[i] = ties ? std::round(u * 10.0) / 10.0 : u;
      targets[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    }
    const SgMetrics m = sg_metrics(scores, targets);
    double ap_sum = 0, rec_sum = 0;
    int classes = 0, correct = 0;
    for (int64_t c = 0; c < kInteractionClasses; ++c) {
      std::vector<double> s, t;
      int pos = 0, tp = 0;
      for (int64_t e = 0; e < ne; ++e) {
        s.push_back(scores[e * kInteractionClasses + c]);
        t.push_back(targets[e * kInteractionClasses + c]);
        if (t.back() > 0.5) {
          ++pos;
          tp += s.back() >= 0.5;
        }
      }
      if (!pos) continue;
      ap_sum += naive_ap(s, t);
      rec_sum += static_cast<double>(tp) / pos;
      ++classes;
    }
    for (int64_t e = 0; e < ne; ++e) {
      int64_t best = 0;
      for (int64_t c = 1; c < kInteractionClasses; ++c) {
        if (scores[e * kInteractionClasses + c] > scores[e * kInteractionClasses + best]) best = c;
      }
      correct += targets[e * kInteractionClasses + best] > 0.5;
    }
    const double map = classes ? ap_sum / classes : 0.0;
    const double recall = classes ? rec_sum / classes : 0.0;
    worst = std::max({worst, std::abs(m.map - map), std::abs(m.recall - recall),
                      std::abs(m.acc - static_cast<double>(correct) / static_cast<double>(ne))});
  }
  out.push_back(check("metric", "sg_sort_oracle", worst <= 1e-9, fmt("max abs err %.2e", worst)));

  const std::vector<double> s{0.9, 0.8, 0.7, 0.6}, t{1, 0, 1, 0};
  const double ap = average_precision(s, t);
  out.push_back(check("metric", "ap_worked_example", std::abs(ap - 5.0 / 6.0) <= 1e-12,
                      fmt("AP %.4f", ap)));
  return out;
}

std::vector<CheckResult> glore_suite() {
  std::vector<CheckResult> out;
  Rng rng(41);
  int identity_failures = 0;
  double worst_sum = 0;
  for (int trial = 0; trial < 50; ++trial) {
    GloReConfig gc;
    gc.channels = 4 * (1 + rng.uniform_int(4));
    gc.nodes = 2 + rng.uniform_int(5);
    gc.latent = 2 + rng.uniform_int(7);
    GloReUnit unit(gc, rng);
    const Tensor x = Tensor::randn({1 + rng.uniform_int(2), gc.channels, 1 + rng.uniform_int(6),
                                    1 + rng.uniform_int(6)},
                                   rng, 3.0);
    NoGradGuard guard;
    const auto reasoned = unit.forward(Var(x));
    const Tensor& a = reasoned.assignment.value();
    const int64_t b = a.dim(0), n = a.dim(1), hw = a.dim(2);
    for (int64_t i = 0; i < b; ++i) {
      for (int64_t p = 0; p < hw; ++p) {
        double s = 0;
        for (int64_t k = 0; k < n; ++k) s += a[(i * n + k) * hw + p];
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    }
    unit.state_update.mutable_value().fill(0.0);
    identity_failures += !(unit.forward(Var(x)).y.value() == x);
  }
  out.push_back(check("glore", "zero_state_update_identity", identity_failures == 0,
                      std::to_string(identity_failures) + " of 50 inputs not reproduced bit-exactly"));
  out.push_back(check("glore", "assignment_columns_sum_to_one", worst_sum <= 1e-6,
                      fmt("max |sum - 1| %.2e", worst_sum)));
  return out;
}

std::vector<CheckResult> permutation_suite() {
  std::vector<CheckResult> out;
  Rng rng(51);
  for (const EdgeMode mode : {EdgeMode::kNone, EdgeMode::kGisf}) {
    SceneGraphConfig sc;
    sc.edge_mode = mode;
    SceneGraphHead head(sc, rng);
    const int64_t m = 5;
    const Tensor feats = Tensor::randn({m, kBoxFeatureDim}, rng);
    std::vector<Box> boxes;
    for (int64_t i = 0; i < m; ++i) boxes.push_back(random_box(rng));
    const std::vector<int> semantics{kTissueSemantic, 1, 4, 6, 2};
    const std::vector<Edge> edges{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
    const std::optional<Var> extra =
        mode == EdgeMode::kNone ? std::nullopt : std::optional<Var>(Var(Tensor::randn({1, 64}, rng)));

    // New position of old node i is perm[i]; edges are also listed in reverse.
    const std::vector<int64_t> perm{3, 0, 4, 1, 2};
    Tensor pfeats({m, kBoxFeatureDim});
    std::vector<Box> pboxes(static_cast<size_t>(m));
    std::vector<int> psem(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
      const size_t to = static_cast<size_t>(perm[static_cast<size_t>(i)]);
      std::copy_n(feats.data() + i * kBoxFeatureDim, kBoxFeatureDim,
                  pfeats.data() + static_cast<int64_t>(to) * kBoxFeatureDim);
      pboxes[to] = boxes[static_cast<size_t>(i)];
      psem[to] = semantics[static_cast<size_t>(i)];
    }
    std::vector<Edge> pedges;
    for (auto it = edges.rbegin(); it != edges.rend(); ++it) {
      pedges.push_back({perm[static_cast<size_t>(it->tissue)], perm[static_cast<size_t>(it->instrument)]});
    }

    NoGradGuard guard;
    const Tensor a = head.edge_readout(head.build_graphs(Var(feats), semantics, edges),
                                       spatial_features(boxes, edges), extra)
                         .logits.value();
    const Tensor b = head.edge_readout(head.build_graphs(Var(pfeats), psem, pedges),
                                       spatial_features(pboxes, pedges), extra)
                         .logits.value();
    const int64_t ne = static_cast<int64_t>(edges.size());
    double worst = 0;
    for (int64_t e = 0; e < ne; ++e) {
      for (int64_t c = 0; c < kInteractionClasses; ++c) {
        worst = std::max(worst, std::abs(a[e * kInteractionClasses + c] -
                                         b[(ne - 1 - e) * kInteractionClasses + c]));
      }
    }
    out.push_back(check("permutation", "edge_logits_" + to_string(mode), worst <= 1e-10,
                        fmt("max abs diff %.2e", worst)));
  }
  return out;
}

std::vector<CheckResult> schedule_suite() {
  std::vector<CheckResult> out;
  const double l0 = lr_at(0), l10 = lr_at(10), l25 = lr_at(25);
  const bool values = std::abs(l0 - 1e-5) <= 1e-18 && std::abs(l10 - 9.8e-6) <= 1e-18 &&
                      std::abs(l25 - 9.604e-6) <= 1e-18;
  out.push_back(check("schedule", "lr_values", values,
                      fmt("lr(0)=%.6g lr(10)=%.6g", l0, l10) + fmt(" lr(25)=%.6g", l25)));
  bool monotone = true;
  for (int e = 1; e < 130; ++e) monotone = monotone && lr_at(e) <= lr_at(e - 1);
  out.push_back(check("schedule", "non_increasing_130_epochs", monotone, monotone ? "ok" : "increase found"));
  return out;
}

std::vector<CheckResult> shape_suite() {
  std::vector<CheckResult> out;
  Rng rng(61);
  for (const SegVariant variant : {SegVariant::kGR, SegVariant::kMSGR, SegVariant::kMSLRGR}) {
    ModelConfig mc;
    mc.variant = variant;
    MultiTaskModel model(mc);
    model.set_training(false);
    NoGradGuard guard;
    bool ok = true;
    std::string detail;
    for (const auto& [h, w] : {std::pair<int64_t, int64_t>{kModelHeight, kModelWidth}, {96, 128}}) {
      const SceneSample s = toy_scene(h, w, rng);
      const auto o = model.forward({&s}, rng, {true, false});
      const Shape want{1, kSegClasses, h, w};
      ok = ok && o.seg_logits.shape() == want && o.gisf.shape() == Shape{1, kGisfDim};
      if (h == kModelHeight) {
        detail = "logits " + shape_str(o.seg_logits.shape()) + ", c5 " + shape_str(o.c5.shape());
      }
      detail += "; gisf " + shape_str(o.gisf.shape()) + " at " + std::to_string(h) + "x" +
                std::to_string(w);
    }
    out.push_back(check("shape", to_string(variant), ok, detail));
  }
  return out;
}

std::vector<CheckResult> freeze_suite() {
  std::vector<CheckResult> out;
  SynthConfig sc;
  sc.seed = 5;
  sc.n_frames = 4;
  sc.height = 64;
  sc.width = 80;
  std::vector<Frame> frames;
  for (const auto& f : synth_frames(sc)) frames.push_back(to_frame(f));
  const ChannelStats stats = channel_stats(frames);

  TrainConfig tc;
  tc.regime = Regime::kS;
  tc.epochs = 1;
  tc.stage_b_epochs = 2;
  tc.batch = 2;
  tc.checkpoint_every = 0;
  tc.schedule.base_lr = 1e-3;
  const fs::path dir = fs::temp_directory_path() / ("gmtl-selftest-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const LogLevel level = log_level();
  set_log_level(LogLevel::kWarn);
  Trainer trainer(tc, make_examples(frames, stats), {}, stats, dir);
  const TrainResult r = trainer.run();
  set_log_level(level);
  fs::remove_all(dir);

  out.push_back(check("freeze", "shared_and_seg_hash_unchanged_in_stage_b",
                      !r.digest_before_b.empty() && r.digest_before_b == r.digest_after_b,
                      "sha256 " + r.digest_before_b.substr(0, 16) + "… before, " +
                          r.digest_after_b.substr(0, 16) + "… after"));
  const MultiTaskModel fresh(tc.model);
  const bool sg_moved = fresh.partition().digest(ParamGroup::kSceneGraph) !=
                        trainer.model().partition().digest(ParamGroup::kSceneGraph);
  out.push_back(check("freeze", "scene_graph_weights_trained", sg_moved,
                      sg_moved ? "w_sg changed" : "w_sg identical to initialization"));
  return out;
}

std::vector<CheckResult> run_selftest(const SelftestOptions& options) {
  std::vector<CheckResult> all;
  auto add = [&](std::vector<CheckResult> part) {
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  };
  add(gradient_suite(options.fault_kernel));
  add(loss_suite());
  add(metric_suite());
  add(glore_suite());
  add(permutation_suite());
  add(schedule_suite());
  add(shape_suite());
  if (options.include_training) add(freeze_suite());
  return all;
}

int report(const std::vector<CheckResult>& results, std::ostream& out) {
  int failures = 0;
  for (const auto& r : results) {
    failures += !r.passed;
    out << (r.passed ? "PASS " : "FAIL ") << r.suite << "/" << r.name << ": " << r.detail << "\n";
  }
  return failures;
}

}  // namespace gmtl
