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

#include "gmtl/seghead.hpp"

#include <algorithm>
#include <sstream>

#include "gmtl/error.hpp"

namespace gmtl {

std::string to_string(SegVariant v) {
  switch (v) {
    case SegVariant::kGR: return "GR";
    case SegVariant::kMSGR: return "MSGR";
    case SegVariant::kMSLRGR: return "MSLRGR";
  }
  return "?";
}

SegVariant parse_seg_variant(const std::string& s) {
  if (s == "GR") return SegVariant::kGR;
  if (s == "MSGR") return SegVariant::kMSGR;
  if (s == "MSLRGR") return SegVariant::kMSLRGR;
  throw UsageError("unknown segmentation variant '" + s + "' (expected GR, MSGR or MSLRGR)");
}

DecoderBlock::DecoderBlock(int64_t in_channels, int64_t hidden, int64_t out_channels,
                           double dropout, Rng& rng)
    : conv_(in_channels, hidden, 3, 1, 1, false, rng),
      bn_(hidden),
      out_(hidden, out_channels, 3, 1, 1, true, rng),
      dropout_(dropout) {
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("decoder dropout must be in [0, 1)");
  register_module("conv", conv_);
  register_module("bn", bn_);
  register_module("out", out_);
}

Var DecoderBlock::forward(const Var& x, Rng& rng, Var* penultimate) {
  Var h = ops::relu(bn_.forward(conv_.forward(x)));
  h = ops::dropout(h, dropout_, training(), rng);
  if (penultimate) *penultimate = h;
  return out_.forward(h);
}

LocalReasoningBlock::LocalReasoningBlock(int64_t channels, Rng& rng)
    : conv_(channels, channels, 3, 1, 1, false, rng), bn_(channels) {
  register_module("conv", conv_);
  register_module("bn", bn_);
}

Var LocalReasoningBlock::forward(const Var& x) { return ops::relu(bn_.forward(conv_.forward(x))); }

SegmentationHead::SegmentationHead(const SegHeadConfig& config, Rng& rng) : config_(config) {
  auto make_unit = [&](int64_t channels, int64_t latent, int64_t injection) {
    GloReConfig gc;
    gc.channels = channels;
    gc.nodes = config.glore_nodes;
    gc.latent = latent;
    gc.injection_dim = injection;
    gc.gisf_after_reasoning = config.gisf_after_reasoning;
    return std::make_unique<GloReUnit>(gc, rng);
  };
  const int64_t width = config.decoder_width;
  switch (config.variant) {
    case SegVariant::kGR:
      glore_.push_back(make_unit(512, config.glore_latent_c5, config.injection_dim));
      register_module("glore.c5", *glore_.back());
      decoders_.push_back(std::make_unique<DecoderBlock>(512, width, kSegClasses, config.dropout, rng));
      register_module("decoder.c5", *decoders_.back());
      break;
    case SegVariant::kMSGR:
      for (int k = 2; k <= 5; ++k) {
        const int64_t ch = kPyramidChannels[static_cast<size_t>(k - 2)];
        const int64_t latent = k == 5 ? config.glore_latent_c5 : ch / 4;
        glore_.push_back(make_unit(ch, latent, k == 5 ? config.injection_dim : 0));
        register_module("glore.c" + std::to_string(k), *glore_.back());
      }
      break;
    case SegVariant::kMSLRGR:
      for (int k = 2; k <= 4; ++k) {
        local_.push_back(
            std::make_unique<LocalReasoningBlock>(kPyramidChannels[static_cast<size_t>(k - 2)], rng));
        register_module("local.c" + std::to_string(k), *local_.back());
      }
      glore_.push_back(make_unit(512, config.glore_latent_c5, config.injection_dim));
      register_module("glore.c5", *glore_.back());
      break;
  }
  if (config.variant != SegVariant::kGR) {
    for (int k = 2; k <= 5; ++k) {
      decoders_.push_back(std::make_unique<DecoderBlock>(
          kPyramidChannels[static_cast<size_t>(k - 2)], width, width, config.dropout, rng));
      register_module("decoder.c" + std::to_string(k), *decoders_.back());
    }
    classifier_ = std::make_unique<nn::Conv2d>(width, kSegClasses, 3, 1, 1, true, rng);
    register_module("classifier", *classifier_);
  }
}

std::vector<GloReUnit*> SegmentationHead::glore_units() {
  std::vector<GloReUnit*> out;
  for (auto& u : glore_) out.push_back(u.get());
  return out;
}

SegOutput SegmentationHead::forward(const FeaturePyramid& pyramid, int64_t out_h, int64_t out_w,
                                    Rng& rng, const Options& options) {
  if (options.injection && config_.injection_dim == 0) {
    throw UsageError("segmentation head was built without scene-graph injection");
  }
  SegOutput result;
  auto reason = [&](GloReUnit& unit, const Var& x, bool c5) {
    if (options.bypass_global_reasoning) return x;
    auto out = unit.forward(x, c5 ? options.injection : std::nullopt);
    if (c5) result.gisf = out.gisf;
    return out.y;
  };

  if (config_.variant == SegVariant::kGR) {
    Var y = reason(*glore_[0], pyramid.c5, true);
    Var small = decoders_[0]->forward(y, rng, &result.penultimate);
    result.logits = ops::upsample_bilinear(small, out_h, out_w);
    return result;
  }

  const int64_t base_h = pyramid.c2.dim(2), base_w = pyramid.c2.dim(3);
  Var aggregate;
  for (int k = 2; k <= 5; ++k) {
    const size_t i = static_cast<size_t>(k - 2);
    Var x = pyramid.level(k);
    if (config_.variant == SegVariant::kMSGR) {
      x = reason(*glore_[i], x, k == 5);
    } else {
      x = k == 5 ? reason(*glore_[0], x, true) : local_[i]->forward(x);
    }
    Var d = decoders_[i]->forward(x, rng);
    if (d.dim(2) != base_h || d.dim(3) != base_w) d = ops::upsample_bilinear(d, base_h, base_w);
    aggregate = aggregate.defined() ? ops::add(aggregate, d) : d;
  }
  result.penultimate = aggregate;
  result.logits = ops::upsample_bilinear(classifier_->forward(aggregate), out_h, out_w);
  return result;
}

Var seg_loss(const Var& logits, std::span<const int32_t> mask) {
  if (logits.value().rank() != 4 || logits.dim(1) != kSegClasses) {
    throw UsageError("seg_loss expects B×8×H×W logits, got " + shape_str(logits.shape()));
  }
  return ops::cross_entropy2d(logits, mask);
}

void SegConfusion::add(std::span<const int32_t> pred, std::span<const int32_t> gt) {
  if (pred.size() != gt.size()) throw UsageError("seg_metrics: prediction/ground-truth size mismatch");
  for (size_t i = 0; i < gt.size(); ++i) {
    const int32_t g = gt[i], p = pred[i];
    if (g < 0 || g >= kSegClasses || p < 0 || p >= kSegClasses) {
      std::ostringstream os;
      os << "seg_metrics: label out of range at index " << i << " (gt " << g << ", pred " << p << ")";
      throw DataError(os.str());
    }
    ++m_[static_cast<size_t>(g)][static_cast<size_t>(p)];
  }
}

SegMetrics SegConfusion::metrics() const {
  SegMetrics out;
  uint64_t correct = 0, total = 0;
  double sum_present = 0.0, sum_all = 0.0;
  int n_present = 0;
  for (size_t c = 0; c < kSegClasses; ++c) {
    uint64_t row = 0, col = 0;
    for (size_t k = 0; k < kSegClasses; ++k) {
      row += m_[c][k];
      col += m_[k][c];
      total += m_[c][k];
    }
    const uint64_t tp = m_[c][c];
    correct += tp;
    const uint64_t uni = row + col - tp;
    if (uni > 0) {
      out.present[c] = true;
      out.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
      sum_present += out.per_class_iou[c];
      ++n_present;
    }
    sum_all += out.per_class_iou[c];
  }
  out.miou = n_present ? sum_present / n_present : 0.0;
  out.miou_all_classes = sum_all / kSegClasses;
  out.pixel_acc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return out;
}

SegMetrics seg_metrics(std::span<const int32_t> pred, std::span<const int32_t> gt) {
  SegConfusion c;
  c.add(pred, gt);
  return c.metrics();
}

std::vector<int32_t> argmax_labels(const Tensor& logits) {
  if (logits.rank() != 4) throw UsageError("argmax_labels expects B×K×H×W");
  const int64_t b = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  std::vector<int32_t> out(static_cast<size_t>(b * hw));
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t p = 0; p < hw; ++p) {
      int32_t best = 0;
      double bv = logits[i * k * hw + p];
      for (int64_t c = 1; c < k; ++c) {
        const double v = logits[(i * k + c) * hw + p];
        if (v > bv) {
          bv = v;
          best = static_cast<int32_t>(c);
        }
      }
      out[static_cast<size_t>(i * hw + p)] = best;
    }
  }
  return out;
}

}  // namespace gmtl
