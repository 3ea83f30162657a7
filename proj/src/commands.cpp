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

#include "gmtl/commands.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gmtl/error.hpp"
#include "gmtl/log.hpp"

namespace gmtl {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::vector<Frame> load_frames(const fs::path& root, Split split, const SplitSpec& spec,
                               const PreprocessConfig& pre) {
  std::vector<Frame> frames;
  for (const auto& record : load_dataset(root, split, spec)) {
    frames.push_back(preprocess(load_frame(record), pre));
  }
  return frames;
}

// Training input size stored in the checkpoint, else the model default.
std::pair<int64_t, int64_t> input_size(const Checkpoint& ck) {
  const std::string h = ck.meta("input.height"), w = ck.meta("input.width");
  if (h.empty() || w.empty()) return {kModelHeight, kModelWidth};
  return {std::stoll(h), std::stoll(w)};
}

std::string epoch_line(const EpochRecord& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "[%s] epoch %d lr %.3g l_seg %.5f l_sg %.5f l_kld %.5f total %.5f",
                r.stage.c_str(), r.epoch, r.lr, r.l_seg, r.l_sg, r.l_kld, r.total);
  std::string line = buf;
  if (r.val) {
    std::snprintf(buf, sizeof buf, " | p_acc %.4f miou %.4f acc %.4f map %.4f", r.val->seg.pixel_acc,
                  r.val->seg.miou, r.val->sg.acc, r.val->sg.map);
    line += buf;
  }
  return line;
}

Annotation read_inference_annotation(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read annotation " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  // Interaction targets are unknown at inference time and may be omitted.
  if (j.is_object() && !j.contains("targets") && j.contains("edges") && j["edges"].is_array()) {
    j["targets"] = json::array();
    for (size_t i = 0; i < j["edges"].size(); ++i) {
      j["targets"].push_back(std::vector<int>(kInteractionClasses, 0));
    }
  }
  return annotation_from_json(j.dump(), path.string());
}

}  // namespace

TrainResult cmd_train(const RunConfig& config, const std::optional<fs::path>& resume) {
  config.validate();
  if (config.data.empty()) throw UsageError("no dataset root given (--data)");
  apply_precision(config.precision);

  const SplitSpec spec = config.split_spec();
  const PreprocessConfig pre{config.height, config.width, config.strict_size};
  std::vector<Frame> train_frames = load_frames(config.data, parse_split(config.train_split), spec, pre);
  const ChannelStats stats = channel_stats(train_frames);
  std::vector<Example> train = make_examples(train_frames, stats);
  std::vector<Example> val;
  if (config.val_split == config.train_split) {
    val = train;
  } else if (config.val_split != "none") {
    val = make_examples(load_frames(config.data, parse_split(config.val_split), spec, pre), stats);
  }
  train_frames.clear();

  const fs::path out(config.out);
  fs::create_directories(out);
  std::ofstream(out / "config.txt") << config.to_text();

  Trainer trainer(config.train, std::move(train), std::move(val), stats, out);
  if (!resume && !config.encoder_weights.empty()) {
    trainer.model().encoder.load_weights(config.encoder_weights, config.allow_random_encoder);
  }
  trainer.on_epoch = [](const EpochRecord& r) { log_info(epoch_line(r)); };
  return trainer.run(resume);
}

EvalResult cmd_eval(const EvalRequest& request) {
  if (request.batch < 1) throw UsageError("batch must be positive");
  if (request.fold < -1 || request.fold > 3) throw UsageError("fold must be -1 or 0..3");
  const Split split = parse_split(request.split);
  LoadedModel loaded = load_model(request.checkpoint);
  const auto [h, w] = input_size(loaded.checkpoint);
  const SplitSpec spec = request.fold < 0 ? SplitSpec::standard() : SplitSpec::fold(request.fold);
  const auto frames = load_frames(request.data, split, spec, PreprocessConfig{h, w, false});
  return evaluate(*loaded.model, make_examples(frames, loaded.stats), request.batch);
}

InferOutput cmd_infer(const InferRequest& request) {
  LoadedModel loaded = load_model(request.checkpoint);
  MultiTaskModel& model = *loaded.model;
  const auto [h, w] = input_size(loaded.checkpoint);

  const RgbImage rgb = read_png_rgb(request.image);
  Frame frame;
  frame.id = request.frame_id.empty() ? request.image.stem().string() : request.frame_id;
  frame.image = rgb_to_tensor(rgb);
  frame.mask.assign(static_cast<size_t>(rgb.height * rgb.width), 0);
  frame.height = rgb.height;
  frame.width = rgb.width;
  frame.annotation = read_inference_annotation(request.annotation);
  const SceneSample sample = to_scene_sample(preprocess(frame, PreprocessConfig{h, w, false}),
                                             loaded.stats);
  validate_scene(sample);

  model.set_training(false);
  NoGradGuard guard;
  Rng unused(0);
  const auto out = model.forward({&sample}, unused, {true, !sample.edges.empty()});

  const auto labels = resize_nearest(argmax_labels(out.seg_logits.value()), h, w, rgb.height,
                                     rgb.width);
  RgbImage overlay = rgb;
  const Palette& palette = label_palette();
  for (size_t p = 0; p < labels.size(); ++p) {
    if (labels[p] == 0) continue;
    const auto& colour = palette[static_cast<size_t>(labels[p])];
    for (size_t c = 0; c < 3; ++c) {
      uint8_t& px = overlay.pixels[p * 3 + c];
      px = static_cast<uint8_t>((static_cast<int>(px) + static_cast<int>(colour[c]) + 1) / 2);
    }
  }

  json pred;
  pred["frame_id"] = frame.id;
  pred["edges"] = json::array();
  if (!sample.edges.empty()) {
    const Tensor scores = sigmoid(out.edges.front().logits.value());
    for (size_t e = 0; e < sample.edges.size(); ++e) {
      std::vector<double> row(scores.data() + e * kInteractionClasses,
                              scores.data() + (e + 1) * kInteractionClasses);
      pred["edges"].push_back({{"instrument_id", sample.edges[e].instrument}, {"class_scores", row}});
    }
  }

  fs::create_directories(request.out_dir);
  const std::string stem = request.image.stem().string();
  InferOutput result{request.out_dir / (stem + "_overlay.png"),
                     request.out_dir / (stem + "_prediction.json")};
  write_png_rgb(result.overlay, overlay);
  std::ofstream(result.prediction) << pred.dump(2) << "\n";
  return result;
}

std::vector<SynthFrame> cmd_synth(const fs::path& root, const SynthConfig& config) {
  return synth_generate(root, config);
}

int cmd_selftest(const SelftestOptions& options, std::ostream& out) {
  return report(run_selftest(options), out);
}

}  // namespace gmtl
