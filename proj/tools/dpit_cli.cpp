#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpit/dpit.hpp"

namespace fs = std::filesystem;
using namespace dpit;

namespace {

constexpr int kOk = 0, kUsage = 2, kNumeric = 3, kInternal = 1;

struct Common {
  std::string config;
  std::vector<std::string> overrides;

  RunConfig load(bool check_inputs = true) const { return load_run_config(config, overrides, check_inputs); }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "TOML config file");
  app->add_option("--set", c.overrides, "override one key, e.g. --set train.lr=5e-4 (repeatable)");
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create directory " + p.string() + ": " + ec.message());
}

// ---- gen-data

int gen_data(const Common& common, std::size_t count, std::optional<std::uint64_t> seed, const std::string& out) {
  RunConfig c = common.load(false);
  if (seed) c.scene.seed = *seed;
  const Skeleton skel = resolve_skeleton(c.skeleton);
  const fs::path root = out.empty() ? fs::path(c.out_dir) : fs::path(out);
  make_dirs(root / "images");
  const auto set = generate_dataset(c.scene, count, skel);
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    write_png(set.images[i], (root / "images" / set.dataset.images[i].file_name).string());
  }
  write_text((root / "annotations.json").string(), serialize_coco(set.dataset));
  save_skeleton(skel, (root / "skeleton.json").string());
  std::printf("wrote %zu images, %zu persons to %s\n", set.images.size(), set.dataset.annotations.size(),
              root.string().c_str());
  return kOk;
}

// ---- train

int train_cmd(const Common& common, const std::string& resume) {
  const RunConfig c = common.load();
  if (c.train_annotations.empty()) throw ConfigError("train: set data.train to an annotation file");
  const Skeleton skel = resolve_skeleton(c.skeleton);
  if (c.model.keypoints != skel.size()) {
    throw ConfigError("model.keypoints = " + std::to_string(c.model.keypoints) + " but skeleton " + skel.name + " has " +
                      std::to_string(skel.size()) + " joints");
  }
  const auto data = load_labelled(c.train_annotations, c.image_dir, skel.size());
  const fs::path out(c.out_dir);
  make_dirs(out);
  write_text((out / "config.toml").string(), dump_config(c));

  DpitModel<float> model(c.model);
  TrainState state = init_train_state(c.model, c.train);
  if (!resume.empty()) {
    const Checkpoint ck = load_checkpoint(resume);
    if (to_json(model_config_of(ck)) != to_json(c.model)) throw ConfigError("resume: checkpoint model differs from config");
    if (skeleton_of(ck).size() != skel.size()) throw ConfigError("resume: checkpoint skeleton differs from config");
    state = train_state_of(ck);
  }

  std::ofstream log(out / "loss.log", std::ios::trunc);
  if (!log) throw ConfigError("cannot write " + (out / "loss.log").string());
  for (const auto& l : state.curve) log << format_step(l);
  log.flush();

  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& l) {
    log << format_step(l) << std::flush;
    if (c.log_every > 0 && l.step % c.log_every == 0) {
      std::printf("step %zu epoch %zu lr %.3g loss %.6g\n", l.step, l.epoch, l.lr, l.loss);
      std::fflush(stdout);
    }
  };
  hooks.on_epoch_end = [&](const TrainState& s) {
    if (c.checkpoint_every == 0 || s.epoch % c.checkpoint_every != 0) return;
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", s.epoch);
    save_checkpoint(checkpoint_of(s, c.model, skel), (out / name).string());
  };
  try {
    train(model, samples_of(data.images), skel, c.train, state, hooks);
  } catch (const TrainingAborted& e) {
    std::fprintf(stderr, "training aborted at step %zu (epoch %zu): %s\n", e.at().step, e.at().epoch, e.what());
    return kNumeric;
  }
  save_checkpoint(checkpoint_of(state, c.model, skel), (out / "final.ckpt").string());
  std::printf("done: %zu steps, final checkpoint %s\n", state.step, (out / "final.ckpt").string().c_str());
  return kOk;
}

// ---- predict

int predict_cmd(const std::string& checkpoint, const std::string& annotations, const std::string& images,
                const std::string& out, bool mask_bu) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const ModelConfig mc = model_config_of(ck);
  const Skeleton skel = skeleton_of(ck);
  const auto data = load_labelled(annotations, images, mc.keypoints);
  if (data.dataset.skeleton && data.dataset.skeleton->size() != skel.size()) {
    throw ConfigError("checkpoint skeleton has " + std::to_string(skel.size()) + " joints, data has " +
                      std::to_string(data.dataset.skeleton->size()));
  }
  DpitModel<float> model(mc);
  ForwardOptions<float> opt;
  opt.mask_bu = mask_bu;
  const auto preds = predict_images(model, ck.params, data.images, opt);
  write_text(out, serialize_predictions(preds));
  std::printf("wrote %zu predictions to %s\n", preds.size(), out.c_str());
  return kOk;
}

// ---- eval

int eval_cmd(const std::string& gt_path, const std::string& pred_path, const std::string& metric,
             const std::string& skeleton, std::string out) {
  const Dataset gt = parse_coco(read_text(gt_path));
  Skeleton skel;
  if (!skeleton.empty()) {
    skel = resolve_skeleton(skeleton);
  } else if (gt.skeleton) {
    skel = *gt.skeleton;
  } else {
    throw ConfigError("eval: ground truth has no skeleton; pass --skeleton");
  }
  for (const auto& a : gt.annotations) {
    if (a.keypoints.size() != skel.size()) throw ConfigError("eval: ground truth arity differs from the skeleton");
  }
  const auto preds = parse_predictions(read_text(pred_path), skel.size());

  std::set<std::int64_t> gt_images, missing;
  for (const auto& im : gt.images) gt_images.insert(im.id);
  for (const auto& p : preds) {
    if (!gt_images.contains(p.image_id)) missing.insert(p.image_id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (auto id : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    throw ConfigError("predictions refer to image ids missing from the ground truth: " + ids);
  }

  std::vector<GtInstance> gts;
  for (const auto& a : gt.annotations) gts.push_back(to_gt(a));
  nlohmann::json report;
  if (metric == "coco") {
    std::vector<PredInstance> p;
    for (const auto& x : preds) p.push_back(to_pred(x));
    report = report_json(ap_ar(gts, p, OksParams::from_skeleton(skel)), std::nullopt, skel.joints);
  } else {
    std::map<std::int64_t, const Prediction*> by_ann;
    for (const auto& p : preds) by_ann[p.annotation_id] = &p;
    std::vector<std::vector<Point2>> pts;
    std::string lacking;
    for (const auto& g : gt.annotations) {
      auto it = by_ann.find(g.id);
      if (it == by_ann.end()) {
        lacking += (lacking.empty() ? "" : ", ") + std::to_string(g.id);
        continue;
      }
      std::vector<Point2> row;
      for (const auto& k : it->second->keypoints) row.push_back({k.x, k.y});
      pts.push_back(std::move(row));
    }
    if (!lacking.empty()) throw ConfigError("pckh: no prediction for annotation ids " + lacking);
    report = report_json(std::nullopt, pckh(gts, pts), skel.joints);
  }
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (out.empty()) out = (fs::path(pred_path).parent_path() / (fs::path(pred_path).stem().string() + "_" + metric + ".json")).string();
  write_text(out, text);
  return kOk;
}

// ---- grad-check

int grad_check_cmd(const Common& common, std::size_t samples, const std::string& corrupt) {
  const RunConfig c = common.load(false);
  const Skeleton skel = resolve_skeleton(c.skeleton);
  if (!corrupt.empty()) BackwardFault::set(corrupt, 1.5);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = model_grad_check(c.model, skel, samples, c.seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  BackwardFault::clear();
  std::set<std::string> tensors;
  for (const auto& e : r.entries) tensors.insert(e.tensor);
  if (!r.diagnostic.empty()) std::fprintf(stderr, "%s\n", r.diagnostic.c_str());
  const GradCheckEntry* worst = nullptr;
  for (const auto& e : r.entries) {
    if (!worst || e.rel_error > worst->rel_error) worst = &e;
  }
  std::printf("grad-check %s: %zu coordinates over %zu tensors, max rel. error %.3g, %.1f s\n",
              r.passed ? "PASS" : "FAIL", r.entries.size(), tensors.size(), r.max_rel_error, secs);
  if (worst && !r.passed) {
    std::printf("worst: %s[%zu] analytic %.6g numeric %.6g\n", worst->tensor.c_str(), worst->index, worst->analytic,
                worst->numeric);
  }
  return r.passed ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DPIT pose estimation: data generation, training, prediction, evaluation"};
  app.require_subcommand(1);

  Common gen_common, train_common, gc_common;
  std::size_t count = 32;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset (PNGs, COCO JSON, skeleton)");
  add_common(gen, gen_common);
  gen->add_option("--count", count, "number of images");
  gen->add_option("--seed", gen_seed, "scene seed (default run.seed)");
  gen->add_option("-o,--out", gen_out, "output directory (default run.out)");

  std::string resume;
  auto* tr = app.add_subcommand("train", "train a model; writes checkpoints and loss.log into run.out");
  add_common(tr, train_common);
  tr->add_option("--resume", resume, "continue from a checkpoint written by train")->check(CLI::ExistingFile);

  std::string ckpt, ann, img_dir, pred_out;
  bool mask_bu = false;
  auto* pr = app.add_subcommand("predict", "keypoints for every annotated person box");
  pr->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  pr->add_option("--annotations", ann, "COCO JSON supplying images and person boxes")->required()->check(CLI::ExistingFile);
  pr->add_option("--images", img_dir, "image directory (default <annotations dir>/images)");
  pr->add_option("-o,--out", pred_out, "predictions JSON")->required();
  pr->add_flag("--mask-bu", mask_bu, "zero the bottom-up tokens");

  std::string gt_path, pd_path, metric = "coco", eval_skel, eval_out;
  auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
  ev->add_option("--gt", gt_path, "ground-truth COCO JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--pred", pd_path, "predictions JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--metric", metric, "coco or pckh")->check(CLI::IsMember({"coco", "pckh"}));
  ev->add_option("--skeleton", eval_skel, "skeleton name or file (default: from --gt)");
  ev->add_option("-o,--out", eval_out, "report path (default next to --pred)");

  std::size_t samples = 200;
  std::string corrupt;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the full training loss in double precision");
  add_common(gc, gc_common);
  gc->add_option("--samples", samples, "parameter coordinates to probe");
  gc->add_option("--corrupt-backward", corrupt, "scale one op's backward rule")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_data(gen_common, count, gen_seed, gen_out);
    if (*tr) return train_cmd(train_common, resume);
    if (*pr) return predict_cmd(ckpt, ann, img_dir, pred_out, mask_bu);
    if (*ev) return eval_cmd(gt_path, pd_path, metric, eval_skel, eval_out);
    if (*gc) return grad_check_cmd(gc_common, samples, corrupt);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumeric;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
  return kUsage;
}
