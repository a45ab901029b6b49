#include "gms/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gms/eval.hpp"
#include "gms/kernels.hpp"
#include "json.hpp"

namespace gms {

LocatorParams ema_update(const LocatorParams& teacher, const LocatorParams& student, double m) {
  if (teacher.conf.size() != student.conf.size() || teacher.thr.size() != student.thr.size())
    throw ValidationError("EMA parameter shape mismatch");
  if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("EMA decay must lie in [0,1]");
  LocatorParams out = teacher;
  for (std::size_t i = 0; i < out.conf.size(); ++i)
    out.conf[i] = m * teacher.conf[i] + (1.0 - m) * student.conf[i];
  for (std::size_t i = 0; i < out.thr.size(); ++i)
    out.thr[i] = m * teacher.thr[i] + (1.0 - m) * student.thr[i];
  out.version = teacher.version + 1;
  return out;
}

double consistency_loss(const PixelMap& conf_ori, const PixelMap& bin_ori,
                        const PixelMap& bin_scoped) {
  if (conf_ori.width != bin_scoped.width || conf_ori.height != bin_scoped.height ||
      bin_ori.width != bin_scoped.width || bin_ori.height != bin_scoped.height)
    throw ValidationError("consistency loss maps must share dimensions");
  if (bin_scoped.kind != MapKind::Binary)
    throw ValidationError("consistency target must be a binary map");
  double sq = 0.0, l1 = 0.0;
  kernels::sq_l1_accum(conf_ori.data.data(), bin_ori.data.data(), bin_scoped.data.data(),
                       conf_ori.size(), &sq, &l1);
  return (sq + l1) / static_cast<double>(conf_ori.size());
}

ScopePlan make_scene_plan(const Scene& scene, const PlanSettings& settings) {
  const auto obs = collect_observations(scene, settings.transform);
  int c = settings.components;
  if (c <= 0) c = select_component_count(obs, settings.c_max, settings.seed);
  c = std::min<int>(c, static_cast<int>(obs.size()));
  const FitResult fit = fit_em(obs, c, 1e-8, 200, settings.seed);
  const auto bands = decouple(fit.model, fit.resp, scene);
  ScopeParams sp;
  sp.optimal_scale = settings.optimal_scale;
  sp.gamma_min = settings.gamma_min;
  sp.gamma_max = settings.gamma_max;
  sp.mode = settings.mode;
  return plan_scope(bands, sp);
}

PlanSettings plan_settings_from(const TrainConfig& cfg) {
  PlanSettings s;
  s.components = cfg.components;
  s.c_max = cfg.c_max;
  s.optimal_scale = cfg.optimal_scale;
  s.gamma_min = cfg.gamma_min;
  s.gamma_max = cfg.gamma_max;
  s.seed = cfg.seed;
  return s;
}

PixelMap infer(const LocatorParams& params, const ImageGrid& img) {
  return LinearLocator(params).predict_binary(img);
}

double dataset_f1(const LocatorParams& params, const std::vector<Scene>& scenes,
                  int min_component_area) {
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (const Scene& scene : scenes) {
    const PixelMap bin = infer(params, scene.image);
    const auto preds = extract_instances(bin, min_component_area);
    const MatchResult m = match(preds, scene.annotations);
    tp += static_cast<std::int64_t>(m.tp_pairs.size());
    fp += static_cast<std::int64_t>(m.fp.size());
    fn += static_cast<std::int64_t>(m.fn.size());
  }
  return f1_from_counts(tp, fp, fn).f1m;
}

namespace {

enum class Arm { Baseline, PlainTeacher, Scoped };

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
}

TrainOutput run_training(const std::vector<Scene>& train_in, const std::vector<Scene>& val,
                         const TrainConfig& cfg, Arm arm) {
  if (train_in.empty() || val.empty()) throw ValidationError("training needs non-empty splits");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ValidationError("bad training configuration");

  // Teacher arms need EM observations, so annotation-free scenes are dropped.
  std::vector<const Scene*> train;
  int excluded = 0;
  for (const Scene& s : train_in) {
    if (arm != Arm::Baseline && s.annotations.empty()) {
      ++excluded;
      continue;
    }
    train.push_back(&s);
  }
  if (train.empty()) throw ValidationError("no usable training scenes");

  // Annotations never change, so each scene's mixture plan is fitted once.
  std::vector<ScopePlan> plans(train.size());
  if (arm == Arm::Scoped) {
    PlanSettings settings = plan_settings_from(cfg);
    for (std::size_t i = 0; i < train.size(); ++i) {
      settings.seed = derive_seed(cfg.seed, train[i]->id, "plan");
      plans[i] = make_scene_plan(*train[i], settings);
    }
  }

  LocatorParams student = LocatorParams::zeros();
  LocatorParams teacher = student;

  TrainOutput out;
  out.excluded_scenes = excluded;
  double best_f1 = -1.0;

  Rng shuffle_rng(derive_seed(cfg.seed, "epochs", "shuffle"));
  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double decay = std::pow(cfg.lr_decay, epoch);
    const double lr_conf = cfg.lr_conf * decay;
    const double lr_thr = cfg.lr_thr * decay;
    shuffle_indices(order, shuffle_rng);

    double seg = 0.0, consis = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<TrainTarget> targets;
      std::vector<PixelMap> scoped;  // keeps targets alive through the step
      targets.reserve(stop - start);
      scoped.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const Scene& scene = *train[order[i]];
        TrainTarget t;
        t.scene = &scene;
        if (arm == Arm::Scoped) {
          scoped.push_back(scope_predict(scene, plans[order[i]], LinearLocator(teacher),
                                         cfg.max_pixels));
          t.consistency_target = &scoped.back();
        } else if (arm == Arm::PlainTeacher) {
          scoped.push_back(infer(teacher, scene.image));
          t.consistency_target = &scoped.back();
        }
        targets.push_back(t);
      }
      auto [next, report] = train_step_targets(student, targets, lr_conf, lr_thr, 1.0);
      student = std::move(next);
      if (arm != Arm::Baseline) teacher = ema_update(teacher, student, cfg.ema_m);
      const double weight = static_cast<double>(stop - start) / static_cast<double>(order.size());
      seg += report.seg_loss * weight;
      consis += report.consis_loss * weight;
    }

    const LocatorParams& eval_params =
        (arm != Arm::Baseline && cfg.eval_with == EvalWith::Teacher) ? teacher : student;
    const double f1 = dataset_f1(eval_params, val, cfg.min_component_area);

    out.history.seg.push_back(seg);
    out.history.consis.push_back(consis);
    out.history.total.push_back(seg + consis);
    out.history.val_f1.push_back(f1);
    out.history.version.push_back(student.version);
    if (f1 > best_f1) {
      best_f1 = f1;
      out.student = student;
      out.teacher = arm == Arm::Baseline ? student : teacher;
    }
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
        (epoch + 1) % cfg.checkpoint_every == 0) {
      nlohmann::ordered_json j;
      j["epoch"] = epoch;
      j["student"] = nlohmann::json::parse(params_to_json(student));
      j["teacher"] = nlohmann::json::parse(
          params_to_json(arm == Arm::Baseline ? student : teacher));
      std::ostringstream name;
      name << "ckpt_epoch_" << std::setw(4) << std::setfill('0') << epoch << ".json";
      const auto path = std::filesystem::path(cfg.checkpoint_dir) / name.str();
      std::ofstream ck(path, std::ios::binary);
      if (!ck) throw IoError("cannot write checkpoint " + path.string());
      ck << j.dump(2) << "\n";
    }
  }
  return out;
}

}  // namespace

TrainOutput train_scoped(const std::vector<Scene>& train, const std::vector<Scene>& val,
                         const TrainConfig& cfg) {
  return run_training(train, val, cfg, Arm::Scoped);
}

TrainOutput train_baseline(const std::vector<Scene>& train, const std::vector<Scene>& val,
                           const TrainConfig& cfg) {
  return run_training(train, val, cfg, Arm::Baseline);
}

TrainOutput train_plain_teacher(const std::vector<Scene>& train, const std::vector<Scene>& val,
                                const TrainConfig& cfg) {
  return run_training(train, val, cfg, Arm::PlainTeacher);
}

std::string history_to_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,seg,consis,total,val_f1\n";
  out.precision(10);
  for (std::size_t e = 0; e < history.epochs(); ++e) {
    out << e << "," << history.seg[e] << "," << history.consis[e] << "," << history.total[e]
        << "," << history.val_f1[e] << "\n";
  }
  return out.str();
}

}  // namespace gms
