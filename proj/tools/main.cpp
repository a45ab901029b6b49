#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gms/core_types.hpp"
#include "gms/eval.hpp"
#include "gms/gmm.hpp"
#include "gms/kernels.hpp"
#include "gms/locator.hpp"
#include "gms/scope.hpp"
#include "gms/synth.hpp"
#include "gms/teacher.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void log_line(const std::string& msg) { std::cerr << "[gms] " << msg << "\n"; }

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gms::IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gms::IoError("cannot write " + path);
  out << text;
  if (!out) throw gms::IoError("write failed: " + path);
}

// Ordered scene-parallel map: results land in input order no matter how the
// workers interleave.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          fn(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// --config FILE provides defaults: keys become --key=value arguments unless
// the flag already appears on the command line.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  json j;
  try {
    j = json::parse(read_text(config_path));
  } catch (const json::parse_error& e) {
    throw gms::ParseError(config_path + ": " + e.what(), 0);
  }
  if (!j.is_object()) throw gms::ValidationError(config_path + ": config must be a JSON object");
  auto has_flag = [&](const std::string& name) {
    const std::string full = "--" + name;
    for (const auto& a : args)
      if (a == full || a.rfind(full + "=", 0) == 0) return true;
    return false;
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "config" || has_flag(key)) continue;
    std::string v;
    if (value.is_string()) v = value.get<std::string>();
    else v = value.dump();
    args.push_back("--" + key + "=" + v);
  }
  return args;
}

struct PlanFlags {
  int components = 0;
  int c_max = 6;
  double optimal_scale = 250.0;
  double gamma_min = 0.25;
  double gamma_max = 4.0;
  bool raw_alpha = false;
  bool eq10_factors = false;
  std::uint64_t seed = 1;

  gms::PlanSettings settings() const {
    gms::PlanSettings s;
    s.components = components;
    s.c_max = c_max;
    s.optimal_scale = optimal_scale;
    s.gamma_min = gamma_min;
    s.gamma_max = gamma_max;
    s.transform = raw_alpha ? gms::AlphaTransform::RawArea : gms::AlphaTransform::LogArea;
    s.mode = eq10_factors ? gms::FactorMode::LiteralMeanSum : gms::FactorMode::SqrtAreaRatio;
    s.seed = seed;
    return s;
  }
};

void add_plan_flags(CLI::App* cmd, PlanFlags& f) {
  cmd->add_option("--components", f.components, "pin the mixture component count (0 = BIC)");
  cmd->add_option("--cmax", f.c_max, "BIC upper bound on components");
  cmd->add_option("--optimal-scale", f.optimal_scale, "landmark area the bands zoom toward");
  cmd->add_option("--gamma-min", f.gamma_min, "zoom factor lower clamp");
  cmd->add_option("--gamma-max", f.gamma_max, "zoom factor upper clamp");
  cmd->add_flag("--raw-alpha", f.raw_alpha, "fit raw areas instead of ln(area)");
  cmd->add_flag("--eq10-factors", f.eq10_factors, "literal mean-sum zoom factors (fidelity mode)");
}

std::vector<std::string> resolve_splits(const std::string& split) {
  if (split == "all") return {"train", "val", "test"};
  return {split};
}

// ---- checkpoints ---------------------------------------------------------

struct Checkpoint {
  std::string arm;
  gms::LocatorParams student;
  gms::LocatorParams teacher;
};

std::string checkpoint_to_json(const Checkpoint& ck) {
  ordered_json j;
  j["schema_version"] = 1;
  j["arm"] = ck.arm;
  j["student"] = json::parse(gms::params_to_json(ck.student));
  j["teacher"] = json::parse(gms::params_to_json(ck.teacher));
  return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  Checkpoint ck;
  try {
    const json j = json::parse(text);
    ck.arm = j.at("arm").get<std::string>();
    ck.student = gms::params_from_json(j.at("student").dump());
    ck.teacher = gms::params_from_json(j.at("teacher").dump());
  } catch (const json::exception& e) {
    throw gms::ParseError(std::string("checkpoint JSON: ") + e.what(), 0);
  }
  return ck;
}

// ---- eval report ----------------------------------------------------------

struct SceneEval {
  std::string id;
  std::int64_t tp = 0, fp = 0, fn = 0;
  double pred_count = 0, gt_count = 0;
  double r_v = 0, r_h = 0;
};

struct EvalSummary {
  gms::F1Metrics f1;
  gms::CountMetrics counting;
  std::array<std::optional<double>, 6> bins;
  double mean_abs_rv = 0.0, mean_abs_rh = 0.0;
  std::vector<SceneEval> scenes;
  bool with_gms = false;
  double optimal_scale = 250.0;
  int min_area = 2;
  std::string params_source, which;
};

EvalSummary run_eval(const gms::LocatorParams& params, const std::vector<gms::Scene>& scenes,
                     bool with_gms, const gms::PlanSettings& plan_settings, int min_area,
                     std::uint64_t seed, int jobs) {
  EvalSummary summary;
  summary.with_gms = with_gms;
  summary.optimal_scale = plan_settings.optimal_scale;
  summary.min_area = min_area;
  summary.scenes.resize(scenes.size());

  std::array<std::int64_t, 6> bin_total{};
  std::array<std::int64_t, 6> bin_matched{};
  std::vector<gms::MatchResult> matches(scenes.size());

  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    const gms::Scene& scene = scenes[i];
    gms::PixelMap bin;
    if (with_gms) {
      gms::PlanSettings s = plan_settings;
      s.seed = gms::derive_seed(seed, scene.id, "plan");
      const gms::ScopePlan plan = gms::make_scene_plan(scene, s);
      bin = gms::scope_predict(scene, plan, gms::LinearLocator(params));
    } else {
      bin = gms::infer(params, scene.image);
    }
    const auto preds = gms::extract_instances(bin, min_area);
    matches[i] = gms::match(preds, scene.annotations);
    SceneEval& se = summary.scenes[i];
    se.id = scene.id;
    se.tp = static_cast<std::int64_t>(matches[i].tp_pairs.size());
    se.fp = static_cast<std::int64_t>(matches[i].fp.size());
    se.fn = static_cast<std::int64_t>(matches[i].fn.size());
    se.pred_count = static_cast<double>(preds.size());
    se.gt_count = static_cast<double>(scene.annotations.size());
    const gms::PearsonResult pr = gms::pearson_scale_correlation(scene);
    se.r_v = pr.r_vertical;
    se.r_h = pr.r_horizontal;
  });

  std::int64_t tp = 0, fp = 0, fn = 0;
  std::vector<double> pred_counts, gt_counts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    tp += summary.scenes[i].tp;
    fp += summary.scenes[i].fp;
    fn += summary.scenes[i].fn;
    pred_counts.push_back(summary.scenes[i].pred_count);
    gt_counts.push_back(summary.scenes[i].gt_count);
    std::vector<char> matched(scenes[i].annotations.size(), 0);
    for (const auto& [p, g] : matches[i].tp_pairs) matched[g] = 1;
    for (std::size_t g = 0; g < scenes[i].annotations.size(); ++g) {
      const int b = gms::scale_bin(scenes[i].annotations[g].scale);
      ++bin_total[b];
      if (matched[g]) ++bin_matched[b];
    }
    summary.mean_abs_rv += std::fabs(summary.scenes[i].r_v);
    summary.mean_abs_rh += std::fabs(summary.scenes[i].r_h);
  }
  summary.f1 = gms::f1_from_counts(tp, fp, fn);
  summary.counting = gms::count_metrics(pred_counts, gt_counts);
  for (int b = 0; b < 6; ++b)
    if (bin_total[b] > 0)
      summary.bins[b] = static_cast<double>(bin_matched[b]) / static_cast<double>(bin_total[b]);
  if (!scenes.empty()) {
    summary.mean_abs_rv /= static_cast<double>(scenes.size());
    summary.mean_abs_rh /= static_cast<double>(scenes.size());
  }
  return summary;
}

std::string eval_summary_to_json(const EvalSummary& s) {
  ordered_json j;
  j["schema_version"] = 1;
  j["sigma_convention"] = "sigma = sqrt(w^2 + h^2) / 2, greedy nearest match";
  j["bin_edges"] = {1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0};
  j["min_component_area"] = s.min_area;
  j["with_gms"] = s.with_gms;
  j["optimal_scale"] = s.optimal_scale;
  j["params"] = s.params_source;
  j["use"] = s.which;
  j["precision"] = s.f1.precision;
  j["recall"] = s.f1.recall;
  j["f1m"] = s.f1.f1m;
  j["degenerate"] = s.f1.degenerate;
  j["mae"] = s.counting.mae;
  j["mse"] = s.counting.mse;
  j["nae"] = s.counting.nae;
  ordered_json bins = ordered_json::object();
  for (int b = 0; b < 6; ++b) {
    const std::string key = "A" + std::to_string(b);
    if (s.bins[b]) bins[key] = *s.bins[b];
    else bins[key] = nullptr;
  }
  j["bin_recall"] = bins;
  j["pearson"] = {{"mean_abs_r_vertical", s.mean_abs_rv}, {"mean_abs_r_horizontal", s.mean_abs_rh}};
  j["scenes"] = ordered_json::array();
  for (const auto& se : s.scenes) {
    ordered_json js;
    js["id"] = se.id;
    js["tp"] = se.tp;
    js["fp"] = se.fp;
    js["fn"] = se.fn;
    js["pred_count"] = se.pred_count;
    js["gt_count"] = se.gt_count;
    js["r_vertical"] = se.r_v;
    js["r_horizontal"] = se.r_h;
    j["scenes"].push_back(js);
  }
  return j.dump(2) + "\n";
}

std::string eval_summary_to_csv(const EvalSummary& s) {
  std::ostringstream out;
  out.precision(10);
  out << "id,tp,fp,fn,pred_count,gt_count,r_vertical,r_horizontal\n";
  for (const auto& se : s.scenes)
    out << se.id << "," << se.tp << "," << se.fp << "," << se.fn << "," << se.pred_count << ","
        << se.gt_count << "," << se.r_v << "," << se.r_h << "\n";
  return out.str();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << std::fixed << v;
  return ss.str();
}

// ---- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 1;
  int width = 512, height = 512;
  int n_train = 20, n_val = 5, n_test = 10;
  int n_min = 90, n_max = 140;
  std::string style = "disc";
  double noise = 0.25;
  double speckle = 0.0015;
  bool continuous = false;
  std::string bands;  // "v_lo:v_hi:mean_area:jitter:weight,..."
};

std::vector<gms::SynthBand> parse_bands(const std::string& spec) {
  std::vector<gms::SynthBand> bands;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    gms::SynthBand b;
    if (std::sscanf(item.c_str(), "%lf:%lf:%lf:%lf:%lf", &b.v_lo, &b.v_hi, &b.mean_area,
                    &b.jitter, &b.weight) != 5)
      throw gms::ValidationError("bad band spec '" + item + "' (want lo:hi:area:jitter:weight)");
    bands.push_back(b);
  }
  return bands;
}

int run_synth(const SynthArgs& a) {
  gms::SynthConfig cfg;
  cfg.width = a.width;
  cfg.height = a.height;
  cfg.n_min = a.n_min;
  cfg.n_max = a.n_max;
  cfg.noise_level = a.noise;
  cfg.speckle_per_pixel = a.speckle;
  cfg.continuous = a.continuous;
  cfg.style = a.style == "square" ? gms::HeadStyle::Square : gms::HeadStyle::Disc;
  if (!a.bands.empty()) cfg.bands = parse_bands(a.bands);
  cfg.seed = a.seed;
  const auto summary = gms::generate_benchmark(cfg, a.n_train, a.n_val, a.n_test, a.seed, a.out);
  log_line("wrote " + std::to_string(summary.train_ids.size() + summary.val_ids.size() +
                                     summary.test_ids.size()) +
           " scenes to " + summary.dir);
  return 0;
}

struct FitArgs {
  std::string data, out, split = "train";
  PlanFlags plan;
  int jobs = 1;
};

int run_fit(const FitArgs& a) {
  fs::create_directories(a.out);
  const gms::AlphaTransform transform =
      a.plan.raw_alpha ? gms::AlphaTransform::RawArea : gms::AlphaTransform::LogArea;
  for (const std::string& split : resolve_splits(a.split)) {
    const auto ids = gms::load_split_ids(a.data, split);
    std::vector<std::string> outputs(ids.size());
    parallel_for(ids.size(), a.jobs, [&](std::size_t i) {
      const gms::Scene scene = gms::load_dataset_scene(a.data, ids[i]);
      const auto obs = gms::collect_observations(scene, transform);
      int c = a.plan.components;
      if (c <= 0)
        c = gms::select_component_count(obs, a.plan.c_max,
                                        gms::derive_seed(a.plan.seed, ids[i], "fit"));
      c = std::min<int>(c, static_cast<int>(obs.size()));
      const gms::FitResult fit =
          gms::fit_em(obs, c, 1e-8, 200, gms::derive_seed(a.plan.seed, ids[i], "fit"));
      outputs[i] = gms::mixture_to_json(fit.model);
    });
    for (std::size_t i = 0; i < ids.size(); ++i)
      write_text((fs::path(a.out) / (ids[i] + ".mixture.json")).string(), outputs[i]);
    log_line("fit " + std::to_string(ids.size()) + " scenes from split '" + split + "'");
  }
  return 0;
}

struct PlanArgs {
  std::string data, out, split = "train";
  PlanFlags plan;
  int jobs = 1;
};

int run_plan(const PlanArgs& a) {
  fs::create_directories(a.out);
  for (const std::string& split : resolve_splits(a.split)) {
    const auto ids = gms::load_split_ids(a.data, split);
    std::vector<std::string> outputs(ids.size());
    parallel_for(ids.size(), a.jobs, [&](std::size_t i) {
      const gms::Scene scene = gms::load_dataset_scene(a.data, ids[i]);
      gms::PlanSettings settings = a.plan.settings();
      settings.seed = gms::derive_seed(a.plan.seed, ids[i], "plan");
      const gms::ScopePlan plan = gms::make_scene_plan(scene, settings);
      plan.validate(scene.image.height);
      outputs[i] = gms::scope_plan_to_json(plan);
    });
    for (std::size_t i = 0; i < ids.size(); ++i)
      write_text((fs::path(a.out) / (ids[i] + ".plan.json")).string(), outputs[i]);
    log_line("planned " + std::to_string(ids.size()) + " scenes from split '" + split + "'");
  }
  return 0;
}

struct TrainArgs {
  std::string data, out;
  std::string arm = "baseline";
  gms::TrainConfig cfg;
  std::string eval_with = "teacher";
  int checkpoint_every = 0;
};

int run_train(const TrainArgs& a) {
  fs::create_directories(a.out);
  gms::TrainConfig cfg = a.cfg;
  cfg.eval_with = a.eval_with == "student" ? gms::EvalWith::Student : gms::EvalWith::Teacher;
  if (a.checkpoint_every > 0) {
    cfg.checkpoint_every = a.checkpoint_every;
    cfg.checkpoint_dir = a.out;
  }
  const auto train = gms::load_split(a.data, "train");
  const auto val = gms::load_split(a.data, "val");
  gms::TrainOutput result;
  if (a.arm == "baseline" || a.arm == "gms-inference") {
    result = gms::train_baseline(train, val, cfg);
  } else if (a.arm == "plain-teacher") {
    result = gms::train_plain_teacher(train, val, cfg);
  } else if (a.arm == "scoped") {
    result = gms::train_scoped(train, val, cfg);
  } else {
    throw gms::ValidationError("unknown arm '" + a.arm + "'");
  }
  if (result.excluded_scenes > 0)
    log_line("warning: excluded " + std::to_string(result.excluded_scenes) +
             " annotation-free scenes");
  Checkpoint ck{a.arm, result.student, result.teacher};
  write_text((fs::path(a.out) / "params.json").string(), checkpoint_to_json(ck));
  write_text((fs::path(a.out) / "history.csv").string(), gms::history_to_csv(result.history));
  const double best =
      *std::max_element(result.history.val_f1.begin(), result.history.val_f1.end());
  log_line("arm " + a.arm + " best val F1 " + fmt(best));
  return 0;
}

struct EvalArgs {
  std::string data, params, out, csv, split = "test";
  std::string use = "teacher";
  bool with_gms = false;
  PlanFlags plan;
  int min_area = 2;
  int jobs = 1;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = checkpoint_from_json(read_text(a.params));
  const gms::LocatorParams& params = a.use == "student" ? ck.student : ck.teacher;
  const auto scenes = gms::load_split(a.data, a.split);
  EvalSummary summary = run_eval(params, scenes, a.with_gms, a.plan.settings(), a.min_area,
                                 a.plan.seed, a.jobs);
  summary.params_source = a.params;
  summary.which = a.use;
  const std::string text = eval_summary_to_json(summary);
  if (a.out.empty()) std::cout << text;
  else write_text(a.out, text);
  if (!a.csv.empty()) write_text(a.csv, eval_summary_to_csv(summary));
  log_line("F1 " + fmt(summary.f1.f1m) + " precision " + fmt(summary.f1.precision) + " recall " +
           fmt(summary.f1.recall) + " MAE " + fmt(summary.counting.mae));
  return 0;
}

struct ReportArgs {
  std::string out;
  std::vector<std::string> evals;      // name=report.json
  std::vector<std::string> histories;  // name=history.csv
  std::string sweep;                   // comma list of optimal scales
  std::string params, data, split = "test", use = "teacher";
  PlanFlags plan;
  int min_area = 2;
  int jobs = 1;
};

std::pair<std::string, std::string> split_kv(const std::string& s) {
  const auto pos = s.find('=');
  if (pos == std::string::npos)
    throw gms::ValidationError("expected NAME=PATH, got '" + s + "'");
  return {s.substr(0, pos), s.substr(pos + 1)};
}

int run_report(const ReportArgs& a) {
  std::ostringstream md;
  md << "# Run report\n";

  if (!a.evals.empty()) {
    md << "\n## Localization and counting\n\n";
    md << "| run | F1-m | Pre. | Rec. | MAE | MSE | NAE |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& kv : a.evals) {
      const auto [name, path] = split_kv(kv);
      const json j = json::parse(read_text(path));
      md << "| " << name << " | " << fmt(j.at("f1m").get<double>()) << " | "
         << fmt(j.at("precision").get<double>()) << " | " << fmt(j.at("recall").get<double>())
         << " | " << fmt(j.at("mae").get<double>(), 2) << " | " << fmt(j.at("mse").get<double>(), 2)
         << " | " << fmt(j.at("nae").get<double>()) << " |\n";
    }
  }

  if (!a.histories.empty()) {
    md << "\n## Training histories\n\n";
    md << "| run | epochs | best val F1 | final seg | final consis |\n";
    md << "|---|---|---|---|---|\n";
    for (const auto& kv : a.histories) {
      const auto [name, path] = split_kv(kv);
      std::istringstream in(read_text(path));
      std::string line;
      std::getline(in, line);  // header
      double best = 0.0, seg = 0.0, consis = 0.0;
      int epochs = 0;
      while (std::getline(in, line)) {
        std::stringstream row(line);
        std::string cell;
        std::vector<double> cells;
        while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
        if (cells.size() < 5) continue;
        seg = cells[1];
        consis = cells[2];
        best = std::max(best, cells[4]);
        ++epochs;
      }
      md << "| " << name << " | " << epochs << " | " << fmt(best) << " | " << fmt(seg) << " | "
         << fmt(consis) << " |\n";
    }
  }

  if (!a.sweep.empty()) {
    if (a.params.empty() || a.data.empty())
      throw gms::ValidationError("--sweep needs --params and --data");
    const Checkpoint ck = checkpoint_from_json(read_text(a.params));
    const gms::LocatorParams& params = a.use == "student" ? ck.student : ck.teacher;
    const auto scenes = gms::load_split(a.data, a.split);
    md << "\n## Optimal-scale sweep (test-time scoping)\n\n";
    md << "| optimal scale | F1-m | Pre. | Rec. | MAE | MSE |\n";
    md << "|---|---|---|---|---|---|\n";
    std::stringstream ss(a.sweep);
    std::string item;
    while (std::getline(ss, item, ',')) {
      PlanFlags flags = a.plan;
      flags.optimal_scale = std::stod(item);
      const EvalSummary s = run_eval(params, scenes, true, flags.settings(), a.min_area,
                                     a.plan.seed, a.jobs);
      md << "| " << fmt(flags.optimal_scale, 0) << " | " << fmt(s.f1.f1m) << " | "
         << fmt(s.f1.precision) << " | " << fmt(s.f1.recall) << " | "
         << fmt(s.counting.mae, 2) << " | " << fmt(s.counting.mse, 2) << " |\n";
    }
  }

  const std::string text = md.str();
  if (a.out.empty()) std::cout << text;
  else write_text(a.out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-mixture scale alignment pipeline for crowd localization"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file of flag defaults")
      ->expected(1);
  app.allow_extras(false);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  synth->add_option("--out", synth_args.out, "output dataset directory")->required();
  synth->add_option("--seed", synth_args.seed, "master seed");
  synth->add_option("--width", synth_args.width, "scene width");
  synth->add_option("--height", synth_args.height, "scene height");
  synth->add_option("--n-train", synth_args.n_train, "training scenes");
  synth->add_option("--n-val", synth_args.n_val, "validation scenes");
  synth->add_option("--n-test", synth_args.n_test, "test scenes");
  synth->add_option("--n-min", synth_args.n_min, "min instances per scene");
  synth->add_option("--n-max", synth_args.n_max, "max instances per scene");
  synth->add_option("--style", synth_args.style, "head style: disc|square")
      ->check(CLI::IsMember({"disc", "square"}));
  synth->add_option("--noise", synth_args.noise, "background noise level");
  synth->add_option("--speckle", synth_args.speckle, "speckle distractors per pixel");
  synth->add_flag("--continuous", synth_args.continuous, "continuous perspective law");
  synth->add_option("--bands", synth_args.bands, "band spec lo:hi:area:jitter:weight,...");

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "fit per-scene scale mixtures by EM");
  fit->add_option("--data", fit_args.data, "dataset directory")->required();
  fit->add_option("--out", fit_args.out, "output directory for mixture JSON")->required();
  fit->add_option("--split", fit_args.split, "train|val|test|all");
  fit->add_option("--seed", fit_args.plan.seed, "master seed");
  fit->add_option("--jobs", fit_args.jobs, "scene-parallel workers");
  add_plan_flags(fit, fit_args.plan);

  PlanArgs plan_args;
  CLI::App* plan = app.add_subcommand("plan", "derive scope plans (bands + zoom factors)");
  plan->add_option("--data", plan_args.data, "dataset directory")->required();
  plan->add_option("--out", plan_args.out, "output directory for plan JSON")->required();
  plan->add_option("--split", plan_args.split, "train|val|test|all");
  plan->add_option("--seed", plan_args.plan.seed, "master seed");
  plan->add_option("--jobs", plan_args.jobs, "scene-parallel workers");
  add_plan_flags(plan, plan_args.plan);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a locator arm");
  train->add_option("--data", train_args.data, "dataset directory")->required();
  train->add_option("--out", train_args.out, "run output directory")->required();
  train->add_option("--arm", train_args.arm, "baseline|plain-teacher|gms-inference|scoped")
      ->check(CLI::IsMember({"baseline", "plain-teacher", "gms-inference", "scoped"}));
  train->add_option("--epochs", train_args.cfg.epochs, "training epochs");
  train->add_option("--batch-size", train_args.cfg.batch_size, "scenes per step");
  train->add_option("--lr-conf", train_args.cfg.lr_conf, "confidence head learning rate");
  train->add_option("--lr-thr", train_args.cfg.lr_thr, "threshold head learning rate");
  train->add_option("--lr-decay", train_args.cfg.lr_decay, "per-epoch rate decay");
  train->add_option("--ema-m", train_args.cfg.ema_m, "teacher EMA decay");
  train->add_option("--optimal-scale", train_args.cfg.optimal_scale, "landmark area");
  train->add_option("--components", train_args.cfg.components, "pin component count (0 = BIC)");
  train->add_option("--cmax", train_args.cfg.c_max, "BIC upper bound");
  train->add_option("--seed", train_args.cfg.seed, "master seed");
  train->add_option("--eval-with", train_args.eval_with, "teacher|student for validation")
      ->check(CLI::IsMember({"teacher", "student"}));
  train->add_option("--checkpoint-every", train_args.checkpoint_every,
                    "write a checkpoint every N epochs (0 = only final)");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("--data", eval_args.data, "dataset directory")->required();
  eval->add_option("--params", eval_args.params, "checkpoint JSON from train")->required();
  eval->add_option("--split", eval_args.split, "train|val|test");
  eval->add_option("--out", eval_args.out, "report JSON path (default stdout)");
  eval->add_option("--csv", eval_args.csv, "per-scene CSV path");
  eval->add_option("--use", eval_args.use, "teacher|student parameters")
      ->check(CLI::IsMember({"teacher", "student"}));
  eval->add_flag("--with-gms", eval_args.with_gms, "apply scoping at test time");
  eval->add_option("--min-area", eval_args.min_area, "component area filter");
  eval->add_option("--seed", eval_args.plan.seed, "master seed");
  eval->add_option("--jobs", eval_args.jobs, "scene-parallel workers");
  add_plan_flags(eval, eval_args.plan);

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "aggregate runs into a markdown report");
  report->add_option("--out", report_args.out, "markdown output path (default stdout)");
  report->add_option("--eval", report_args.evals, "NAME=report.json (repeatable)");
  report->add_option("--history", report_args.histories, "NAME=history.csv (repeatable)");
  report->add_option("--sweep", report_args.sweep, "comma list of optimal scales to re-evaluate");
  report->add_option("--params", report_args.params, "checkpoint for the sweep");
  report->add_option("--data", report_args.data, "dataset directory for the sweep");
  report->add_option("--split", report_args.split, "split for the sweep");
  report->add_option("--use", report_args.use, "teacher|student for the sweep");
  report->add_option("--min-area", report_args.min_area, "component area filter");
  report->add_option("--seed", report_args.plan.seed, "master seed");
  report->add_option("--jobs", report_args.jobs, "scene-parallel workers");
  add_plan_flags(report, report_args.plan);

  for (CLI::App* sub : {synth, fit, plan, train, eval, report})
    sub->add_option("--config", config_path, "JSON file of flag defaults");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(args);
  } catch (const gms::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  // CLI11 consumes arguments in reverse order.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (fit->parsed()) return run_fit(fit_args);
    if (plan->parsed()) return run_plan(plan_args);
    if (train->parsed()) return run_train(train_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (report->parsed()) return run_report(report_args);
  } catch (const gms::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const gms::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
