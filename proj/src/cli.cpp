#include "deixis/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "deixis/baseline.hpp"
#include "deixis/dataset.hpp"
#include "deixis/evaluation.hpp"
#include "deixis/model.hpp"
#include "deixis/synthetic.hpp"

namespace deixis {

namespace {

using nlohmann::json;

void log_event(std::ostream& err, json event) { err << event.dump() << '\n'; }

json metrics_to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"top2", m.top2}};
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
  const auto sep = text.find('x');
  if (sep == std::string::npos)
    throw std::invalid_argument("grid must look like ROWSxCOLS, e.g. 4x16");
  const std::size_t rows = std::stoul(text.substr(0, sep));
  const std::size_t cols = std::stoul(text.substr(sep + 1));
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("grid extents must be positive");
  return {rows, cols};
}

// Scene-level split for plain training runs: the validation scenes are a
// seeded shuffle's prefix, so a RunConfig reproduces the exact split.
std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> split_scenes(
    const std::vector<std::int64_t>& scenes, std::size_t holdout,
    std::uint64_t seed) {
  std::vector<std::int64_t> shuffled = scenes;
  std::sort(shuffled.begin(), shuffled.end());
  Rng rng(seed ^ 0x9a44f1c5d3b2e681ULL);
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  holdout = std::min(holdout, shuffled.size() > 1 ? shuffled.size() - 1 : 0);
  std::vector<std::int64_t> val(shuffled.begin(),
                                shuffled.begin() +
                                    static_cast<std::ptrdiff_t>(holdout));
  std::vector<std::int64_t> train(
      shuffled.begin() + static_cast<std::ptrdiff_t>(holdout), shuffled.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

struct TrainSettings {
  std::uint64_t seed = 0;
  ModelConfig model;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t holdout_scenes = 6;
  bool augment = true;
  std::size_t augment_per_sample = 9;
  std::size_t augment_max_noise = 2;
  std::optional<double> early_stop_val_top1;
  std::size_t kfold_k = 8;
  std::size_t kfold_holdout = 6;
};

void overlay_config_file(TrainSettings& settings, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json j = json::parse(in);
  if (j.contains("seed")) settings.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("model")) settings.model = ModelConfig::from_json(j["model"]);
  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("epochs")) settings.epochs = t["epochs"].get<std::size_t>();
    if (t.contains("batch_size"))
      settings.batch_size = t["batch_size"].get<std::size_t>();
    if (t.contains("learning_rate"))
      settings.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("holdout_scenes"))
      settings.holdout_scenes = t["holdout_scenes"].get<std::size_t>();
    if (t.contains("augment")) settings.augment = t["augment"].get<bool>();
    if (t.contains("augment_per_sample"))
      settings.augment_per_sample =
          t["augment_per_sample"].get<std::size_t>();
    if (t.contains("augment_max_noise"))
      settings.augment_max_noise = t["augment_max_noise"].get<std::size_t>();
    if (t.contains("early_stop_val_top1") &&
        !t["early_stop_val_top1"].is_null())
      settings.early_stop_val_top1 = t["early_stop_val_top1"].get<double>();
    if (t.contains("kfold_k")) settings.kfold_k = t["kfold_k"].get<std::size_t>();
    if (t.contains("kfold_holdout"))
      settings.kfold_holdout = t["kfold_holdout"].get<std::size_t>();
  }
}

std::vector<Sample> maybe_augment(const TrainSettings& settings,
                                  std::vector<Sample> samples) {
  if (!settings.augment || settings.augment_per_sample == 0)
    return samples;
  return light_augment(samples, settings.augment_per_sample,
                       settings.augment_max_noise,
                       settings.seed ^ 0x7a1c9e2b44d0f3a7ULL);
}

struct EvalArtifacts {
  Metrics metrics;
  PatchConfusionMatrix pcm;
};

template <typename PredictFn>
EvalArtifacts evaluate_with(std::span<const Sample> samples,
                            const PatchGrid& grid, PredictFn&& predictor) {
  std::vector<Prediction> predictions;
  predictions.reserve(samples.size());
  PatchConfusionMatrix pcm(grid);
  for (const Sample& sample : samples) {
    Prediction pred = predictor(sample);
    const std::size_t sentinel = sample.objects.sentinel_index();
    const std::optional<Vec2> predicted =
        pred.top == sentinel ? std::nullopt
                             : std::optional<Vec2>(sample.objects.token(pred.top));
    for (std::size_t target : sample.targets) {
      const std::optional<Vec2> truth =
          target == sentinel ? std::nullopt
                             : std::optional<Vec2>(sample.objects.token(target));
      pcm.add_pair(truth, predicted);
    }
    predictions.push_back(std::move(pred));
  }
  return {compute_metrics(predictions, samples), std::move(pcm)};
}

void write_report(const std::string& report_dir, const EvalArtifacts& artifacts,
                  const json& extra) {
  std::filesystem::create_directories(report_dir);
  json report = metrics_to_json(artifacts.metrics);
  for (auto& [key, value] : extra.items()) report[key] = value;
  write_json_file(report_dir + "/metrics.json", report);
  artifacts.pcm.write_csv(report_dir + "/pcm.csv");
  artifacts.pcm.write_svg(report_dir + "/pcm.svg");
}

// --- commands ---------------------------------------------------------------

int cmd_generate(const CorpusSpec& spec, std::uint64_t seed,
                 const std::string& out_path, std::ostream& err) {
  const std::vector<Sample> samples = generate_corpus(spec, seed);
  save_jsonl(samples, out_path);
  log_event(err, {{"event", "generate"},
                  {"scenes", spec.scenes},
                  {"objects", spec.objects_per_scene},
                  {"samples", samples.size()},
                  {"out", out_path}});
  return 0;
}

int cmd_augment(const std::string& in_path, const std::string& out_path,
                std::uint64_t seed, std::ostream& err) {
  const std::vector<Sample> base = load_jsonl(in_path);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + out_path + "'");
  const Rng master(seed);
  std::uint64_t written = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    Rng rng = master.fork(i);
    enumerate_augmentations(base[i], rng, [&](Sample&& variant) {
      out << sample_to_json(variant).dump() << '\n';
      ++written;
    });
  }
  if (!out) throw std::runtime_error("write failed for '" + out_path + "'");
  log_event(err, {{"event", "augment"},
                  {"base_samples", base.size()},
                  {"multiplicity", AugmentSpec::kTotal},
                  {"augmented_samples", written},
                  {"out", out_path}});
  return 0;
}

json fit_fold(const TrainSettings& settings, std::span<const Sample> all,
              const std::vector<std::int64_t>& train_scenes,
              const std::vector<std::int64_t>& val_scenes,
              std::span<const Sample> test_samples, std::size_t fold_index,
              const std::string& ckpt_path) {
  const std::vector<Sample> train_samples = maybe_augment(
      settings, samples_for_scenes(all, train_scenes));
  const std::vector<Sample> val_samples = samples_for_scenes(all, val_scenes);

  Rng init_rng(mix_seed(settings.seed, 1000 + fold_index));
  InterModalityTransformer model(settings.model, init_rng);
  TrainOptions options;
  options.epochs = settings.epochs;
  options.batch_size = settings.batch_size;
  options.learning_rate = settings.learning_rate;
  options.seed = mix_seed(settings.seed, 2000 + fold_index);
  options.early_stop_val_top1 = settings.early_stop_val_top1;
  const TrainLog log = train_model(model, train_samples, val_samples, options);
  model.save(ckpt_path);

  std::vector<Prediction> predictions;
  predictions.reserve(test_samples.size());
  for (const Sample& sample : test_samples)
    predictions.push_back(predict(model.forward(sample)));
  const Metrics test_metrics = compute_metrics(predictions, test_samples);

  json fold_report;
  fold_report["fold"] = fold_index;
  fold_report["checkpoint"] = ckpt_path;
  fold_report["epochs_run"] = log.epochs.size();
  if (!log.epochs.empty()) {
    fold_report["final_val_top1"] = log.epochs.back().val_top1;
    fold_report["final_val_top2"] = log.epochs.back().val_top2;
    fold_report["final_train_loss"] = log.epochs.back().train_loss;
  }
  fold_report["test"] = metrics_to_json(test_metrics);
  return fold_report;
}

int cmd_train(const TrainSettings& settings, const std::string& data_path,
              const std::string& out_path, bool kfold,
              const std::string& report_dir, std::ostream& err) {
  const std::vector<Sample> all = load_jsonl(data_path);
  if (all.empty()) throw std::runtime_error("dataset '" + data_path + "' is empty");
  const std::vector<std::int64_t> scenes = scene_ids(all);

  if (!kfold) {
    auto [train_scenes, val_scenes] =
        split_scenes(scenes, settings.holdout_scenes, settings.seed);
    const std::vector<Sample> train_samples = maybe_augment(
        settings, samples_for_scenes(all, train_scenes));
    const std::vector<Sample> val_samples = samples_for_scenes(all, val_scenes);
    log_event(err, {{"event", "train_start"},
                    {"train_samples", train_samples.size()},
                    {"val_samples", val_samples.size()},
                    {"mode", to_string(settings.model.modality_mode)}});

    Rng init_rng(mix_seed(settings.seed, 1));
    InterModalityTransformer model(settings.model, init_rng);
    TrainOptions options;
    options.epochs = settings.epochs;
    options.batch_size = settings.batch_size;
    options.learning_rate = settings.learning_rate;
    options.seed = mix_seed(settings.seed, 2);
    options.early_stop_val_top1 = settings.early_stop_val_top1;
    const TrainLog log =
        train_model(model, train_samples, val_samples, options,
                    [&](const EpochStats& stats) {
                      log_event(err, {{"event", "epoch"},
                                      {"epoch", stats.epoch},
                                      {"train_loss", stats.train_loss},
                                      {"val_loss", stats.val_loss},
                                      {"val_top1", stats.val_top1},
                                      {"val_top2", stats.val_top2}});
                    });
    model.save(out_path);
    log_event(err, {{"event", "train_done"},
                    {"checkpoint", out_path},
                    {"epochs_run", log.epochs.size()}});
    return 0;
  }

  Rng fold_rng(mix_seed(settings.seed, 3));
  const KFoldPlan plan =
      kfold_split(scenes, settings.kfold_k, settings.kfold_holdout, fold_rng);
  const std::vector<Sample> test_samples =
      samples_for_scenes(all, plan.test_scenes);
  log_event(err, {{"event", "kfold_start"},
                  {"folds", plan.folds.size()},
                  {"test_scenes", plan.test_scenes.size()}});

  std::vector<json> fold_reports(plan.folds.size());
  const std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(plan.folds.size(),
                               std::thread::hardware_concurrency()));
  std::mutex log_mutex;
  std::vector<std::thread> threads;
  std::size_t next_fold = 0;
  std::mutex next_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      while (true) {
        std::size_t fold;
        {
          std::lock_guard<std::mutex> lock(next_mutex);
          if (next_fold >= plan.folds.size()) return;
          fold = next_fold++;
        }
        const std::string ckpt_path =
            out_path + ".fold" + std::to_string(fold);
        json report = fit_fold(settings, all, plan.folds[fold].train_scenes,
                               plan.folds[fold].val_scenes, test_samples, fold,
                               ckpt_path);
        {
          std::lock_guard<std::mutex> lock(log_mutex);
          log_event(err, {{"event", "fold_done"}, {"fold", fold}});
        }
        fold_reports[fold] = std::move(report);
      }
    });
  }
  for (std::thread& t : threads) t.join();

  json report;
  report["test_scenes"] = plan.test_scenes;
  report["per_fold"] = fold_reports;
  const char* keys[] = {"accuracy", "precision", "recall", "f1", "top2"};
  json mean, std_dev, std_error;
  for (const char* key : keys) {
    double sum = 0.0;
    for (const json& f : fold_reports) sum += f["test"][key].get<double>();
    const double n = static_cast<double>(fold_reports.size());
    const double mu = sum / n;
    double var = 0.0;
    for (const json& f : fold_reports) {
      const double d = f["test"][key].get<double>() - mu;
      var += d * d;
    }
    var = fold_reports.size() > 1 ? var / (n - 1.0) : 0.0;
    mean[key] = mu;
    std_dev[key] = std::sqrt(var);
    std_error[key] = std::sqrt(var / n);
  }
  report["mean"] = mean;
  report["std_dev"] = std_dev;
  report["std_error"] = std_error;

  const std::string dir = report_dir.empty() ? "." : report_dir;
  std::filesystem::create_directories(dir);
  write_json_file(dir + "/kfold.json", report);
  log_event(err, {{"event", "kfold_done"}, {"report", dir + "/kfold.json"}});
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& ckpt_path,
             const std::string& grid_text, const std::string& report_dir,
             std::ostream& err) {
  const std::vector<Sample> samples = load_jsonl(data_path);
  if (samples.empty())
    throw std::runtime_error("dataset '" + data_path + "' is empty");
  const InterModalityTransformer model =
      InterModalityTransformer::load(ckpt_path);
  const auto [rows, cols] = parse_grid(grid_text);
  const PatchGrid grid = PatchGrid::over_table(samples.front().dims, rows, cols);
  const EvalArtifacts artifacts =
      evaluate_with(samples, grid, [&](const Sample& sample) {
        return predict(model.forward(sample));
      });
  write_report(report_dir, artifacts,
               {{"samples", samples.size()},
                {"model", "inter_modality_transformer"},
                {"mode", to_string(model.config().modality_mode)}});
  log_event(err, {{"event", "eval_done"},
                  {"samples", samples.size()},
                  {"accuracy", artifacts.metrics.accuracy},
                  {"report", report_dir}});
  return 0;
}

int cmd_baseline(const std::string& data_path, const std::string& ckpt_path,
                 const std::string& fit_data_path, const std::string& grid_text,
                 const std::string& report_dir, std::uint64_t seed,
                 bool use_ray, std::ostream& err) {
  PointingClassifier classifier;
  if (!fit_data_path.empty()) {
    const std::vector<Sample> fit_samples = load_jsonl(fit_data_path);
    Rng rng(mix_seed(seed, 11));
    classifier = PointingClassifier::random_init(rng);
    PointingClassifier::FitOptions options;
    options.seed = mix_seed(seed, 12);
    classifier.fit(fit_samples, options);
    if (!ckpt_path.empty()) classifier.save(ckpt_path);
    log_event(err, {{"event", "baseline_fit"},
                    {"train_samples", fit_samples.size()},
                    {"checkpoint", ckpt_path}});
  } else {
    classifier = PointingClassifier::load(ckpt_path);
  }

  const std::vector<Sample> samples = load_jsonl(data_path);
  if (samples.empty())
    throw std::runtime_error("dataset '" + data_path + "' is empty");
  const auto [rows, cols] = parse_grid(grid_text);
  const PatchGrid grid = PatchGrid::over_table(samples.front().dims, rows, cols);
  const EvalArtifacts artifacts =
      evaluate_with(samples, grid, [&](const Sample& sample) {
        return baseline_predict(sample, classifier, use_ray);
      });
  write_report(report_dir, artifacts,
               {{"samples", samples.size()}, {"model", "baseline"}});
  log_event(err, {{"event", "baseline_done"},
                  {"samples", samples.size()},
                  {"accuracy", artifacts.metrics.accuracy},
                  {"report", report_dir}});
  return 0;
}

int cmd_predict(const std::string& sample_path, const std::string& ckpt_path,
                std::ostream& out) {
  std::ifstream in(sample_path);
  if (!in) throw std::runtime_error("cannot open '" + sample_path + "'");
  json j = json::parse(in);
  const Sample sample = sample_from_json(j);
  const InterModalityTransformer model =
      InterModalityTransformer::load(ckpt_path);
  const ScoreVector scores = model.forward(sample);
  const Prediction pred = predict(scores);
  const std::size_t sentinel = scores.sentinel_index();

  out << "ranked targets (most likely first):\n";
  for (std::size_t index : pred.ranked) {
    if (index == sentinel) continue;
    const Vec2 c = sample.objects.token(index);
    std::ostringstream line;
    line << "  object " << index << "  score " << std::fixed
         << std::setprecision(4) << scores.scores[index] << "  centroid ("
         << std::setprecision(1) << c.x << ", " << c.y << ")";
    out << line.str() << '\n';
  }
  out << "non-pointing probability: " << std::fixed << std::setprecision(4)
      << scores.scores[sentinel] << '\n';
  if (pred.top == sentinel) out << "prediction: not pointing\n";
  else out << "prediction: object " << pred.top << '\n';
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"pointing-target estimation toolkit"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "write a synthetic corpus");
  CorpusSpec corpus;
  std::uint64_t seed = 0;
  std::string out_path;
  double width = 1280.0, height = 720.0;
  generate->add_option("--scenes", corpus.scenes, "number of scenes")
      ->check(CLI::PositiveNumber);
  generate->add_option("--objects", corpus.objects_per_scene,
                       "objects per scene")
      ->check(CLI::PositiveNumber);
  generate->add_option("--singles", corpus.single_pointing_per_scene,
                       "single-target pointing samples per scene");
  generate->add_option("--bimanual", corpus.bimanual_events_per_scene,
                       "bi-manual events per scene (two samples each)");
  generate->add_option("--resting", corpus.resting_per_scene,
                       "resting samples per scene");
  generate->add_option("--jitter-deg", corpus.jitter_deg,
                       "max aim deviation in degrees");
  generate->add_option("--width", width, "image width in px");
  generate->add_option("--height", height, "image height in px");
  generate->add_option("--seed", seed, "rng seed")->envname("DEIXIS_SEED");
  generate->add_option("--out", out_path, "output JSONL path")->required();

  // augment
  auto* augment = app.add_subcommand("augment", "expand a corpus 4096x");
  std::string in_path;
  augment->add_option("--in", in_path, "input JSONL path")->required();
  augment->add_option("--out", out_path, "output JSONL path")->required();
  augment->add_option("--seed", seed, "rng seed")->envname("DEIXIS_SEED");

  // train
  auto* train = app.add_subcommand("train", "train the transformer");
  std::string data_path, config_path, report_dir, mode_text = "three";
  bool kfold = false;
  TrainSettings settings;
  train->add_option("--data", data_path, "training JSONL path")->required();
  train->add_option("--mode", mode_text, "decoder input stream: two|three");
  train->add_option("--config", config_path, "run-config JSON path");
  train->add_option("--out", out_path, "checkpoint output path")->required();
  train->add_flag("--kfold", kfold, "run the k-fold protocol");
  train->add_option("--report", report_dir, "report directory (kfold)");
  auto* opt_seed =
      train->add_option("--seed", seed, "rng seed")->envname("DEIXIS_SEED");
  std::size_t epochs = 20, batch_size = 64, holdout_scenes = 6;
  double learning_rate = 1e-3;
  auto* opt_epochs = train->add_option("--epochs", epochs, "max epochs");
  auto* opt_batch = train->add_option("--batch", batch_size, "batch size");
  auto* opt_lr = train->add_option("--lr", learning_rate, "learning rate");
  auto* opt_holdout = train->add_option("--holdout-scenes", holdout_scenes,
                                        "validation scenes (plain training)");
  bool no_augment = false;
  auto* opt_no_augment =
      train->add_flag("--no-augment", no_augment, "train on raw samples only");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a trained model");
  std::string ckpt_path, grid_text = "4x16";
  eval->add_option("--data", data_path, "evaluation JSONL path")->required();
  eval->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  eval->add_option("--grid", grid_text, "patch grid ROWSxCOLS");
  eval->add_option("--report", report_dir, "report directory")->required();

  // baseline
  auto* baseline = app.add_subcommand("baseline", "run the geometric baseline");
  std::string fit_data_path;
  bool use_ray = false;
  baseline->add_option("--data", data_path, "evaluation JSONL path")
      ->required();
  baseline->add_option("--ckpt", ckpt_path, "classifier checkpoint");
  baseline->add_option("--fit-data", fit_data_path,
                       "fit the classifier on this JSONL first");
  baseline->add_option("--grid", grid_text, "patch grid ROWSxCOLS");
  baseline->add_option("--report", report_dir, "report directory")->required();
  baseline->add_option("--seed", seed, "rng seed")->envname("DEIXIS_SEED");
  baseline->add_flag("--ray", use_ray,
                     "use the forward-ray distance instead of the line");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "score one sample");
  std::string sample_path;
  predict_cmd->add_option("--sample", sample_path, "sample JSON path")
      ->required();
  predict_cmd->add_option("--ckpt", ckpt_path, "model checkpoint")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("deixis");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    std::ostringstream message;
    const int code = app.exit(e, message, message);
    err << message.str();
    return code;
  }

  try {
    if (generate->parsed()) {
      corpus.dims = {width, height};
      return cmd_generate(corpus, seed, out_path, err);
    }
    if (augment->parsed()) return cmd_augment(in_path, out_path, seed, err);
    if (train->parsed()) {
      if (!config_path.empty()) overlay_config_file(settings, config_path);
      settings.model.modality_mode = modality_from_string(mode_text);
      if (opt_seed->count() || config_path.empty()) settings.seed = seed;
      if (opt_epochs->count()) settings.epochs = epochs;
      if (opt_batch->count()) settings.batch_size = batch_size;
      if (opt_lr->count()) settings.learning_rate = learning_rate;
      if (opt_holdout->count()) settings.holdout_scenes = holdout_scenes;
      if (opt_no_augment->count()) settings.augment = !no_augment;
      settings.model.validate();
      return cmd_train(settings, data_path, out_path, kfold, report_dir, err);
    }
    if (eval->parsed())
      return cmd_eval(data_path, ckpt_path, grid_text, report_dir, err);
    if (baseline->parsed())
      return cmd_baseline(data_path, ckpt_path, fit_data_path, grid_text,
                          report_dir, seed, use_ray, err);
    if (predict_cmd->parsed())
      return cmd_predict(sample_path, ckpt_path, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << "error: no command\n";
  return 1;
}

}  // namespace deixis
