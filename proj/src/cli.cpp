#include "patchdenoise/cli.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "patchdenoise/checkpoint.hpp"
#include "patchdenoise/error.hpp"
#include "patchdenoise/filters.hpp"
#include "patchdenoise/metrics.hpp"
#include "patchdenoise/preprocess.hpp"
#include "patchdenoise/serialization.hpp"

namespace patchdenoise::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::apply_seed() {
  model.seed = seed;
  train.seed = seed;
  synth.seed = seed;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  synth.validate();
  if (folds < 2) throw ConfigError("folds must be >= 2 so every fold has training patients");
  for (auto f : fold_selection) {
    if (f >= folds) {
      throw ConfigError("fold " + std::to_string(f) + " selected but only " +
                        std::to_string(folds) + " folds exist");
    }
  }
  if (dataset_root.empty() || output_dir.empty()) {
    throw ConfigError("dataset_root and output_dir must be non-empty");
  }
}

json to_json(const RunConfig& c) {
  json model = patchdenoise::to_json(c.model);
  model.erase("seed");
  json train = patchdenoise::to_json(c.train);
  train.erase("seed");
  return {{"seed", c.seed},
          {"dataset_root", c.dataset_root},
          {"output_dir", c.output_dir},
          {"folds", c.folds},
          {"fold_selection", c.fold_selection},
          {"model", model},
          {"train", train},
          {"synth",
           {{"patients", c.synth.patients},
            {"slices_per_patient", c.synth.slices_per_patient},
            {"height", c.synth.height},
            {"width", c.synth.width},
            {"photon_count", c.synth.photon_count}}}};
}

RunConfig run_config_from_json(const json& j) {
  using json_detail::read;
  json_detail::reject_unknown(j, {"seed", "dataset_root", "output_dir", "folds", "fold_selection",
                                  "model", "train", "synth"},
                              "run config");
  RunConfig c;
  read(j, "seed", c.seed, "run config");
  read(j, "dataset_root", c.dataset_root, "run config");
  read(j, "output_dir", c.output_dir, "run config");
  read(j, "folds", c.folds, "run config");
  if (j.contains("fold_selection")) {
    const auto& sel = j["fold_selection"];
    if (!sel.is_array()) throw ConfigError("run config.fold_selection: expected an array");
    for (const auto& f : sel) {
      if (!f.is_number_unsigned()) {
        throw ConfigError("run config.fold_selection: expected non-negative integers");
      }
      c.fold_selection.push_back(f.get<std::size_t>());
    }
  }
  for (const char* section : {"model", "train"}) {
    if (j.contains(section) && j[section].is_object() && j[section].contains("seed")) {
      throw ConfigError(std::string("run config.") + section +
                        ".seed: set the seed once at the top level");
    }
  }
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    json_detail::reject_unknown(s, {"patients", "slices_per_patient", "height", "width",
                                    "photon_count"},
                                "synth");
    read(s, "patients", c.synth.patients, "synth");
    read(s, "slices_per_patient", c.synth.slices_per_patient, "synth");
    read(s, "height", c.synth.height, "synth");
    read(s, "width", c.synth.width, "synth");
    read(s, "photon_count", c.synth.photon_count, "synth");
  }
  c.apply_seed();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::vector<AblationArm> ablation_arms(const ModelConfig& base) {
  auto concat = base.with_divisors({16, 8, 1});
  concat.fusion_mode = FusionMode::concat;
  auto gated = base.with_divisors({16, 8, 1});
  gated.fusion_mode = FusionMode::gated;
  auto small = base.with_divisors({32, 16, 2});
  small.fusion_mode = FusionMode::gated;
  return {{"baseline_16_8_1_gated", gated},
          {"small_32_16_2_gated", small},
          {"concat_16_8_1", concat}};
}

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  // synth
  std::optional<std::size_t> patients, slices, size, height, width;
  std::optional<double> photon_count;
  // train / eval / ablate
  std::optional<std::string> data;
  std::optional<std::size_t> folds, epochs;
  std::vector<std::size_t> fold;
  // denoise / eval
  std::string checkpoint, input, output, reference, baseline, format, hu_csv;
  bool no_diff = false;
};

std::string join_divisors(const std::vector<std::size_t>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "/" : "") + std::to_string(d[i]);
  return s;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

double finite_or_nan(double v) { return std::isfinite(v) ? v : std::nan(""); }

json metric_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

// Applies overrides to the loaded config, then validates it. Nothing touches
// the filesystem before this returns.
RunConfig resolve(const Options& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.data) cfg.dataset_root = *o.data;
  if (o.folds) cfg.folds = *o.folds;
  if (!o.fold.empty()) cfg.fold_selection = o.fold;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.patients) cfg.synth.patients = *o.patients;
  if (o.slices) cfg.synth.slices_per_patient = *o.slices;
  if (o.size) cfg.synth.height = cfg.synth.width = *o.size;
  if (o.height) cfg.synth.height = *o.height;
  if (o.width) cfg.synth.width = *o.width;
  if (o.photon_count) cfg.synth.photon_count = *o.photon_count;
  cfg.synth.window = cfg.train.hu_window;
  cfg.apply_seed();
  cfg.validate();
  return cfg;
}

std::vector<std::size_t> selected_folds(const RunConfig& cfg) {
  if (!cfg.fold_selection.empty()) {
    std::set<std::size_t> s(cfg.fold_selection.begin(), cfg.fold_selection.end());
    return {s.begin(), s.end()};
  }
  std::vector<std::size_t> all(cfg.folds);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

Image2D load_input_image(const fs::path& path, const HuWindow& window) {
  const auto ext = path.extension().string();
  if (ext == ".raw") return window_normalize(to_hounsfield(read_slice(path)), window);
  if (ext == ".csv") return import_csv(path);
  if (ext == ".png") return import_png(path);
  throw UsageError("unsupported input '" + path.string() + "' (expected .raw, .csv or .png)");
}

std::function<Image2D(const Image2D&)> make_denoiser(const Options& o,
                                                     std::optional<ModelConfig>* used_model) {
  if (!o.baseline.empty()) {
    const FilterSpec spec = FilterSpec::defaults(filter_kind_from_string(o.baseline));
    return [spec](const Image2D& img) { return apply_filter(img, spec); };
  }
  if (!o.checkpoint.empty()) {
    auto weights = std::make_shared<ModelWeights<float>>(load_checkpoint(o.checkpoint));
    if (used_model) *used_model = weights->config();
    return [weights](const Image2D& img) { return denoise_image(*weights, img); };
  }
  return {};
}

int cmd_synth(const Options& o, std::ostream& out) {
  RunConfig cfg = resolve(o);
  const fs::path root = o.out ? fs::path(*o.out) : fs::path(cfg.dataset_root);
  generate_synthetic_dataset(root, cfg.synth);
  out << "wrote " << cfg.synth.patients << " patients x " << cfg.synth.slices_per_patient
      << " slices (" << cfg.synth.height << "x" << cfg.synth.width << ", photon count "
      << cfg.synth.photon_count << ") to " << root.string() << '\n';
  return kExitOk;
}

struct FoldOutcome {
  std::size_t fold = 0;
  std::vector<std::string> val_patients;
  PairMetrics noisy, model;
};

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const PairedDataset ds = scan_dataset(cfg.dataset_root);
  for (const auto& w : ds.warnings) out << "warning: " << w << '\n';
  const auto splits = split_folds(ds.patients(), cfg.folds, cfg.seed);
  const fs::path root(cfg.output_dir);
  fs::create_directories(root);
  write_json(root / "run_config.json", to_json(cfg));

  std::vector<FoldOutcome> outcomes;
  for (std::size_t f : selected_folds(cfg)) {
    const auto& split = splits[f];
    const auto train_pairs = load_pairs(ds, cfg.train.hu_window, split.train_patients);
    const auto val_pairs = load_pairs(ds, cfg.train.hu_window, split.val_patients);
    out << "fold " << f << ": " << train_pairs.size() << " training / " << val_pairs.size()
        << " validation slices\n";
    const auto result = train(build_model<float>(cfg.model), train_pairs, cfg.train, val_pairs,
                              [&](const EpochRecord& r) {
                                out << "  epoch " << r.epoch + 1 << "/" << cfg.train.epochs
                                    << " lr " << r.lr << " loss " << r.train_loss << " val psnr "
                                    << format_metric(r.val_psnr, 3) << " ssim "
                                    << format_metric(r.val_ssim, 4) << '\n';
                              });
    const fs::path dir = root / ("fold_" + std::to_string(f));
    fs::create_directories(dir);
    save_checkpoint(dir / "model.ckpt", result.weights);
    auto trace = open_out(dir / "trace.csv");
    write_trace_csv(trace, result.trace);
    outcomes.push_back({f, split.val_patients, evaluate_noisy(val_pairs),
                        {result.trace.back().val_psnr, result.trace.back().val_ssim}});
  }

  auto summary = open_out(root / "summary.csv");
  summary.precision(10);
  summary << "fold,val_patients,noisy_psnr,noisy_ssim,psnr,ssim\n";
  std::vector<double> p, s, np, ns;
  for (const auto& r : outcomes) {
    std::string ids;
    for (const auto& id : r.val_patients) ids += (ids.empty() ? "" : ";") + id;
    summary << r.fold << ',' << ids << ',' << format_metric(r.noisy.psnr, 6) << ','
            << format_metric(r.noisy.ssim, 6) << ',' << format_metric(r.model.psnr, 6) << ','
            << format_metric(r.model.ssim, 6) << '\n';
    p.push_back(r.model.psnr);
    s.push_back(r.model.ssim);
    np.push_back(r.noisy.psnr);
    ns.push_back(r.noisy.ssim);
  }
  const Summary sp = summarize(p), ss = summarize(s), snp = summarize(np), sns = summarize(ns);
  summary << "mean,," << format_metric(snp.mean, 6) << ',' << format_metric(sns.mean, 6) << ','
          << format_metric(sp.mean, 6) << ',' << format_metric(ss.mean, 6) << '\n';
  summary << "std,," << format_metric(snp.stddev, 6) << ',' << format_metric(sns.stddev, 6) << ','
          << format_metric(sp.stddev, 6) << ',' << format_metric(ss.stddev, 6) << '\n';
  out << "validation PSNR " << format_metric(sp.mean, 3) << " +- " << format_metric(sp.stddev, 3)
      << " dB, SSIM " << format_metric(ss.mean, 4) << " +- " << format_metric(ss.stddev, 4)
      << " (noisy input " << format_metric(snp.mean, 3) << " dB / "
      << format_metric(sns.mean, 4) << ")\n";
  return kExitOk;
}

int cmd_denoise(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  if (o.checkpoint.empty() == o.baseline.empty()) {
    throw UsageError("denoise needs exactly one of --checkpoint or --baseline");
  }
  const fs::path output(o.output);
  ExportFormat format = ExportFormat::png16;
  if (!o.format.empty()) {
    format = export_format_from_string(o.format);
  } else if (output.extension() == ".csv") {
    format = ExportFormat::csv;
  }
  const Image2D input = load_input_image(o.input, cfg.train.hu_window);
  const auto denoiser = make_denoiser(o, nullptr);
  const Image2D result = denoiser(input);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  export_image(result, output, format);
  if (!o.hu_csv.empty()) {
    export_image(denormalize(result, cfg.train.hu_window), o.hu_csv, ExportFormat::csv);
  }
  out << "denoised " << o.input << " (" << result.height << "x" << result.width << ") -> "
      << output.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  if (!o.checkpoint.empty() && !o.baseline.empty()) {
    throw UsageError("eval takes at most one of --checkpoint or --baseline");
  }
  if (o.input.empty() != o.reference.empty()) {
    throw UsageError("--input and --reference go together");
  }

  struct Row {
    std::string id;
    Image2D output, clean;
  };
  std::vector<Row> rows;
  std::optional<ModelConfig> loaded;
  const auto denoiser = make_denoiser(o, &loaded);
  auto process = [&](const Image2D& img) { return denoiser ? denoiser(img) : img; };

  if (!o.input.empty()) {
    const Image2D in = load_input_image(o.input, cfg.train.hu_window);
    const Image2D ref = load_input_image(o.reference, cfg.train.hu_window);
    rows.push_back({fs::path(o.input).filename().string(), process(in), ref});
  } else {
    const PairedDataset ds = scan_dataset(cfg.dataset_root);
    for (const auto& w : ds.warnings) out << "warning: " << w << '\n';
    std::set<std::string> wanted;
    if (!o.fold.empty() || !cfg.fold_selection.empty()) {
      const auto splits = split_folds(ds.patients(), cfg.folds, cfg.seed);
      for (auto f : selected_folds(cfg))
        wanted.insert(splits[f].val_patients.begin(), splits[f].val_patients.end());
    }
    for (const auto& pair : ds.pairs) {
      if (!wanted.empty() && !wanted.count(pair.patient_id)) continue;
      const auto images = load_pair(pair, cfg.train.hu_window);
      char id[64];
      std::snprintf(id, sizeof(id), "%s/%04d", pair.patient_id.c_str(), pair.slice_index);
      rows.push_back({id, process(images.noisy), images.clean});
    }
  }

  if (rows.empty()) throw EmptyDatasetError("no slices selected for evaluation");
  const fs::path root(cfg.output_dir);
  fs::create_directories(root);
  const std::size_t h = rows.front().clean.height, w = rows.front().clean.width;
  // Model cost is only reported when a model produced the outputs.
  json complexity_json = nullptr;
  std::string complexity_text;
  if (loaded) {
    MetricReport complexity;
    complexity.params_m = static_cast<double>(count_params(*loaded)) / 1e6;
    complexity.gflops = count_flops(*loaded, h, w);
    complexity.energy_per_inference = energy_per_inference(complexity.gflops);
    complexity_json = {{"config", patchdenoise::to_json(*loaded)},
                       {"image_size", {h, w}},
                       {"params_m", complexity.params_m},
                       {"gflops", complexity.gflops},
                       {"energy_per_inference", complexity.energy_per_inference},
                       {"energy_unit", "GFlops/Watt"}};
    complexity_text = "; params " + format_metric(complexity.params_m, 4) + " M, " +
                      format_metric(complexity.gflops, 4) + " GFLOPs";
  }

  auto csv = open_out(root / "eval.csv");
  csv << "slice,psnr,ssim,rmse\n";
  json per_slice = json::array();
  std::vector<double> p, s, r;
  if (!o.no_diff) fs::create_directories(root / "diff");
  for (const auto& row : rows) {
    const double vp = psnr(row.output, row.clean), vs = ssim(row.output, row.clean),
                 vr = rmse(row.output, row.clean);
    p.push_back(vp);
    s.push_back(vs);
    r.push_back(vr);
    csv << row.id << ',' << format_metric(vp, 6) << ',' << format_metric(vs, 6) << ','
        << format_metric(vr, 6) << '\n';
    per_slice.push_back({{"slice", row.id}, {"psnr", metric_json(vp)}, {"ssim", vs}, {"rmse", vr}});
    if (!o.no_diff) {
      Image2D diff(row.clean.height, row.clean.width);
      for (std::size_t i = 0; i < diff.size(); ++i)
        diff.values[i] = std::min(1.0, std::abs(row.output.values[i] - row.clean.values[i]));
      std::string name = row.id;
      for (auto& c : name)
        if (c == '/') c = '_';
      export_image(diff, root / "diff" / (name + ".png"), ExportFormat::png8);
    }
  }
  const Summary sp = summarize(p), ss = summarize(s), sr = summarize(r);
  csv << "mean," << format_metric(sp.count ? sp.mean : kInfinitePsnr, 6) << ','
      << format_metric(ss.mean, 6) << ',' << format_metric(sr.mean, 6) << '\n';
  csv << "std," << format_metric(sp.stddev, 6) << ',' << format_metric(ss.stddev, 6) << ','
      << format_metric(sr.stddev, 6) << '\n';

  const json report = {
      {"method", !o.baseline.empty() ? o.baseline : (!o.checkpoint.empty() ? "model" : "identity")},
      {"slices", per_slice},
      {"aggregate",
       {{"psnr_mean", metric_json(sp.count ? sp.mean : kInfinitePsnr)},
        {"psnr_std", metric_json(finite_or_nan(sp.stddev))},
        {"psnr_finite_count", sp.count},
        {"ssim_mean", ss.mean},
        {"ssim_std", ss.stddev},
        {"rmse_mean", sr.mean},
        {"rmse_std", sr.stddev}}},
      {"complexity", complexity_json}};
  write_json(root / "eval.json", report);
  out << rows.size() << " slices: PSNR " << format_metric(sp.count ? sp.mean : kInfinitePsnr, 3)
      << " dB, SSIM " << format_metric(ss.mean, 4) << ", RMSE " << format_metric(sr.mean, 5)
      << complexity_text << '\n';
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const auto arms = ablation_arms(cfg.model);
  for (const auto& arm : arms) {
    try {
      arm.model.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("ablation arm " + arm.name + ": " + e.what());
    }
  }
  const PairedDataset ds = scan_dataset(cfg.dataset_root);
  for (const auto& w : ds.warnings) out << "warning: " << w << '\n';
  const auto splits = split_folds(ds.patients(), cfg.folds, cfg.seed);
  const std::size_t fold = selected_folds(cfg).front();
  const auto train_pairs = load_pairs(ds, cfg.train.hu_window, splits[fold].train_patients);
  const auto val_pairs = load_pairs(ds, cfg.train.hu_window, splits[fold].val_patients);
  const PairMetrics noisy = evaluate_noisy(val_pairs);
  const std::size_t h = val_pairs.front().clean.height, w = val_pairs.front().clean.width;

  const fs::path root(cfg.output_dir);
  fs::create_directories(root);
  auto csv = open_out(root / "ablation.csv");
  csv << "arm,divisors,fusion,params,pfe_params,pfm_params,pcm_params,gflops,noisy_psnr,psnr,"
         "noisy_ssim,ssim\n";
  json rows = json::array();
  for (const auto& arm : arms) {
    out << "arm " << arm.name << " (" << join_divisors(arm.model.divisors()) << ", "
        << to_string(arm.model.fusion_mode) << ")\n";
    const auto result = train(build_model<float>(arm.model), train_pairs, cfg.train, val_pairs);
    const auto& last = result.trace.back();
    const auto parts = count_params_by_module(arm.model);
    const double gflops = count_flops(arm.model, h, w);
    const fs::path dir = root / arm.name;
    fs::create_directories(dir);
    auto trace = open_out(dir / "trace.csv");
    write_trace_csv(trace, result.trace);
    csv << arm.name << ',' << join_divisors(arm.model.divisors()) << ','
        << to_string(arm.model.fusion_mode) << ',' << parts.total() << ',' << parts.pfe << ','
        << parts.pfm << ',' << parts.pcm << ',' << format_metric(gflops, 6) << ','
        << format_metric(noisy.psnr, 6) << ',' << format_metric(last.val_psnr, 6) << ','
        << format_metric(noisy.ssim, 6) << ',' << format_metric(last.val_ssim, 6) << '\n';
    rows.push_back({{"arm", arm.name},
                    {"divisors", arm.model.divisors()},
                    {"fusion", to_string(arm.model.fusion_mode)},
                    {"params", parts.total()},
                    {"pfe_params", parts.pfe},
                    {"pfm_params", parts.pfm},
                    {"pcm_params", parts.pcm},
                    {"gflops", gflops},
                    {"psnr", metric_json(last.val_psnr)},
                    {"ssim", metric_json(last.val_ssim)}});
    out << "  PSNR " << format_metric(last.val_psnr, 3) << " dB (noisy "
        << format_metric(noisy.psnr, 3) << "), SSIM " << format_metric(last.val_ssim, 4)
        << ", params " << parts.total() << '\n';
  }
  write_json(root / "ablation.json",
             {{"fold", fold},
              {"epochs", cfg.train.epochs},
              {"seed", cfg.seed},
              {"noisy_psnr", metric_json(noisy.psnr)},
              {"noisy_ssim", noisy.ssim},
              {"arms", rows}});
  return kExitOk;
}

int cmd_show_config(const Options& o, std::ostream& out) {
  out << to_json(resolve(o)).dump(2) << '\n';
  return kExitOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DivergedError*>(&e)) return kExitDiverged;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return kExitUsage;
  }
  return kExitData;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale patch-based CT denoiser", "patchdenoise"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "Run configuration (JSON)");
  app.add_option("--seed", o.seed, "Seed for initialisation, shuffling and synthesis");
  app.add_option("--out", o.out, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  synth->add_option("--patients", o.patients, "Number of patients (default 4)");
  synth->add_option("--slices", o.slices, "Slices per patient (default 25)");
  synth->add_option("--size", o.size, "Square slice size (default 128)");
  synth->add_option("--height", o.height, "Slice height");
  synth->add_option("--width", o.width, "Slice width");
  synth->add_option("--photon-count", o.photon_count, "Poisson photon count (default 1000)");

  auto* train_cmd = app.add_subcommand("train", "Patient-wise k-fold training");
  train_cmd->add_option("--data", o.data, "Dataset root");
  train_cmd->add_option("--folds", o.folds, "Number of folds (default 4)");
  train_cmd->add_option("--fold", o.fold, "Train only these folds (repeatable)");
  train_cmd->add_option("--epochs", o.epochs, "Epochs per fold (default 40)");

  auto* denoise = app.add_subcommand("denoise", "Denoise one slice or image");
  denoise->add_option("--checkpoint", o.checkpoint, "Trained model");
  denoise->add_option("--baseline", o.baseline, "Classical filter instead of the model: mean, median, gaussian, nlm");
  denoise->add_option("--input", o.input, "Input .raw slice, .csv or .png")->required();
  denoise->add_option("--output", o.output, "Output image")->required();
  denoise->add_option("--format", o.format, "png8, png16 or csv (default from extension, else png16)");
  denoise->add_option("--hu-csv", o.hu_csv, "Also write the result in Hounsfield units as csv");

  auto* eval = app.add_subcommand("eval", "Metrics report over a dataset or an image pair");
  eval->add_option("--checkpoint", o.checkpoint, "Trained model (omit to score the inputs as-is)");
  eval->add_option("--baseline", o.baseline, "Classical filter: mean, median, gaussian, nlm");
  eval->add_option("--data", o.data, "Dataset root");
  eval->add_option("--folds", o.folds, "Number of folds used to pick validation patients");
  eval->add_option("--fold", o.fold, "Score only the validation patients of these folds");
  eval->add_option("--input", o.input, "Single image to score");
  eval->add_option("--reference", o.reference, "Clean reference for --input");
  eval->add_flag("--no-diff", o.no_diff, "Skip the |output - clean| difference images");

  auto* ablate = app.add_subcommand("ablate", "Train the three patch/fusion comparison arms");
  ablate->add_option("--data", o.data, "Dataset root");
  ablate->add_option("--folds", o.folds, "Number of folds");
  ablate->add_option("--fold", o.fold, "Fold to train and validate on (default 0)");
  ablate->add_option("--epochs", o.epochs, "Epochs per arm");

  auto* show = app.add_subcommand("show-config", "Print the effective configuration with defaults");

  for (auto* sub : {synth, train_cmd, denoise, eval, ablate, show}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (denoise->parsed()) return cmd_denoise(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (ablate->parsed()) return cmd_ablate(o, out);
    if (show->parsed()) return cmd_show_config(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"patchdenoise"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace patchdenoise::cli
