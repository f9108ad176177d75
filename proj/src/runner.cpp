#include "c2mf/runner.hpp"

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

#include "c2mf/benchmark.hpp"
#include "c2mf/dataset_io.hpp"
#include "c2mf/errors.hpp"
#include "c2mf/serialize.hpp"
#include "c2mf/text.hpp"
#include "c2mf/training.hpp"

namespace c2mf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Registers every file this run creates so failures leave no partial output.
class ArtifactTracker {
 public:
  void created(const fs::path& p) { files_.push_back(p); }
  void rollback() {
    for (const auto& p : files_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

 private:
  std::vector<fs::path> files_;
};

json load_config(const RunConfig& rc) {
  if (rc.config_path.empty()) return json::object();
  json j = json::parse(io::read_file(rc.config_path), nullptr, false);
  if (j.is_discarded()) throw UsageError("malformed config JSON: " + rc.config_path);
  return j;
}

// CLI flags override the file values.
void apply_overrides(json& cfg, const RunConfig& rc) {
  if (rc.seed) {
    cfg["data"]["seed"] = *rc.seed;
    cfg["train"]["seed"] = *rc.seed;
  }
  if (rc.method) cfg["train"]["method"] = *rc.method;
  if (rc.regime) cfg["train"]["regime"] = *rc.regime;
  if (!rc.lambda_test.empty()) cfg["sweep"]["lambda_test"] = rc.lambda_test;
}

bench::SyntheticSpec synthetic_spec_from(const json& data) {
  const int M = data.value("num_modalities", 2);
  const int K = data.value("num_classes", 10);
  std::vector<int> dims =
      data.value("feature_dims", std::vector<int>(M, 8));
  const auto sizes = data.value("sizes", std::vector<int>{5000, 1000, 2000});
  if (sizes.size() != 3) throw UsageError("data.sizes must have 3 entries");
  return bench::make_separated_spec(
      M, K, dims, data.value("mean_scale", 3.0), data.value("std", 0.3),
      sizes[0], sizes[1], sizes[2], data.value("seed", std::uint64_t{1}),
      data.value("min_separation_stds", 6.0));
}

bench::ConflictSpec conflict_spec_from(const json& data) {
  bench::ConflictSpec spec;
  if (!data.contains("conflict")) return spec;
  const json& c = data.at("conflict");
  spec.class_sets = c.value("class_sets", std::vector<std::vector<int>>{});
  spec.donor_classes = c.value("donor_classes", std::vector<std::vector<int>>{});
  spec.lambda_train = c.value("lambda_train", 0.7);
  spec.lambda_test = c.value("lambda_test", 1.0);
  spec.seed = c.value("seed", std::uint64_t{1});
  return spec;
}

std::uint64_t lambda_seed(const bench::ConflictSpec& spec, std::string_view split,
                          double lambda) {
  return derive_seed(spec.seed, split, std::bit_cast<std::uint64_t>(lambda));
}

TrainConfig train_config_from(const json& train) {
  TrainConfig cfg;
  cfg.regime = regime_from_name(train.value("regime", "decoupled"));
  cfg.mu = train.value("mu", 1.0);
  cfg.learning_rate = train.value("learning_rate", 1e-3);
  cfg.batch_size = train.value("batch_size", 64);
  cfg.epochs = train.value("epochs", 100);
  cfg.patience = train.value("patience", 10);
  cfg.seed = train.value("seed", std::uint64_t{1});
  return cfg;
}

ModelConfig model_config_from(const json& cfg, const Dataset& data) {
  ModelConfig mc;
  mc.num_modalities = data.num_modalities;
  mc.num_classes = data.num_classes;
  mc.feature_dims = data.feature_dims;
  const json model = cfg.value("model", json::object());
  mc.encoder_hidden = model.value("encoder_hidden", mc.encoder_hidden);
  mc.d_h = model.value("d_h", mc.d_h);
  mc.aggregator_hidden = model.value("aggregator_hidden", mc.aggregator_hidden);
  mc.d_z = model.value("d_z", mc.d_z);
  mc.hypernet_hidden = model.value("hypernet_hidden", mc.hypernet_hidden);
  if (model.contains("circuit")) {
    const json& jc = model.at("circuit");
    mc.circuit.depth = jc.value("depth", mc.circuit.depth);
    mc.circuit.num_sums = jc.value("num_sums", mc.circuit.num_sums);
    mc.circuit.num_repetitions =
        jc.value("num_repetitions", mc.circuit.num_repetitions);
  }
  const json train = cfg.value("train", json::object());
  mc.method = fusion::method_from_name(train.value("method", "c2dpc"));
  mc.seed = train.value("seed", std::uint64_t{1});
  return mc;
}

void ensure_out_dir(const RunConfig& rc) {
  if (rc.out_dir.empty()) throw UsageError("--out is required for this command");
  std::error_code ec;
  fs::create_directories(rc.out_dir, ec);
  if (ec) throw DataError("cannot create output directory: " + rc.out_dir);
}

// ---- results table ----------------------------------------------------------

std::string fmt_opt(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::string results_header(int M) {
  std::string h =
      "method,regime,lambda_test,seed,n_test,n_corrupted,accuracy,"
      "macro_precision,macro_recall,macro_f1,rmis_overall";
  for (int m = 0; m < M; ++m) h += ",rmis_m" + std::to_string(m);
  for (int m = 0; m < M; ++m) h += ",mean_csic_m" + std::to_string(m);
  return h;
}

void append_results_row(const fs::path& csv_path, ArtifactTracker& tracker,
                        int M, const std::string& row) {
  const std::string magic = "# c2mf-results v1";
  const std::string header = results_header(M);
  if (!fs::exists(csv_path)) {
    io::write_file(csv_path.string(), magic + "\n" + header + "\n" + row + "\n");
    tracker.created(csv_path);
    return;
  }
  {
    std::ifstream in(csv_path);
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    if (l1 != magic || l2 != header)
      throw DataError("existing results file has a different schema: " +
                      csv_path.string());
  }
  std::ofstream out(csv_path, std::ios::app);
  out << row << "\n";
  if (!out) throw DataError("append failed: " + csv_path.string());
}

void append_jsonl(const fs::path& path, ArtifactTracker& tracker, const json& j) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  out << j.dump() << "\n";
  if (!out) throw DataError("append failed: " + path.string());
  if (fresh) tracker.created(path);
}

// ---- commands ---------------------------------------------------------------

int cmd_gen_data(const RunConfig& rc, json cfg, ArtifactTracker& tracker,
                 std::ostream& out) {
  ensure_out_dir(rc);
  const json data_cfg = cfg.value("data", json::object());
  const bench::SyntheticSpec spec = synthetic_spec_from(data_cfg);
  const bench::ConflictSpec conflict = conflict_spec_from(data_cfg);

  bench::SyntheticData splits = bench::generate_synthetic(spec);
  if (!conflict.class_sets.empty()) {
    splits.train = bench::apply_conflict(splits.train, conflict,
                                         conflict.lambda_train,
                                         lambda_seed(conflict, "train", conflict.lambda_train));
    splits.val = bench::apply_conflict(splits.val, conflict, conflict.lambda_train,
                                       lambda_seed(conflict, "val", conflict.lambda_train));
  }

  json sidecar;
  sidecar["format"] = "c2mf-dataset-meta";
  sidecar["version"] = 1;
  sidecar["data"] = data_cfg;
  const std::string meta = sidecar.dump();

  const fs::path dir(rc.out_dir);
  for (const auto& [name, split] :
       {std::pair<const char*, const Dataset*>{"train.csv", &splits.train},
        {"val.csv", &splits.val},
        {"test.csv", &splits.test}}) {
    const fs::path p = dir / name;
    io::save_dataset(p.string(), *split, meta);
    tracker.created(p);
  }
  const fs::path sp = dir / "dataset.json";
  io::write_file(sp.string(), sidecar.dump(1) + "\n");
  tracker.created(sp);
  out << "gen-data: wrote " << splits.train.size() << "/" << splits.val.size()
      << "/" << splits.test.size() << " instances to " << rc.out_dir << "\n";
  return 0;
}

json load_dataset_sidecar(const std::string& data_dir) {
  const fs::path p = fs::path(data_dir) / "dataset.json";
  json j = json::parse(io::read_file(p.string()), nullptr, false);
  if (j.is_discarded()) throw DataError("malformed dataset sidecar: " + p.string());
  return j;
}

int cmd_train(const RunConfig& rc, json cfg, ArtifactTracker& tracker,
              std::ostream& out) {
  if (rc.data_dir.empty()) throw UsageError("--data is required for train");
  ensure_out_dir(rc);
  const Dataset train_split =
      io::load_dataset((fs::path(rc.data_dir) / "train.csv").string());
  const Dataset val_split =
      io::load_dataset((fs::path(rc.data_dir) / "val.csv").string());

  const TrainConfig tc = train_config_from(cfg.value("train", json::object()));
  C2mfModel model(model_config_from(cfg, train_split));
  const TrainReport report = train(model, train_split, val_split, tc);

  json meta;
  meta["config"] = cfg;
  meta["data_dir"] = rc.data_dir;
  meta["regime"] = std::string(regime_name(tc.regime));
  const fs::path dir(rc.out_dir);
  const fs::path ckpt = dir / "checkpoint.json";
  io::save_checkpoint(ckpt.string(), model, meta);
  tracker.created(ckpt);

  json log;
  log["format"] = "c2mf-train-log";
  log["version"] = 1;
  log["config"] = cfg;
  log["checkpoint"] = ckpt.filename().string();
  log["best_epoch"] = report.best_epoch;
  json epochs = json::array();
  for (const EpochStats& e : report.epochs) {
    epochs.push_back({{"phase", e.phase},
                      {"epoch", e.epoch},
                      {"train_lf", e.train_lf},
                      {"train_lu", e.train_lu},
                      {"train_ltotal", e.train_ltotal},
                      {"train_acc", e.train_acc},
                      {"val_lf", e.val_lf},
                      {"val_lu", e.val_lu},
                      {"val_ltotal", e.val_ltotal},
                      {"val_acc", e.val_acc}});
  }
  log["epochs"] = std::move(epochs);
  const fs::path logp = dir / "train_log.json";
  io::write_file(logp.string(), log.dump(1) + "\n");
  tracker.created(logp);

  // wall clock kept out of the deterministic artifacts
  const fs::path timing = dir / "timing.txt";
  io::write_file(timing.string(),
                 "wall_clock_sec=" + format_double(report.wall_clock_sec) + "\n");
  tracker.created(timing);

  out << "train: " << report.epochs.size() << " epochs, best "
      << report.best_epoch << ", checkpoint " << ckpt.string() << "\n";
  return 0;
}

struct EvalRow {
  double lambda;
  bench::Metrics metrics;
};

EvalRow evaluate_at_lambda(const C2mfModel& model, const Dataset& clean_test,
                           const bench::ConflictSpec& conflict, double lambda) {
  Dataset test = clean_test;
  if (lambda > 0.0 && !conflict.class_sets.empty())
    test = bench::apply_conflict(clean_test, conflict, lambda,
                                 lambda_seed(conflict, "test", lambda));
  const EvalOutputs outs = evaluate_model(model, test);
  std::vector<int> labels(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) labels[i] = test.instances[i].label;
  bench::Metrics m =
      bench::classification_metrics(outs.fused, labels, test.num_classes);
  bench::add_rmis(m, outs.reports, test);
  return {lambda, std::move(m)};
}

std::string results_row(const C2mfModel& model, const std::string& regime,
                        const EvalRow& r, int M) {
  std::ostringstream os;
  os << fusion::method_name(model.config().method) << "," << regime << ","
     << format_double(r.lambda) << "," << model.config().seed << ","
     << r.metrics.n_instances << "," << r.metrics.n_corrupted << ","
     << format_double(r.metrics.accuracy) << ","
     << format_double(r.metrics.macro_precision) << ","
     << format_double(r.metrics.macro_recall) << ","
     << format_double(r.metrics.macro_f1) << "," << fmt_opt(r.metrics.rmis_overall);
  for (int m = 0; m < M; ++m) os << "," << fmt_opt(r.metrics.rmis_by_modality[m]);
  for (int m = 0; m < M; ++m) os << "," << format_double(r.metrics.mean_csic[m]);
  return os.str();
}

int cmd_eval_or_sweep(const RunConfig& rc, json cfg, ArtifactTracker& tracker,
                      std::ostream& out, bool sweep) {
  if (rc.checkpoint_path.empty()) throw UsageError("--checkpoint is required");
  if (rc.data_dir.empty()) throw UsageError("--data is required");
  ensure_out_dir(rc);

  json ckpt_meta;
  const C2mfModel model = io::load_checkpoint(rc.checkpoint_path, &ckpt_meta);
  const std::string regime = ckpt_meta.value("regime", "-");
  const Dataset clean_test =
      io::load_dataset((fs::path(rc.data_dir) / "test.csv").string());
  const json sidecar = load_dataset_sidecar(rc.data_dir);
  const bench::ConflictSpec conflict =
      conflict_spec_from(sidecar.value("data", json::object()));

  std::vector<double> grid;
  if (!rc.lambda_test.empty()) grid = rc.lambda_test;
  else if (sweep)
    grid = cfg.value("sweep", json::object())
               .value("lambda_test", std::vector<double>{0.0, 0.5, 0.75, 1.0});
  else
    grid = {conflict.lambda_test};
  if (!sweep && grid.size() > 1) grid.resize(1);

  // grid points run concurrently over the read-only model; rows are written
  // in grid order afterwards
  std::vector<std::future<EvalRow>> futs;
  futs.reserve(grid.size());
  for (double lam : grid)
    futs.push_back(std::async(std::launch::async, [&, lam] {
      return evaluate_at_lambda(model, clean_test, conflict, lam);
    }));

  const int M = clean_test.num_modalities;
  const fs::path dir(rc.out_dir);
  const fs::path csv = dir / "results.csv";
  const fs::path metap = dir / "results.meta.jsonl";
  const fs::path rmis_csv = dir / "rmis.csv";

  for (auto& fut : futs) {
    const EvalRow row = fut.get();
    append_results_row(csv, tracker, M, results_row(model, regime, row, M));
    json meta;
    meta["command"] = sweep ? "sweep" : "eval";
    meta["lambda_test"] = row.lambda;
    meta["checkpoint"] = rc.checkpoint_path;
    meta["data_dir"] = rc.data_dir;
    meta["config"] = cfg;
    meta["checkpoint_meta"] = ckpt_meta;
    append_jsonl(metap, tracker, meta);
    if (sweep) {
      std::ostringstream rrow;
      rrow << fusion::method_name(model.config().method) << ","
           << format_double(row.lambda) << "," << fmt_opt(row.metrics.rmis_overall);
      for (int m = 0; m < M; ++m)
        rrow << "," << fmt_opt(row.metrics.rmis_by_modality[m]);
      std::string header = "method,lambda_test,rmis_overall";
      for (int m = 0; m < M; ++m) header += ",rmis_m" + std::to_string(m);
      const std::string magic = "# c2mf-rmis v1";
      if (!fs::exists(rmis_csv)) {
        io::write_file(rmis_csv.string(),
                       magic + "\n" + header + "\n" + rrow.str() + "\n");
        tracker.created(rmis_csv);
      } else {
        std::ofstream app(rmis_csv, std::ios::app);
        app << rrow.str() << "\n";
      }
    }
    out << (sweep ? "sweep" : "eval") << " lambda=" << row.lambda
        << " acc=" << row.metrics.accuracy;
    if (row.metrics.rmis_overall) out << " rmis=" << *row.metrics.rmis_overall;
    out << "\n";
  }
  return 0;
}

int cmd_grad_check(const RunConfig& rc, json cfg, std::ostream& out) {
  const json data_cfg = cfg.value("data", json::object());
  json small = data_cfg;
  small["sizes"] = std::vector<int>{16, 8, 8};
  const bench::SyntheticSpec spec = synthetic_spec_from(small);
  const bench::ConflictSpec conflict = conflict_spec_from(small);
  bench::SyntheticData splits = bench::generate_synthetic(spec);
  if (!conflict.class_sets.empty())
    splits.train = bench::apply_conflict(splits.train, conflict,
                                         conflict.lambda_train,
                                         lambda_seed(conflict, "train", conflict.lambda_train));

  const TrainConfig tc = train_config_from(cfg.value("train", json::object()));
  C2mfModel model(model_config_from(cfg, splits.train));
  const std::span<const Instance> batch(splits.train.instances.data(), 4);
  const auto entries = gradient_check(model, batch, tc.mu);

  const double tol = rc.tolerance.value_or(1e-4);
  double worst = 0.0;
  out << "gradient check (central differences, h=1e-5, tolerance "
      << format_double(tol) << ")\n";
  for (const auto& e : entries) {
    worst = std::max(worst, e.max_rel_err);
    out << "  " << e.group << ": max_rel_err=" << format_double(e.max_rel_err)
        << " (" << e.checked << " scalars)\n";
  }
  out << "worst: " << format_double(worst) << (worst < tol ? " PASS" : " FAIL")
      << "\n";
  return worst < tol ? 0 : 3;
}

}  // namespace

int run(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  ArtifactTracker tracker;
  try {
    json cfg = load_config(rc);
    apply_overrides(cfg, rc);
    if (rc.command == "gen-data") return cmd_gen_data(rc, std::move(cfg), tracker, out);
    if (rc.command == "train") return cmd_train(rc, std::move(cfg), tracker, out);
    if (rc.command == "eval")
      return cmd_eval_or_sweep(rc, std::move(cfg), tracker, out, false);
    if (rc.command == "sweep")
      return cmd_eval_or_sweep(rc, std::move(cfg), tracker, out, true);
    if (rc.command == "grad-check") return cmd_grad_check(rc, std::move(cfg), out);
    throw UsageError("unknown command: " + rc.command);
  } catch (const UsageError& e) {
    tracker.rollback();
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    tracker.rollback();
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    tracker.rollback();
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace c2mf
