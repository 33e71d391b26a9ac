#include "tunet/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <streambuf>
#include <string>
#include <vector>

#include "tunet/checksum.hpp"
#include "tunet/dataset.hpp"
#include "tunet/errors.hpp"
#include "tunet/metrics.hpp"
#include "tunet/model.hpp"
#include "tunet/optimizer.hpp"

namespace tunet {
namespace {

// Duplicates everything written to it into two streams.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (traits_type::eq_int_type(c, traits_type::eof())) return traits_type::not_eof(c);
    const char ch = traits_type::to_char_type(c);
    if (a_->sputc(ch) == traits_type::eof() || b_->sputc(ch) == traits_type::eof()) return traits_type::eof();
    return c;
  }
  int sync() override { return (a_->pubsync() == 0 && b_->pubsync() == 0) ? 0 : -1; }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// Comment lines record the command, inputs and results; the remaining
// key=value lines are the resolved config and can be fed back via --config.
class RunManifest {
 public:
  explicit RunManifest(std::string command) { note("command", std::move(command)); }

  void note(const std::string& key, const std::string& value) { notes_.push_back("# " + key + "=" + value); }

  void input(const std::string& key, const std::filesystem::path& path, std::uint32_t crc) {
    note("input." + key, path.string() + " crc32=" + hex32(crc));
  }

  void write(const RunConfig& cfg) const {
    auto out = open_output(cfg.out / "run_manifest.txt");
    for (const auto& line : notes_) out << line << '\n';
    for (const auto& [key, value] : cfg.entries()) out << key << '=' << value << '\n';
    if (!out) throw IoError("write failed for run manifest in " + cfg.out.string());
  }

 private:
  std::vector<std::string> notes_;
};

LoadOptions load_options(const RunConfig& cfg) { return {cfg.model.input_channels, cfg.cls}; }

DatasetSplit task_labels(const DatasetSplit& split, Task task) {
  return task == Task::detect ? with_detection_labels(split) : split;
}

NormalizationStats to_stats(const InputNormalization& norm) { return {norm.mean, norm.stddev}; }

void check_length(const DatasetSplit& split, std::size_t expected) {
  for (const auto& s : split.series) {
    if (s.length != expected) {
      throw DataError("series " + s.series_id + ": has " + std::to_string(s.length) +
                      " samples, model expects " + std::to_string(expected));
    }
  }
}

EvalReport build_report(const SplitEvaluation& eval, const DatasetSplit& split, std::size_t num_classes,
                        const std::vector<double>& thresholds) {
  EvalReport report;
  report.pooled_accuracy = eval.pooled_accuracy;
  report.confusion = confusion({}, {}, num_classes);
  std::vector<double> accs;
  for (std::size_t i = 0; i < split.series.size(); ++i) {
    const auto& truth = split.series[i].labels;
    accs.push_back(per_series_accuracy(eval.predictions[i], truth));
    accumulate(report.confusion, eval.predictions[i], truth);
  }
  double sum = 0.0;
  for (const double a : accs) sum += a;
  report.mean_series_accuracy = accs.empty() ? 0.0 : sum / static_cast<double>(accs.size());
  report.ap = make_ap_report(accs, thresholds);
  return report;
}

template <typename T>
int train_impl(const RunConfig& cfg, std::ostream& out) {
  RunManifest manifest("train");
  manifest.input("data", cfg.data, corpus_crc32(cfg.data));
  const Dataset data = load_dataset(cfg.data, load_options(cfg));
  check_length(data.train, cfg.model.series_length);
  check_length(data.test, cfg.model.series_length);

  const DatasetSplit train = task_labels(cfg.normalize ? normalize(data.train) : data.train, cfg.task);
  const DatasetSplit test = task_labels(cfg.normalize ? normalize(data.test) : data.test, cfg.task);

  ParamStore<T> params = build<T>(cfg.model);
  auto log_file = open_output(cfg.out / "train_log.csv");
  TeeBuf tee_buf(log_file.rdbuf(), out.rdbuf());
  std::ostream tee(&tee_buf);
  out << "training " << train.series.size() << " series, " << params.total_values() << " parameters, "
      << cfg.train.epochs << " epochs, " << cfg.train.precision << "-bit\n";
  const auto reports = fit(params, train, cfg.model, cfg.train, &tee);
  tee.flush();

  InputNormalization norm;
  if (cfg.normalize) norm = {train.stats.mean, train.stats.stddev};
  const auto ckpt_path = cfg.out / "model.ckpt";
  save_checkpoint(params, cfg.model, ckpt_path, norm);
  manifest.note("output.checkpoint", ckpt_path.string() + " crc32=" + hex32(file_crc32(ckpt_path)));
  manifest.note("output.log", (cfg.out / "train_log.csv").string());

  const auto train_eval = evaluate_split(params, cfg.model, train, cfg.train.batch_size);
  manifest.note("result.train_loss", real(train_eval.mean_loss));
  manifest.note("result.train_accuracy", real(train_eval.pooled_accuracy));
  out << "train: loss " << real(train_eval.mean_loss) << " accuracy " << real(train_eval.pooled_accuracy) << '\n';
  if (!test.series.empty()) {
    const auto test_eval = evaluate_split(params, cfg.model, test, cfg.train.batch_size);
    manifest.note("result.test_loss", real(test_eval.mean_loss));
    manifest.note("result.test_accuracy", real(test_eval.pooled_accuracy));
    out << "test: loss " << real(test_eval.mean_loss) << " accuracy " << real(test_eval.pooled_accuracy) << '\n';
  }
  if (!reports.empty()) manifest.note("result.final_epoch_loss", real(reports.back().mean_loss));
  manifest.write(cfg);
  out << "checkpoint written to " << ckpt_path.string() << '\n';
  return kExitOk;
}

template <typename T>
int eval_impl(const RunConfig& cfg, std::ostream& out) {
  RunManifest manifest("eval");
  manifest.input("checkpoint", cfg.checkpoint, file_crc32(cfg.checkpoint));
  manifest.input("data", cfg.data, corpus_crc32(cfg.data));
  const auto ck = load_checkpoint<T>(cfg.checkpoint, cfg.model);
  const Dataset data = load_dataset(cfg.data, load_options(cfg));
  DatasetSplit split = cfg.eval_split == "train" ? data.train : data.test;
  if (split.series.empty()) throw DataError("manifest " + cfg.data.string() + " has no " + cfg.eval_split + " series");
  check_length(split, ck.config.series_length);
  if (!ck.normalization.empty()) {
    split.stats = to_stats(ck.normalization);
    split = normalize(split);
  }
  split = task_labels(split, cfg.task);

  const auto eval = evaluate_split(ck.params, ck.config, split, cfg.train.batch_size);
  const EvalReport report = build_report(eval, split, ck.config.num_classes, cfg.ap_thresholds);
  out << "evaluated " << split.series.size() << " " << cfg.eval_split << " series (" << to_string(cfg.task) << ")\n";
  write_report(out, report);
  auto metrics = open_output(cfg.out / "metrics.txt");
  write_report(metrics, report);
  manifest.note("result.pooled_accuracy", real(report.pooled_accuracy));
  manifest.note("result.mean_ap", real(report.ap.mean_ap));
  manifest.write(cfg);
  return kExitOk;
}

template <typename T>
int predict_impl(const RunConfig& cfg, std::ostream& out) {
  RunManifest manifest("predict");
  manifest.input("checkpoint", cfg.checkpoint, file_crc32(cfg.checkpoint));
  manifest.input("series", cfg.series, file_crc32(cfg.series));
  if (!cfg.labels.empty()) manifest.input("labels", cfg.labels, file_crc32(cfg.labels));
  const auto ck = load_checkpoint<T>(cfg.checkpoint, cfg.model);
  CsiSeries s = read_series(cfg.series.stem().string(), cfg.series, cfg.labels, load_options(cfg));
  if (!ck.normalization.empty()) s = normalize(s, to_stats(ck.normalization));

  const std::size_t n = s.length;
  Tensor3<T> x(1, s.carriers, n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < s.carriers; ++c) x(0, c, t) = static_cast<T>(s.at(t, c));
  }
  const auto pred = predict(ck.params, x, ck.config);
  const std::size_t k = ck.config.num_classes;

  auto conf = open_output(cfg.out / "confidence.csv");
  conf << "sample";
  for (std::size_t c = 0; c < k; ++c) conf << ",p" << c;
  conf << '\n';
  char buf[32];
  for (std::size_t t = 0; t < n; ++t) {
    conf << t;
    for (std::size_t c = 0; c < k; ++c) {
      std::snprintf(buf, sizeof(buf), ",%.6g", static_cast<double>(pred.confidences(0, c, t)));
      conf << buf;
    }
    conf << '\n';
  }
  auto labels = open_output(cfg.out / "labels.csv");
  labels << "sample,label\n";
  for (std::size_t t = 0; t < n; ++t) labels << t << ',' << pred.labels(0, t) << '\n';
  if (!conf || !labels) throw IoError("write failed in " + cfg.out.string());

  out << "predicted " << n << " samples into " << (cfg.out / "confidence.csv").string() << '\n';
  if (!cfg.labels.empty()) {
    std::vector<int> truth = cfg.task == Task::detect ? to_detection_labels(s.labels) : s.labels;
    std::vector<int> got(pred.labels.values.begin(), pred.labels.values.end());
    const double acc = per_series_accuracy(got, truth);
    out << "sample accuracy " << real(acc) << '\n';
    manifest.note("result.accuracy", real(acc));
  }
  manifest.write(cfg);
  return kExitOk;
}

}  // namespace

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error) != nullptr) return kExitConfig;
  if (dynamic_cast<const ShapeError*>(&error) != nullptr) return kExitConfig;
  if (dynamic_cast<const DivergenceError*>(&error) != nullptr) return kExitDivergence;
  if (dynamic_cast<const Error*>(&error) != nullptr) return kExitData;
  return kExitUsage;
}

std::uint32_t corpus_crc32(const std::filesystem::path& manifest) {
  std::uint32_t crc = file_crc32(manifest);
  std::ifstream in(manifest);
  const auto base = manifest.parent_path();
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> fields;
    std::istringstream parts(line);
    for (std::string f; std::getline(parts, f, ',');) fields.push_back(f);
    if (fields.size() != 4) continue;
    crc = file_crc32(base / fields[2], crc);
    crc = file_crc32(base / fields[3], crc);
  }
  return crc;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  ensure_dir(cfg.out);
  SynthOptions opts;
  opts.num_train = cfg.synth_train;
  opts.num_test = cfg.synth_test;
  opts.cls = cfg.cls;
  opts.length = cfg.model.series_length;
  opts.carriers = cfg.model.input_channels;
  opts.seed = cfg.train.seed;
  opts.noise = cfg.synth_noise;
  const SynthResult result = synth_generate(opts);
  const auto manifest_path = write_dataset(result.data, cfg.out);

  std::size_t action = 0;
  std::size_t total = 0;
  for (const auto* split : {&result.data.train, &result.data.test}) {
    for (const auto& s : split->series) {
      for (const int l : s.labels) action += l != 0 ? 1 : 0;
      total += s.labels.size();
    }
  }
  const std::uint32_t crc = corpus_crc32(manifest_path);
  out << "wrote " << result.data.train.series.size() << " train + " << result.data.test.series.size()
      << " test series (" << opts.length << " samples x " << opts.carriers << " carriers, " << opts.cls
      << " classes) to " << manifest_path.string() << '\n';
  out << "action sample fraction " << real(total == 0 ? 0.0 : static_cast<double>(action) / static_cast<double>(total))
      << '\n';
  out << "matched-filter class accuracy " << real(result.matched_filter_accuracy) << '\n';
  out << "corpus crc32 " << hex32(crc) << '\n';

  RunManifest manifest("synth");
  manifest.note("output.manifest", manifest_path.string() + " crc32=" + hex32(crc));
  manifest.note("result.matched_filter_accuracy", real(result.matched_filter_accuracy));
  manifest.write(cfg);
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  if (cfg.data.empty()) throw ConfigError("train needs a dataset manifest (data=...)");
  ensure_dir(cfg.out);
  return cfg.train.precision == 64 ? train_impl<double>(cfg, out) : train_impl<float>(cfg, out);
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.data.empty()) throw ConfigError("eval needs a dataset manifest (data=...)");
  if (cfg.checkpoint.empty()) throw ConfigError("eval needs a checkpoint (checkpoint=...)");
  ensure_dir(cfg.out);
  return cfg.train.precision == 64 ? eval_impl<double>(cfg, out) : eval_impl<float>(cfg, out);
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  if (cfg.series.empty()) throw ConfigError("predict needs a series file (series=...)");
  if (cfg.checkpoint.empty()) throw ConfigError("predict needs a checkpoint (checkpoint=...)");
  ensure_dir(cfg.out);
  return cfg.train.precision == 64 ? predict_impl<double>(cfg, out) : predict_impl<float>(cfg, out);
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, GradcheckFault fault) {
  ensure_dir(cfg.out);
  GradcheckOptions opts;
  opts.seeds.clear();
  for (std::uint64_t i = 1; i <= 5; ++i) opts.seeds.push_back(cfg.train.seed + i);
  opts.fault = fault;
  const GradcheckReport report = run_gradcheck(opts);
  write_gradcheck_report(out, report);
  auto file = open_output(cfg.out / "gradcheck.txt");
  write_gradcheck_report(file, report);

  RunManifest manifest("gradcheck");
  std::string seeds;
  for (const auto s : opts.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  manifest.note("gradcheck_seeds", seeds);
  if (fault != GradcheckFault::none) manifest.note("fault", "conv_backward");
  manifest.note("result.passed", report.passed() ? "true" : "false");
  manifest.note("result.worst_rel_err", real(report.worst_rel_err()));
  manifest.write(cfg);
  return report.passed() ? kExitOk : kExitGradcheck;
}

}  // namespace tunet
