#include "tunet/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tunet/errors.hpp"

namespace tunet {

std::string to_string(Task task) { return task == Task::detect ? "detect" : "classify"; }

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename V>
V parse_value(const std::string& key, const std::string& text) {
  V v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::string format_real(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "task") {
    if (value == "detect") {
      task = Task::detect;
    } else if (value == "classify") {
      task = Task::classify;
    } else {
      throw ConfigError("task must be detect or classify, got '" + value + "'");
    }
  } else if (key == "cls") {
    cls = parse_value<int>(key, value);
  } else if (key == "seed") {
    train.seed = parse_value<std::uint64_t>(key, value);
    model.seed = train.seed;
  } else if (key == "precision") {
    train.precision = parse_value<int>(key, value);
  } else if (key == "batch_size") {
    train.batch_size = parse_value<std::size_t>(key, value);
  } else if (key == "epochs") {
    train.epochs = parse_value<std::size_t>(key, value);
  } else if (key == "lr") {
    train.lr_init = parse_value<double>(key, value);
  } else if (key == "lr_decay") {
    train.lr_decay = parse_value<double>(key, value);
  } else if (key == "decay_every") {
    train.decay_every = parse_value<std::size_t>(key, value);
  } else if (key == "max_grad_norm") {
    train.max_grad_norm = parse_value<double>(key, value);
  } else if (key == "input_channels") {
    model.input_channels = parse_value<std::size_t>(key, value);
  } else if (key == "series_length") {
    model.series_length = parse_value<std::size_t>(key, value);
  } else if (key == "depth") {
    model.depth = parse_value<std::size_t>(key, value);
  } else if (key == "base_channels") {
    model.base_channels = parse_value<std::size_t>(key, value);
  } else if (key == "conv_kernel") {
    model.conv_kernel = parse_value<std::size_t>(key, value);
  } else if (key == "normalize") {
    normalize = parse_bool(key, value);
  } else if (key == "data") {
    data = value;
  } else if (key == "out") {
    out = value;
  } else if (key == "checkpoint") {
    checkpoint = value;
  } else if (key == "series") {
    series = value;
  } else if (key == "labels") {
    labels = value;
  } else if (key == "eval_split") {
    if (value != "test" && value != "train") throw ConfigError("eval_split must be test or train");
    eval_split = value;
  } else if (key == "synth_train") {
    synth_train = parse_value<std::size_t>(key, value);
  } else if (key == "synth_test") {
    synth_test = parse_value<std::size_t>(key, value);
  } else if (key == "synth_noise") {
    synth_noise = parse_value<double>(key, value);
  } else if (key == "ap_thresholds") {
    ap_thresholds.clear();
    std::istringstream parts(value);
    for (std::string part; std::getline(parts, part, ',');) ap_thresholds.push_back(parse_value<double>(key, trim(part)));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    set(trim(text.substr(0, eq)), text.substr(eq + 1));
  }
}

void RunConfig::finalize() {
  if (cls < 1) throw ConfigError("cls must be >= 1");
  model.num_classes = task == Task::detect ? 2 : static_cast<std::size_t>(cls) + 1;
  model.seed = train.seed;
  model.validate();
  train.validate();
  for (const double a : ap_thresholds) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("ap_thresholds must lie in [0, 1]");
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::string thresholds;
  for (std::size_t i = 0; i < ap_thresholds.size(); ++i) {
    if (i > 0) thresholds += ",";
    thresholds += format_real(ap_thresholds[i]);
  }
  return {
      {"task", to_string(task)},
      {"cls", std::to_string(cls)},
      {"seed", std::to_string(train.seed)},
      {"precision", std::to_string(train.precision)},
      {"batch_size", std::to_string(train.batch_size)},
      {"epochs", std::to_string(train.epochs)},
      {"lr", format_real(train.lr_init)},
      {"lr_decay", format_real(train.lr_decay)},
      {"decay_every", std::to_string(train.decay_every)},
      {"max_grad_norm", format_real(train.max_grad_norm)},
      {"input_channels", std::to_string(model.input_channels)},
      {"series_length", std::to_string(model.series_length)},
      {"depth", std::to_string(model.depth)},
      {"base_channels", std::to_string(model.base_channels)},
      {"conv_kernel", std::to_string(model.conv_kernel)},
      {"normalize", normalize ? "true" : "false"},
      {"data", data.string()},
      {"out", out.string()},
      {"checkpoint", checkpoint.string()},
      {"series", series.string()},
      {"labels", labels.string()},
      {"eval_split", eval_split},
      {"synth_train", std::to_string(synth_train)},
      {"synth_test", std::to_string(synth_test)},
      {"synth_noise", format_real(synth_noise)},
      {"ap_thresholds", thresholds},
  };
}

}  // namespace tunet
