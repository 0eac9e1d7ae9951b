#include "asc/config.h"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "asc/error.h"

namespace asc {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("invalid value '" + text + "' for " + key);
  return v;
}

template <>
bool parse_value<bool>(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

}  // namespace

RunConfig load_config(const fs::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  RunConfig cfg;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& v) {
    const fs::path p(v);
    return p.is_relative() ? base / p : p;
  };

  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto num = [](auto& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) {
      field = parse_value<std::decay_t<decltype(field)>>(k, v);
    };
  };
  const std::map<std::string, Setter> setters = {
      {"paths.manifest", [&](const std::string&, const std::string& v) { cfg.manifest = resolve(v); }},
      {"paths.cache_dir", [&](const std::string&, const std::string& v) { cfg.cache_dir = resolve(v); }},
      {"paths.out_dir", [&](const std::string&, const std::string& v) { cfg.out_dir = resolve(v); }},
      {"paths.split_dir", [&](const std::string&, const std::string& v) { cfg.split_dir = resolve(v); }},
      {"features.gammatone_bands", num(cfg.features.gammatone_bands)},
      {"features.gammatone_fmin", num(cfg.features.gammatone_fmin)},
      {"features.gammatone_fmax", num(cfg.features.gammatone_fmax)},
      {"features.mel_filters", num(cfg.features.mel_filters)},
      {"features.mfcc_coeffs", num(cfg.features.mfcc_coeffs)},
      {"features.mfcc_log_floor", num(cfg.features.mfcc_log_floor)},
      {"features.logfb_bands", num(cfg.features.logfb_bands)},
      {"features.logfb_fmin", num(cfg.features.logfb_fmin)},
      {"features.logfb_fmax", num(cfg.features.logfb_fmax)},
      {"features.background_percentile", num(cfg.features.background_percentile)},
      {"lte.iterations", num(cfg.lte.iterations)},
      {"lte.step", num(cfg.lte.step)},
      {"lte.reg", num(cfg.lte.reg)},
      {"model.widths",
       [&](const std::string& k, const std::string& v) {
         cfg.arch.widths.clear();
         for (const auto& item : split_list(v)) cfg.arch.widths.push_back(parse_value<int>(k, item));
       }},
      {"model.filters_per_width", num(cfg.arch.filters_per_width)},
      {"model.hidden", num(cfg.arch.hidden)},
      {"model.gru_layers", num(cfg.arch.gru_layers)},
      {"model.fusion_size", num(cfg.arch.fusion_size)},
      {"model.cnn_dropout", num(cfg.arch.cnn_dropout)},
      {"model.rnn_dropout", num(cfg.arch.rnn_dropout)},
      {"model.fusion_dropout", num(cfg.arch.fusion_dropout)},
      {"train.lambda", num(cfg.train.lambda)},
      {"train.learning_rate", num(cfg.train.learning_rate)},
      {"train.batch_size", num(cfg.train.batch_size)},
      {"train.epochs", num(cfg.train.epochs)},
      {"svm.c", num(cfg.svm.c_svm)},
      {"svm.epochs", num(cfg.svm.epochs)},
      {"eval.n_splits", num(cfg.n_splits)},
      {"eval.train_ratio", num(cfg.train_ratio)},
      {"eval.systems",
       [&](const std::string&, const std::string& v) {
         cfg.systems.clear();
         for (const auto& item : split_list(v)) cfg.systems.push_back(parse_system(item));
       }},
      {"synth.categories", num(cfg.synth_categories)},
      {"synth.per_category", num(cfg.synth_per_category)},
      {"synth.duration_s", num(cfg.synth_duration_s)},
      {"run.seed", num(cfg.seed)},
      {"run.jobs", num(cfg.jobs)},
      {"run.allow_any_rate", num(cfg.allow_any_rate)},
  };

  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw ConfigError("key '" + section + "' outside of a section");
    }
    for (const auto& [key, value] : entries) {
      const std::string full = section + "." + key;
      const auto it = setters.find(full);
      if (it == setters.end()) throw ConfigError("unknown config key '" + full + "'");
      it->second(full, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(features.gammatone_bands > 0 && features.mel_filters > 0 && features.logfb_bands > 0,
          "filterbank sizes must be positive");
  require(features.mfcc_coeffs > 0 && features.mfcc_coeffs <= features.mel_filters,
          "mfcc_coeffs must be in [1, mel_filters]");
  require(features.background_percentile >= 0.0 && features.background_percentile <= 1.0,
          "background_percentile must be in [0, 1]");
  require(lte.iterations > 0 && lte.step > 0.0 && lte.reg >= 0.0, "invalid lte settings");
  require(!arch.widths.empty(), "model.widths must not be empty");
  for (int w : arch.widths) require(w > 0, "filter widths must be positive");
  require(arch.filters_per_width > 0 && arch.hidden > 0 && arch.gru_layers > 0 && arch.fusion_size > 0,
          "model sizes must be positive");
  for (double r : {arch.cnn_dropout, arch.rnn_dropout, arch.fusion_dropout}) {
    require(r >= 0.0 && r < 1.0, "dropout rates must be in [0, 1)");
  }
  require(train.learning_rate > 0.0, "learning_rate must be positive");
  require(train.lambda >= 0.0, "lambda must be non-negative");
  require(train.batch_size > 0 && train.epochs >= 0, "invalid batch size or epoch count");
  require(svm.c_svm > 0.0 && svm.epochs > 0, "invalid svm settings");
  require(n_splits > 0, "n_splits must be positive");
  require(train_ratio > 0.0 && train_ratio < 1.0, "train_ratio must be in (0, 1)");
  require(!systems.empty(), "no systems selected");
  require(synth_categories >= 2 && synth_per_category >= 1, "synth needs >= 2 categories");
  require(synth_duration_s >= kSegmentSeconds, "synth duration must be at least 4 s");
  require(jobs >= 1, "jobs must be >= 1");
}

nlohmann::json RunConfig::to_json() const {
  std::vector<std::string> sys;
  for (System s : systems) sys.emplace_back(to_string(s));
  return {{"manifest", manifest.string()},
          {"cache_dir", cache_dir.string()},
          {"out_dir", out_dir.string()},
          {"split_dir", split_dir ? split_dir->string() : ""},
          {"features", features.to_json()},
          {"lte", {{"iterations", lte.iterations}, {"step", lte.step}, {"reg", lte.reg}}},
          {"model", arch.to_json()},
          {"train", train.to_json()},
          {"svm", {{"c", svm.c_svm}, {"epochs", svm.epochs}}},
          {"eval", {{"n_splits", n_splits}, {"train_ratio", train_ratio}, {"systems", sys}}},
          {"seed", seed}};
}

}  // namespace asc
