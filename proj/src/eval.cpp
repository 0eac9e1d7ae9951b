#include "asc/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "asc/error.h"
#include "asc/random.h"

namespace asc {

namespace fs = std::filesystem;

int Manifest::label_of(const SnippetRecord& r) const {
  const auto it = std::lower_bound(categories.begin(), categories.end(), r.category);
  if (it == categories.end() || *it != r.category) throw DataError("unknown category '" + r.category + "'");
  return static_cast<int>(it - categories.begin());
}

int Manifest::index_of(const std::string& snippet_id) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].snippet_id == snippet_id) return static_cast<int>(i);
  }
  return -1;
}

Manifest make_manifest(std::vector<SnippetRecord> records) {
  Manifest m;
  std::set<std::string> ids, cats;
  for (const auto& r : records) {
    if (r.snippet_id.empty() || r.category.empty()) throw DataError("manifest record without id or category");
    if (!ids.insert(r.snippet_id).second) throw DataError("duplicate snippet_id '" + r.snippet_id + "'");
    cats.insert(r.category);
  }
  m.records = std::move(records);
  m.categories.assign(cats.begin(), cats.end());
  return m;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<SnippetRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SnippetRecord r{j.at("path").get<std::string>(), j.at("category").get<std::string>(),
                      j.at("snippet_id").get<std::string>()};
      if (fs::path(r.path).is_relative()) r.path = (path.parent_path() / r.path).string();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return make_manifest(std::move(records));
}

void write_manifest(const fs::path& path, std::span<const SnippetRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& r : records) {
    out << nlohmann::json{{"path", r.path}, {"category", r.category}, {"snippet_id", r.snippet_id}}.dump()
        << '\n';
  }
}

// ---------------------------------------------------------------------------

SplitPlan make_splits(const Manifest& manifest, int n_splits, double train_ratio, std::uint64_t seed,
                      const std::optional<fs::path>& external_dir) {
  if (external_dir) return load_external_splits(*external_dir, manifest, n_splits);
  if (n_splits < 1) throw ConfigError("n_splits must be >= 1");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio must be in (0, 1)");

  std::vector<std::vector<std::string>> by_cat(manifest.categories.size());
  for (const auto& r : manifest.records) by_cat[static_cast<std::size_t>(manifest.label_of(r))].push_back(r.snippet_id);
  for (std::size_t c = 0; c < by_cat.size(); ++c) {
    if (by_cat[c].size() < 2) {
      throw DataError("category '" + manifest.categories[c] + "' has fewer than 2 snippets");
    }
  }

  SplitPlan plan;
  plan.seed = seed;
  plan.train_ratio = train_ratio;
  for (int k = 0; k < n_splits; ++k) {
    Split split;
    for (std::size_t c = 0; c < by_cat.size(); ++c) {
      auto ids = by_cat[c];
      Rng rng(derive_seed(seed, "split." + manifest.categories[c], static_cast<std::uint64_t>(k)));
      shuffle(ids.begin(), ids.end(), rng);
      const auto n = static_cast<long>(ids.size());
      const long n_train = std::clamp(std::lround(train_ratio * static_cast<double>(n)), 1L, n - 1);
      split.train.insert(split.train.end(), ids.begin(), ids.begin() + n_train);
      split.test.insert(split.test.end(), ids.begin() + n_train, ids.end());
    }
    plan.splits.push_back(std::move(split));
  }
  return plan;
}

namespace {

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.push_back(line.substr(b, e - b + 1));
  }
  return ids;
}

}  // namespace

SplitPlan load_external_splits(const fs::path& dir, const Manifest& manifest, int n_splits) {
  // Accept 0- or 1-based numbering.
  const int first = fs::exists(dir / "train_0.txt") ? 0 : 1;
  SplitPlan plan;
  for (int k = first; k < first + n_splits; ++k) {
    const fs::path train = dir / ("train_" + std::to_string(k) + ".txt");
    const fs::path test = dir / ("test_" + std::to_string(k) + ".txt");
    if (!fs::exists(train) || !fs::exists(test)) {
      if (plan.splits.empty()) throw DataError("no split files found in " + dir.string());
      break;
    }
    Split s{read_id_list(train), read_id_list(test)};
    std::set<std::string> seen;
    for (const auto* list : {&s.train, &s.test}) {
      for (const auto& id : *list) {
        if (manifest.index_of(id) < 0) throw DataError("split file references unknown snippet '" + id + "'");
        if (!seen.insert(id).second) throw DataError("snippet '" + id + "' appears twice in split " + std::to_string(k));
      }
    }
    plan.splits.push_back(std::move(s));
  }
  return plan;
}

// ---------------------------------------------------------------------------

ConfusionMatrix::ConfusionMatrix(int n_classes)
    : n_(n_classes), counts_(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0) {
  if (n_classes < 1) throw DataError("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::span<const int> preds, std::span<const int> truths, int n_classes)
    : ConfusionMatrix(n_classes) {
  if (preds.size() != truths.size()) throw DataError("predictions and truths differ in length");
  if (preds.empty()) throw DataError("metrics of an empty prediction list");
  for (std::size_t i = 0; i < preds.size(); ++i) add(truths[i], preds[i]);
}

void ConfusionMatrix::add(int truth, int pred) {
  if (truth < 0 || truth >= n_ || pred < 0 || pred >= n_) throw DataError("category id out of range");
  ++counts_[static_cast<std::size_t>(truth) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(pred)];
}

long ConfusionMatrix::count(int truth, int pred) const {
  return counts_[static_cast<std::size_t>(truth) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(pred)];
}

long ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0L); }

double ConfusionMatrix::accuracy() const {
  const long n = total();
  if (n == 0) throw DataError("accuracy of an empty confusion matrix");
  long ok = 0;
  for (int c = 0; c < n_; ++c) ok += count(c, c);
  return 100.0 * static_cast<double>(ok) / static_cast<double>(n);
}

double ConfusionMatrix::f1(int c) const {
  long predicted = 0, actual = 0;
  for (int k = 0; k < n_; ++k) {
    predicted += count(k, c);
    actual += count(c, k);
  }
  const double tp = static_cast<double>(count(c, c));
  const double precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
  const double recall = actual > 0 ? tp / static_cast<double>(actual) : 0.0;
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

double ConfusionMatrix::macro_f1() const {
  if (total() == 0) throw DataError("F1 of an empty confusion matrix");
  double sum = 0.0;
  for (int c = 0; c < n_; ++c) sum += f1(c);
  return 100.0 * sum / n_;
}

double accuracy(std::span<const int> preds, std::span<const int> truths) {
  if (preds.size() != truths.size()) throw DataError("predictions and truths differ in length");
  if (preds.empty()) throw DataError("accuracy of an empty prediction list");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == truths[i];
  return 100.0 * static_cast<double>(ok) / static_cast<double>(preds.size());
}

double macro_f1(std::span<const int> preds, std::span<const int> truths, int n_classes) {
  return ConfusionMatrix(preds, truths, n_classes).macro_f1();
}

std::vector<double> per_category_f1(std::span<const int> preds, std::span<const int> truths, int n_classes) {
  const ConfusionMatrix cm(preds, truths, n_classes);
  std::vector<double> out(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) out[static_cast<std::size_t>(c)] = 100.0 * cm.f1(c);
  return out;
}

// ---------------------------------------------------------------------------

const char* to_string(System s) {
  switch (s) {
    case System::cnn: return "cnn";
    case System::rnn: return "rnn";
    case System::ef_sum: return "ef-sum";
    case System::ef_max: return "ef-max";
    case System::ef_concat: return "ef-concat";
    case System::lf_max: return "lf-max";
    case System::lf_mean: return "lf-mean";
    case System::lf_mult: return "lf-mult";
  }
  return "?";
}

System parse_system(const std::string& s) {
  for (System sys : kAllSystems) {
    if (s == to_string(sys)) return sys;
  }
  throw ConfigError("unknown system '" + s + "'");
}

bool is_late_fusion(System s) {
  return s == System::lf_max || s == System::lf_mean || s == System::lf_mult;
}

FusionRule late_rule(System s) {
  switch (s) {
    case System::lf_max: return FusionRule::max;
    case System::lf_mean: return FusionRule::mean;
    default: return FusionRule::mult;
  }
}

double duration_label(int k, int n_segments, double snippet_seconds) {
  if (k < 1 || k > n_segments) throw DataError("segment count out of range");
  return k < n_segments ? 4.0 * k : std::round(snippet_seconds);
}

std::vector<int> duration_sweep(System system, std::span<const Posterior> primary,
                                std::span<const Posterior> secondary) {
  if (primary.empty()) throw DataError("duration_sweep: no segment posteriors");
  std::vector<Posterior> seq;
  FusionRule rule = FusionRule::mult;
  if (is_late_fusion(system)) {
    if (secondary.size() != primary.size()) {
      throw DataError(std::string("duration_sweep: ") + to_string(system) + " needs CNN and RNN posteriors per segment");
    }
    rule = late_rule(system);
    for (std::size_t s = 0; s < primary.size(); ++s) seq.push_back(normalize(late_fuse(primary[s], secondary[s], rule)));
  } else {
    seq.assign(primary.begin(), primary.end());
  }
  std::vector<int> preds;
  for (std::size_t k = 1; k <= seq.size(); ++k) {
    preds.push_back(predict(aggregate_segments(std::span<const Posterior>(seq.data(), k), rule)));
  }
  return preds;
}

// ---------------------------------------------------------------------------

const SweepRow* SweepReport::find(const std::string& system, double duration_s) const {
  for (const auto& r : rows) {
    if (r.system == system && std::abs(r.duration_s - duration_s) < 1e-9) return &r;
  }
  return nullptr;
}

SweepReport summarize(std::span<const SystemSplitResult> results, const std::vector<std::string>& categories) {
  const int C = static_cast<int>(categories.size());
  struct Acc {
    std::vector<double> acc, f1;
    std::vector<std::vector<double>> cat;  // [category][split]
  };
  std::map<std::pair<std::string, double>, Acc> table;
  for (const auto& r : results) {
    if (r.durations.size() != r.predictions.size()) throw DataError("sweep result shape mismatch");
    for (std::size_t k = 0; k < r.durations.size(); ++k) {
      const ConfusionMatrix cm(r.predictions[k], r.truths, C);
      auto& a = table[{to_string(r.system), r.durations[k]}];
      a.acc.push_back(cm.accuracy());
      a.f1.push_back(cm.macro_f1());
      a.cat.resize(static_cast<std::size_t>(C));
      for (int c = 0; c < C; ++c) a.cat[static_cast<std::size_t>(c)].push_back(100.0 * cm.f1(c));
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  SweepReport report;
  for (const auto& [key, a] : table) {
    SweepRow row;
    row.system = key.first;
    row.duration_s = key.second;
    row.accuracy = mean(a.acc);
    row.f1 = mean(a.f1);
    row.n_splits = static_cast<int>(a.acc.size());
    double sq = 0.0;
    for (double v : a.acc) sq += (v - row.accuracy) * (v - row.accuracy);
    row.stddev = a.acc.size() > 1 ? std::sqrt(sq / static_cast<double>(a.acc.size() - 1)) : 0.0;
    report.rows.push_back(row);
    for (int c = 0; c < C; ++c) {
      report.category_rows.push_back({key.first, categories[static_cast<std::size_t>(c)], key.second,
                                      mean(a.cat[static_cast<std::size_t>(c)])});
    }
  }
  std::sort(report.category_rows.begin(), report.category_rows.end(), [](const CategoryRow& a, const CategoryRow& b) {
    return std::tie(a.system, a.category, a.duration_s) < std::tie(b.system, b.category, b.duration_s);
  });
  return report;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else if (ch != '\r') {
      out.back() += ch;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string dur(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::size_t n_fields) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = csv_split(line);
    if (f.size() != n_fields) throw DataError(path.string() + ": malformed row '" + line + "'");
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace

void write_report_csv(const fs::path& dir, const SweepReport& report) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "sweep.csv");
    if (!out) throw DataError("cannot write " + (dir / "sweep.csv").string());
    out << "system,duration_s,accuracy,f1,n_splits,stddev\n";
    for (const auto& r : report.rows) {
      out << csv_field(r.system) << ',' << dur(r.duration_s) << ',' << num(r.accuracy) << ',' << num(r.f1) << ','
          << r.n_splits << ',' << num(r.stddev) << '\n';
    }
  }
  std::ofstream out(dir / "sweep_categories.csv");
  if (!out) throw DataError("cannot write " + (dir / "sweep_categories.csv").string());
  out << "system,category,duration_s,f1\n";
  for (const auto& r : report.category_rows) {
    out << csv_field(r.system) << ',' << csv_field(r.category) << ',' << dur(r.duration_s) << ',' << num(r.f1)
        << '\n';
  }
}

SweepReport read_report_csv(const fs::path& dir) {
  SweepReport report;
  try {
    for (const auto& f : read_csv(dir / "sweep.csv", 6)) {
      report.rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stoi(f[4]), std::stod(f[5])});
    }
    for (const auto& f : read_csv(dir / "sweep_categories.csv", 4)) {
      report.category_rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3])});
    }
  } catch (const std::logic_error& e) {
    throw DataError("malformed report in " + dir.string() + ": " + e.what());
  }
  return report;
}

namespace {

std::string xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

void write_line_plot(const fs::path& path, const std::string& title, const std::string& y_label,
                     const std::vector<Series>& series) {
  constexpr double W = 720, H = 440, L = 60, R = 170, T = 40, B = 50;
  double x_min = 1e300, x_max = -1e300;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (x_min > x_max) x_min = 0, x_max = 1;
  if (x_max == x_min) x_max = x_min + 1;
  auto px = [&](double x) { return L + (x - x_min) / (x_max - x_min) * (W - L - R); };
  auto py = [&](double y) { return H - B - y / 100.0 * (H - T - B); };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml(title) << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int y = 0; y <= 100; y += 20) {
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
  }
  std::set<double> xs;
  for (const auto& s : series) {
    for (const auto& p : s.points) xs.insert(p.first);
  }
  for (double x : xs) {
    out << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << dur(x) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">duration (s)</text>\n";
  out << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
      << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % std::size(palette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[i].points) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(i);
    out << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << xml(series[i].name) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

std::vector<fs::path> render_plots(const fs::path& dir) {
  const SweepReport report = read_report_csv(dir);
  std::vector<fs::path> written;
  std::map<std::string, Series> acc, f1;
  for (const auto& r : report.rows) {
    acc[r.system].name = r.system;
    acc[r.system].points.emplace_back(r.duration_s, r.accuracy);
    f1[r.system].name = r.system;
    f1[r.system].points.emplace_back(r.duration_s, r.f1);
  }
  auto values = [](const std::map<std::string, Series>& m) {
    std::vector<Series> v;
    for (const auto& [k, s] : m) v.push_back(s);
    return v;
  };
  write_line_plot(dir / "accuracy.svg", "Accuracy vs. test signal length", "accuracy (%)", values(acc));
  written.push_back(dir / "accuracy.svg");
  write_line_plot(dir / "f1.svg", "Macro F1 vs. test signal length", "F1 (%)", values(f1));
  written.push_back(dir / "f1.svg");

  std::map<std::string, std::map<std::string, Series>> per_system;
  for (const auto& r : report.category_rows) {
    auto& s = per_system[r.system][r.category];
    s.name = r.category;
    s.points.emplace_back(r.duration_s, r.f1);
  }
  for (const auto& [system, cats] : per_system) {
    const fs::path p = dir / ("f1_" + system + ".svg");
    write_line_plot(p, "Per-category F1, " + system, "F1 (%)", values(cats));
    written.push_back(p);
  }
  return written;
}

void emit_report(const fs::path& dir, const SweepReport& report, bool plots) {
  write_report_csv(dir, report);
  if (plots) render_plots(dir);
}

}  // namespace asc
