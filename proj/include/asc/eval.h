#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asc/fusion.h"

namespace asc {

// ---------------------------------------------------------------------------
// Dataset manifest: JSON lines {"path", "category", "snippet_id"}.

struct SnippetRecord {
  std::string path;
  std::string category;
  std::string snippet_id;
};

struct Manifest {
  std::vector<SnippetRecord> records;
  std::vector<std::string> categories;  // sorted, unique

  int label_of(const SnippetRecord& r) const;
  int index_of(const std::string& snippet_id) const;  // -1 if absent
};

/// Relative paths are resolved against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const SnippetRecord> records);
Manifest make_manifest(std::vector<SnippetRecord> records);

// ---------------------------------------------------------------------------
// Splits

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  double train_ratio = 0.8;
  std::vector<Split> splits;
};

/// Stratified random splits, deterministic per seed. When external_dir is
/// given, train_<k>.txt / test_<k>.txt are loaded instead.
SplitPlan make_splits(const Manifest& manifest, int n_splits, double train_ratio, std::uint64_t seed,
                      const std::optional<std::filesystem::path>& external_dir = std::nullopt);

SplitPlan load_external_splits(const std::filesystem::path& dir, const Manifest& manifest, int n_splits);

// ---------------------------------------------------------------------------
// Metrics (percentages)

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes);
  ConfusionMatrix(std::span<const int> preds, std::span<const int> truths, int n_classes);

  void add(int truth, int pred);
  long count(int truth, int pred) const;
  long total() const;
  int n_classes() const { return n_; }

  double accuracy() const;
  /// F1 of one category in [0, 1]; undefined precision/recall count as 0.
  double f1(int category) const;
  double macro_f1() const;

 private:
  int n_;
  std::vector<long> counts_;
};

double accuracy(std::span<const int> preds, std::span<const int> truths);
double macro_f1(std::span<const int> preds, std::span<const int> truths, int n_classes);
std::vector<double> per_category_f1(std::span<const int> preds, std::span<const int> truths, int n_classes);

// ---------------------------------------------------------------------------
// Systems and the duration sweep

enum class System { cnn, rnn, ef_sum, ef_max, ef_concat, lf_max, lf_mean, lf_mult };

inline constexpr System kAllSystems[] = {System::cnn,       System::rnn,    System::ef_sum,
                                         System::ef_max,    System::ef_concat, System::lf_max,
                                         System::lf_mean,   System::lf_mult};

const char* to_string(System s);
System parse_system(const std::string& s);
bool is_late_fusion(System s);
FusionRule late_rule(System s);

/// Listening duration reported for k of n_segments segments: 4k s, or the
/// full snippet duration once every segment is used.
double duration_label(int k, int n_segments, double snippet_seconds);

/// Predictions at k = 1..S for one snippet. Standalone and early-fusion
/// systems pass their own segment posteriors as `primary`; late-fusion
/// systems pass the CNN posteriors as `primary` and the RNN posteriors as
/// `secondary`.
std::vector<int> duration_sweep(System system, std::span<const Posterior> primary,
                                std::span<const Posterior> secondary = {});

// ---------------------------------------------------------------------------
// Reports

/// Per split and system: predictions[k-1][snippet] with aligned truths.
struct SystemSplitResult {
  System system = System::cnn;
  int split = 0;
  std::vector<double> durations;             // one per k
  std::vector<std::vector<int>> predictions;  // [k][snippet]
  std::vector<int> truths;
};

struct SweepRow {
  std::string system;
  double duration_s = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  int n_splits = 0;
  double stddev = 0.0;  // of accuracy across splits
};

struct CategoryRow {
  std::string system;
  std::string category;
  double duration_s = 0.0;
  double f1 = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;              // sorted by (system, duration)
  std::vector<CategoryRow> category_rows;  // sorted by (system, category, duration)

  const SweepRow* find(const std::string& system, double duration_s) const;
};

SweepReport summarize(std::span<const SystemSplitResult> results, const std::vector<std::string>& categories);

/// Writes sweep.csv and sweep_categories.csv, then the SVG plots derived
/// from those files.
void emit_report(const std::filesystem::path& dir, const SweepReport& report, bool plots = true);

void write_report_csv(const std::filesystem::path& dir, const SweepReport& report);
SweepReport read_report_csv(const std::filesystem::path& dir);

/// accuracy.svg, f1.svg and f1_<system>.svg, rendered from the CSVs in dir.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& dir);

}  // namespace asc
