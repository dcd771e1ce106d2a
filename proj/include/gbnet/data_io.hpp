#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbnet/matrix.hpp"
#include "gbnet/metrics.hpp"
#include "gbnet/rng.hpp"

namespace gbnet {

/// In-memory dataset: dense features, per-task targets (regression
/// values, -1/+1 labels, or relevance grades) and optional query
/// grouping for ranking. Immutable after load by convention.
struct DataSet {
  Matrix features;
  std::vector<double> targets;
  std::optional<QueryGroups> groups;
  std::vector<std::string> names;  // optional column labels

  std::size_t num_rows() const { return features.rows(); }
  std::size_t feature_dim() const { return features.cols(); }

  /// Checks n == |targets| and group coverage; throws DataError.
  void validate() const;

  /// Row subset in the given order. Ranking callers should slice whole
  /// queries; this drops the grouping.
  DataSet take_rows(const std::vector<std::size_t>& idx) const;
};

/// SVMLight/LibSVM reader: `<target> [qid:<int>] <idx>:<val> ...` with
/// 1-based feature indices; absent indices read as 0. Rows with equal
/// qid are grouped; non-contiguous qid runs are regrouped by stable
/// sort with a warning on stderr. feature_dim 0 means infer.
DataSet load_svmlight(const std::string& path, bool expect_qid, std::size_t feature_dim = 0);

void save_svmlight(const DataSet& ds, const std::string& path);

/// Delimited numeric text. The target column is extracted; remaining
/// columns become features in order.
DataSet load_delimited(const std::string& path, std::size_t target_column, char delimiter = ',',
                       bool has_header = false);

void save_delimited(const DataSet& ds, const std::string& path, char delimiter = ',',
                    bool write_header = false);

/// Maps binary raw labels to -1/+1 (raw == positive_value becomes +1).
DataSet normalize_labels(const DataSet& ds, double positive_value);

enum class SplitMode { Rows, StratifiedRows, ByQuery };

/// Deterministic (train, val, test) split. Fractions must sum to <= 1;
/// ByQuery keeps every query inside a single partition. Any empty
/// resulting split is an error.
std::array<DataSet, 3> split(const DataSet& ds, std::array<double, 3> fractions, RngState& rng,
                             SplitMode mode);

/// Per-feature standardization fitted on one dataset and applied to
/// others. Off by default everywhere; opt-in via the CLI.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static FeatureScaler fit(const Matrix& features);
  Matrix apply(const Matrix& features) const;
};

}  // namespace gbnet
