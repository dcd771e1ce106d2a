#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gbnet {

/// Partition of a document list into queries: boundary offsets with
/// offsets[0] == 0 and offsets.back() == number of documents.
struct QueryGroups {
  std::vector<std::size_t> offsets;

  QueryGroups() = default;
  explicit QueryGroups(std::vector<std::size_t> boundary_offsets);

  /// Builds boundaries from per-query sizes.
  static QueryGroups from_sizes(const std::vector<std::size_t>& sizes);

  std::size_t num_queries() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t num_docs() const { return offsets.empty() ? 0 : offsets.back(); }
  std::size_t begin(std::size_t q) const { return offsets[q]; }
  std::size_t end(std::size_t q) const { return offsets[q + 1]; }
  std::size_t size(std::size_t q) const { return offsets[q + 1] - offsets[q]; }
};

double rmse(std::span<const double> pred, std::span<const double> target);

/// AUC-ROC as the Mann-Whitney statistic (ties count 1/2), rank-based.
/// Labels must be -1/+1 with both classes present.
double auc_roc(std::span<const double> scores, std::span<const double> labels);

/// Mean NDCG@k over queries with exponential gain (2^grade - 1) and
/// log2(rank+1) discount. Score ties rank by original index; a query
/// with zero ideal DCG contributes 1.0.
double ndcg_at_k(std::span<const double> scores, std::span<const double> grades,
                 const QueryGroups& groups, std::size_t k);

enum class MetricKind { Rmse, Auc, Ndcg5, Ndcg10 };

bool metric_higher_is_better(MetricKind m);
std::string metric_name(MetricKind m);

/// Dispatches to the matching metric; `groups` is required for NDCG.
double evaluate_metric(MetricKind m, std::span<const double> scores,
                       std::span<const double> targets, const QueryGroups* groups);

}  // namespace gbnet
