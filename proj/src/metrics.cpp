#include "gbnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gbnet/error.hpp"

namespace gbnet {

QueryGroups::QueryGroups(std::vector<std::size_t> boundary_offsets)
    : offsets(std::move(boundary_offsets)) {
  if (offsets.size() < 2 || offsets.front() != 0) {
    throw DataError("QueryGroups: offsets must start at 0 and contain at least one query");
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] <= offsets[i - 1]) {
      throw DataError("QueryGroups: offsets must be strictly increasing");
    }
  }
}

QueryGroups QueryGroups::from_sizes(const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> offsets(1, 0);
  offsets.reserve(sizes.size() + 1);
  for (std::size_t s : sizes) offsets.push_back(offsets.back() + s);
  return QueryGroups(std::move(offsets));
}

double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ShapeError("rmse: length mismatch");
  if (pred.empty()) throw DataError("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double auc_roc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc_roc: length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0, n_neg = 0;
  for (double y : labels) {
    if (y == 1.0) {
      ++n_pos;
    } else if (y == -1.0) {
      ++n_neg;
    } else {
      throw DataError("auc_roc: labels must be -1 or +1");
    }
  }
  if (n_pos == 0 || n_neg == 0) throw DataError("auc_roc: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average rank inside runs of tied scores.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1.0) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

namespace {

double dcg_at_k(std::span<const double> grades_in_rank_order, std::size_t k) {
  double dcg = 0.0;
  const std::size_t limit = std::min(k, grades_in_rank_order.size());
  for (std::size_t r = 0; r < limit; ++r) {
    dcg += (std::exp2(grades_in_rank_order[r]) - 1.0) / std::log2(static_cast<double>(r + 2));
  }
  return dcg;
}

}  // namespace

double ndcg_at_k(std::span<const double> scores, std::span<const double> grades,
                 const QueryGroups& groups, std::size_t k) {
  if (scores.size() != grades.size()) throw ShapeError("ndcg_at_k: length mismatch");
  if (groups.num_queries() == 0) throw DataError("ndcg_at_k: empty query list");
  if (groups.num_docs() != scores.size()) {
    throw ShapeError("ndcg_at_k: groups do not cover the document list");
  }
  if (k == 0) throw ConfigError("ndcg_at_k: k must be >= 1");

  double total = 0.0;
  for (std::size_t q = 0; q < groups.num_queries(); ++q) {
    const std::size_t lo = groups.begin(q), hi = groups.end(q);
    const std::size_t m = hi - lo;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), lo);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    std::vector<double> ranked(m);
    for (std::size_t r = 0; r < m; ++r) ranked[r] = grades[order[r]];

    std::vector<double> ideal(grades.begin() + lo, grades.begin() + hi);
    std::sort(ideal.begin(), ideal.end(), std::greater<double>());

    const double idcg = dcg_at_k(ideal, k);
    total += idcg == 0.0 ? 1.0 : dcg_at_k(ranked, k) / idcg;
  }
  return total / static_cast<double>(groups.num_queries());
}

bool metric_higher_is_better(MetricKind m) { return m != MetricKind::Rmse; }

std::string metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::Rmse: return "rmse";
    case MetricKind::Auc: return "auc";
    case MetricKind::Ndcg5: return "ndcg@5";
    case MetricKind::Ndcg10: return "ndcg@10";
  }
  return "unknown";
}

double evaluate_metric(MetricKind m, std::span<const double> scores,
                       std::span<const double> targets, const QueryGroups* groups) {
  switch (m) {
    case MetricKind::Rmse: return rmse(scores, targets);
    case MetricKind::Auc: return auc_roc(scores, targets);
    case MetricKind::Ndcg5:
    case MetricKind::Ndcg10:
      if (groups == nullptr) throw DataError("evaluate_metric: NDCG needs query groups");
      return ndcg_at_k(scores, targets, *groups, m == MetricKind::Ndcg5 ? 5 : 10);
  }
  throw ConfigError("evaluate_metric: unknown metric");
}

}  // namespace gbnet
