#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gbnet/metrics.hpp"
#include "gbnet/rng.hpp"

namespace gbnet {

/// Which objective the booster optimizes. sigma0 scales the pairwise
/// ranking loss and is unused by the other tasks.
struct TaskKind {
  enum class Kind { Regression, BinaryClassification, PairwiseRanking };
  Kind kind = Kind::Regression;
  double sigma0 = 1.0;

  static TaskKind regression() { return {Kind::Regression, 1.0}; }
  static TaskKind classification() { return {Kind::BinaryClassification, 1.0}; }
  static TaskKind ranking(double sigma0 = 1.0) { return {Kind::PairwiseRanking, sigma0}; }

  bool is_ranking() const { return kind == Kind::PairwiseRanking; }
};

/// Per-sample first/second-order statistics of the task loss at the
/// current ensemble output, plus the Newton regression target -g/h.
/// `h` is stored unclamped; the clamp applies only when dividing.
struct GradHessBatch {
  std::vector<double> g;
  std::vector<double> h;
  std::vector<double> newton_target;
};

/// Floor on the second-order statistic when forming -g/h.
inline constexpr double kHessianFloor = 1e-6;

/// Document pairs with unequal relevance, grouped by query. Pairs are
/// stored canonically: `better` has the strictly higher grade (S=+1).
/// Indices are global row ids.
struct PairSet {
  struct Pair {
    std::size_t better;
    std::size_t worse;
  };
  std::vector<std::vector<Pair>> by_query;

  std::size_t total_pairs() const {
    std::size_t n = 0;
    for (const auto& q : by_query) n += q.size();
    return n;
  }
};

/// MSE loss statistics: g = 2(y_hat - y), h = 2, target = y - y_hat
/// (computed exactly as the residual).
GradHessBatch regression_stats(std::span<const double> y, std::span<const double> y_hat_prev);

/// Binary cross-entropy statistics for labels in {-1,+1} with overflow-
/// safe sigmoid forms; valid for |y_hat| up to 1e4 and beyond.
GradHessBatch classification_stats(std::span<const double> y, std::span<const double> y_hat_prev,
                                   double h_min = kHessianFloor);

/// Enumerates unequal-grade pairs per query; uniformly subsamples down
/// to max_pairs_per_query when a query exceeds the cap.
PairSet build_pairs(std::span<const double> grades, const QueryGroups& groups, RngState& rng,
                    std::size_t max_pairs_per_query = 10000);

/// Pairwise logistic loss
/// 0.5*(1-S)*sigma0*(yi-yj) + log(1 + exp(-sigma0*(yi-yj))).
double pairwise_loss(double yi_hat, double yj_hat, int s_ij, double sigma0);

/// Per-document aggregation of pairwise first/second derivatives over
/// all pairs containing the document. Documents in no pair get
/// g = h = target = 0.
GradHessBatch ranking_stats(std::span<const double> scores, const PairSet& pairs, double sigma0,
                            double h_min = kHessianFloor);

/// Task loss used by the corrective step: mean squared error, mean
/// binary cross-entropy, or mean pairwise loss over all pairs.
double corrective_loss(const TaskKind& task, std::span<const double> targets,
                       const PairSet* pairs, std::span<const double> y_hat);

/// Gradient of corrective_loss with respect to y_hat (mean-normalized
/// like the loss itself).
std::vector<double> corrective_grad(const TaskKind& task, std::span<const double> targets,
                                    const PairSet* pairs, std::span<const double> y_hat);

/// Constant baseline prediction f0: log(n+/n-) for classification, the
/// target mean for regression, 0 for ranking.
double prior(const TaskKind& task, std::span<const double> targets);

}  // namespace gbnet
