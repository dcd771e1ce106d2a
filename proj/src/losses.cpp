#include "gbnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gbnet/error.hpp"

namespace gbnet {

namespace {

/// log(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

void check_same_length(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size()) throw ShapeError(std::string(who) + ": length mismatch");
}

}  // namespace

GradHessBatch regression_stats(std::span<const double> y, std::span<const double> y_hat_prev) {
  check_same_length(y, y_hat_prev, "regression_stats");
  const std::size_t n = y.size();
  GradHessBatch out;
  out.g.resize(n);
  out.h.assign(n, 2.0);
  out.newton_target.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.g[i] = 2.0 * (y_hat_prev[i] - y[i]);
    out.newton_target[i] = y[i] - y_hat_prev[i];
  }
  return out;
}

GradHessBatch classification_stats(std::span<const double> y, std::span<const double> y_hat_prev,
                                   double h_min) {
  check_same_length(y, y_hat_prev, "classification_stats");
  const std::size_t n = y.size();
  GradHessBatch out;
  out.g.resize(n);
  out.h.resize(n);
  out.newton_target.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double yi = y[i];
    if (yi != 1.0 && yi != -1.0) {
      throw DataError("classification_stats: labels must be -1 or +1");
    }
    const double m = 2.0 * yi * y_hat_prev[i];
    // sig = 1/(1+e^m), computed from the non-positive exponent side.
    const double sig = m >= 0.0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
    const double g = -2.0 * yi * sig;
    const double h = 4.0 * sig * (1.0 - sig);
    out.g[i] = g;
    out.h[i] = h;
    // Closed form y*(1 + e^-m)/2 = -g/h; it blows up exactly where h
    // vanishes, so fall back to the clamped quotient there.
    out.newton_target[i] = h >= h_min ? yi * 0.5 * (1.0 + std::exp(-m)) : -g / h_min;
  }
  return out;
}

PairSet build_pairs(std::span<const double> grades, const QueryGroups& groups, RngState& rng,
                    std::size_t max_pairs_per_query) {
  if (groups.num_docs() != grades.size()) {
    throw ShapeError("build_pairs: groups do not cover the grade list");
  }
  for (double g : grades) {
    if (g < 0.0) throw DataError("build_pairs: relevance grades must be >= 0");
  }
  PairSet out;
  out.by_query.resize(groups.num_queries());
  for (std::size_t q = 0; q < groups.num_queries(); ++q) {
    auto& list = out.by_query[q];
    for (std::size_t i = groups.begin(q); i < groups.end(q); ++i) {
      for (std::size_t j = i + 1; j < groups.end(q); ++j) {
        if (grades[i] > grades[j]) {
          list.push_back({i, j});
        } else if (grades[j] > grades[i]) {
          list.push_back({j, i});
        }
      }
    }
    if (list.size() > max_pairs_per_query) {
      for (std::size_t i = 0; i < max_pairs_per_query; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(list.size() - i));
        std::swap(list[i], list[j]);
      }
      list.resize(max_pairs_per_query);
    }
  }
  return out;
}

double pairwise_loss(double yi_hat, double yj_hat, int s_ij, double sigma0) {
  if (s_ij < -1 || s_ij > 1) throw DataError("pairwise_loss: S_ij must be in {-1,0,+1}");
  const double margin = sigma0 * (yi_hat - yj_hat);
  return 0.5 * (1.0 - static_cast<double>(s_ij)) * margin + softplus(-margin);
}

GradHessBatch ranking_stats(std::span<const double> scores, const PairSet& pairs, double sigma0,
                            double h_min) {
  GradHessBatch out;
  const std::size_t n = scores.size();
  out.g.assign(n, 0.0);
  out.h.assign(n, 0.0);
  out.newton_target.assign(n, 0.0);
  for (const auto& query : pairs.by_query) {
    for (const auto& p : query) {
      if (p.better >= n || p.worse >= n) {
        throw ShapeError("ranking_stats: pair index outside score vector");
      }
      const double margin = sigma0 * (scores[p.better] - scores[p.worse]);
      const double rho = margin >= 0.0 ? std::exp(-margin) / (1.0 + std::exp(-margin))
                                       : 1.0 / (1.0 + std::exp(margin));
      // Canonical pairs have S=+1: d/dy_better = -sigma0*rho, and the
      // worse element gets the negated gradient. Curvature
      // sigma0^2*rho*(1-rho) accumulates positively on both.
      const double grad = -sigma0 * rho;
      const double curv = sigma0 * sigma0 * rho * (1.0 - rho);
      out.g[p.better] += grad;
      out.g[p.worse] -= grad;
      out.h[p.better] += curv;
      out.h[p.worse] += curv;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.h[i] > 0.0 || out.g[i] != 0.0) {
      out.newton_target[i] = -out.g[i] / std::max(out.h[i], h_min);
    }
  }
  return out;
}

double corrective_loss(const TaskKind& task, std::span<const double> targets,
                       const PairSet* pairs, std::span<const double> y_hat) {
  if (y_hat.empty()) throw DataError("corrective_loss: empty input");
  switch (task.kind) {
    case TaskKind::Kind::Regression: {
      check_same_length(targets, y_hat, "corrective_loss");
      double acc = 0.0;
      for (std::size_t i = 0; i < y_hat.size(); ++i) {
        const double d = y_hat[i] - targets[i];
        acc += d * d;
      }
      return acc / static_cast<double>(y_hat.size());
    }
    case TaskKind::Kind::BinaryClassification: {
      check_same_length(targets, y_hat, "corrective_loss");
      double acc = 0.0;
      for (std::size_t i = 0; i < y_hat.size(); ++i) {
        const double yi = targets[i];
        if (yi != 1.0 && yi != -1.0) {
          throw DataError("corrective_loss: labels must be -1 or +1");
        }
        acc += softplus(-2.0 * yi * y_hat[i]);
      }
      return acc / static_cast<double>(y_hat.size());
    }
    case TaskKind::Kind::PairwiseRanking: {
      if (pairs == nullptr || pairs->total_pairs() == 0) {
        throw DataError("corrective_loss: ranking needs a non-empty pair set");
      }
      double acc = 0.0;
      for (const auto& query : pairs->by_query) {
        for (const auto& p : query) {
          acc += pairwise_loss(y_hat[p.better], y_hat[p.worse], 1, task.sigma0);
        }
      }
      return acc / static_cast<double>(pairs->total_pairs());
    }
  }
  throw ConfigError("corrective_loss: unknown task");
}

std::vector<double> corrective_grad(const TaskKind& task, std::span<const double> targets,
                                    const PairSet* pairs, std::span<const double> y_hat) {
  if (y_hat.empty()) throw DataError("corrective_grad: empty input");
  std::vector<double> grad(y_hat.size(), 0.0);
  switch (task.kind) {
    case TaskKind::Kind::Regression: {
      check_same_length(targets, y_hat, "corrective_grad");
      const double inv_n = 1.0 / static_cast<double>(y_hat.size());
      for (std::size_t i = 0; i < y_hat.size(); ++i) {
        grad[i] = 2.0 * (y_hat[i] - targets[i]) * inv_n;
      }
      return grad;
    }
    case TaskKind::Kind::BinaryClassification: {
      check_same_length(targets, y_hat, "corrective_grad");
      const double inv_n = 1.0 / static_cast<double>(y_hat.size());
      for (std::size_t i = 0; i < y_hat.size(); ++i) {
        const double yi = targets[i];
        const double m = 2.0 * yi * y_hat[i];
        const double sig =
            m >= 0.0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
        grad[i] = -2.0 * yi * sig * inv_n;
      }
      return grad;
    }
    case TaskKind::Kind::PairwiseRanking: {
      if (pairs == nullptr || pairs->total_pairs() == 0) {
        throw DataError("corrective_grad: ranking needs a non-empty pair set");
      }
      const double inv_p = 1.0 / static_cast<double>(pairs->total_pairs());
      for (const auto& query : pairs->by_query) {
        for (const auto& p : query) {
          const double margin = task.sigma0 * (y_hat[p.better] - y_hat[p.worse]);
          const double rho = margin >= 0.0 ? std::exp(-margin) / (1.0 + std::exp(-margin))
                                           : 1.0 / (1.0 + std::exp(margin));
          const double d = -task.sigma0 * rho * inv_p;
          grad[p.better] += d;
          grad[p.worse] -= d;
        }
      }
      return grad;
    }
  }
  throw ConfigError("corrective_grad: unknown task");
}

double prior(const TaskKind& task, std::span<const double> targets) {
  if (targets.empty()) throw DataError("prior: empty targets");
  switch (task.kind) {
    case TaskKind::Kind::Regression: {
      double acc = 0.0;
      for (double y : targets) acc += y;
      return acc / static_cast<double>(targets.size());
    }
    case TaskKind::Kind::BinaryClassification: {
      std::size_t n_pos = 0, n_neg = 0;
      for (double y : targets) {
        if (y == 1.0) {
          ++n_pos;
        } else if (y == -1.0) {
          ++n_neg;
        } else {
          throw DataError("prior: labels must be -1 or +1");
        }
      }
      if (n_pos == 0 || n_neg == 0) {
        throw DataError("prior: both classes must be present");
      }
      return std::log(static_cast<double>(n_pos) / static_cast<double>(n_neg));
    }
    case TaskKind::Kind::PairwiseRanking:
      return 0.0;
  }
  throw ConfigError("prior: unknown task");
}

}  // namespace gbnet
