#include "gbnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "gbnet/error.hpp"

namespace gbnet {

void DataSet::validate() const {
  if (targets.size() != num_rows()) {
    throw DataError("DataSet: target length does not match row count");
  }
  if (groups && groups->num_docs() != num_rows()) {
    throw DataError("DataSet: query groups do not partition the rows");
  }
}

DataSet DataSet::take_rows(const std::vector<std::size_t>& idx) const {
  DataSet out;
  out.features = features.take_rows(idx);
  out.targets.reserve(idx.size());
  for (std::size_t i : idx) out.targets.push_back(targets[i]);
  out.names = names;
  return out;
}

namespace {

double parse_double(const std::string& tok, std::size_t line_no, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("cannot parse ") + what + " '" + tok + "'", line_no);
  }
}

struct SvmRow {
  double target = 0.0;
  long long qid = -1;
  std::vector<std::pair<std::size_t, double>> entries;  // 0-based index
};

}  // namespace

DataSet load_svmlight(const std::string& path, bool expect_qid, std::size_t feature_dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::vector<SvmRow> rows;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  bool saw_qid = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok)) continue;  // blank line

    SvmRow row;
    row.target = parse_double(tok, line_no, "target");
    std::size_t prev_index = 0;
    while (tokens >> tok) {
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 >= tok.size()) {
        throw ParseError("malformed feature token '" + tok + "'", line_no);
      }
      const std::string key = tok.substr(0, colon);
      const std::string val = tok.substr(colon + 1);
      if (key == "qid") {
        if (!row.entries.empty()) {
          throw ParseError("qid must precede the feature list", line_no);
        }
        row.qid = static_cast<long long>(parse_double(val, line_no, "qid"));
        saw_qid = true;
        continue;
      }
      const double idx_f = parse_double(key, line_no, "feature index");
      if (idx_f < 1.0 || idx_f != std::floor(idx_f)) {
        throw ParseError("feature indices are 1-based integers, got '" + key + "'", line_no);
      }
      const std::size_t idx = static_cast<std::size_t>(idx_f);
      if (idx <= prev_index) {
        throw ParseError("feature indices must be strictly ascending", line_no);
      }
      prev_index = idx;
      row.entries.emplace_back(idx - 1, parse_double(val, line_no, "feature value"));
      max_index = std::max(max_index, idx);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("'" + path + "' contains no data rows");
  if (expect_qid && !saw_qid) {
    throw DataError("'" + path + "' has no qid annotations but a ranking dataset was expected");
  }

  std::size_t dim = feature_dim == 0 ? max_index : feature_dim;
  if (dim == 0) throw DataError("'" + path + "': cannot infer feature dimension (no features)");
  if (feature_dim != 0 && max_index > feature_dim) {
    throw DataError("'" + path + "': feature index exceeds the requested dimension");
  }

  // Keep equal-qid runs contiguous; regroup by stable sort when they
  // are not.
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (saw_qid) {
    bool contiguous = true;
    std::map<long long, long long> last_seen;  // qid -> last row index
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto it = last_seen.find(rows[i].qid);
      if (it != last_seen.end() && it->second != static_cast<long long>(i) - 1) {
        contiguous = false;
      }
      last_seen[rows[i].qid] = static_cast<long long>(i);
    }
    if (!contiguous) {
      std::fprintf(stderr, "warning: '%s' has non-contiguous qid runs; regrouping rows\n",
                   path.c_str());
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return rows[a].qid < rows[b].qid; });
    }
  }

  DataSet ds;
  ds.features = Matrix(rows.size(), dim);
  ds.targets.resize(rows.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const SvmRow& row = rows[order[r]];
    ds.targets[r] = row.target;
    for (const auto& [idx, val] : row.entries) ds.features(r, idx) = val;
  }
  if (saw_qid) {
    std::vector<std::size_t> offsets(1, 0);
    for (std::size_t r = 1; r < order.size(); ++r) {
      if (rows[order[r]].qid != rows[order[r - 1]].qid) offsets.push_back(r);
    }
    offsets.push_back(order.size());
    ds.groups = QueryGroups(std::move(offsets));
  }
  return ds;
}

void save_svmlight(const DataSet& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.precision(17);
  for (std::size_t r = 0; r < ds.num_rows(); ++r) {
    out << ds.targets[r];
    if (ds.groups) {
      // Query id = group ordinal; preserves the grouping on reload.
      std::size_t q = 0;
      while (ds.groups->end(q) <= r) ++q;
      out << " qid:" << q + 1;
    }
    for (std::size_t c = 0; c < ds.feature_dim(); ++c) {
      const double v = ds.features(r, c);
      if (v != 0.0) out << ' ' << c + 1 << ':' << v;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

DataSet load_delimited(const std::string& path, std::size_t target_column, char delimiter,
                       bool has_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::vector<std::vector<double>> table;
  std::vector<std::string> header;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delimiter)) cells.push_back(cell);
    if (!line.empty() && line.back() == delimiter) cells.emplace_back();

    if (has_header && line_no == 1) {
      header = cells;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cells[c], &used));
        if (used != cells[c].size()) throw std::invalid_argument(cells[c]);
      } catch (const std::exception&) {
        throw ParseError("non-numeric cell '" + cells[c] + "' in column " + std::to_string(c + 1),
                         line_no);
      }
    }
    if (width == 0) {
      width = row.size();
    } else if (row.size() != width) {
      throw ParseError("ragged row: expected " + std::to_string(width) + " cells, got " +
                           std::to_string(row.size()),
                       line_no);
    }
    table.push_back(std::move(row));
  }
  if (table.empty()) throw DataError("'" + path + "' contains no data rows");
  if (target_column >= width) {
    throw DataError("'" + path + "': target column " + std::to_string(target_column) +
                    " out of range (width " + std::to_string(width) + ")");
  }

  DataSet ds;
  ds.features = Matrix(table.size(), width - 1);
  ds.targets.resize(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    ds.targets[r] = table[r][target_column];
    std::size_t out_c = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == target_column) continue;
      ds.features(r, out_c++) = table[r][c];
    }
  }
  if (!header.empty()) {
    for (std::size_t c = 0; c < width; ++c) {
      if (c != target_column) ds.names.push_back(header[c]);
    }
  }
  return ds;
}

void save_delimited(const DataSet& ds, const std::string& path, char delimiter,
                    bool write_header) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.precision(17);
  if (write_header) {
    out << "target";
    for (std::size_t c = 0; c < ds.feature_dim(); ++c) {
      out << delimiter;
      if (c < ds.names.size()) {
        out << ds.names[c];
      } else {
        out << 'f' << c;
      }
    }
    out << '\n';
  }
  for (std::size_t r = 0; r < ds.num_rows(); ++r) {
    out << ds.targets[r];
    for (std::size_t c = 0; c < ds.feature_dim(); ++c) out << delimiter << ds.features(r, c);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

DataSet normalize_labels(const DataSet& ds, double positive_value) {
  ds.validate();
  std::vector<double> distinct;
  for (double y : ds.targets) {
    if (std::find(distinct.begin(), distinct.end(), y) == distinct.end()) distinct.push_back(y);
    if (distinct.size() > 2) throw DataError("normalize_labels: more than two distinct labels");
  }
  DataSet out = ds;
  for (double& y : out.targets) y = y == positive_value ? 1.0 : -1.0;
  return out;
}

namespace {

DataSet take_rows_with_groups(const DataSet& ds, const std::vector<std::size_t>& query_ids) {
  // Assembles whole queries in the given order.
  DataSet out;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> sizes;
  for (std::size_t q : query_ids) {
    for (std::size_t r = ds.groups->begin(q); r < ds.groups->end(q); ++r) rows.push_back(r);
    sizes.push_back(ds.groups->size(q));
  }
  out = ds.take_rows(rows);
  out.groups = QueryGroups::from_sizes(sizes);
  return out;
}

}  // namespace

std::array<DataSet, 3> split(const DataSet& ds, std::array<double, 3> fractions, RngState& rng,
                             SplitMode mode) {
  ds.validate();
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split: fractions must be >= 0");
    total += f;
  }
  if (total > 1.0 + 1e-12) throw ConfigError("split: fractions must sum to <= 1");

  // Cumulative rounding: partition sizes sum to at most the total even
  // when individual fractions round up.
  auto partition_counts = [](std::array<double, 3> f, std::size_t total) {
    std::array<std::size_t, 3> counts{};
    double cum = 0.0;
    std::size_t prev = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      cum += f[i];
      const std::size_t edge = static_cast<std::size_t>(
          std::llround(std::min(cum, 1.0) * static_cast<double>(total)));
      counts[i] = edge - prev;
      prev = edge;
    }
    return counts;
  };

  if (mode == SplitMode::ByQuery) {
    if (!ds.groups) throw DataError("split: ByQuery requires query groups");
    const std::size_t nq = ds.groups->num_queries();
    std::vector<std::size_t> order(nq);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const std::array<std::size_t, 3> counts = partition_counts(fractions, nq);
    if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) {
      throw DataError("split: a partition would be empty");
    }
    std::array<DataSet, 3> out;
    std::size_t at = 0;
    for (std::size_t part = 0; part < 3; ++part) {
      std::vector<std::size_t> qs(order.begin() + at, order.begin() + at + counts[part]);
      std::sort(qs.begin(), qs.end());
      out[part] = take_rows_with_groups(ds, qs);
      at += counts[part];
    }
    return out;
  }

  const std::size_t n = ds.num_rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == SplitMode::StratifiedRows) {
    // Shuffle within each label class, then interleave classes so every
    // partition sees both in near-original proportions.
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) (ds.targets[i] == 1.0 ? pos : neg).push_back(i);
    rng.shuffle(pos);
    rng.shuffle(neg);
    order.clear();
    std::size_t ip = 0, in_ = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool take_pos =
          in_ >= neg.size() ||
          (ip < pos.size() &&
           ip * (n - pos.size()) <= in_ * pos.size());
      if (take_pos) {
        order.push_back(pos[ip++]);
      } else {
        order.push_back(neg[in_++]);
      }
    }
  } else {
    rng.shuffle(order);
  }

  const std::array<std::size_t, 3> counts = partition_counts(fractions, n);
  if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) {
    throw DataError("split: a partition would be empty");
  }
  std::array<DataSet, 3> out;
  std::size_t at = 0;
  for (std::size_t part = 0; part < 3; ++part) {
    std::vector<std::size_t> idx(order.begin() + at, order.begin() + at + counts[part]);
    std::sort(idx.begin(), idx.end());
    out[part] = ds.take_rows(idx);
    at += counts[part];
  }
  return out;
}

FeatureScaler FeatureScaler::fit(const Matrix& features) {
  if (features.rows() == 0) throw DataError("FeatureScaler: empty feature matrix");
  FeatureScaler s;
  const std::size_t d = features.cols();
  s.mean.assign(d, 0.0);
  s.inv_std.assign(d, 1.0);
  for (std::size_t c = 0; c < d; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < features.rows(); ++r) mu += features(r, c);
    mu /= static_cast<double>(features.rows());
    double var = 0.0;
    for (std::size_t r = 0; r < features.rows(); ++r) {
      const double dd = features(r, c) - mu;
      var += dd * dd;
    }
    var /= static_cast<double>(features.rows());
    s.mean[c] = mu;
    s.inv_std[c] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix FeatureScaler::apply(const Matrix& features) const {
  if (features.cols() != mean.size()) throw ShapeError("FeatureScaler: dimension mismatch");
  Matrix out = features;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row_ptr(r);
    for (std::size_t c = 0; c < mean.size(); ++c) row[c] = (row[c] - mean[c]) * inv_std[c];
  }
  return out;
}

}  // namespace gbnet
