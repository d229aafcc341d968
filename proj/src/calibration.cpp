#include "onion/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace onion {

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("roc_curve: scores and labels differ in length");
  const auto n = scores.size();
  const std::size_t pos = static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(), [](auto p) { return p; }));
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_curve: need at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> roc{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    const double t = scores[order[i]];
    while (i < n && scores[order[i]] == t) {
      (positive[order[i]] ? tp : fp) += 1;
      ++i;
    }
    roc.push_back({t, static_cast<double>(tp) / static_cast<double>(pos), static_cast<double>(fp) / static_cast<double>(neg)});
  }
  return roc;
}

RocPoint pick_threshold(std::span<const RocPoint> roc, double target_tpr) {
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) throw std::invalid_argument("pick_threshold: target TPR must lie in (0, 1]");
  for (const auto& p : roc)
    if (p.tpr >= target_tpr) return p;
  throw std::invalid_argument("pick_threshold: curve never reaches the target TPR");
}

ThresholdSet calibrate(const Tensor& s1_probs, std::span<const int> s1_labels, const std::map<int, double>& targets) {
  const std::size_t n = s1_probs.batch(), k = s1_probs.row_size();
  if (s1_labels.size() != n) throw ShapeError("calibrate: label count does not match score rows");
  ThresholdSet set;
  std::vector<double> scores(n);
  std::vector<std::uint8_t> pos(n);
  for (const auto& [cls, target] : targets) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= k)
      throw std::out_of_range("calibrate: class " + std::to_string(cls) + " has no score column");
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = s1_probs.row(i)[static_cast<std::size_t>(cls)];
      pos[i] = s1_labels[i] == cls;
    }
    const auto roc = roc_curve(scores, pos);
    const auto p = pick_threshold(roc, target);
    set.entries[cls] = {p.threshold, target, p.tpr, p.fpr};
  }
  return set;
}

PassMask pass_mask(const Tensor& s1_probs, const ThresholdSet& thresholds) {
  const std::size_t n = s1_probs.batch(), k = s1_probs.row_size();
  for (const auto& [cls, e] : thresholds.entries)
    if (cls < 0 || static_cast<std::size_t>(cls) >= k)
      throw std::out_of_range("pass_mask: threshold class " + std::to_string(cls) + " has no score column (K = " +
                              std::to_string(k) + ")");
  PassMask mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = s1_probs.row(i);
    for (const auto& [cls, e] : thresholds.entries) {
      if (static_cast<double>(row[static_cast<std::size_t>(cls)]) >= e.threshold) {
        mask.flags[i] = 1;
        break;
      }
    }
  }
  return mask;
}

OperatingPoint measure(const Tensor& s1_probs, std::span<const int> s1_labels, const ThresholdSet& thresholds) {
  const auto mask = pass_mask(s1_probs, thresholds);
  std::size_t tp = 0, fp = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const bool is_pos = thresholds.entries.count(s1_labels[i]) > 0;
    (is_pos ? pos : neg) += 1;
    if (mask[i]) (is_pos ? tp : fp) += 1;
  }
  OperatingPoint op;
  op.tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
  op.fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
  op.pass_fraction = mask.pass_fraction();
  return op;
}

void ThresholdSet::write(std::ostream& os) const {
  os << "# class target_tpr threshold achieved_tpr achieved_fpr\n";
  for (const auto& [cls, e] : entries) {
    os << cls << ' ' << std::fixed << std::setprecision(6) << e.target_tpr << ' ' << std::defaultfloat
       << std::setprecision(17) << e.threshold << ' ' << std::fixed << std::setprecision(6) << e.achieved_tpr << ' '
       << e.achieved_fpr << '\n';
  }
  os << std::defaultfloat;
}

ThresholdSet ThresholdSet::read(std::istream& is) {
  ThresholdSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int cls = 0;
    std::string target, threshold, tpr, fpr;
    if (!(ls >> cls >> target >> threshold >> tpr >> fpr))
      throw std::runtime_error("thresholds: malformed line " + std::to_string(lineno));
    ThresholdEntry e;
    e.target_tpr = std::stod(target);
    e.threshold = std::strtod(threshold.c_str(), nullptr);
    e.achieved_tpr = std::stod(tpr);
    e.achieved_fpr = std::stod(fpr);
    set.entries[cls] = e;
  }
  return set;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

double within_cluster_ss(const std::vector<std::vector<double>>& points, const std::vector<int>& assignment,
                         std::size_t k) {
  const std::size_t d = points.empty() ? 0 : points[0].size();
  std::vector<std::vector<double>> centroid(k, std::vector<double>(d, 0.0));
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<std::size_t>(assignment[i]);
    ++count[c];
    for (std::size_t j = 0; j < d; ++j) centroid[c][j] += points[i][j];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (count[c])
      for (auto& v : centroid[c]) v /= static_cast<double>(count[c]);
  double ss = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) ss += sq_dist(points[i], centroid[static_cast<std::size_t>(assignment[i])]);
  return ss;
}

namespace {

// One k-means++ seeding followed by Lloyd iterations.
ClassPartition lloyd(const std::vector<std::vector<double>>& class_means, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = class_means.size(), d = class_means[0].size();
  std::vector<std::vector<double>> centers;
  centers.push_back(class_means[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> dist(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(class_means[i], c));
      total += (dist[i] = best);
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick + 1 < n && r >= dist[pick]; ++pick) r -= dist[pick];
      // Guard against landing on an already chosen (zero-distance) point.
      while (dist[pick] == 0.0) pick = (pick + 1) % n;
    } else {
      pick = centers.size();
    }
    centers.push_back(class_means[pick]);
  }

  ClassPartition part{std::vector<int>(n, -1), k};
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = sq_dist(class_means[i], centers[c]);
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(c);
        }
      }
      if (part.assignment[i] != best) {
        part.assignment[i] = best;
        changed = true;
      }
    }
    // Re-seed empty clusters from the point farthest from its centroid.
    std::vector<std::size_t> count(k, 0);
    for (int a : part.assignment) ++count[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] != 0) continue;
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(part.assignment[i]);
        if (count[a] <= 1) continue;
        const double dd = sq_dist(class_means[i], centers[a]);
        if (dd > fd) {
          fd = dd;
          far = i;
        }
      }
      --count[static_cast<std::size_t>(part.assignment[far])];
      part.assignment[far] = static_cast<int>(c);
      count[c] = 1;
      changed = true;
    }
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> sum(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (part.assignment[i] == static_cast<int>(c))
          for (std::size_t j = 0; j < d; ++j) sum[j] += class_means[i][j];
      for (auto& v : sum) v /= static_cast<double>(count[c]);
      centers[c] = std::move(sum);
    }
    if (!changed) break;
  }
  return part;
}

}  // namespace

ClassPartition cluster_classes(const std::vector<std::vector<double>>& class_means, std::size_t k, std::uint64_t seed,
                               std::size_t restarts) {
  if (k < 1) throw std::invalid_argument("cluster_classes: k must be >= 1");
  if (restarts < 1) throw std::invalid_argument("cluster_classes: restarts must be >= 1");
  const std::size_t n = class_means.size();
  if (k > n) throw std::invalid_argument("cluster_classes: k exceeds the number of classes");
  const std::size_t d = class_means[0].size();
  if (d == 0) throw std::invalid_argument("cluster_classes: activation vectors are empty");
  for (const auto& m : class_means)
    if (m.size() != d) throw std::invalid_argument("cluster_classes: activation vectors differ in length");

  std::mt19937_64 rng(seed);
  ClassPartition best;
  double best_ss = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    auto part = lloyd(class_means, k, rng);
    const double ss = within_cluster_ss(class_means, part.assignment, k);
    if (ss < best_ss) {
      best_ss = ss;
      best = std::move(part);
    }
  }
  return best;
}

}  // namespace onion
