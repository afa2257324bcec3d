#include "sosr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <unordered_set>

#include "sosr/error.hpp"
#include "sosr/parallel.hpp"
#include "sosr/random.hpp"

namespace sosr {

void LabeledDescriptorSet::validate() const {
  if (descriptors.rows() != labels.size()) {
    throw Error(ErrorCode::kLabelCountMismatch, "label-count mismatch: " + std::to_string(descriptors.rows()) +
                                                    " descriptors, " + std::to_string(labels.size()) + " labels");
  }
  if (!split.empty() && split.size() != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "split tags must be empty or one per descriptor");
  }
  if (!labels.empty() && descriptors.cols() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor dimension must be >= 2");
  }
  for (std::size_t i = 0; i < descriptors.rows(); ++i) {
    if (!(std::abs(norm(descriptors.row(i)) - 1.0) <= UnitDescriptor::kNormTolerance)) {
      throw Error(ErrorCode::kNormViolation, "norm violation in descriptor " + std::to_string(i));
    }
  }
}

LabeledDescriptorSet LabeledDescriptorSet::subset(const std::string& tag) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == tag) rows.push_back(i);
  }
  LabeledDescriptorSet out;
  out.descriptors = Matrix(rows.size(), dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(descriptors.row(rows[r]).begin(), dim(), out.descriptors.row(r).begin());
    out.labels.push_back(labels[rows[r]]);
    out.split.push_back(tag);
  }
  return out;
}

double fpr_at_recall(std::span<const double> pos_dists, std::span<const double> neg_dists, double recall) {
  if (pos_dists.empty() || neg_dists.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "fpr_at_recall needs non-empty positive and negative lists");
  }
  if (!(recall > 0.0 && recall <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "recall must be in (0, 1]");
  std::vector<double> pos(pos_dists.begin(), pos_dists.end());
  std::stable_sort(pos.begin(), pos.end());
  const double n_pos = static_cast<double>(pos.size());
  double tau = pos.back();
  for (auto it = pos.begin(); it != pos.end();) {
    const auto last = std::upper_bound(it, pos.end(), *it);
    if (static_cast<double>(last - pos.begin()) / n_pos >= recall) {
      tau = *it;
      break;
    }
    it = last;
  }
  const auto false_pos = std::count_if(neg_dists.begin(), neg_dists.end(), [tau](double d) { return d <= tau; });
  return static_cast<double>(false_pos) / static_cast<double>(neg_dists.size());
}

double average_precision(const std::vector<bool>& ranked_relevance) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked_relevance.size(); ++r) {
    if (!ranked_relevance[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) throw Error(ErrorCode::kInvalidArgument, "average precision needs at least one relevant item");
  return sum / static_cast<double>(hits);
}

VerificationResult verification_task(std::span<const ScoredPair> pairs) {
  std::vector<double> pos, neg;
  for (const auto& p : pairs) (p.same_class ? pos : neg).push_back(p.distance);
  if (pos.empty() || neg.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "verification needs both positive and negative pairs");
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs[a].distance < pairs[b].distance; });
  std::vector<bool> relevance(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) relevance[r] = pairs[order[r]].same_class;
  return {average_precision(relevance), fpr_at_recall(pos, neg, 0.95)};
}

namespace {

std::string label_list(const std::vector<Label>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(labels[i]);
  }
  return out;
}

void check_same_dim(const LabeledDescriptorSet& a, const LabeledDescriptorSet& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::kDimensionMismatch, "descriptor sets differ in dimension");
}

double mean_ascending(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double matching_task(const LabeledDescriptorSet& reference, const LabeledDescriptorSet& query) {
  reference.validate();
  query.validate();
  if (reference.size() == 0 || query.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "matching needs non-empty reference and query sets");
  }
  check_same_dim(reference, query);
  std::map<Label, std::size_t> ref_index;
  for (std::size_t r = 0; r < reference.size(); ++r) {
    if (!ref_index.emplace(reference.labels[r], r).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "reference holds more than one instance of label " + std::to_string(reference.labels[r]));
    }
  }
  std::vector<Label> missing;
  for (const Label z : query.labels) {
    if (!ref_index.contains(z)) missing.push_back(z);
  }
  if (!missing.empty()) throw Error(ErrorCode::kMissingLabel, "query labels missing from reference: " + label_list(missing));

  std::vector<double> ap(query.size());
  parallel_for(query.size(), [&](std::size_t qi) {
    const auto qrow = query.descriptors.row(qi);
    const std::size_t correct = ref_index.at(query.labels[qi]);
    const double d_correct = l2_distance(qrow, reference.descriptors.row(correct));
    std::size_t rank = 1;
    for (std::size_t r = 0; r < reference.size(); ++r) {
      if (r == correct) continue;
      const double d = l2_distance(qrow, reference.descriptors.row(r));
      if (d < d_correct || (d == d_correct && r < correct)) ++rank;
    }
    ap[qi] = 1.0 / static_cast<double>(rank);
  });
  return mean_ascending(ap);
}

double retrieval_task(const LabeledDescriptorSet& queries, const LabeledDescriptorSet& pool) {
  queries.validate();
  pool.validate();
  if (queries.size() == 0 || pool.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "retrieval needs non-empty query and pool sets");
  }
  check_same_dim(queries, pool);
  const std::unordered_set<Label> pool_labels(pool.labels.begin(), pool.labels.end());
  std::vector<Label> missing;
  for (const Label z : queries.labels) {
    if (!pool_labels.contains(z)) missing.push_back(z);
  }
  if (!missing.empty()) throw Error(ErrorCode::kMissingLabel, "query classes absent from pool: " + label_list(missing));

  std::vector<double> ap(queries.size());
  parallel_for(queries.size(), [&](std::size_t qi) {
    const auto qrow = queries.descriptors.row(qi);
    std::vector<double> d(pool.size());
    for (std::size_t r = 0; r < pool.size(); ++r) d[r] = l2_distance(qrow, pool.descriptors.row(r));
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    std::vector<bool> relevance(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) relevance[r] = pool.labels[order[r]] == queries.labels[qi];
    ap[qi] = average_precision(relevance);
  });
  return mean_ascending(ap);
}

namespace {

// Distinct integers from [0, total): shuffle when dense, reject duplicates when sparse.
std::vector<std::uint64_t> sample_distinct(std::uint64_t total, std::size_t n, Rng& rng) {
  std::vector<std::uint64_t> out;
  if (n == 0) return out;
  if (2 * static_cast<std::uint64_t>(n) >= total) {
    std::vector<std::uint64_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t j = i + uniform_index(rng, total - i);
      std::swap(all[i], all[j]);
    }
    all.resize(n);
    return all;
  }
  std::unordered_set<std::uint64_t> seen;
  out.reserve(n);
  while (out.size() < n) {
    const std::uint64_t x = uniform_index(rng, total);
    if (seen.insert(x).second) out.push_back(x);
  }
  return out;
}

}  // namespace

std::vector<IndexPair> build_verification_pairs(const LabeledDescriptorSet& set, std::size_t n_pos,
                                                std::size_t n_neg, std::uint64_t seed) {
  std::map<Label, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < set.size(); ++i) classes[set.labels[i]].push_back(i);
  if (classes.size() < 2 && (n_pos > 0 || n_neg > 0)) {
    throw Error(ErrorCode::kInfeasible, "verification pairs need at least 2 classes");
  }

  std::vector<const std::vector<std::size_t>*> members;
  std::vector<std::uint64_t> prefix{0};  // cumulative intra-class pair counts
  for (const auto& [label, idx] : classes) {
    members.push_back(&idx);
    const std::uint64_t n = idx.size();
    prefix.push_back(prefix.back() + n * (n - 1) / 2);
  }
  const std::uint64_t total_pos = prefix.back();
  const std::uint64_t n_all = set.size();
  const std::uint64_t total_neg = n_all * (n_all - 1) / 2 - total_pos;
  if (n_pos > total_pos) {
    throw Error(ErrorCode::kInfeasible, "requested " + std::to_string(n_pos) + " positive pairs, only " +
                                            std::to_string(total_pos) + " exist");
  }
  if (n_neg > total_neg) {
    throw Error(ErrorCode::kInfeasible, "requested " + std::to_string(n_neg) + " negative pairs, only " +
                                            std::to_string(total_neg) + " exist");
  }

  std::vector<IndexPair> out;
  out.reserve(n_pos + n_neg);
  Rng pos_rng = make_rng(seed, 1);
  for (const std::uint64_t flat : sample_distinct(total_pos, n_pos, pos_rng)) {
    const auto c = static_cast<std::size_t>(std::upper_bound(prefix.begin(), prefix.end(), flat) - prefix.begin() - 1);
    const auto& idx = *members[c];
    std::uint64_t local = flat - prefix[c];
    std::size_t u = 0;
    while (local >= idx.size() - 1 - u) {
      local -= idx.size() - 1 - u;
      ++u;
    }
    out.push_back({idx[u], idx[u + 1 + local], true});
  }

  Rng neg_rng = make_rng(seed, 2);
  if (2 * static_cast<std::uint64_t>(n_neg) >= total_neg) {
    std::vector<IndexPair> all;
    for (std::size_t a = 0; a < set.size(); ++a) {
      for (std::size_t b = a + 1; b < set.size(); ++b) {
        if (set.labels[a] != set.labels[b]) all.push_back({a, b, false});
      }
    }
    for (const std::uint64_t k : sample_distinct(all.size(), n_neg, neg_rng)) out.push_back(all[k]);
  } else {
    std::unordered_set<std::uint64_t> seen;
    std::size_t drawn = 0;
    while (drawn < n_neg) {
      std::size_t a = uniform_index(neg_rng, n_all);
      std::size_t b = uniform_index(neg_rng, n_all);
      if (a == b || set.labels[a] == set.labels[b]) continue;
      if (a > b) std::swap(a, b);
      if (!seen.insert(static_cast<std::uint64_t>(a) * n_all + b).second) continue;
      out.push_back({a, b, false});
      ++drawn;
    }
  }
  return out;
}

std::vector<ScoredPair> score_pairs(const LabeledDescriptorSet& set, std::span<const IndexPair> pairs) {
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({l2_distance(set.descriptors.row(p.a), set.descriptors.row(p.b)), p.same_class});
  }
  return out;
}

EvalReport evaluate_set(const LabeledDescriptorSet& set, const EvalOptions& options) {
  set.validate();
  EvalReport report;
  const auto pairs = build_verification_pairs(set, options.n_pos, options.n_neg, options.seed);
  const auto verification = verification_task(score_pairs(set, pairs));
  report.fpr_at_95 = verification.fpr_at_95;
  report.verification_map = verification.ap;
  report.positives = options.n_pos;
  report.negatives = options.n_neg;

  LabeledDescriptorSet reference, query;
  const bool tagged = std::find(set.split.begin(), set.split.end(), "query") != set.split.end();
  if (tagged) {
    reference = set.subset("reference");
    query = set.subset("query");
  } else {
    std::map<Label, std::vector<std::size_t>> classes;
    for (std::size_t i = 0; i < set.size(); ++i) classes[set.labels[i]].push_back(i);
    std::vector<std::size_t> ref_rows, query_rows;
    for (const auto& [label, idx] : classes) {
      if (idx.size() < 2) continue;
      ref_rows.push_back(idx[0]);
      query_rows.push_back(idx[1]);
    }
    auto take = [&](const std::vector<std::size_t>& rows) {
      LabeledDescriptorSet s;
      s.descriptors = Matrix(rows.size(), set.dim());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(set.descriptors.row(rows[r]).begin(), set.dim(), s.descriptors.row(r).begin());
        s.labels.push_back(set.labels[rows[r]]);
      }
      return s;
    };
    reference = take(ref_rows);
    query = take(query_rows);
  }
  report.queries = query.size();
  report.matching_map = matching_task(reference, query);

  // Retrieval: first instance of each class with a same-class partner
  // queries the rest of the set.
  std::map<Label, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < set.size(); ++i) classes[set.labels[i]].push_back(i);
  std::vector<bool> is_query(set.size(), false);
  for (const auto& [label, idx] : classes) {
    if (idx.size() >= 2) is_query[idx[0]] = true;
  }
  LabeledDescriptorSet rq, pool;
  const std::size_t n_q = static_cast<std::size_t>(std::count(is_query.begin(), is_query.end(), true));
  rq.descriptors = Matrix(n_q, set.dim());
  pool.descriptors = Matrix(set.size() - n_q, set.dim());
  std::size_t qi = 0, pi = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto& target = is_query[i] ? rq : pool;
    const std::size_t row = is_query[i] ? qi++ : pi++;
    std::copy_n(set.descriptors.row(i).begin(), set.dim(), target.descriptors.row(row).begin());
    target.labels.push_back(set.labels[i]);
  }
  report.retrieval_map = retrieval_task(rq, pool);
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"fpr_at_95", r.fpr_at_95},
          {"verification_map", r.verification_map},
          {"matching_map", r.matching_map},
          {"retrieval_map", r.retrieval_map},
          {"counts", {{"positives", r.positives}, {"negatives", r.negatives}, {"queries", r.queries}}}};
}

std::string eval_csv_header() { return "fpr_at_95,verification_map,matching_map,retrieval_map,positives,negatives,queries"; }

std::string to_csv_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%zu,%zu,%zu", r.fpr_at_95, r.verification_map,
                r.matching_map, r.retrieval_map, r.positives, r.negatives, r.queries);
  return buf;
}

}  // namespace sosr
