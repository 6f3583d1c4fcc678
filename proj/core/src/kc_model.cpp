#include "kcluster/kc_model.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kcluster/error.hpp"

namespace kcluster {

KCModel from_clusters(const ClusterAssignment& assignment, const ConceptSet& concepts, bool merge_duplicates,
                      std::string name) {
  assignment.validate();
  std::vector<std::string> cluster_label(assignment.cluster_count());
  std::unordered_map<std::string, std::size_t> seen;
  std::unordered_set<std::string> taken;
  for (std::size_t c = 0; c < assignment.cluster_count(); ++c) {
    const auto& exemplar = assignment.ids[assignment.exemplars[c]];
    if (!concepts.contains(exemplar)) throw ValidationError("no concept for exemplar '" + exemplar + "'");
    const auto& concept_label = concepts.at(exemplar).label;
    auto label = concept_label;
    if (!merge_duplicates) {
      auto& k = seen[concept_label];
      if (++k > 1) label = fmt::format("{}#{}", concept_label, k);
      while (taken.contains(label)) label = fmt::format("{}#{}", concept_label, ++k);
    }
    taken.insert(label);
    cluster_label[c] = std::move(label);
  }
  KCModel model{std::move(name), assignment.ids, {}};
  model.labels.reserve(assignment.ids.size());
  for (auto l : assignment.labels) model.labels.push_back(cluster_label[l]);
  return model;
}

QMatrix::QMatrix(std::vector<std::string> question_ids, std::vector<std::string> kc_labels,
                 std::vector<std::vector<std::size_t>> kcs_of_question)
    : question_ids_(std::move(question_ids)), kc_labels_(std::move(kc_labels)), kcs_(std::move(kcs_of_question)) {
  if (kcs_.size() != question_ids_.size()) throw ValidationError("Q-matrix row count mismatch");
  for (std::size_t j = 0; j < kcs_.size(); ++j) {
    auto& row = kcs_[j];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    if (row.empty()) throw ValidationError("question '" + question_ids_[j] + "' has no KC");
    if (row.back() >= kc_labels_.size()) throw ValidationError("KC column out of range");
  }
}

bool QMatrix::operator()(std::size_t j, std::size_t k) const {
  return std::binary_search(kcs_[j].begin(), kcs_[j].end(), k);
}

std::size_t QMatrix::questions_in(std::size_t k) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < kcs_.size(); ++j) n += (*this)(j, k);
  return n;
}

std::size_t QMatrix::kc_index(std::string_view label) const {
  auto it = std::find(kc_labels_.begin(), kc_labels_.end(), label);
  if (it == kc_labels_.end()) throw ValidationError("unknown KC '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - kc_labels_.begin());
}

QMatrix to_qmatrix(const KCModel& model, const QuestionBank& bank) {
  if (model.question_ids != bank.ids()) throw ValidationError("KC model '" + model.name + "' does not match the bank");
  std::vector<std::string> columns;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<std::size_t>> rows(model.labels.size());
  for (std::size_t j = 0; j < model.labels.size(); ++j) {
    std::string_view rest = model.labels[j];
    for (;;) {
      const auto cut = rest.find(kMultiKCSeparator);
      const auto part = std::string(rest.substr(0, cut));
      if (part.empty()) throw ValidationError("empty KC label for '" + model.question_ids[j] + "'");
      auto [it, inserted] = index.emplace(part, columns.size());
      if (inserted) columns.push_back(part);
      rows[j].push_back(it->second);
      if (cut == std::string_view::npos) break;
      rest.remove_prefix(cut + kMultiKCSeparator.size());
    }
  }
  return QMatrix(model.question_ids, std::move(columns), std::move(rows));
}

ContingencyTable::ContingencyTable(std::span<const std::string> classes, std::span<const std::string> clusters) {
  if (classes.size() != clusters.size()) throw ValidationError("partitions cover different item counts");
  // Sorted label order keeps every floating-point sum independent of how the
  // labels happen to be named or ordered in the input.
  auto encode = [](std::span<const std::string> labels, std::vector<std::size_t>& codes) {
    std::map<std::string_view, std::size_t> index;
    for (const auto& l : labels) index.emplace(l, 0);
    std::size_t next = 0;
    for (auto& [_, code] : index) code = next++;
    for (const auto& l : labels) codes.push_back(index[l]);
    return next;
  };
  std::vector<std::size_t> u, v;
  const auto r = encode(classes, u);
  const auto c = encode(clusters, v);
  counts_.assign(r * c, 0);
  row_sums_.assign(r, 0);
  col_sums_.assign(c, 0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    ++counts_[u[i] * c + v[i]];
    ++row_sums_[u[i]];
    ++col_sums_[v[i]];
  }
  total_ = u.size();
}

namespace {

double pairs(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n > 0 ? n - 1 : 0); }

double entropy(const std::vector<std::size_t>& sums, std::size_t total) {
  const double n = static_cast<double>(total), log_n = std::log(n);
  double h = 0.0;
  for (auto a : sums)
    if (a > 0) h += (static_cast<double>(a) / n) * (log_n - std::log(static_cast<double>(a)));
  return h;
}

double mutual_info(const ContingencyTable& t) {
  const double n = static_cast<double>(t.total()), log_n = std::log(n);
  double mi = 0.0;
  for (std::size_t u = 0; u < t.rows(); ++u)
    for (std::size_t v = 0; v < t.cols(); ++v) {
      const auto nuv = t(u, v);
      if (nuv == 0) continue;
      const double a = static_cast<double>(t.row_sums()[u]), b = static_cast<double>(t.col_sums()[v]);
      mi += (static_cast<double>(nuv) / n) * ((log_n - std::log(a)) + (std::log(static_cast<double>(nuv)) - std::log(b)));
    }
  return std::max(mi, 0.0);
}

// Expected mutual information under the hypergeometric model of random
// partitions with the observed marginals.
double expected_mutual_info(const ContingencyTable& t) {
  const auto N = t.total();
  const double n = static_cast<double>(N), log_n = std::log(n);
  const double lg_n1 = std::lgamma(n + 1.0);
  double emi = 0.0;
  for (auto a : t.row_sums())
    for (auto b : t.col_sums()) {
      const std::size_t lo = std::max<std::ptrdiff_t>(1, static_cast<std::ptrdiff_t>(a + b) - static_cast<std::ptrdiff_t>(N));
      const std::size_t hi = std::min(a, b);
      const double da = static_cast<double>(a), db = static_cast<double>(b);
      const double fixed = std::lgamma(da + 1.0) + std::lgamma(db + 1.0) + std::lgamma(n - da + 1.0) +
                           std::lgamma(n - db + 1.0) - lg_n1;
      for (std::size_t nij = lo; nij <= hi; ++nij) {
        const double x = static_cast<double>(nij);
        const double log_p = fixed - std::lgamma(x + 1.0) - std::lgamma(da - x + 1.0) - std::lgamma(db - x + 1.0) -
                             std::lgamma(n - da - db + x + 1.0);
        emi += (x / n) * (log_n + std::log(x) - std::log(da) - std::log(db)) * std::exp(log_p);
      }
    }
  return emi;
}

void check_same_items(const KCModel& a, const KCModel& b) {
  if (a.question_ids != b.question_ids)
    throw ValidationError("KC models '" + a.name + "' and '" + b.name + "' cover different questions");
}

}  // namespace

double adjusted_rand(std::span<const std::string> a, std::span<const std::string> b) {
  const ContingencyTable t(a, b);
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t u = 0; u < t.rows(); ++u)
    for (std::size_t v = 0; v < t.cols(); ++v) index += pairs(t(u, v));
  for (auto x : t.row_sums()) sa += pairs(x);
  for (auto x : t.col_sums()) sb += pairs(x);
  const double total = pairs(t.total());
  if (total == 0.0) return 1.0;
  const double expected = sa * sb / total;
  const double max_index = 0.5 * (sa + sb);
  // Both partitions trivial (one block, or all singletons) and equal.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double adjusted_mi(std::span<const std::string> a, std::span<const std::string> b) {
  const ContingencyTable t(a, b);
  if (t.rows() == t.cols() && (t.rows() <= 1 || t.rows() == t.total())) return 1.0;
  const double mi = mutual_info(t);
  const double emi = expected_mutual_info(t);
  const double normalizer = 0.5 * (entropy(t.row_sums(), t.total()) + entropy(t.col_sums(), t.total()));
  double denominator = normalizer - emi;
  denominator = denominator < 0.0 ? std::min(denominator, -DBL_EPSILON) : std::max(denominator, DBL_EPSILON);
  return (mi - emi) / denominator;
}

double fowlkes_mallows(std::span<const std::string> a, std::span<const std::string> b) {
  const ContingencyTable t(a, b);
  double tp = 0.0, pa = 0.0, pb = 0.0;
  for (std::size_t u = 0; u < t.rows(); ++u)
    for (std::size_t v = 0; v < t.cols(); ++v) tp += pairs(t(u, v));
  for (auto x : t.row_sums()) pa += pairs(x);
  for (auto x : t.col_sums()) pb += pairs(x);
  // No co-clustered pair in either partition: they agree on every pair.
  if (pa == 0.0 && pb == 0.0) return 1.0;
  if (tp == 0.0) return 0.0;
  return std::sqrt(tp / pa) * std::sqrt(tp / pb);
}

HCV hcv(std::span<const std::string> a, std::span<const std::string> b) {
  const ContingencyTable t(a, b);
  const double h_class = entropy(t.row_sums(), t.total());
  const double h_cluster = entropy(t.col_sums(), t.total());
  const double mi = mutual_info(t);
  HCV out;
  out.homogeneity = h_class == 0.0 ? 1.0 : std::min(1.0, mi / h_class);
  out.completeness = h_cluster == 0.0 ? 1.0 : std::min(1.0, mi / h_cluster);
  const double sum = out.homogeneity + out.completeness;
  out.v_measure = sum == 0.0 ? 0.0 : 2.0 * out.homogeneity * out.completeness / sum;
  return out;
}

double adjusted_rand(const KCModel& a, const KCModel& b) {
  check_same_items(a, b);
  return adjusted_rand(a.labels, b.labels);
}

double adjusted_mi(const KCModel& a, const KCModel& b) {
  check_same_items(a, b);
  return adjusted_mi(a.labels, b.labels);
}

double fowlkes_mallows(const KCModel& a, const KCModel& b) {
  check_same_items(a, b);
  return fowlkes_mallows(a.labels, b.labels);
}

HCV hcv(const KCModel& a, const KCModel& b) {
  check_same_items(a, b);
  return hcv(a.labels, b.labels);
}

AlignmentReport alignment(const KCModel& reference, const KCModel& model) {
  check_same_items(reference, model);
  AlignmentReport r;
  r.model = model.name;
  r.reference = reference.name;
  r.kc_count = model.kc_count();
  r.ari = adjusted_rand(reference.labels, model.labels);
  r.ami = adjusted_mi(reference.labels, model.labels);
  r.fowlkes_mallows = fowlkes_mallows(reference.labels, model.labels);
  const auto h = hcv(reference.labels, model.labels);
  r.homogeneity = h.homogeneity;
  r.completeness = h.completeness;
  r.v_measure = h.v_measure;
  return r;
}

void save_alignment(const std::filesystem::path& path, std::span<const AlignmentReport> rows) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json e;
    e["model"] = r.model;
    e["reference"] = r.reference;
    e["kc_count"] = r.kc_count;
    e["ari"] = r.ari;
    e["ami"] = r.ami;
    e["fmi"] = r.fowlkes_mallows;
    e["homogeneity"] = r.homogeneity;
    e["completeness"] = r.completeness;
    e["v_measure"] = r.v_measure;
    j.push_back(std::move(e));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace kcluster
