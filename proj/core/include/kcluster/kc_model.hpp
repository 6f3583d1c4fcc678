#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kcluster/affinity_propagation.hpp"
#include "kcluster/concepts.hpp"
#include "kcluster/question_bank.hpp"

namespace kcluster {

// Joins the KCs of a multi-KC question in externally supplied model files.
inline constexpr std::string_view kMultiKCSeparator = "~~";

// Every question takes the concept of its cluster's exemplar. Clusters whose
// exemplars share a concept are merged, or else told apart as "gas",
// "gas#2", ... in ascending exemplar order.
KCModel from_clusters(const ClusterAssignment& assignment, const ConceptSet& concepts, bool merge_duplicates,
                      std::string name);

// Binary question x KC incidence.
class QMatrix {
 public:
  QMatrix() = default;
  QMatrix(std::vector<std::string> question_ids, std::vector<std::string> kc_labels,
          std::vector<std::vector<std::size_t>> kcs_of_question);

  std::size_t question_count() const noexcept { return question_ids_.size(); }
  std::size_t kc_count() const noexcept { return kc_labels_.size(); }
  const std::vector<std::string>& question_ids() const noexcept { return question_ids_; }
  const std::vector<std::string>& kc_labels() const noexcept { return kc_labels_; }
  // Column indices of question j, ascending.
  std::span<const std::size_t> kcs(std::size_t j) const { return kcs_[j]; }
  bool operator()(std::size_t j, std::size_t k) const;
  // Number of questions tagged with KC k.
  std::size_t questions_in(std::size_t k) const;
  std::size_t kc_index(std::string_view label) const;

 private:
  std::vector<std::string> question_ids_;
  std::vector<std::string> kc_labels_;
  std::vector<std::vector<std::size_t>> kcs_;
};

// Columns in first-appearance order. Labels containing "~~" tag the question
// with each part.
QMatrix to_qmatrix(const KCModel& model, const QuestionBank& bank);

class ContingencyTable {
 public:
  // `classes` and `clusters` are label vectors over the same items.
  ContingencyTable(std::span<const std::string> classes, std::span<const std::string> clusters);

  std::size_t rows() const noexcept { return row_sums_.size(); }
  std::size_t cols() const noexcept { return col_sums_.size(); }
  std::size_t total() const noexcept { return total_; }
  std::size_t operator()(std::size_t u, std::size_t v) const { return counts_[u * cols() + v]; }
  const std::vector<std::size_t>& row_sums() const noexcept { return row_sums_; }
  const std::vector<std::size_t>& col_sums() const noexcept { return col_sums_; }

 private:
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> row_sums_;
  std::vector<std::size_t> col_sums_;
  std::size_t total_ = 0;
};

struct HCV {
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v_measure = 0.0;
};

// `a` is the reference partition, `b` the predicted one. Both must cover the
// same questions in the same order.
double adjusted_rand(const KCModel& a, const KCModel& b);
double adjusted_mi(const KCModel& a, const KCModel& b);
double fowlkes_mallows(const KCModel& a, const KCModel& b);
HCV hcv(const KCModel& a, const KCModel& b);

// Same metrics on raw label vectors.
double adjusted_rand(std::span<const std::string> a, std::span<const std::string> b);
double adjusted_mi(std::span<const std::string> a, std::span<const std::string> b);
double fowlkes_mallows(std::span<const std::string> a, std::span<const std::string> b);
HCV hcv(std::span<const std::string> a, std::span<const std::string> b);

struct AlignmentReport {
  std::string model;
  std::string reference;
  std::size_t kc_count = 0;
  double ari = 0.0;
  double ami = 0.0;
  double fowlkes_mallows = 0.0;
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v_measure = 0.0;
};

AlignmentReport alignment(const KCModel& reference, const KCModel& model);

// JSON array of {"model","reference","kc_count","ari","ami","fmi",
// "homogeneity","completeness","v_measure"}.
void save_alignment(const std::filesystem::path& path, std::span<const AlignmentReport> rows);

}  // namespace kcluster
