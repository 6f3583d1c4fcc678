#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace kcluster {

enum class Metric { congruity, neg_cosine };

std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);

// Symmetric N x N similarity over questions (or concepts). The diagonal is
// left unset (NaN): clustering writes its preference there.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;
  AffinityMatrix(std::vector<std::string> ids, Metric metric);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  Metric metric() const noexcept { return metric_; }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * ids_.size() + j]; }
  // Sets (i, j) and (j, i); i != j.
  void set(std::size_t i, std::size_t j, double value);

  // Off-diagonal entries in row-major order, N(N-1) values.
  std::vector<double> off_diagonal() const;

  // Throws ValidationError unless symmetric with finite off-diagonals.
  void validate() const;

  // Same entries with rows/columns reordered: result(a, b) = this(perm[a], perm[b]).
  AffinityMatrix permuted(const std::vector<std::size_t>& perm) const;

  bool operator==(const AffinityMatrix& other) const;

 private:
  std::vector<std::string> ids_;
  Metric metric_ = Metric::congruity;
  std::vector<double> values_;
};

// CSV: header row of ids, then N rows of values with the diagonal left
// empty; values printed with 17 significant digits so they round-trip. The
// metric tag goes to a sibling "<stem>.meta.json".
void save_affinity(const std::filesystem::path& csv_path, const AffinityMatrix& m);
AffinityMatrix load_affinity(const std::filesystem::path& csv_path);
std::filesystem::path affinity_meta_path(const std::filesystem::path& csv_path);

}  // namespace kcluster
