#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kcluster/affinity_matrix.hpp"

namespace kcluster {

struct APParams {
  double damping = 0.9;
  std::size_t max_iters = 200;
  // Iterations with an unchanged exemplar set needed to stop.
  std::size_t stable_window = 15;
  // Unset means the median off-diagonal affinity.
  std::optional<double> preference;

  void validate() const;
};

struct ClusterAssignment {
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;     // item position -> cluster index
  std::vector<std::size_t> exemplars;  // cluster index -> item position, ascending
  bool converged = false;
  std::size_t iterations = 0;
  double net_similarity = 0.0;
  double preference = 0.0;
  // All off-diagonal affinities were equal; the result is closed-form.
  bool degenerate = false;

  std::size_t cluster_count() const noexcept { return exemplars.size(); }
  std::vector<std::size_t> members(std::size_t cluster) const;
  const std::string& exemplar_id_of(std::size_t item) const { return ids[exemplars[labels[item]]]; }

  // Throws ValidationError unless labels are contiguous from 0 and every
  // exemplar labels its own cluster.
  void validate() const;

  bool operator==(const ClusterAssignment&) const = default;
};

// Lower median of the N(N-1) off-diagonal entries.
double median_preference(const AffinityMatrix& s);

// Sum over non-exemplars of s(i, exemplar(i)) plus preference per exemplar.
double net_similarity(const AffinityMatrix& s, const std::vector<std::size_t>& exemplar_of, double preference);

ClusterAssignment cluster(const AffinityMatrix& s, const APParams& params = {});

// {"converged","iterations","net_similarity","preference","degenerate","ids",
//  "clusters":[{"exemplar","members":[...]}]}
void save_assignment(const std::filesystem::path& path, const ClusterAssignment& a);
ClusterAssignment load_assignment(const std::filesystem::path& path);

}  // namespace kcluster
