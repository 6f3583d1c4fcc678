#include "kcluster/affinity_propagation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kcluster/error.hpp"

namespace kcluster {

void APParams::validate() const {
  if (!(damping >= 0.5 && damping < 1.0)) throw ValidationError(fmt::format("damping {} outside [0.5, 1)", damping));
  if (max_iters == 0) throw ValidationError("max_iters must be positive");
  if (stable_window == 0 || stable_window > max_iters)
    throw ValidationError(fmt::format("stable_window {} must be in [1, max_iters]", stable_window));
  if (preference && !std::isfinite(*preference)) throw ValidationError("preference must be finite");
}

std::vector<std::size_t> ClusterAssignment::members(std::size_t c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == c) out.push_back(i);
  return out;
}

void ClusterAssignment::validate() const {
  if (labels.size() != ids.size()) throw ValidationError("assignment labels and ids differ in count");
  std::vector<bool> used(exemplars.size(), false);
  for (auto l : labels) {
    if (l >= exemplars.size()) throw ValidationError("cluster label out of range");
    used[l] = true;
  }
  for (std::size_t c = 0; c < exemplars.size(); ++c) {
    if (!used[c]) throw ValidationError(fmt::format("cluster {} is empty", c));
    if (exemplars[c] >= ids.size() || labels[exemplars[c]] != c)
      throw ValidationError(fmt::format("exemplar of cluster {} does not label itself", c));
  }
}

double median_preference(const AffinityMatrix& s) {
  if (s.size() < 2) throw ValidationError("median preference needs at least 2 items");
  auto v = s.off_diagonal();
  const auto k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

double net_similarity(const AffinityMatrix& s, const std::vector<std::size_t>& exemplar_of, double preference) {
  double total = 0.0;
  for (std::size_t i = 0; i < exemplar_of.size(); ++i)
    total += exemplar_of[i] == i ? preference : s(i, exemplar_of[i]);
  return total;
}

namespace {

// Each item goes to the exemplar with the highest affinity; exemplars keep
// themselves. Ties go to the lower index.
std::vector<std::size_t> assign_nearest(const AffinityMatrix& s, const std::vector<std::size_t>& exemplars) {
  const auto n = s.size();
  std::vector<std::size_t> out(n);
  std::vector<bool> is_exemplar(n, false);
  for (auto e : exemplars) is_exemplar[e] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_exemplar[i]) {
      out[i] = i;
      continue;
    }
    std::size_t best = exemplars.front();
    for (auto e : exemplars)
      if (s(i, e) > s(i, best)) best = e;
    out[i] = best;
  }
  return out;
}

// Within each cluster, moves the exemplar to the member with the largest
// total affinity to the others, then reassigns. Stops at a fixed point.
std::vector<std::size_t> refine(const AffinityMatrix& s, std::vector<std::size_t> exemplars, double pref) {
  const auto n = s.size();
  auto exemplar_of = assign_nearest(s, exemplars);
  double best_net = net_similarity(s, exemplar_of, pref);
  for (std::size_t round = 0; round < n; ++round) {
    std::vector<std::size_t> moved;
    for (auto e : exemplars) {
      std::vector<std::size_t> group;
      for (std::size_t i = 0; i < n; ++i)
        if (exemplar_of[i] == e) group.push_back(i);
      std::size_t best = e;
      double best_score = -std::numeric_limits<double>::infinity();
      for (auto c : group) {
        double score = 0.0;
        for (auto i : group)
          if (i != c) score += s(i, c);
        if (score > best_score) {
          best_score = score;
          best = c;
        }
      }
      moved.push_back(best);
    }
    std::sort(moved.begin(), moved.end());
    auto candidate = assign_nearest(s, moved);
    const double net = net_similarity(s, candidate, pref);
    if (moved == exemplars || !(net > best_net)) break;
    exemplars = std::move(moved);
    exemplar_of = std::move(candidate);
    best_net = net;
  }
  return exemplar_of;
}

// Hill climbing over exemplar sets: add, drop or swap one exemplar while the
// net similarity strictly improves.
std::vector<std::size_t> polish(const AffinityMatrix& s, std::vector<std::size_t> exemplars, double pref) {
  const auto n = s.size();
  auto score = [&](const std::vector<std::size_t>& ex) {
    return net_similarity(s, assign_nearest(s, ex), pref);
  };
  double best = score(exemplars);
  const double tol = 1e-12 * (1.0 + std::abs(best));
  for (bool improved = true; improved;) {
    improved = false;
    std::vector<bool> is_exemplar(n, false);
    for (auto e : exemplars) is_exemplar[e] = true;
    std::vector<std::size_t> trial;
    auto accept = [&](std::vector<std::size_t> candidate) {
      std::sort(candidate.begin(), candidate.end());
      const double v = score(candidate);
      if (v > best + tol) {
        best = v;
        exemplars = std::move(candidate);
        improved = true;
      }
      return improved;
    };
    for (std::size_t c = 0; c < n && !improved; ++c) {
      if (is_exemplar[c]) continue;
      trial = exemplars;
      trial.push_back(c);
      accept(trial);
    }
    for (std::size_t k = 0; k < exemplars.size() && !improved && exemplars.size() > 1; ++k) {
      trial = exemplars;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(k));
      accept(trial);
    }
    for (std::size_t k = 0; k < exemplars.size() && !improved; ++k)
      for (std::size_t c = 0; c < n && !improved; ++c) {
        if (is_exemplar[c]) continue;
        trial = exemplars;
        trial[k] = c;
        accept(trial);
      }
  }
  return assign_nearest(s, exemplars);
}

ClusterAssignment finish(const AffinityMatrix& s, const std::vector<std::size_t>& exemplar_of, double pref) {
  ClusterAssignment out;
  out.ids = s.ids();
  out.preference = pref;
  for (std::size_t i = 0; i < exemplar_of.size(); ++i)
    if (exemplar_of[i] == i) out.exemplars.push_back(i);
  std::unordered_map<std::size_t, std::size_t> index;
  for (std::size_t c = 0; c < out.exemplars.size(); ++c) index[out.exemplars[c]] = c;
  out.labels.resize(exemplar_of.size());
  for (std::size_t i = 0; i < exemplar_of.size(); ++i) out.labels[i] = index.at(exemplar_of[i]);
  out.net_similarity = net_similarity(s, exemplar_of, pref);
  return out;
}

}  // namespace

ClusterAssignment cluster(const AffinityMatrix& s, const APParams& params) {
  params.validate();
  const auto n = s.size();
  if (n == 0) throw ValidationError("cannot cluster an empty matrix");
  if (n == 1) {
    ClusterAssignment out;
    out.ids = s.ids();
    out.labels = {0};
    out.exemplars = {0};
    out.converged = true;
    out.preference = params.preference.value_or(0.0);
    out.net_similarity = out.preference;
    return out;
  }
  s.validate();
  const double pref = params.preference ? *params.preference : median_preference(s);

  const auto off = s.off_diagonal();
  if (std::all_of(off.begin(), off.end(), [&](double v) { return v == off.front(); })) {
    // Closed form: one cluster when joining costs no more than a new exemplar.
    std::vector<std::size_t> exemplar_of(n, 0);
    if (pref > off.front())
      for (std::size_t i = 0; i < n; ++i) exemplar_of[i] = i;
    auto out = finish(s, exemplar_of, pref);
    out.converged = true;
    out.degenerate = true;
    return out;
  }

  double scale = std::abs(pref);
  for (double v : off) scale = std::max(scale, std::abs(v));
  const double eps = 1e-12 * scale;

  std::vector<double> S(n * n), R(n * n, 0.0), A(n * n, 0.0), tmp(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      S[i * n + j] = (i == j ? pref : s(i, j)) + eps * static_cast<double>(i * n + j);

  const double lambda = params.damping;
  std::vector<std::size_t> exemplars, previous;
  std::size_t stable = 0;
  bool converged = false;
  std::size_t it = 0;
  while (it < params.max_iters) {
    ++it;
    // Responsibilities.
    for (std::size_t i = 0; i < n; ++i) {
      double first = -std::numeric_limits<double>::infinity(), second = first;
      std::size_t arg = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = A[i * n + j] + S[i * n + j];
        if (v > first) {
          second = first;
          first = v;
          arg = j;
        } else if (v > second) {
          second = v;
        }
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double update = S[i * n + j] - (j == arg ? second : first);
        R[i * n + j] = lambda * R[i * n + j] + (1.0 - lambda) * update;
      }
    }
    // Availabilities.
    for (std::size_t k = 0; k < n; ++k) {
      double positive = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (i != k) positive += std::max(0.0, R[i * n + k]);
      for (std::size_t i = 0; i < n; ++i) {
        const double update =
            i == k ? positive : std::min(0.0, R[k * n + k] + positive - std::max(0.0, R[i * n + k]));
        A[i * n + k] = lambda * A[i * n + k] + (1.0 - lambda) * update;
      }
    }

    exemplars.clear();
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < n; ++j)
        if (A[i * n + j] + R[i * n + j] > A[i * n + arg] + R[i * n + arg]) arg = j;
      if (arg == i) exemplars.push_back(i);
    }
    stable = (!exemplars.empty() && exemplars == previous) ? stable + 1 : 0;
    previous = exemplars;
    if (stable + 1 >= params.stable_window) {
      converged = true;
      break;
    }
  }

  if (exemplars.empty()) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (A[k * n + k] + R[k * n + k] > A[best * n + best] + R[best * n + best]) best = k;
    exemplars.push_back(best);
  }

  auto refined = refine(s, exemplars, pref);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i)
    if (refined[i] == i) kept.push_back(i);
  auto out = finish(s, polish(s, kept, pref), pref);
  out.converged = converged;
  out.iterations = it;
  return out;
}

void save_assignment(const std::filesystem::path& path, const ClusterAssignment& a) {
  a.validate();
  nlohmann::ordered_json j;
  j["converged"] = a.converged;
  j["iterations"] = a.iterations;
  j["net_similarity"] = a.net_similarity;
  j["preference"] = a.preference;
  j["degenerate"] = a.degenerate;
  j["ids"] = a.ids;
  auto clusters = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < a.cluster_count(); ++c) {
    nlohmann::ordered_json entry;
    entry["exemplar"] = a.ids[a.exemplars[c]];
    std::vector<std::string> members;
    for (auto i : a.members(c)) members.push_back(a.ids[i]);
    entry["members"] = members;
    clusters.push_back(std::move(entry));
  }
  j["clusters"] = std::move(clusters);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ClusterAssignment load_assignment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  ClusterAssignment a;
  try {
    const auto j = nlohmann::json::parse(in);
    a.converged = j.at("converged").get<bool>();
    a.iterations = j.at("iterations").get<std::size_t>();
    a.net_similarity = j.at("net_similarity").get<double>();
    a.preference = j.value("preference", 0.0);
    a.degenerate = j.value("degenerate", false);
    const auto& clusters = j.at("clusters");
    if (j.contains("ids")) {
      a.ids = j.at("ids").get<std::vector<std::string>>();
    } else {
      for (const auto& c : clusters)
        for (const auto& m : c.at("members")) a.ids.push_back(m.get<std::string>());
    }
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < a.ids.size(); ++i)
      if (!pos.emplace(a.ids[i], i).second) throw ValidationError("duplicated id '" + a.ids[i] + "'");
    constexpr auto unset = std::numeric_limits<std::size_t>::max();
    a.labels.assign(a.ids.size(), unset);
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> groups;
    for (const auto& c : clusters) {
      auto lookup = [&](const std::string& id) {
        auto it = pos.find(id);
        if (it == pos.end()) throw ValidationError("unknown id '" + id + "' in cluster");
        return it->second;
      };
      std::vector<std::size_t> members;
      for (const auto& m : c.at("members")) members.push_back(lookup(m.get<std::string>()));
      groups.emplace_back(lookup(c.at("exemplar").get<std::string>()), std::move(members));
    }
    std::sort(groups.begin(), groups.end());
    for (std::size_t c = 0; c < groups.size(); ++c) {
      a.exemplars.push_back(groups[c].first);
      for (auto m : groups[c].second) {
        if (a.labels[m] != unset) throw ValidationError("'" + a.ids[m] + "' is in two clusters");
        a.labels[m] = c;
      }
    }
    for (std::size_t i = 0; i < a.ids.size(); ++i)
      if (a.labels[i] == unset) throw ValidationError("'" + a.ids[i] + "' is in no cluster");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  a.validate();
  return a;
}

}  // namespace kcluster
