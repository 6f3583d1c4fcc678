#include "kcluster/affinity_matrix.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kcluster/csv.hpp"
#include "kcluster/error.hpp"
#include "kcluster/text.hpp"

namespace kcluster {

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::congruity:
      return "congruity";
    case Metric::neg_cosine:
      return "neg-cosine";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  if (name == "congruity") return Metric::congruity;
  if (name == "neg-cosine") return Metric::neg_cosine;
  throw ValidationError("unknown metric tag '" + std::string(name) + "'");
}

AffinityMatrix::AffinityMatrix(std::vector<std::string> ids, Metric metric)
    : ids_(std::move(ids)), metric_(metric), values_(ids_.size() * ids_.size(), 0.0) {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    values_[i * ids_.size() + i] = std::numeric_limits<double>::quiet_NaN();
}

void AffinityMatrix::set(std::size_t i, std::size_t j, double value) {
  if (i == j) throw ValidationError("the diagonal of an affinity matrix holds no affinity");
  const auto n = ids_.size();
  values_[i * n + j] = value;
  values_[j * n + i] = value;
}

std::vector<double> AffinityMatrix::off_diagonal() const {
  std::vector<double> out;
  const auto n = ids_.size();
  out.reserve(n * (n ? n - 1 : 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) out.push_back(values_[i * n + j]);
  return out;
}

void AffinityMatrix::validate() const {
  const auto n = ids_.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = values_[i * n + j];
      if (!std::isfinite(a))
        throw ValidationError(fmt::format("affinity ({}, {}) is not finite", ids_[i], ids_[j]));
      if (a != values_[j * n + i])
        throw ValidationError(fmt::format("affinity not symmetric at ({}, {})", ids_[i], ids_[j]));
    }
}

AffinityMatrix AffinityMatrix::permuted(const std::vector<std::size_t>& perm) const {
  std::vector<std::string> ids;
  for (auto p : perm) ids.push_back(ids_.at(p));
  AffinityMatrix out(std::move(ids), metric_);
  for (std::size_t a = 0; a < perm.size(); ++a)
    for (std::size_t b = a + 1; b < perm.size(); ++b) out.set(a, b, (*this)(perm[a], perm[b]));
  return out;
}

bool AffinityMatrix::operator==(const AffinityMatrix& other) const {
  if (ids_ != other.ids_ || metric_ != other.metric_) return false;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    const bool both_nan = std::isnan(values_[k]) && std::isnan(other.values_[k]);
    if (!both_nan && values_[k] != other.values_[k]) return false;
  }
  return true;
}

std::filesystem::path affinity_meta_path(const std::filesystem::path& csv_path) {
  auto meta = csv_path;
  meta.replace_extension(".meta.json");
  return meta;
}

void save_affinity(const std::filesystem::path& csv_path, const AffinityMatrix& m) {
  std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + csv_path.string());
  csv::write_row(out, m.ids());
  const auto n = m.size();
  for (std::size_t i = 0; i < n; ++i) {
    csv::Row row(n);
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) row[j] = fmt::format("{:.17g}", m(i, j));
    csv::write_row(out, row);
  }

  std::ofstream meta(affinity_meta_path(csv_path), std::ios::binary | std::ios::trunc);
  if (!meta) throw Error("cannot write " + affinity_meta_path(csv_path).string());
  nlohmann::ordered_json j;
  j["metric_tag"] = metric_name(m.metric());
  j["n"] = n;
  meta << j.dump(2) << '\n';
}

AffinityMatrix load_affinity(const std::filesystem::path& csv_path) {
  const auto meta_path = affinity_meta_path(csv_path);
  std::ifstream meta_in(meta_path, std::ios::binary);
  if (!meta_in) throw Error("cannot open " + meta_path.string());
  Metric metric;
  try {
    metric = parse_metric(nlohmann::json::parse(meta_in).at("metric_tag").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string(), 0, e.what());
  }

  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error("cannot open " + csv_path.string());
  std::size_t line = 0;
  auto header = csv::read_row(in, line);
  if (!header) throw ParseError(csv_path.string(), 1, "empty matrix file");
  const auto n = header->size();
  AffinityMatrix m(*header, metric);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = csv::read_row(in, line);
    if (!row || row->size() != n) throw ParseError(csv_path.string(), line, "expected " + std::to_string(n) + " fields");
    std::vector<double> vals(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const auto cell = trim((*row)[j]);
      if (i == j) {
        if (!cell.empty()) throw ParseError(csv_path.string(), line, "diagonal cell must be empty");
        continue;
      }
      try {
        std::size_t used = 0;
        vals[j] = std::stod(std::string(cell), &used);
        if (used != cell.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(csv_path.string(), line, "bad number '" + std::string(cell) + "'");
      }
    }
    rows.push_back(std::move(vals));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rows[i][j] != rows[j][i])
        throw ParseError(csv_path.string(), 0, "matrix is not symmetric at (" + (*header)[i] + ", " + (*header)[j] + ")");
      m.set(i, j, rows[i][j]);
    }
  m.validate();
  return m;
}

}  // namespace kcluster
