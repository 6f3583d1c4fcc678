#include "kcluster/embeddings.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kcluster/congruity.hpp"
#include "kcluster/csv.hpp"
#include "kcluster/error.hpp"

namespace kcluster {

static_assert(std::endian::native == std::endian::little, "embedding files assume a little-endian host");

void EmbeddingSet::validate() const {
  if (ids.size() != vectors.size()) throw ValidationError("embedding ids and vectors differ in count");
  const auto d = dim();
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != d)
      throw ValidationError(fmt::format("embedding '{}' has dimension {}, expected {}", ids[i], vectors[i].size(), d));
    bool nonzero = false;
    for (double v : vectors[i]) {
      if (!std::isfinite(v)) throw ValidationError("embedding '" + ids[i] + "' has a non-finite entry");
      nonzero = nonzero || v != 0.0;
    }
    if (!nonzero) throw ValidationError("embedding '" + ids[i] + "' is the zero vector");
  }
}

double neg_cos(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError(fmt::format("dimension mismatch: {} vs {}", x.size(), y.size()));
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) throw ValidationError("cosine of a zero vector");
  const double cos = std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0);
  return cos - 1.0;
}

AffinityMatrix embedding_affinity(const EmbeddingSet& emb) {
  emb.validate();
  if (emb.ids.size() < 2) throw ValidationError("embedding affinity needs at least 2 items");
  AffinityMatrix m(emb.ids, Metric::neg_cosine);
  for (std::size_t i = 0; i < emb.ids.size(); ++i)
    for (std::size_t j = i + 1; j < emb.ids.size(); ++j) m.set(i, j, neg_cos(emb.vectors[i], emb.vectors[j]));
  return m;
}

EmbeddingSet question_embeddings(const QuestionBank& bank, const ScoringBackend& backend) {
  if (!backend.capabilities().can_embed)
    throw CapabilityError("backend '" + backend.fingerprint() + "' cannot embed text");
  std::vector<std::string> texts;
  std::vector<std::string> markers;
  for (const auto& q : bank) {
    texts.push_back(render_question(q));
    markers.emplace_back(kFirstExerciseMarker);
  }
  EmbeddingSet out{bank.ids(), backend.embed(texts, markers), EmbeddingSource::questions};
  out.validate();
  return out;
}

EmbeddingSet concept_embeddings(const ConceptSet& concepts, const ScoringBackend& backend) {
  if (!backend.capabilities().can_embed)
    throw CapabilityError("backend '" + backend.fingerprint() + "' cannot embed text");
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  for (const auto& l : concepts.labels()) {
    ids.push_back(l.question_id);
    texts.push_back(l.label);
  }
  EmbeddingSet out{std::move(ids), backend.embed(texts), EmbeddingSource::concepts};
  out.validate();
  return out;
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  return std::filesystem::path(stem.string() + ext);
}

}  // namespace

void save_embeddings(const std::filesystem::path& stem, const EmbeddingSet& emb) {
  emb.validate();
  const auto dim = emb.dim();
  {
    nlohmann::ordered_json meta;
    meta["ids"] = emb.ids;
    meta["dim"] = dim;
    meta["source"] = emb.source == EmbeddingSource::questions ? "question" : "concept";
    meta["dtype"] = "float32";
    meta["byte_order"] = "little";
    std::ofstream out(with_suffix(stem, ".json"), std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + with_suffix(stem, ".json").string());
    out << meta.dump(2) << '\n';
  }
  {
    std::ofstream out(with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + with_suffix(stem, ".bin").string());
    std::vector<float> row(dim);
    for (const auto& v : emb.vectors) {
      std::transform(v.begin(), v.end(), row.begin(), [](double x) { return static_cast<float>(x); });
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    }
  }
  {
    std::ofstream out(with_suffix(stem, ".csv"), std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + with_suffix(stem, ".csv").string());
    csv::Row header{"id"};
    for (std::size_t d = 0; d < dim; ++d) header.push_back("v" + std::to_string(d));
    csv::write_row(out, header);
    for (std::size_t i = 0; i < emb.ids.size(); ++i) {
      csv::Row row{emb.ids[i]};
      for (double x : emb.vectors[i]) row.push_back(fmt::format("{:.9g}", static_cast<float>(x)));
      csv::write_row(out, row);
    }
  }
}

EmbeddingSet load_embeddings(const std::filesystem::path& stem) {
  const auto meta_path = with_suffix(stem, ".json");
  std::ifstream meta_in(meta_path, std::ios::binary);
  if (!meta_in) throw Error("cannot open " + meta_path.string());
  EmbeddingSet emb;
  std::size_t dim = 0;
  try {
    const auto meta = nlohmann::json::parse(meta_in);
    emb.ids = meta.at("ids").get<std::vector<std::string>>();
    dim = meta.at("dim").get<std::size_t>();
    const auto source = meta.at("source").get<std::string>();
    if (source != "question" && source != "concept") throw ValidationError("unknown source '" + source + "'");
    emb.source = source == "question" ? EmbeddingSource::questions : EmbeddingSource::concepts;
    if (meta.at("dtype") != "float32") throw ValidationError("only float32 embeddings are supported");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string(), 0, e.what());
  }

  const auto bin_path = with_suffix(stem, ".bin");
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw Error("cannot open " + bin_path.string());
  std::vector<float> row(dim);
  for (std::size_t i = 0; i < emb.ids.size(); ++i) {
    if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(float))))
      throw ParseError(bin_path.string(), 0, "truncated embedding matrix");
    emb.vectors.emplace_back(row.begin(), row.end());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(bin_path.string(), 0, "trailing bytes");
  emb.validate();
  return emb;
}

}  // namespace kcluster
