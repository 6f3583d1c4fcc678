#include "kcluster/concepts.hpp"

#include <fstream>
#include <mutex>
#include <optional>

#include <fmt/format.h>

#include "kcluster/congruity.hpp"
#include "kcluster/csv.hpp"
#include "kcluster/error.hpp"
#include "kcluster/ngram_lm.hpp"
#include "kcluster/parallel.hpp"
#include "kcluster/text.hpp"

namespace kcluster {

namespace {

std::string question_kind(std::string_view qtype) {
  std::string out;
  for (char c : to_lower_ascii(trim(qtype))) {
    if (is_space(c)) {
      if (!out.empty() && out.back() != '-') out.push_back('-');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string clean_label(std::string_view raw, std::string_view stop_chars) {
  auto cut = raw.find_first_of(stop_chars);
  if (cut != std::string_view::npos) raw = raw.substr(0, cut);
  std::string label = to_lower_ascii(trim(raw));
  while (!label.empty() && std::string_view(".,;:!?\"'").find(label.back()) != std::string_view::npos)
    label.pop_back();
  return std::string(trim(label));
}

}  // namespace

std::string concept_prompt(const Question& q) {
  std::string out(kFirstExerciseMarker);
  out += render_question(q);
  out += "\nRemark:\nThe above exercise is a ";
  out += question_kind(q.qtype);
  out += " question that tests whether the student understands the concept of";
  return out;
}

DecodeConfig default_concept_decoding() {
  DecodeConfig cfg;
  cfg.beam_size = 5;
  cfg.stop_chars = ".,";
  return cfg;
}

ConceptLabel extract_concept(const Question& q, const ScoringBackend& backend, const DecodeConfig& cfg) {
  if (!backend.capabilities().can_generate)
    throw CapabilityError("backend '" + backend.fingerprint() + "' cannot generate concepts");
  cfg.validate();

  ConceptLabel out{q.id, {}, 0.0};
  if (const auto* stats = backend.corpus_statistics()) {
    if (auto phrase = stats->keyphrase(q.stem)) {
      out.label = clean_label(phrase->phrase, cfg.stop_chars);
      out.score = phrase->score;
    }
  } else {
    const auto gen = backend.generate(concept_prompt(q), cfg);
    out.label = clean_label(gen.text, cfg.stop_chars);
    out.score = gen.score;
  }
  if (out.label.empty()) throw Error("empty concept generated for question '" + q.id + "'");
  return out;
}

ConceptSet::ConceptSet(std::vector<ConceptLabel> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].label.empty())
      throw ValidationError("empty concept label for '" + labels_[i].question_id + "'");
    if (!index_.emplace(labels_[i].question_id, i).second)
      throw ValidationError("two concepts for question '" + labels_[i].question_id + "'");
  }
}

const ConceptLabel& ConceptSet::at(std::string_view question_id) const {
  if (auto it = index_.find(std::string(question_id)); it != index_.end()) return labels_[it->second];
  throw ValidationError("no concept for question '" + std::string(question_id) + "'");
}

bool ConceptSet::contains(std::string_view question_id) const {
  return index_.contains(std::string(question_id));
}

ConceptSet extract_all(const QuestionBank& bank, const ScoringBackend& backend, const DecodeConfig& cfg,
                       std::size_t jobs) {
  std::vector<std::optional<ConceptLabel>> slots(bank.size());
  std::vector<std::string> errors(bank.size());

  auto attempt = [&](std::size_t i) {
    try {
      slots[i] = extract_concept(bank[i], backend, cfg);
      errors[i].clear();
    } catch (const CapabilityError&) {
      throw;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  parallel_for(bank.size(), jobs, attempt);
  for (std::size_t i = 0; i < bank.size(); ++i)
    if (!slots[i]) attempt(i);

  std::vector<ConceptLabel> labels;
  std::string failures;
  std::size_t n_failed = 0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (slots[i]) {
      labels.push_back(std::move(*slots[i]));
    } else if (n_failed++ < 5) {
      failures += fmt::format("\n  {}: {}", bank[i].id, errors[i]);
    }
  }
  if (n_failed)
    throw Error(fmt::format("concept extraction failed for {} question(s):{}", n_failed, failures));
  return ConceptSet(std::move(labels));
}

KCModel concept_kc_model(const ConceptSet& concepts, const QuestionBank& bank, std::string name) {
  std::vector<std::string> labels;
  labels.reserve(bank.size());
  for (const auto& q : bank) labels.push_back(concepts.at(q.id).label);
  return make_kc_model(std::move(name), bank, std::move(labels));
}

void save_concepts(const std::filesystem::path& path, const ConceptSet& concepts) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"question_id", "concept", "score"});
  for (const auto& l : concepts.labels())
    csv::write_row(out, {l.question_id, l.label, fmt::format("{:.17g}", l.score)});
}

ConceptSet load_concepts(const std::filesystem::path& path, const QuestionBank& bank) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::size_t line = 0;
  csv::expect_header(in, line, {"question_id", "concept", "score"}, path.string());
  std::vector<std::optional<ConceptLabel>> slots(bank.size());
  while (auto row = csv::read_row(in, line)) {
    if (row->size() == 1 && trim((*row)[0]).empty()) continue;
    if (row->size() != 3) throw ParseError(path.string(), line, "expected 3 fields");
    const std::string id(trim((*row)[0]));
    auto pos = bank.find(id);
    if (!pos) throw ParseError(path.string(), line, "unknown question id '" + id + "'");
    if (slots[*pos]) throw ParseError(path.string(), line, "duplicated question id '" + id + "'");
    double score = 0.0;
    try {
      score = std::stod((*row)[2]);
    } catch (const std::exception&) {
      throw ParseError(path.string(), line, "bad score '" + (*row)[2] + "'");
    }
    slots[*pos] = ConceptLabel{id, (*row)[1], score};
  }
  std::vector<ConceptLabel> labels;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (!slots[i]) throw ValidationError(path.string() + ": no concept for question '" + bank[i].id + "'");
    labels.push_back(std::move(*slots[i]));
  }
  return ConceptSet(std::move(labels));
}

}  // namespace kcluster
