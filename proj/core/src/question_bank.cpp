#include "kcluster/question_bank.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kcluster/csv.hpp"
#include "kcluster/error.hpp"
#include "kcluster/text.hpp"

namespace kcluster {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string required_string(const nlohmann::json& obj, const char* key, const std::string& source,
                            std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(source, line, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ParseError(source, line, std::string("field '") + key + "' is not a string");
  return std::string(trim(it->get_ref<const std::string&>()));
}

}  // namespace

const Choice& Question::answer() const {
  for (const auto& c : choices)
    if (c.label == answer_label) return c;
  throw ValidationError("question '" + id + "': answer label '" + answer_label +
                        "' is not among its choices");
}

bool is_multiple_choice(std::string_view qtype) {
  std::string norm;
  for (char c : to_lower_ascii(trim(qtype))) {
    if (c == '-' || c == '_') c = ' ';
    if (c == ' ' && !norm.empty() && norm.back() == ' ') continue;
    norm.push_back(c);
  }
  return norm == "multiple choice" || norm == "mcq" || norm == "multiple choice question";
}

void validate(const Question& q) {
  if (trim(q.id).empty()) throw ValidationError("question with empty id");
  if (trim(q.stem).empty()) throw ValidationError("question '" + q.id + "': empty stem");
  if (trim(q.qtype).empty()) throw ValidationError("question '" + q.id + "': empty type");
  std::set<std::string_view> labels;
  for (const auto& c : q.choices) {
    if (trim(c.label).empty()) throw ValidationError("question '" + q.id + "': choice with empty label");
    if (trim(c.text).empty())
      throw ValidationError("question '" + q.id + "': choice '" + c.label + "' has empty text");
    if (!labels.insert(c.label).second)
      throw ValidationError("question '" + q.id + "': duplicate choice label '" + c.label + "'");
  }
  if (is_multiple_choice(q.qtype) && q.choices.size() < 2)
    throw ValidationError("question '" + q.id + "': multiple-choice question needs at least 2 choices");
  if (!labels.contains(q.answer_label))
    throw ValidationError("question '" + q.id + "': answer label '" + q.answer_label +
                          "' is not among its choices");
}

std::string render_question(const Question& q) {
  std::string out;
  out += q.qtype;
  out += ":\n";
  out += q.stem;
  out += '\n';
  for (const auto& c : q.choices) {
    out += c.label;
    out += ") ";
    out += c.text;
    out += '\n';
  }
  const auto& a = q.answer();
  out += "Answer: ";
  out += a.label;
  out += ") ";
  out += a.text;
  out += '\n';
  return out;
}

QuestionBank::QuestionBank(std::vector<Question> questions) : questions_(std::move(questions)) {
  index_.reserve(questions_.size());
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    validate(questions_[i]);
    if (!index_.emplace(questions_[i].id, i).second)
      throw ValidationError("duplicate question id '" + questions_[i].id + "'");
  }
}

const Question& QuestionBank::at(std::string_view id) const {
  auto pos = find(id);
  if (!pos) throw ValidationError("unknown question id '" + std::string(id) + "'");
  return questions_[*pos];
}

std::optional<std::size_t> QuestionBank::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> QuestionBank::ids() const {
  std::vector<std::string> out;
  out.reserve(questions_.size());
  for (const auto& q : questions_) out.push_back(q.id);
  return out;
}

QuestionBank QuestionBank::subset(std::span<const std::size_t> positions) const {
  std::vector<Question> qs;
  qs.reserve(positions.size());
  for (auto p : positions) qs.push_back(questions_.at(p));
  return QuestionBank(std::move(qs));
}

QuestionBank parse_bank(std::istream& in, const std::string& source) {
  std::vector<Question> questions;
  std::map<std::string, std::size_t> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(source, line, "record is not a JSON object");

    Question q;
    q.id = required_string(rec, "id", source, line);
    q.qtype = required_string(rec, "type", source, line);
    q.stem = required_string(rec, "stem", source, line);
    q.answer_label = required_string(rec, "answer_label", source, line);
    auto choices = rec.find("choices");
    if (choices == rec.end() || !choices->is_array())
      throw ParseError(source, line, "field 'choices' must be an array");
    for (const auto& c : *choices) {
      if (!c.is_object()) throw ParseError(source, line, "choice is not an object");
      q.choices.push_back({required_string(c, "label", source, line),
                           required_string(c, "text", source, line)});
    }
    if (auto kc = rec.find("expert_kc"); kc != rec.end() && !kc->is_null()) {
      if (!kc->is_string()) throw ParseError(source, line, "field 'expert_kc' is not a string");
      auto label = trim(kc->get_ref<const std::string&>());
      if (!label.empty()) q.expert_kc = std::string(label);
    }

    if (auto [it, fresh] = seen.emplace(q.id, line); !fresh)
      throw ParseError(source, line,
                       "duplicate question id '" + q.id + "' (first seen on line " +
                           std::to_string(it->second) + ")");
    try {
      validate(q);
    } catch (const ValidationError& e) {
      throw ParseError(source, line, e.what());
    }
    questions.push_back(std::move(q));
  }
  return QuestionBank(std::move(questions));
}

QuestionBank load_bank(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_bank(in, path.string());
}

void write_bank(std::ostream& out, const QuestionBank& bank) {
  for (const auto& q : bank) {
    nlohmann::ordered_json rec;
    rec["id"] = q.id;
    rec["type"] = q.qtype;
    rec["stem"] = q.stem;
    auto& choices = rec["choices"] = nlohmann::ordered_json::array();
    for (const auto& c : q.choices) choices.push_back({{"label", c.label}, {"text", c.text}});
    rec["answer_label"] = q.answer_label;
    if (q.expert_kc) rec["expert_kc"] = *q.expert_kc;
    out << rec.dump() << '\n';
  }
}

void save_bank(const std::filesystem::path& path, const QuestionBank& bank) {
  auto out = open_output(path);
  write_bank(out, bank);
}

// ---------------------------------------------------------------------------
// Transactions

TransactionLog::TransactionLog(std::vector<Transaction> rows, const QuestionBank& bank)
    : rows_(std::move(rows)) {
  for (auto& t : rows_) {
    auto pos = bank.find(t.question_id);
    if (!pos) throw ValidationError("unknown question id '" + t.question_id + "'");
    t.question = *pos;
    if (t.outcome != 0 && t.outcome != 1)
      throw ValidationError("non-binary outcome for student '" + t.student_id + "'");
  }
  std::sort(rows_.begin(), rows_.end(), [](const Transaction& a, const Transaction& b) {
    return a.student_id != b.student_id ? a.student_id < b.student_id : a.seq < b.seq;
  });
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (i && rows_[i].student_id == rows_[i - 1].student_id && rows_[i].seq == rows_[i - 1].seq)
      throw ValidationError("duplicate (student, seq) = ('" + rows_[i].student_id + "', " +
                            std::to_string(rows_[i].seq) + ")");
    if (students_.empty() || students_.back() != rows_[i].student_id)
      students_.push_back(rows_[i].student_id);
    rows_[i].student = students_.size() - 1;
  }
}

TransactionLog TransactionLog::first_attempts_only() const {
  TransactionLog out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& t : rows_)
    if (seen.emplace(t.student, t.question).second) out.rows_.push_back(t);
  // Student indices are unchanged: every student keeps at least one row.
  out.students_ = students_;
  return out;
}

TransactionLog parse_transactions(std::istream& in, const QuestionBank& bank,
                                  const std::string& source) {
  std::size_t line = 0;
  csv::expect_header(in, line, {"student_id", "question_id", "seq", "outcome"}, source);
  std::vector<Transaction> rows;
  while (auto row = csv::read_row(in, line)) {
    if (row->size() == 1 && trim((*row)[0]).empty()) continue;
    if (row->size() != 4) throw ParseError(source, line, "expected 4 fields");
    Transaction t;
    t.student_id = std::string(trim((*row)[0]));
    t.question_id = std::string(trim((*row)[1]));
    if (t.student_id.empty()) throw ParseError(source, line, "empty student_id");
    if (!bank.find(t.question_id))
      throw ParseError(source, line, "unknown question id '" + t.question_id + "'");
    try {
      std::size_t used = 0;
      const std::string seq(trim((*row)[2]));
      t.seq = std::stoll(seq, &used);
      if (used != seq.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ParseError(source, line, "seq is not an integer: '" + (*row)[2] + "'");
    }
    const auto outcome = trim((*row)[3]);
    if (outcome == "1") {
      t.outcome = 1;
    } else if (outcome == "0") {
      t.outcome = 0;
    } else {
      throw ParseError(source, line, "outcome must be 0 or 1, got '" + std::string(outcome) + "'");
    }
    rows.push_back(std::move(t));
  }
  try {
    return TransactionLog(std::move(rows), bank);
  } catch (const ValidationError& e) {
    throw ParseError(source, 0, e.what());
  }
}

TransactionLog load_transactions(const std::filesystem::path& path, const QuestionBank& bank) {
  auto in = open_input(path);
  return parse_transactions(in, bank, path.string());
}

void write_transactions(std::ostream& out, const TransactionLog& log) {
  csv::write_row(out, {"student_id", "question_id", "seq", "outcome"});
  for (const auto& t : log.transactions())
    csv::write_row(out, {t.student_id, t.question_id, std::to_string(t.seq), std::to_string(t.outcome)});
}

// ---------------------------------------------------------------------------
// KC models

std::size_t KCModel::kc_count() const { return kc_labels().size(); }

std::vector<std::string> KCModel::kc_labels() const {
  std::vector<std::string> out;
  std::set<std::string_view> seen;
  for (const auto& l : labels)
    if (seen.insert(l).second) out.push_back(l);
  return out;
}

const std::string& KCModel::label_of(std::string_view question_id) const {
  for (std::size_t i = 0; i < question_ids.size(); ++i)
    if (question_ids[i] == question_id) return labels[i];
  throw ValidationError("KC model '" + name + "' has no question '" + std::string(question_id) + "'");
}

KCModel make_kc_model(std::string name, const QuestionBank& bank, std::vector<std::string> labels) {
  if (labels.size() != bank.size())
    throw ValidationError("KC model '" + name + "' covers " + std::to_string(labels.size()) +
                          " questions, bank has " + std::to_string(bank.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (trim(labels[i]).empty())
      throw ValidationError("KC model '" + name + "': empty label for '" + bank[i].id + "'");
  return KCModel{std::move(name), bank.ids(), std::move(labels)};
}

KCModel expert_kc_model(const QuestionBank& bank, std::string name) {
  std::vector<std::string> labels;
  std::vector<std::string> missing;
  for (const auto& q : bank) {
    if (q.expert_kc) {
      labels.push_back(*q.expert_kc);
    } else {
      missing.push_back(q.id);
    }
  }
  if (!missing.empty())
    throw ValidationError("no expert KC for " + std::to_string(missing.size()) +
                          " question(s), first '" + missing.front() + "'");
  return make_kc_model(std::move(name), bank, std::move(labels));
}

KCModel single_kc_model(const QuestionBank& bank) {
  return make_kc_model("Single-KC", bank, std::vector<std::string>(bank.size(), "Single-KC"));
}

KCModel unique_step_model(const QuestionBank& bank) {
  return make_kc_model("Unique-step", bank, bank.ids());
}

KCModel parse_kc_model(std::istream& in, const QuestionBank& bank, std::string name,
                       const std::string& source) {
  std::size_t line = 0;
  csv::expect_header(in, line, {"question_id", "kc_label"}, source);
  std::vector<std::optional<std::string>> labels(bank.size());
  while (auto row = csv::read_row(in, line)) {
    if (row->size() == 1 && trim((*row)[0]).empty()) continue;
    if (row->size() != 2) throw ParseError(source, line, "expected 2 fields");
    const std::string id(trim((*row)[0]));
    auto pos = bank.find(id);
    if (!pos) throw ParseError(source, line, "unknown question id '" + id + "'");
    if (labels[*pos]) throw ParseError(source, line, "duplicated question id '" + id + "'");
    const auto label = trim((*row)[1]);
    if (label.empty()) throw ParseError(source, line, "empty kc_label for '" + id + "'");
    labels[*pos] = std::string(label);
  }
  std::vector<std::string> out;
  std::string missing;
  std::size_t n_missing = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) {
      if (n_missing++ < 10) missing += (missing.empty() ? "" : ", ") + bank[i].id;
      continue;
    }
    out.push_back(*labels[i]);
  }
  if (n_missing)
    throw ValidationError(source + ": " + std::to_string(n_missing) +
                          " bank question(s) not covered: " + missing + (n_missing > 10 ? ", ..." : ""));
  return make_kc_model(std::move(name), bank, std::move(out));
}

KCModel load_kc_model(const std::filesystem::path& path, const QuestionBank& bank) {
  auto in = open_input(path);
  return parse_kc_model(in, bank, path.stem().string(), path.string());
}

void write_kc_model(std::ostream& out, const KCModel& model) {
  csv::write_row(out, {"question_id", "kc_label"});
  for (std::size_t i = 0; i < model.labels.size(); ++i)
    csv::write_row(out, {model.question_ids[i], model.labels[i]});
}

void save_kc_model(const std::filesystem::path& path, const KCModel& model) {
  auto out = open_output(path);
  write_kc_model(out, model);
}

}  // namespace kcluster
