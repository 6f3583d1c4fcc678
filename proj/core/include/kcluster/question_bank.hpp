#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kcluster {

struct Choice {
  std::string label;
  std::string text;

  bool operator==(const Choice&) const = default;
};

struct Question {
  std::string id;
  std::string qtype;  // free text, e.g. "Multiple Choice"
  std::string stem;
  std::vector<Choice> choices;
  std::string answer_label;
  std::optional<std::string> expert_kc;

  const Choice& answer() const;

  bool operator==(const Question&) const = default;
};

// "Multiple Choice", "multiple-choice", "MCQ" and friends.
bool is_multiple_choice(std::string_view qtype);

// Throws ValidationError naming the question id.
void validate(const Question& q);

// Canonical text block used by every prompt template:
//
//   Multiple Choice:
//   Which is the most flexible?
//   a) paper
//   ...
//   Answer: a) paper
//
// Always newline-terminated.
std::string render_question(const Question& q);

// Ordered, validated question collection. Position is the index used by
// every affinity matrix and Q-matrix, so file order is preserved.
class QuestionBank {
 public:
  QuestionBank() = default;
  explicit QuestionBank(std::vector<Question> questions);

  std::size_t size() const noexcept { return questions_.size(); }
  bool empty() const noexcept { return questions_.empty(); }
  const Question& operator[](std::size_t i) const { return questions_[i]; }
  const Question& at(std::string_view id) const;
  std::optional<std::size_t> find(std::string_view id) const;
  std::span<const Question> questions() const noexcept { return questions_; }
  std::vector<std::string> ids() const;

  auto begin() const noexcept { return questions_.begin(); }
  auto end() const noexcept { return questions_.end(); }

  // Questions at `positions`, in the given order.
  QuestionBank subset(std::span<const std::size_t> positions) const;

  bool operator==(const QuestionBank& other) const { return questions_ == other.questions_; }

 private:
  std::vector<Question> questions_;
  std::unordered_map<std::string, std::size_t> index_;
};

// JSONL, one record per line:
//   {"id","type","stem","choices":[{"label","text"}...],"answer_label","expert_kc"?}
// Blank lines are skipped. Leading/trailing whitespace of every string field
// is trimmed on load.
QuestionBank parse_bank(std::istream& in, const std::string& source = "<bank>");
QuestionBank load_bank(const std::filesystem::path& path);
void write_bank(std::ostream& out, const QuestionBank& bank);
void save_bank(const std::filesystem::path& path, const QuestionBank& bank);

struct Transaction {
  std::string student_id;
  std::string question_id;
  std::int64_t seq = 0;
  int outcome = 0;  // 1 correct, 0 incorrect
  std::size_t student = 0;   // index into TransactionLog::students()
  std::size_t question = 0;  // bank position

  bool operator==(const Transaction&) const = default;
};

// Attempts sorted by (student_id, seq). The order is independent of the
// input row order.
class TransactionLog {
 public:
  TransactionLog() = default;
  // Resolves question ids against `bank` and validates outcome/seq.
  TransactionLog(std::vector<Transaction> rows, const QuestionBank& bank);

  std::span<const Transaction> transactions() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  const std::vector<std::string>& students() const noexcept { return students_; }

  // Keeps only the first attempt of each (student, question) pair.
  TransactionLog first_attempts_only() const;
  // Keeps rows whose bank position satisfies `keep`.
  template <typename Pred>
  std::vector<Transaction> filtered(Pred keep) const {
    std::vector<Transaction> out;
    for (const auto& t : rows_)
      if (keep(t)) out.push_back(t);
    return out;
  }

  bool operator==(const TransactionLog& other) const { return rows_ == other.rows_; }

 private:
  std::vector<Transaction> rows_;
  std::vector<std::string> students_;
};

// CSV with header student_id,question_id,seq,outcome.
TransactionLog parse_transactions(std::istream& in, const QuestionBank& bank,
                                  const std::string& source = "<transactions>");
TransactionLog load_transactions(const std::filesystem::path& path, const QuestionBank& bank);
void write_transactions(std::ostream& out, const TransactionLog& log);

// Total mapping question -> KC label, aligned with bank positions.
struct KCModel {
  std::string name;
  std::vector<std::string> question_ids;
  std::vector<std::string> labels;

  std::size_t kc_count() const;
  // Distinct labels in first-appearance order.
  std::vector<std::string> kc_labels() const;
  const std::string& label_of(std::string_view question_id) const;

  bool operator==(const KCModel&) const = default;
};

KCModel make_kc_model(std::string name, const QuestionBank& bank, std::vector<std::string> labels);
// Every question's expert_kc; throws ValidationError if any is missing.
KCModel expert_kc_model(const QuestionBank& bank, std::string name = "Expert");
KCModel single_kc_model(const QuestionBank& bank);
KCModel unique_step_model(const QuestionBank& bank);

// CSV with header question_id,kc_label; rows may appear in any order but
// every bank question must appear exactly once.
KCModel parse_kc_model(std::istream& in, const QuestionBank& bank, std::string name,
                       const std::string& source = "<kc-model>");
KCModel load_kc_model(const std::filesystem::path& path, const QuestionBank& bank);
void write_kc_model(std::ostream& out, const KCModel& model);
void save_kc_model(const std::filesystem::path& path, const KCModel& model);

}  // namespace kcluster
