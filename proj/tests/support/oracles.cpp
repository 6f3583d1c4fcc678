#include "oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "kcluster/congruity.hpp"
#include "kcluster/kc_model.hpp"

namespace oracle {

namespace {

const std::string kBos = "<<bos>>";
const std::string kEos = "<<eos>>";
const std::string kUnk = "<<unk>>";

bool word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

std::map<std::string, double> counts(const std::vector<std::string>& a) {
  std::map<std::string, double> out;
  for (const auto& x : a) out[x] += 1.0;
  return out;
}

}  // namespace

std::vector<std::string> BigramLM::tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  for (unsigned char c : text) {
    if (word_byte(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!word.empty()) out.push_back(std::exchange(word, {}));
    if (!std::isspace(c)) out.emplace_back(1, static_cast<char>(c));
  }
  if (!word.empty()) out.push_back(word);
  return out;
}

BigramLM::BigramLM(const std::vector<std::string>& documents, bool unigram) : unigram_(unigram) {
  for (const auto& doc : documents) {
    auto toks = tokens(doc);
    for (const auto& t : toks) vocab_.emplace(t, 0);
    toks.push_back(kEos);
    std::string prev = kBos;
    for (const auto& t : toks) {
      ++pairs_[{prev, t}];
      ++contexts_[prev];
      ++unigrams_[t];
      ++total_;
      prev = t;
    }
  }
}

std::string BigramLM::symbol(const std::string& token) const {
  return vocab_.count(token) ? token : kUnk;
}

long double BigramLM::logprob(const std::string& prompt, const std::string& continuation) const {
  const long double v = static_cast<long double>(vocabulary());
  auto get = [](const auto& m, const auto& k) -> long double {
    auto it = m.find(k);
    return it == m.end() ? 0.0L : static_cast<long double>(it->second);
  };
  if (unigram_) {
    long double lp = 0;
    for (const auto& t : tokens(continuation))
      lp += std::log((get(unigrams_, symbol(t)) + 1) / (static_cast<long double>(total_) + v));
    return lp;
  }
  std::map<std::pair<std::string, std::string>, long> seen_pairs;
  std::map<std::string, long> seen_contexts;
  std::string prev = kBos;
  for (const auto& t : tokens(prompt)) {
    const auto s = symbol(t);
    ++seen_pairs[{prev, s}];
    ++seen_contexts[prev];
    prev = s;
  }
  long double lp = 0;
  for (const auto& t : tokens(continuation)) {
    const auto s = symbol(t);
    const long double num = get(pairs_, std::pair{prev, s}) + get(seen_pairs, std::pair{prev, s}) + 1;
    const long double den = get(contexts_, prev) + get(seen_contexts, prev) + v;
    lp += std::log(num / den);
    ++seen_pairs[{prev, s}];
    ++seen_contexts[prev];
    prev = s;
  }
  return lp;
}

long double delta(const BigramLM& lm, const kcluster::Question& source, const kcluster::Question& target) {
  const auto s = kcluster::render_question(source);
  const auto t = kcluster::render_question(target);
  return lm.logprob("Exercise 1:\n" + t + "\nExercise 2:\n", s) - lm.logprob("Exercise 2:\n", s);
}

long double congruity(const BigramLM& lm, const kcluster::Question& a, const kcluster::Question& b) {
  return 0.5L * (delta(lm, a, b) + delta(lm, b, a));
}

double best_net_similarity(const kcluster::AffinityMatrix& s, double preference) {
  const std::size_t n = s.size();
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    double net = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1u) {
        net += preference;
        continue;
      }
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < n; ++e)
        if (mask >> e & 1u) m = std::max(m, s(i, e));
      net += m;
    }
    best = std::max(best, net);
  }
  return best;
}

double net_similarity_of(const kcluster::AffinityMatrix& s, const std::vector<std::size_t>& labels,
                         const std::vector<std::size_t>& exemplars, double preference) {
  double net = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto e = exemplars[labels[i]];
    net += i == e ? preference : s(i, e);
  }
  return net;
}

PairCounts pair_counts(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  PairCounts c;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      if (sa && sb) c.tp += 1;
      else if (!sa && sb) c.fp += 1;
      else if (sa && !sb) c.fn += 1;
      else c.tn += 1;
    }
  return c;
}

double ari(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto c = pair_counts(a, b);
  const double den = (c.tp + c.fn) * (c.fn + c.tn) + (c.tp + c.fp) * (c.fp + c.tn);
  if (den == 0) return 1.0;
  return 2.0 * (c.tp * c.tn - c.fn * c.fp) / den;
}

double fmi(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto c = pair_counts(a, b);
  if (c.tp + c.fp == 0 && c.tp + c.fn == 0) return 1.0;
  if (c.tp == 0) return 0.0;
  return c.tp / std::sqrt((c.tp + c.fp) * (c.tp + c.fn));
}

double entropy(const std::vector<std::string>& a) {
  const double n = static_cast<double>(a.size());
  double h = 0;
  for (const auto& [_, k] : counts(a)) h -= k / n * std::log(k / n);
  return h;
}

double conditional_entropy(const std::vector<std::string>& a, const std::vector<std::string>& given) {
  std::map<std::pair<std::string, std::string>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) joint[{a[i], given[i]}] += 1.0;
  const auto g = counts(given);
  const double n = static_cast<double>(a.size());
  double h = 0;
  for (const auto& [key, k] : joint) h -= k / n * std::log(k / g.at(key.second));
  return h;
}

double mutual_information(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<std::string, std::string>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) joint[{a[i], b[i]}] += 1.0;
  const auto ca = counts(a), cb = counts(b);
  const double n = static_cast<double>(a.size());
  double mi = 0;
  for (const auto& [key, k] : joint) mi += k / n * std::log(n * k / (ca.at(key.first) * cb.at(key.second)));
  return mi;
}

double permutation_emi(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double total = 0;
  std::size_t count = 0;
  do {
    std::vector<std::string> pb(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = b[perm[i]];
    total += mutual_information(a, pb);
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total / static_cast<double>(count);
}

double ami(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const double emi = permutation_emi(a, b);
  return (mutual_information(a, b) - emi) / (0.5 * (entropy(a) + entropy(b)) - emi);
}

double homogeneity(const std::vector<std::string>& classes, const std::vector<std::string>& clusters) {
  const double h = entropy(classes);
  return h == 0 ? 1.0 : 1.0 - conditional_entropy(classes, clusters) / h;
}

double completeness(const std::vector<std::string>& classes, const std::vector<std::string>& clusters) {
  const double h = entropy(clusters);
  return h == 0 ? 1.0 : 1.0 - conditional_entropy(clusters, classes) / h;
}

std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> opportunities(const kcluster::TransactionLog& log,
                                                                           const kcluster::QMatrix& q) {
  const auto rows = log.transactions();
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < q.kc_count(); ++k) {
      if (!q(rows[r].question, k)) continue;
      std::int64_t t = 0;
      for (std::size_t p = 0; p < rows.size(); ++p) {
        if (rows[p].student_id != rows[r].student_id) continue;
        if (rows[p].seq < rows[r].seq && q(rows[p].question, k)) ++t;
      }
      out[r].emplace_back(k, t);
    }
  }
  return out;
}

std::vector<double> numeric_gradient(const kcluster::AFMData& data, std::vector<double> x, double ridge, double h) {
  std::vector<double> g(x.size()), scratch(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = kcluster::afm_objective(data, x, ridge, scratch);
    x[i] = x0 - h;
    const double down = kcluster::afm_objective(data, x, ridge, scratch);
    x[i] = x0;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double pooled_t(const std::vector<double>& a, const std::vector<double>& b) {
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  auto ss = [](const std::vector<double>& v, double m) {
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
  };
  const double ma = mean(a), mb = mean(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sp2 = (ss(a, ma) + ss(b, mb)) / (na + nb - 2);
  return (ma - mb) / std::sqrt(sp2 * (1 / na + 1 / nb));
}

}  // namespace oracle

namespace fixture {

std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(KCLUSTER_DATA_DIR) / name; }

TempDir::TempDir() {
  static std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    path_ = std::filesystem::temp_directory_path() / ("kcluster-test-" + std::to_string(rng() % 1000000000));
    if (std::filesystem::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

kcluster::Question mcq(std::string id, std::string stem, std::vector<std::string> choices, std::size_t answer,
                       std::string expert_kc) {
  kcluster::Question q;
  q.id = std::move(id);
  q.qtype = "Multiple Choice";
  q.stem = std::move(stem);
  for (std::size_t i = 0; i < choices.size(); ++i)
    q.choices.push_back({std::string(1, static_cast<char>('a' + i)), choices[i]});
  q.answer_label = q.choices.at(answer).label;
  if (!expert_kc.empty()) q.expert_kc = std::move(expert_kc);
  return q;
}

kcluster::AffinityMatrix random_affinity(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("q" + std::to_string(i));
  kcluster::AffinityMatrix m(ids, kcluster::Metric::congruity);
  std::uniform_real_distribution<double> u(lo, hi);
  std::set<double> used;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double v;
      do v = u(rng);
      while (!used.insert(v).second);
      m.set(i, j, v);
    }
  return m;
}

kcluster::TransactionLog tiny_log(const kcluster::QuestionBank& bank, std::size_t students, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<kcluster::Transaction> rows;
  for (std::size_t s = 0; s < students; ++s) {
    const double skill = u(rng) * 2 - 1;
    for (std::size_t j = 0; j < bank.size(); ++j) {
      kcluster::Transaction t;
      t.student_id = "s" + std::to_string(100 + s);
      t.question_id = bank[j].id;
      t.seq = static_cast<std::int64_t>(j + 1);
      const double p = 1 / (1 + std::exp(-(skill + 0.1 * static_cast<double>(j % 5) - 0.2)));
      t.outcome = u(rng) < p ? 1 : 0;
      rows.push_back(t);
    }
  }
  return kcluster::TransactionLog(std::move(rows), bank);
}

}  // namespace fixture
