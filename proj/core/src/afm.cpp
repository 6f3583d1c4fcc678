#include "kcluster/afm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kcluster/csv.hpp"
#include "kcluster/error.hpp"
#include "kcluster/parallel.hpp"
#include "kcluster/rng.hpp"

namespace kcluster {

OpportunityTable opportunity_counts(const TransactionLog& log, const QMatrix& q) {
  OpportunityTable table;
  table.offsets_.reserve(log.size() + 1);
  table.offsets_.push_back(0);
  std::vector<std::int64_t> counts(q.kc_count(), 0);
  std::vector<std::size_t> touched;
  std::size_t current = std::numeric_limits<std::size_t>::max();
  for (const auto& t : log.transactions()) {
    if (t.question >= q.question_count() || q.question_ids()[t.question] != t.question_id)
      throw ValidationError("question '" + t.question_id + "' is not covered by the Q-matrix");
    if (t.student != current) {
      for (auto k : touched) counts[k] = 0;
      touched.clear();
      current = t.student;
    }
    for (auto k : q.kcs(t.question)) {
      table.entries_.push_back({k, counts[k]});
      if (counts[k]++ == 0) touched.push_back(k);
    }
    table.offsets_.push_back(table.entries_.size());
  }
  return table;
}

AFMData make_afm_data(const TransactionLog& log, const QMatrix& q) {
  const auto table = opportunity_counts(log, q);
  AFMData d;
  d.students = log.students();
  d.kc_labels = q.kc_labels();
  for (std::size_t k = 0; k < q.kc_count(); ++k) d.kc_question_counts.push_back(q.questions_in(k));
  d.offsets.push_back(0);
  const auto rows = log.transactions();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    d.student.push_back(rows[r].student);
    d.question.push_back(rows[r].question);
    d.outcome.push_back(rows[r].outcome);
    const auto opp = table.row(r);
    d.opportunities.insert(d.opportunities.end(), opp.begin(), opp.end());
    d.offsets.push_back(d.opportunities.size());
  }
  return d;
}

AFMData AFMData::subset(const std::vector<bool>& keep_question) const {
  AFMData d;
  d.students = students;
  d.kc_labels = kc_labels;
  d.kc_question_counts = kc_question_counts;
  d.offsets.push_back(0);
  for (std::size_t r = 0; r < size(); ++r) {
    if (!keep_question[question[r]]) continue;
    d.student.push_back(student[r]);
    d.question.push_back(question[r]);
    d.outcome.push_back(outcome[r]);
    const auto opp = row(r);
    d.opportunities.insert(d.opportunities.end(), opp.begin(), opp.end());
    d.offsets.push_back(d.opportunities.size());
  }
  return d;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double mean_where(const std::vector<double>& v, const std::vector<bool>& mask) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) {
      sum += v[i];
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double ridge_term(const AFMData& data, std::span<const double> x) {
  const auto m = data.students.size() + data.kc_labels.size();
  double sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) sq += x[i] * x[i];
  return sq;
}

}  // namespace

std::size_t afm_parameter_count(const AFMData& data) { return data.students.size() + 2 * data.kc_labels.size(); }

double afm_objective(const AFMData& data, std::span<const double> x, double ridge, std::span<double> gradient) {
  const auto S = data.students.size(), K = data.kc_labels.size();
  if (x.size() != S + 2 * K || gradient.size() != x.size()) throw ValidationError("AFM parameter size mismatch");
  std::fill(gradient.begin(), gradient.end(), 0.0);
  const double* theta = x.data();
  const double* beta = theta + S;
  const double* gamma = beta + K;
  double* g_theta = gradient.data();
  double* g_beta = g_theta + S;
  double* g_gamma = g_beta + K;

  double ll = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    double z = theta[data.student[r]];
    for (const auto& o : data.row(r)) z += beta[o.kc] + gamma[o.kc] * static_cast<double>(o.count);
    const double y = data.outcome[r];
    ll += y * z - softplus(z);
    const double resid = y - sigmoid(z);
    g_theta[data.student[r]] += resid;
    for (const auto& o : data.row(r)) {
      g_beta[o.kc] += resid;
      g_gamma[o.kc] += resid * static_cast<double>(o.count);
    }
  }
  for (std::size_t i = 0; i < S + K; ++i) gradient[i] -= 2.0 * ridge * x[i];
  return ll - ridge * ridge_term(data, x);
}

double AFMFit::mean_theta() const { return mean_where(theta, student_observed); }
double AFMFit::mean_beta() const { return mean_where(beta, kc_observed); }
double AFMFit::mean_gamma() const { return mean_where(gamma, kc_observed); }

double afm_logit(const AFMFit& fit, std::size_t student, std::span<const Opportunity> opportunities) {
  double z = student < fit.theta.size() && fit.student_observed[student] ? fit.theta[student] : fit.mean_theta();
  for (const auto& o : opportunities) {
    if (o.kc >= fit.beta.size()) throw ValidationError("KC index out of range");
    const bool seen = fit.kc_observed[o.kc];
    z += (seen ? fit.beta[o.kc] : fit.mean_beta()) +
         (seen ? fit.gamma[o.kc] : fit.mean_gamma()) * static_cast<double>(o.count);
  }
  return z;
}

double predict(const AFMFit& fit, std::size_t student, std::span<const Opportunity> opportunities) {
  return sigmoid(afm_logit(fit, student, opportunities));
}

AFMFit fit_afm(const AFMData& data, const AFMConfig& cfg) {
  const auto S = data.students.size(), K = data.kc_labels.size();
  const auto P = S + 2 * K;
  if (data.size() == 0) throw ValidationError("no observations to fit");

  AFMFit fit;
  fit.students = data.students;
  fit.kc_labels = data.kc_labels;
  fit.kc_question_counts = data.kc_question_counts;
  fit.student_observed.assign(S, false);
  fit.kc_observed.assign(K, false);
  std::vector<int> first_outcome(S, -1);
  std::vector<bool> mixed(S, false);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto s = data.student[r];
    fit.student_observed[s] = true;
    if (first_outcome[s] < 0) first_outcome[s] = data.outcome[r];
    else if (first_outcome[s] != data.outcome[r]) mixed[s] = true;
    for (const auto& o : data.row(r)) fit.kc_observed[o.kc] = true;
  }
  for (std::size_t s = 0; s < S; ++s) fit.separable_students += fit.student_observed[s] && !mixed[s];
  fit.n_obs = data.size();
  fit.n_params = static_cast<std::size_t>(std::count(fit.student_observed.begin(), fit.student_observed.end(), true)) +
                 2 * static_cast<std::size_t>(std::count(fit.kc_observed.begin(), fit.kc_observed.end(), true));

  const bool project = cfg.nonnegative_gamma;
  auto projected = [&](std::vector<double>& v) {
    if (project)
      for (std::size_t i = S + K; i < P; ++i) v[i] = std::max(0.0, v[i]);
  };
  // Gradient with components that would leave the feasible set zeroed.
  auto projected_grad_norm = [&](const std::vector<double>& x, const std::vector<double>& g) {
    double m = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      const bool blocked = project && i >= S + K && x[i] <= 0.0 && g[i] < 0.0;
      if (!blocked) m = std::max(m, std::abs(g[i]));
    }
    return m;
  };

  std::vector<double> x(P, 0.0), g(P), x_new(P), g_new(P);
  double f = afm_objective(data, x, cfg.ridge, g);
  auto record = [&](const std::vector<double>& at, double value) {
    if (!cfg.record_trace) return;
    fit.objective_trace.push_back(value);
    fit.log_likelihood_trace.push_back(value + cfg.ridge * ridge_term(data, at));
  };
  record(x, f);

  double step = 1.0 / std::max(1.0, projected_grad_norm(x, g));
  std::size_t it = 0;
  while (it < cfg.max_iters) {
    if (projected_grad_norm(x, g) < cfg.grad_tolerance) {
      fit.converged = true;
      break;
    }
    ++it;
    bool accepted = false;
    double f_new = f;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t i = 0; i < P; ++i) x_new[i] = x[i] + step * g[i];
      projected(x_new);
      double ascent = 0.0;
      for (std::size_t i = 0; i < P; ++i) ascent += g[i] * (x_new[i] - x[i]);
      f_new = afm_objective(data, x_new, cfg.ridge, g_new);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * ascent) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No representable ascent step remains.
      fit.converged = true;
      break;
    }

    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      const double s = x_new[i] - x[i];
      ss += s * s;
      sy += s * (g_new[i] - g[i]);
    }
    const double change = std::abs(f_new - f) / std::max(1.0, std::abs(f));
    std::swap(x, x_new);
    std::swap(g, g_new);
    f = f_new;
    record(x, f);
    if (change < cfg.rel_tolerance) {
      fit.converged = true;
      break;
    }
    // Barzilai-Borwein step for the next iteration.
    step = sy < 0.0 ? std::clamp(ss / -sy, 1e-10, 1e10) : std::min(step * 2.0, 1e10);
  }

  fit.iterations = it;
  fit.theta.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(S));
  fit.beta.assign(x.begin() + static_cast<std::ptrdiff_t>(S), x.begin() + static_cast<std::ptrdiff_t>(S + K));
  fit.gamma.assign(x.begin() + static_cast<std::ptrdiff_t>(S + K), x.end());
  fit.objective = f;
  fit.log_likelihood = f + cfg.ridge * ridge_term(data, x);
  return fit;
}

AFMFit fit_afm(const TransactionLog& log, const QMatrix& q, const AFMConfig& cfg) {
  auto fit = fit_afm(make_afm_data(log, q), cfg);
  for (std::size_t k = 0; k < fit.kc_labels.size(); ++k)
    if (!fit.kc_observed[k]) spdlog::warn("KC '{}' has no observations; it is left out of the fit", fit.kc_labels[k]);
  if (fit.separable_students)
    spdlog::warn("{} student(s) answered every attempt the same way; their proficiency is set by the ridge term",
                 fit.separable_students);
  if (!fit.converged) spdlog::warn("AFM fit stopped after {} iterations without converging", fit.iterations);
  return fit;
}

InformationCriteria aic_bic(double log_likelihood, std::size_t n_params, std::size_t n_obs) {
  const double k = static_cast<double>(n_params);
  return {2.0 * k - 2.0 * log_likelihood, k * std::log(static_cast<double>(n_obs)) - 2.0 * log_likelihood};
}

InformationCriteria aic_bic(const AFMFit& fit) { return aic_bic(fit.log_likelihood, fit.n_params, fit.n_obs); }

std::vector<std::uint64_t> default_cv_seeds(std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
  return seeds;
}

CVReport item_cv(const AFMData& data, const CVOptions& options, std::string model_name) {
  if (options.folds < 2) throw ValidationError("item CV needs at least 2 folds");
  const auto seeds = options.seeds.empty() ? default_cv_seeds() : options.seeds;

  std::size_t n_questions = 0;
  for (auto j : data.question) n_questions = std::max(n_questions, j + 1);
  std::vector<bool> present(n_questions, false);
  for (auto j : data.question) present[j] = true;
  std::vector<std::size_t> items;
  for (std::size_t j = 0; j < n_questions; ++j)
    if (present[j]) items.push_back(j);
  if (items.size() < options.folds)
    throw ValidationError(fmt::format("{} answered questions cannot fill {} folds", items.size(), options.folds));

  // Fold of every question, per seed.
  std::vector<std::vector<std::size_t>> fold_of(seeds.size(), std::vector<std::size_t>(n_questions, 0));
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    std::mt19937_64 rng(splitmix64(seeds[s]));
    auto order = items;
    shuffle(std::span(order), rng);
    for (std::size_t i = 0; i < order.size(); ++i) fold_of[s][order[i]] = i % options.folds;
  }

  struct Partial {
    double sse = 0.0;
    std::size_t n = 0;
  };
  std::vector<Partial> partial(seeds.size() * options.folds);
  parallel_for(partial.size(), options.jobs, [&](std::size_t task) {
    const auto s = task / options.folds, fold = task % options.folds;
    std::vector<bool> train(n_questions);
    for (std::size_t j = 0; j < n_questions; ++j) train[j] = present[j] && fold_of[s][j] != fold;
    auto cfg = options.afm;
    cfg.record_trace = false;
    const auto fit = fit_afm(data.subset(train), cfg);
    Partial out;
    for (std::size_t r = 0; r < data.size(); ++r) {
      if (train[data.question[r]]) continue;
      const double err = data.outcome[r] - predict(fit, data.student[r], data.row(r));
      out.sse += err * err;
      ++out.n;
    }
    partial[task] = out;
  });

  CVReport report;
  report.model = std::move(model_name);
  report.folds = options.folds;
  report.seeds = seeds;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    double sse = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < options.folds; ++f) {
      sse += partial[s * options.folds + f].sse;
      n += partial[s * options.folds + f].n;
    }
    report.rmse.push_back(std::sqrt(sse / static_cast<double>(n)));
  }
  const double count = static_cast<double>(report.rmse.size());
  report.mean = std::accumulate(report.rmse.begin(), report.rmse.end(), 0.0) / count;
  double var = 0.0;
  for (double v : report.rmse) var += (v - report.mean) * (v - report.mean);
  report.std = report.rmse.size() > 1 ? std::sqrt(var / (count - 1.0)) : 0.0;
  return report;
}

CVReport item_cv(const TransactionLog& log, const QMatrix& q, const CVOptions& options, std::string model_name) {
  return item_cv(make_afm_data(log, q), options, std::move(model_name));
}

TTestResult two_sample_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("t-test needs at least 2 values per sample");
  auto moments = [](std::span<const double> v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss};
  };
  const auto [ma, ssa] = moments(a);
  const auto [mb, ssb] = moments(b);
  TTestResult r;
  r.df = a.size() + b.size() - 2;
  r.mean_diff = ma - mb;
  const double pooled = (ssa + ssb) / static_cast<double>(r.df);
  if (pooled == 0.0) {
    r.zero_variance = true;
    r.p = 1.0;
    r.t = r.mean_diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.mean_diff);
    return r;
  }
  const double se = std::sqrt(pooled * (1.0 / static_cast<double>(a.size()) + 1.0 / static_cast<double>(b.size())));
  r.t = r.mean_diff / se;
  const boost::math::students_t dist(static_cast<double>(r.df));
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

TTestResult compare_rmse(const CVReport& a, const CVReport& b) { return two_sample_t(a.rmse, b.rmse); }

std::vector<CurvePoint> learning_curve(const TransactionLog& log, const QMatrix& q, std::string_view kc,
                                       std::int64_t max_opportunity) {
  const auto k = q.kc_index(kc);
  const auto table = opportunity_counts(log, q);
  const auto rows = log.transactions();
  const auto size = static_cast<std::size_t>(std::max<std::int64_t>(0, max_opportunity + 1));
  std::vector<std::size_t> n(size, 0), wrong(size, 0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (const auto& o : table.row(r))
      if (o.kc == k && o.count <= max_opportunity) {
        ++n[static_cast<std::size_t>(o.count)];
        wrong[static_cast<std::size_t>(o.count)] += rows[r].outcome == 0;
      }
  std::vector<CurvePoint> curve;
  for (std::size_t t = 0; t < size; ++t)
    if (n[t] > 0)
      curve.push_back({static_cast<std::int64_t>(t), static_cast<double>(wrong[t]) / static_cast<double>(n[t]), n[t]});
  return curve;
}

void save_fit(const std::filesystem::path& path, const AFMFit& fit, std::string_view model_name) {
  const auto ic = aic_bic(fit);
  nlohmann::ordered_json j;
  j["model"] = model_name;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  nlohmann::ordered_json values;
  values["log_likelihood"] = fit.log_likelihood;
  values["aic"] = ic.aic;
  values["bic"] = ic.bic;
  values["n_params"] = fit.n_params;
  values["n_obs"] = fit.n_obs;
  j["modelValues"] = std::move(values);
  auto students = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < fit.students.size(); ++s)
    students.push_back({{"student_id", fit.students[s]}, {"theta", fit.theta[s]}, {"observed", bool(fit.student_observed[s])}});
  j["students"] = std::move(students);
  auto kcs = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < fit.kc_labels.size(); ++k)
    kcs.push_back({{"kc", fit.kc_labels[k]},
                   {"beta", fit.beta[k]},
                   {"gamma", fit.gamma[k]},
                   {"initial_success", 1.0 / (1.0 + std::exp(-fit.beta[k]))},
                   {"questions", fit.kc_question_counts[k]},
                   {"observed", bool(fit.kc_observed[k])}});
  j["kcs"] = std::move(kcs);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void save_cv_report(const std::filesystem::path& path, const CVReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"seed", "rmse"});
  for (std::size_t s = 0; s < report.seeds.size(); ++s)
    csv::write_row(out, {std::to_string(report.seeds[s]), fmt::format("{:.17g}", report.rmse[s])});
  csv::write_row(out, {"mean", fmt::format("{:.17g}", report.mean)});
  csv::write_row(out, {"std", fmt::format("{:.17g}", report.std)});
}

CVReport load_cv_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::size_t line = 0;
  csv::expect_header(in, line, {"seed", "rmse"}, path.string());
  CVReport report;
  report.model = path.stem().string();
  while (auto row = csv::read_row(in, line)) {
    if (row->size() != 2) throw ParseError(path.string(), line, "expected 2 fields");
    double value = 0.0;
    try {
      value = std::stod((*row)[1]);
    } catch (const std::exception&) {
      throw ParseError(path.string(), line, "bad number '" + (*row)[1] + "'");
    }
    if ((*row)[0] == "mean") {
      report.mean = value;
    } else if ((*row)[0] == "std") {
      report.std = value;
    } else {
      try {
        report.seeds.push_back(std::stoull((*row)[0]));
      } catch (const std::exception&) {
        throw ParseError(path.string(), line, "bad seed '" + (*row)[0] + "'");
      }
      report.rmse.push_back(value);
    }
  }
  report.folds = 0;
  return report;
}

void save_learning_curve(const std::filesystem::path& path, std::string_view kc, std::span<const CurvePoint> curve) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"kc", "opportunity", "error_rate", "n"});
  for (const auto& p : curve)
    csv::write_row(out, {std::string(kc), std::to_string(p.opportunity), fmt::format("{:.17g}", p.error_rate),
                         std::to_string(p.n)});
}

}  // namespace kcluster
