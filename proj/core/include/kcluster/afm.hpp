#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kcluster/kc_model.hpp"
#include "kcluster/question_bank.hpp"

namespace kcluster {

struct Opportunity {
  std::size_t kc = 0;
  std::int64_t count = 0;  // prior practices of this KC by the same student
};

// T_ik for every transaction, in log order.
class OpportunityTable {
 public:
  std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const Opportunity> row(std::size_t r) const {
    return std::span(entries_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }

 private:
  friend OpportunityTable opportunity_counts(const TransactionLog& log, const QMatrix& q);
  std::vector<std::size_t> offsets_;
  std::vector<Opportunity> entries_;
};

OpportunityTable opportunity_counts(const TransactionLog& log, const QMatrix& q);

// Observations ready for fitting. Opportunity counts always come from the
// complete log, so a subset keeps the practice history of held-out rows.
struct AFMData {
  std::vector<std::string> students;
  std::vector<std::string> kc_labels;
  std::vector<std::size_t> kc_question_counts;
  std::vector<std::size_t> student;   // per row
  std::vector<std::size_t> question;  // per row, bank position
  std::vector<int> outcome;           // per row
  std::vector<std::size_t> offsets;   // row r owns opportunities [offsets[r], offsets[r+1])
  std::vector<Opportunity> opportunities;

  std::size_t size() const noexcept { return student.size(); }
  std::span<const Opportunity> row(std::size_t r) const {
    return std::span(opportunities).subspan(offsets[r], offsets[r + 1] - offsets[r]);
  }
  // Rows whose question position satisfies `keep[question]`.
  AFMData subset(const std::vector<bool>& keep_question) const;
};

AFMData make_afm_data(const TransactionLog& log, const QMatrix& q);

struct AFMConfig {
  double ridge = 1e-4;  // on theta and beta
  bool nonnegative_gamma = true;
  std::size_t max_iters = 500;
  double rel_tolerance = 1e-8;
  double grad_tolerance = 1e-6;
  bool record_trace = false;
};

struct AFMFit {
  std::vector<std::string> students;
  std::vector<std::string> kc_labels;
  std::vector<double> theta;
  std::vector<double> beta;
  std::vector<double> gamma;
  std::vector<bool> student_observed;
  std::vector<bool> kc_observed;
  std::vector<std::size_t> kc_question_counts;
  double log_likelihood = 0.0;  // without the ridge term
  double objective = 0.0;       // maximized: log_likelihood - ridge penalty
  std::size_t n_obs = 0;
  std::size_t n_params = 0;
  std::size_t iterations = 0;
  bool converged = false;
  // Students whose outcomes are all equal; their theta is held by the ridge only.
  std::size_t separable_students = 0;
  std::vector<double> objective_trace;
  std::vector<double> log_likelihood_trace;

  double mean_theta() const;
  double mean_beta() const;
  double mean_gamma() const;
};

// Log-odds of a correct answer. Students or KCs the fit never observed take
// the mean of the observed parameters.
double afm_logit(const AFMFit& fit, std::size_t student, std::span<const Opportunity> opportunities);
double predict(const AFMFit& fit, std::size_t student, std::span<const Opportunity> opportunities);

AFMFit fit_afm(const AFMData& data, const AFMConfig& cfg = {});
AFMFit fit_afm(const TransactionLog& log, const QMatrix& q, const AFMConfig& cfg = {});

// Packed parameters [theta..., beta..., gamma...] and the penalized objective
// with its gradient, exposed for verification.
double afm_objective(const AFMData& data, std::span<const double> x, double ridge, std::span<double> gradient);
std::size_t afm_parameter_count(const AFMData& data);

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};
InformationCriteria aic_bic(double log_likelihood, std::size_t n_params, std::size_t n_obs);
InformationCriteria aic_bic(const AFMFit& fit);

struct CVReport {
  std::string model;
  std::size_t folds = 3;
  std::vector<std::uint64_t> seeds;
  std::vector<double> rmse;  // per seed
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation

  bool operator==(const CVReport&) const = default;
};

struct CVOptions {
  std::size_t folds = 3;
  std::vector<std::uint64_t> seeds;  // empty means 0..49
  std::size_t jobs = 1;
  AFMConfig afm;
};

std::vector<std::uint64_t> default_cv_seeds(std::size_t count = 50);

// Item-stratified: questions are dealt into folds at random per seed; each
// fold is predicted from a fit on the other folds' transactions. RMSE is
// pooled over all held-out transactions of a seed.
CVReport item_cv(const AFMData& data, const CVOptions& options, std::string model_name = {});
CVReport item_cv(const TransactionLog& log, const QMatrix& q, const CVOptions& options, std::string model_name = {});

struct TTestResult {
  double t = 0.0;
  std::size_t df = 0;
  double p = 1.0;
  double mean_diff = 0.0;  // mean(a) - mean(b)
  bool zero_variance = false;
};

// Unpaired two-sample Student's t with pooled variance, two-sided.
TTestResult two_sample_t(std::span<const double> a, std::span<const double> b);
TTestResult compare_rmse(const CVReport& a, const CVReport& b);

struct CurvePoint {
  std::int64_t opportunity = 0;
  double error_rate = 0.0;
  std::size_t n = 0;
};

// Error rate by opportunity count over all transactions on KC `kc`.
std::vector<CurvePoint> learning_curve(const TransactionLog& log, const QMatrix& q, std::string_view kc,
                                       std::int64_t max_opportunity);

// Fit report with parameters and the "modelValues" block (LL, AIC, BIC,
// parameter and observation counts).
void save_fit(const std::filesystem::path& path, const AFMFit& fit, std::string_view model_name);
// Rows "seed,rmse" followed by "mean,<v>" and "std,<v>".
void save_cv_report(const std::filesystem::path& path, const CVReport& report);
CVReport load_cv_report(const std::filesystem::path& path);
// kc,opportunity,error_rate,n
void save_learning_curve(const std::filesystem::path& path, std::string_view kc, std::span<const CurvePoint> curve);

}  // namespace kcluster
