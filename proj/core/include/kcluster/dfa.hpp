#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kcluster/afm.hpp"
#include "kcluster/discovery.hpp"

namespace kcluster {

struct ProblematicKC {
  std::string kc;
  double gamma = 0.0;
  double initial_success = 0.0;  // sigmoid(beta)
  std::size_t question_count = 0;
};

struct ProblemThresholds {
  double gamma = 0.001;
  double low = 0.2;
  double high = 0.8;
};

// KCs that students do not learn (gamma below threshold) although they
// start neither near floor nor ceiling. Largest KCs first.
std::vector<ProblematicKC> problematic_kcs(const AFMFit& fit, const ProblemThresholds& thresholds = {});

// Labels for the questions of `kc` replaced by those `relabel` assigns to
// the subset. New labels that clash with a KC elsewhere in the model become
// "<kc>/<label>".
KCModel replace_kc(const KCModel& base, std::string_view kc, const std::vector<std::string>& subset_ids,
                   const std::vector<std::string>& new_labels, std::string name);

// Re-discovers the KCs of `kc`'s questions with `method`, on that subset only.
KCModel refine_kc(const KCModel& base, std::string_view kc, Method method, const QuestionBank& bank,
                  const ScoringBackend& backend, const DiscoveryOptions& options = {});

struct RefinementReport {
  std::string base_model;
  std::string refined_model;
  std::string kc;
  std::vector<std::string> new_labels;
  InformationCriteria base_ic;
  InformationCriteria refined_ic;
  double delta_aic = 0.0;  // refined - base
  double delta_bic = 0.0;
  CVReport base_cv;
  CVReport refined_cv;
  TTestResult ttest;  // refined vs base; negative t means lower RMSE
};

RefinementReport evaluate_refinement(const TransactionLog& log, const QuestionBank& bank, const KCModel& base,
                                     const KCModel& refined, std::string_view kc, const CVOptions& cv);

void save_refinement_json(const std::filesystem::path& path, const std::vector<RefinementReport>& reports);
// One table per report with rows for the base and refined models:
// | KC model | AIC | BIC | Item-RMSE (Std.) |
std::string refinement_markdown(const std::vector<RefinementReport>& reports);

}  // namespace kcluster
