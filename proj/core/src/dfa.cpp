#include "kcluster/dfa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kcluster/error.hpp"

namespace kcluster {

std::vector<ProblematicKC> problematic_kcs(const AFMFit& fit, const ProblemThresholds& thresholds) {
  std::vector<ProblematicKC> out;
  for (std::size_t k = 0; k < fit.kc_labels.size(); ++k) {
    if (!fit.kc_observed.empty() && !fit.kc_observed[k]) continue;
    const double success = 1.0 / (1.0 + std::exp(-fit.beta[k]));
    if (fit.gamma[k] < thresholds.gamma && success > thresholds.low && success < thresholds.high)
      out.push_back({fit.kc_labels[k], fit.gamma[k], success,
                     k < fit.kc_question_counts.size() ? fit.kc_question_counts[k] : 0});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.question_count > b.question_count; });
  return out;
}

KCModel replace_kc(const KCModel& base, std::string_view kc, const std::vector<std::string>& subset_ids,
                   const std::vector<std::string>& new_labels, std::string name) {
  if (subset_ids.size() != new_labels.size()) throw ValidationError("subset ids and labels differ in count");
  std::unordered_set<std::string> outside;
  for (const auto& l : base.labels)
    if (l != kc) outside.insert(l);
  std::unordered_map<std::string, std::string> relabel;
  for (std::size_t i = 0; i < subset_ids.size(); ++i) {
    auto label = new_labels[i];
    if (outside.contains(label)) label = fmt::format("{}/{}", kc, label);
    relabel.emplace(subset_ids[i], std::move(label));
  }
  KCModel out{std::move(name), base.question_ids, base.labels};
  for (std::size_t j = 0; j < out.question_ids.size(); ++j) {
    if (out.labels[j] != kc) continue;
    auto it = relabel.find(out.question_ids[j]);
    if (it == relabel.end()) throw ValidationError("no new label for question '" + out.question_ids[j] + "'");
    out.labels[j] = it->second;
  }
  return out;
}

KCModel refine_kc(const KCModel& base, std::string_view kc, Method method, const QuestionBank& bank,
                  const ScoringBackend& backend, const DiscoveryOptions& options) {
  if (base.question_ids != bank.ids()) throw ValidationError("KC model '" + base.name + "' does not match the bank");
  std::vector<std::size_t> positions;
  for (std::size_t j = 0; j < base.labels.size(); ++j)
    if (base.labels[j] == kc) positions.push_back(j);
  if (positions.empty()) throw ValidationError("unknown KC '" + std::string(kc) + "'");
  if (positions.size() < 2) throw ValidationError("KC '" + std::string(kc) + "' has a single question; nothing to split");
  const auto subset = bank.subset(positions);
  const auto found = discover(subset, backend, method, options);
  return replace_kc(base, kc, subset.ids(), found.model.labels,
                    fmt::format("{} [{} by {}]", base.name, kc, method_title(method)));
}

RefinementReport evaluate_refinement(const TransactionLog& log, const QuestionBank& bank, const KCModel& base,
                                     const KCModel& refined, std::string_view kc, const CVOptions& cv) {
  RefinementReport r;
  r.base_model = base.name;
  r.refined_model = refined.name;
  r.kc = kc;
  std::unordered_set<std::string> before(base.labels.begin(), base.labels.end());
  for (const auto& l : refined.kc_labels())
    if (!before.contains(l) || l == kc) r.new_labels.push_back(l);

  const auto base_data = make_afm_data(log, to_qmatrix(base, bank));
  const auto refined_data = make_afm_data(log, to_qmatrix(refined, bank));
  r.base_ic = aic_bic(fit_afm(base_data, cv.afm));
  r.refined_ic = aic_bic(fit_afm(refined_data, cv.afm));
  r.delta_aic = r.refined_ic.aic - r.base_ic.aic;
  r.delta_bic = r.refined_ic.bic - r.base_ic.bic;
  r.base_cv = item_cv(base_data, cv, base.name);
  r.refined_cv = item_cv(refined_data, cv, refined.name);
  r.ttest = compare_rmse(r.refined_cv, r.base_cv);
  return r;
}

void save_refinement_json(const std::filesystem::path& path, const std::vector<RefinementReport>& reports) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    auto model = [](const InformationCriteria& ic, const CVReport& cv) {
      return nlohmann::ordered_json{{"aic", ic.aic}, {"bic", ic.bic}, {"item_rmse", cv.mean}, {"item_rmse_std", cv.std}};
    };
    nlohmann::ordered_json e;
    e["kc"] = r.kc;
    e["base_model"] = r.base_model;
    e["refined_model"] = r.refined_model;
    e["new_labels"] = r.new_labels;
    e["base"] = model(r.base_ic, r.base_cv);
    e["refined"] = model(r.refined_ic, r.refined_cv);
    e["delta_aic"] = r.delta_aic;
    e["delta_bic"] = r.delta_bic;
    e["ttest"] = {{"t", r.ttest.t}, {"df", r.ttest.df}, {"p", r.ttest.p}, {"mean_diff", r.ttest.mean_diff},
                  {"zero_variance", r.ttest.zero_variance}};
    j.push_back(std::move(e));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string refinement_markdown(const std::vector<RefinementReport>& reports) {
  std::string md;
  for (const auto& r : reports) {
    md += fmt::format("### {}\n\n", r.kc);
    md += "| KC model | AIC | BIC | Item-RMSE (Std.) |\n|---|---:|---:|---:|\n";
    md += fmt::format("| {} | {:.2f} | {:.2f} | {:.4f} ({:.4f}) |\n", r.base_model, r.base_ic.aic, r.base_ic.bic,
                      r.base_cv.mean, r.base_cv.std);
    md += fmt::format("| {} (+{} KCs) | {:.2f} | {:.2f} | {:.4f} ({:.4f}) |\n", r.refined_model,
                      r.new_labels.size(), r.refined_ic.aic, r.refined_ic.bic, r.refined_cv.mean, r.refined_cv.std);
    md += fmt::format("\nt({}) = {:.4f}, p = {:.4g}\n\n", r.ttest.df, r.ttest.t, r.ttest.p);
  }
  return md;
}

}  // namespace kcluster
