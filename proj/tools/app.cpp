#include "app.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kcluster/affinity_propagation.hpp"
#include "kcluster/cached_backend.hpp"
#include "kcluster/concepts.hpp"
#include "kcluster/congruity.hpp"
#include "kcluster/dfa.hpp"
#include "kcluster/embeddings.hpp"
#include "kcluster/error.hpp"
#include "kcluster/kc_model.hpp"
#include "kcluster/ngram_lm.hpp"
#include "kcluster/remote_backend.hpp"
#include "kcluster/rng.hpp"

namespace kcluster::app {

namespace fs = std::filesystem;

BackendPtr make_backend(const std::string& spec, const std::optional<fs::path>& cache, const QuestionBank& bank) {
  BackendPtr inner;
  if (spec == "builtin") {
    inner = std::make_shared<NgramLanguageModel>(NgramLanguageModel::from_bank(bank));
  } else if (spec.starts_with("remote:")) {
    RemoteOptions options;
    options.base_url = spec.substr(7);
    if (options.base_url.empty()) throw ValidationError("remote backend needs a URL: remote:<url>");
    if (const char* token = std::getenv("KCLUSTER_REMOTE_TOKEN"); token && *token) options.auth_token = token;
    inner = std::make_shared<RemoteBackend>(std::move(options));
  } else {
    throw ValidationError("unknown backend '" + spec + "' (expected builtin or remote:<url>)");
  }
  if (cache) return with_cache(std::move(inner), *cache);
  return inner;
}

KCModel resolve_kc_model(const std::string& spec, const QuestionBank& bank) {
  if (spec == "@expert") return expert_kc_model(bank);
  if (spec == "@single") return single_kc_model(bank);
  if (spec == "@unique") return unique_step_model(bank);
  if (spec.starts_with("@")) throw ValidationError("unknown built-in KC model '" + spec + "'");
  return load_kc_model(spec, bank);
}

std::vector<std::uint64_t> cv_seeds(std::uint64_t seed, std::size_t count) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(derive_seed(seed, i) >> 32);
  return out;
}

namespace {

TransactionLog load_log(const fs::path& path, const QuestionBank& bank, bool first_attempt_only) {
  auto log = load_transactions(path, bank);
  if (first_attempt_only) log = log.first_attempts_only();
  spdlog::info("{}: {} students, {} attempts", path.string(), log.students().size(), log.size());
  return log;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::string file_safe(std::string_view label) {
  std::string out;
  for (char c : label) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return out;
}

void save_curves(const fs::path& dir, const TransactionLog& log, const QMatrix& q, std::size_t max_opportunity,
                 const std::vector<std::string>& kcs) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < kcs.size(); ++i) {
    const auto curve = learning_curve(log, q, kcs[i], static_cast<std::int64_t>(max_opportunity));
    save_learning_curve(dir / fmt::format("{:03}_{}.csv", i + 1, file_safe(kcs[i])), kcs[i], curve);
  }
}

// Runs `body`, naming the stage in the log if it throws.
template <typename Body>
auto stage(std::string_view name, Body&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    spdlog::error("stage '{}' failed: {}", name, e.what());
    spdlog::error("outputs of earlier stages are kept; rerun `kcluster {}` once the cause is fixed", name);
    throw;
  }
}

struct SummaryRow {
  std::string model;
  std::size_t kcs = 0;
  double log_likelihood = 0.0;
  InformationCriteria ic;
  CVReport cv;
};

SummaryRow evaluate_model(const KCModel& model, const TransactionLog& log, const QuestionBank& bank,
                          const CVOptions& cv, AFMFit* fit_out = nullptr) {
  const auto data = make_afm_data(log, to_qmatrix(model, bank));
  auto fit = fit_afm(data, cv.afm);
  if (!fit.converged) spdlog::warn("AFM fit of '{}' did not converge", model.name);
  SummaryRow row{model.name, model.kc_count(), fit.log_likelihood, aic_bic(fit), item_cv(data, cv, model.name)};
  if (fit_out) *fit_out = std::move(fit);
  return row;
}

void save_summary(const fs::path& dir, const std::vector<SummaryRow>& rows) {
  auto j = nlohmann::ordered_json::array();
  std::string md = "| KC model | KCs | LL | AIC | BIC | Item-RMSE (Std.) |\n|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    j.push_back({{"model", r.model},
                 {"kc_count", r.kcs},
                 {"log_likelihood", r.log_likelihood},
                 {"aic", r.ic.aic},
                 {"bic", r.ic.bic},
                 {"item_rmse", r.cv.mean},
                 {"item_rmse_std", r.cv.std}});
    md += fmt::format("| {} | {} | {:.2f} | {:.2f} | {:.2f} | {:.4f} ({:.4f}) |\n", r.model, r.kcs, r.log_likelihood,
                      r.ic.aic, r.ic.bic, r.cv.mean, r.cv.std);
  }
  std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "summary.json").string());
  out << j.dump(2) << '\n';
  write_text(dir / "summary.md", md);
}

bool has_expert_labels(const QuestionBank& bank) {
  return std::all_of(bank.begin(), bank.end(), [](const Question& q) { return q.expert_kc.has_value(); });
}

}  // namespace

int run_pipeline(const PipelineConfig& cfg) {
  const auto bank = stage("ingest-check", [&] { return load_bank(cfg.bank); });
  spdlog::info("{}: {} questions", cfg.bank.string(), bank.size());
  std::optional<TransactionLog> log;
  if (cfg.transactions)
    log = stage("ingest-check", [&] { return load_log(*cfg.transactions, bank, cfg.first_attempt_only); });
  const auto backend = make_backend(cfg.backend, cfg.cache, bank);
  fs::create_directories(cfg.out);

  auto options = cfg.discovery;
  options.jobs = cfg.jobs;
  const auto concepts = stage("concepts", [&] { return extract_all(bank, *backend, options.decode, cfg.jobs); });
  save_concepts(cfg.out / "concepts.csv", concepts);

  const std::optional<KCModel> expert = has_expert_labels(bank) ? std::optional(expert_kc_model(bank)) : std::nullopt;
  CVOptions cv;
  cv.folds = cfg.folds;
  cv.seeds = cv_seeds(cfg.seed, cfg.cv_seed_count);
  cv.jobs = cfg.jobs;

  bool all_converged = true;
  std::vector<SummaryRow> summary;
  if (log) {
    stage("afm-cv", [&] {
      summary.push_back(evaluate_model(single_kc_model(bank), *log, bank, cv));
      summary.push_back(evaluate_model(unique_step_model(bank), *log, bank, cv));
      if (expert) summary.push_back(evaluate_model(*expert, *log, bank, cv));
    });
  }

  for (const auto method : cfg.methods) {
    const auto name = std::string(method_name(method));
    const auto dir = cfg.out / name;
    fs::create_directories(dir);
    const auto found = stage(name == "kcluster" ? "congruity" : "cluster",
                             [&] { return discover(bank, *backend, method, options, &concepts); });
    if (found.affinity) save_affinity(dir / "affinity.csv", *found.affinity);
    if (found.assignment) {
      save_assignment(dir / "assignment.json", *found.assignment);
      if (!found.assignment->converged) {
        spdlog::warn("{}: affinity propagation did not converge in {} iterations", name, found.assignment->iterations);
        all_converged = false;
      }
      spdlog::info("{}: {} clusters", name, found.assignment->cluster_count());
    }
    save_kc_model(dir / "kc_model.csv", found.model);
    if (expert) {
      const std::vector rows{alignment(*expert, found.model)};
      save_alignment(dir / "metrics.json", rows);
    }
    if (log) {
      stage("afm-fit", [&] {
        AFMFit fit;
        auto row = evaluate_model(found.model, *log, bank, cv, &fit);
        all_converged = all_converged && fit.converged;
        save_fit(dir / "fit.json", fit, found.model.name);
        save_cv_report(dir / "cv.csv", row.cv);
        save_curves(dir / "curves", *log, to_qmatrix(found.model, bank), cfg.max_opportunity, found.model.kc_labels());
        summary.push_back(std::move(row));
      });
    }
  }
  if (log) save_summary(cfg.out, summary);
  spdlog::info("outputs written to {}", cfg.out.string());
  return cfg.strict && !all_converged ? kNotConverged : kOk;
}

namespace {

struct Options {
  std::string bank;
  std::string transactions;
  std::string backend = "builtin";
  std::string cache;
  std::vector<std::string> methods;
  double damping = 0.9;
  std::size_t max_iters = 200;
  std::size_t stable_window = 15;
  std::optional<double> preference;
  std::size_t folds = 3;
  std::size_t cv_seeds = 50;
  bool merge_duplicate_labels = false;
  bool first_attempt_only = false;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  bool strict = false;
  std::vector<std::string> kc_models;
  std::string reference = "@expert";
  std::string concepts;
  std::string assignment;
  std::string affinity;
  std::string source = "question";
  std::string name;
  std::vector<std::string> kcs;
  std::size_t max_opportunity = 20;
  double gamma_threshold = 0.001;
  std::size_t max_refinements = 5;
  bool verbose = false;
};

std::optional<fs::path> optional_path(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<fs::path>(s);
}

APParams ap_params(const Options& o) {
  APParams p;
  p.damping = o.damping;
  p.max_iters = o.max_iters;
  p.stable_window = std::min(o.stable_window, o.max_iters);
  p.preference = o.preference;
  return p;
}

std::vector<Method> parse_methods(const std::vector<std::string>& names, Method fallback) {
  std::vector<Method> out;
  for (const auto& n : names) {
    if (n == "all") {
      out = {Method::concept_string, Method::concept_emb, Method::question_emb, Method::kcluster};
      continue;
    }
    out.push_back(parse_method(n));
  }
  if (out.empty()) out.push_back(fallback);
  return out;
}

CVOptions cv_options(const Options& o) {
  CVOptions cv;
  cv.folds = o.folds;
  cv.seeds = cv_seeds(o.seed, o.cv_seeds);
  cv.jobs = o.jobs;
  return cv;
}

void print_table(const std::vector<AlignmentReport>& rows) {
  fmt::print("{:<28} {:>4} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "model", "KCs", "ARI", "AMI", "FMI", "H", "C", "V");
  for (const auto& r : rows)
    fmt::print("{:<28} {:>4} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f}\n", r.model, r.kc_count, r.ari,
               r.ami, r.fowlkes_mallows, r.homogeneity, r.completeness, r.v_measure);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App cli{"Knowledge-component discovery and evaluation", "kcluster"};
  cli.require_subcommand(1);
  cli.fallthrough();
  Options o;
  cli.add_flag("-v,--verbose", o.verbose, "Log progress to stderr");

  auto bank = [&](CLI::App* c) { c->add_option("--bank", o.bank, "Question bank (JSONL)")->required()->check(CLI::ExistingFile); };
  auto transactions = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--transactions", o.transactions, "Transaction log (CSV)")->check(CLI::ExistingFile);
    if (required) opt->required();
    c->add_flag("--first-attempt-only", o.first_attempt_only, "Keep only each student's first attempt per question");
  };
  auto backend = [&](CLI::App* c) {
    c->add_option("--backend", o.backend, "builtin or remote:<url>")->capture_default_str();
    c->add_option("--cache", o.cache, "Persistent JSONL cache for backend calls");
  };
  auto jobs = [&](CLI::App* c) {
    c->add_option("--jobs", o.jobs, "Worker threads (0: all cores)")->capture_default_str();
  };
  auto ap = [&](CLI::App* c) {
    c->add_option("--damping", o.damping, "Affinity propagation damping in [0.5, 1)")->capture_default_str();
    c->add_option("--max-iters", o.max_iters, "Affinity propagation iteration cap")->capture_default_str();
    c->add_option("--stable-window", o.stable_window, "Unchanged iterations needed to converge")->capture_default_str();
    c->add_option("--preference", o.preference, "Fixed preference (default: median affinity)");
  };
  auto cv = [&](CLI::App* c) {
    c->add_option("--folds", o.folds, "Item-stratified CV folds")->capture_default_str();
    c->add_option("--cv-seeds", o.cv_seeds, "Number of CV seeds")->capture_default_str();
    c->add_option("--seed", o.seed, "Seed all randomness derives from")->capture_default_str();
  };
  auto kc_model = [&](CLI::App* c, bool many) {
    auto* opt = c->add_option("--kc-model", o.kc_models, "KC model CSV, or @expert, @single, @unique");
    if (!many) opt->expected(1);
    opt->required();
  };
  auto out = [&](CLI::App* c, const char* help) { c->add_option("--out", o.out, help)->required(); };
  auto strict = [&](CLI::App* c) { c->add_flag("--strict", o.strict, "Exit with status 4 when a fit does not converge"); };

  auto* ingest = cli.add_subcommand("ingest-check", "Validate input files and print their sizes");
  bank(ingest);
  transactions(ingest, false);
  ingest->add_option("--kc-model", o.kc_models, "KC model files to validate");

  auto* congruity_cmd = cli.add_subcommand("congruity", "Question congruity matrix");
  bank(congruity_cmd);
  backend(congruity_cmd);
  jobs(congruity_cmd);
  out(congruity_cmd, "Affinity CSV");

  auto* concepts_cmd = cli.add_subcommand("concepts", "Extract one concept per question");
  bank(concepts_cmd);
  backend(concepts_cmd);
  jobs(concepts_cmd);
  out(concepts_cmd, "Concepts CSV");

  auto* embed_cmd = cli.add_subcommand("embed", "Question or concept embeddings");
  bank(embed_cmd);
  backend(embed_cmd);
  embed_cmd->add_option("--source", o.source, "question or concept")
      ->check(CLI::IsMember({"question", "concept"}))
      ->capture_default_str();
  embed_cmd->add_option("--concepts", o.concepts, "Concepts CSV (extracted when omitted)");
  embed_cmd->add_option("--affinity", o.affinity, "Also write the negative-cosine affinity CSV here");
  jobs(embed_cmd);
  out(embed_cmd, "Output stem: <stem>.json, <stem>.bin, <stem>.csv");

  auto* cluster_cmd = cli.add_subcommand("cluster", "Affinity propagation over an affinity matrix");
  cluster_cmd->add_option("--affinity", o.affinity, "Affinity CSV")->required()->check(CLI::ExistingFile);
  ap(cluster_cmd);
  strict(cluster_cmd);
  out(cluster_cmd, "Assignment JSON");

  auto* build_cmd = cli.add_subcommand("kc-build", "KC model from concepts (and clusters)");
  bank(build_cmd);
  build_cmd->add_option("--concepts", o.concepts, "Concepts CSV")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--assignment", o.assignment, "Assignment JSON; omit for the concept method");
  build_cmd->add_flag("--merge-duplicate-labels", o.merge_duplicate_labels, "Merge clusters with equal concepts");
  build_cmd->add_option("--name", o.name, "Model name");
  out(build_cmd, "KC model CSV");

  auto* fit_cmd = cli.add_subcommand("afm-fit", "Fit the Additive Factors Model");
  bank(fit_cmd);
  transactions(fit_cmd, true);
  kc_model(fit_cmd, false);
  strict(fit_cmd);
  out(fit_cmd, "Fit report JSON");

  auto* cv_cmd = cli.add_subcommand("afm-cv", "Item-stratified cross-validation");
  bank(cv_cmd);
  transactions(cv_cmd, true);
  kc_model(cv_cmd, false);
  cv(cv_cmd);
  jobs(cv_cmd);
  out(cv_cmd, "CV report CSV");

  auto* align_cmd = cli.add_subcommand("align", "Alignment metrics against a reference KC model");
  bank(align_cmd);
  align_cmd->add_option("--reference", o.reference, "Reference KC model")->capture_default_str();
  kc_model(align_cmd, true);
  align_cmd->add_option("--out", o.out, "Metrics JSON");

  auto* curves_cmd = cli.add_subcommand("curves", "Learning curves per KC");
  bank(curves_cmd);
  transactions(curves_cmd, true);
  kc_model(curves_cmd, false);
  curves_cmd->add_option("--kc", o.kcs, "KCs to plot (default: all)");
  curves_cmd->add_option("--max-opportunity", o.max_opportunity, "Last opportunity")->capture_default_str();
  out(curves_cmd, "Output directory");

  auto* dfa_cmd = cli.add_subcommand("dfa", "Find problematic KCs, split them and test the refinements");
  bank(dfa_cmd);
  transactions(dfa_cmd, true);
  kc_model(dfa_cmd, false);
  backend(dfa_cmd);
  dfa_cmd->add_option("--method", o.methods, "concept, concept-emb, question-emb or kcluster");
  ap(dfa_cmd);
  cv(dfa_cmd);
  dfa_cmd->add_flag("--merge-duplicate-labels", o.merge_duplicate_labels, "Merge clusters with equal concepts");
  dfa_cmd->add_option("--gamma-threshold", o.gamma_threshold, "Learning-rate threshold")->capture_default_str();
  dfa_cmd->add_option("--max-refinements", o.max_refinements, "Problematic KCs to refine")->capture_default_str();
  jobs(dfa_cmd);
  out(dfa_cmd, "Output directory");

  auto* pipeline_cmd = cli.add_subcommand("pipeline", "Run every stage end to end");
  bank(pipeline_cmd);
  transactions(pipeline_cmd, false);
  backend(pipeline_cmd);
  pipeline_cmd->add_option("--method", o.methods, "concept, concept-emb, question-emb, kcluster or all (repeatable)");
  ap(pipeline_cmd);
  cv(pipeline_cmd);
  pipeline_cmd->add_flag("--merge-duplicate-labels", o.merge_duplicate_labels, "Merge clusters with equal concepts");
  pipeline_cmd->add_option("--max-opportunity", o.max_opportunity, "Last opportunity in learning curves")
      ->capture_default_str();
  strict(pipeline_cmd);
  jobs(pipeline_cmd);
  out(pipeline_cmd, "Output directory");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  spdlog::set_default_logger(
      std::make_shared<spdlog::logger>("kcluster", std::make_shared<spdlog::sinks::stderr_color_sink_mt>()));
  spdlog::set_level(o.verbose ? spdlog::level::info : spdlog::level::warn);
  spdlog::set_pattern("[%l] %v");

  try {
    DiscoveryOptions discovery;
    discovery.ap = ap_params(o);
    discovery.merge_duplicate_labels = o.merge_duplicate_labels;
    discovery.jobs = o.jobs;

    if (*ingest) {
      const auto b = load_bank(o.bank);
      const auto expert = has_expert_labels(b);
      fmt::print("bank: {} questions{}\n", b.size(),
                 expert ? fmt::format(", {} expert KCs", expert_kc_model(b).kc_count()) : std::string{});
      if (!o.transactions.empty()) {
        const auto log = load_log(o.transactions, b, o.first_attempt_only);
        fmt::print("transactions: {} students, {} attempts\n", log.students().size(), log.size());
      }
      for (const auto& m : o.kc_models) {
        const auto model = resolve_kc_model(m, b);
        fmt::print("kc model {}: {} KCs\n", model.name, model.kc_count());
      }
      return kOk;
    }

    if (*congruity_cmd) {
      const auto b = load_bank(o.bank);
      const auto be = make_backend(o.backend, optional_path(o.cache), b);
      ensure_parent(o.out);
      save_affinity(o.out, congruity_matrix(b, *be, {o.jobs, 64}));
      return kOk;
    }

    if (*concepts_cmd) {
      const auto b = load_bank(o.bank);
      const auto be = make_backend(o.backend, optional_path(o.cache), b);
      ensure_parent(o.out);
      save_concepts(o.out, extract_all(b, *be, default_concept_decoding(), o.jobs));
      return kOk;
    }

    if (*embed_cmd) {
      const auto b = load_bank(o.bank);
      const auto be = make_backend(o.backend, optional_path(o.cache), b);
      EmbeddingSet emb;
      if (o.source == "question") {
        emb = question_embeddings(b, *be);
      } else {
        const auto c = o.concepts.empty() ? extract_all(b, *be, default_concept_decoding(), o.jobs)
                                          : load_concepts(o.concepts, b);
        emb = concept_embeddings(c, *be);
      }
      ensure_parent(o.out);
      save_embeddings(o.out, emb);
      if (!o.affinity.empty()) {
        ensure_parent(o.affinity);
        save_affinity(o.affinity, embedding_affinity(emb));
      }
      return kOk;
    }

    if (*cluster_cmd) {
      const auto a = cluster(load_affinity(o.affinity), ap_params(o));
      ensure_parent(o.out);
      save_assignment(o.out, a);
      fmt::print("{} clusters, {} after {} iterations\n", a.cluster_count(),
                 a.converged ? "converged" : "not converged", a.iterations);
      return o.strict && !a.converged ? kNotConverged : kOk;
    }

    if (*build_cmd) {
      const auto b = load_bank(o.bank);
      const auto c = load_concepts(o.concepts, b);
      KCModel model;
      if (o.assignment.empty()) {
        model = concept_kc_model(c, b, o.name.empty() ? "Concept" : o.name);
      } else {
        const auto a = load_assignment(o.assignment);
        if (a.ids != b.ids()) throw ValidationError("assignment items do not match the bank order");
        model = from_clusters(a, c, o.merge_duplicate_labels, o.name.empty() ? "KCluster" : o.name);
      }
      ensure_parent(o.out);
      save_kc_model(o.out, model);
      fmt::print("{}: {} KCs\n", model.name, model.kc_count());
      return kOk;
    }

    if (*fit_cmd) {
      const auto b = load_bank(o.bank);
      const auto log = load_log(o.transactions, b, o.first_attempt_only);
      const auto model = resolve_kc_model(o.kc_models.front(), b);
      const auto fit = fit_afm(log, to_qmatrix(model, b));
      ensure_parent(o.out);
      save_fit(o.out, fit, model.name);
      const auto ic = aic_bic(fit);
      fmt::print("{}: LL {:.4f}, AIC {:.2f}, BIC {:.2f}, {} iterations\n", model.name, fit.log_likelihood, ic.aic,
                 ic.bic, fit.iterations);
      return o.strict && !fit.converged ? kNotConverged : kOk;
    }

    if (*cv_cmd) {
      const auto b = load_bank(o.bank);
      const auto log = load_log(o.transactions, b, o.first_attempt_only);
      const auto model = resolve_kc_model(o.kc_models.front(), b);
      const auto report = item_cv(log, to_qmatrix(model, b), cv_options(o), model.name);
      ensure_parent(o.out);
      save_cv_report(o.out, report);
      fmt::print("{}: item-RMSE {:.4f} ({:.4f}) over {} seeds\n", model.name, report.mean, report.std,
                 report.seeds.size());
      return kOk;
    }

    if (*align_cmd) {
      const auto b = load_bank(o.bank);
      const auto reference = resolve_kc_model(o.reference, b);
      std::vector<AlignmentReport> rows;
      for (const auto& m : o.kc_models) rows.push_back(alignment(reference, resolve_kc_model(m, b)));
      print_table(rows);
      if (!o.out.empty()) {
        ensure_parent(o.out);
        save_alignment(o.out, rows);
      }
      return kOk;
    }

    if (*curves_cmd) {
      const auto b = load_bank(o.bank);
      const auto log = load_log(o.transactions, b, o.first_attempt_only);
      const auto model = resolve_kc_model(o.kc_models.front(), b);
      save_curves(o.out, log, to_qmatrix(model, b), o.max_opportunity, o.kcs.empty() ? model.kc_labels() : o.kcs);
      return kOk;
    }

    if (*dfa_cmd) {
      const auto b = load_bank(o.bank);
      const auto log = load_log(o.transactions, b, o.first_attempt_only);
      const auto base = resolve_kc_model(o.kc_models.front(), b);
      const auto be = make_backend(o.backend, optional_path(o.cache), b);
      const auto method = parse_methods(o.methods, Method::kcluster).front();
      const auto fit = fit_afm(log, to_qmatrix(base, b));
      ProblemThresholds thresholds;
      thresholds.gamma = o.gamma_threshold;
      const auto problems = problematic_kcs(fit, thresholds);
      fs::create_directories(o.out);
      auto listed = nlohmann::ordered_json::array();
      for (const auto& p : problems)
        listed.push_back({{"kc", p.kc},
                          {"gamma", p.gamma},
                          {"initial_success", p.initial_success},
                          {"questions", p.question_count}});
      write_text(o.out / fs::path("problematic.json"), listed.dump(2) + "\n");
      fmt::print("{} problematic KC(s)\n", problems.size());

      std::vector<RefinementReport> reports;
      for (const auto& p : problems) {
        if (reports.size() >= o.max_refinements) break;
        if (p.question_count < 2) {
          spdlog::warn("skipping '{}': a single question cannot be split", p.kc);
          continue;
        }
        const auto refined = refine_kc(base, p.kc, method, b, *be, discovery);
        save_kc_model(o.out / fs::path(fmt::format("refined_{:02}_{}.csv", reports.size() + 1, file_safe(p.kc))),
                      refined);
        reports.push_back(evaluate_refinement(log, b, base, refined, p.kc, cv_options(o)));
      }
      save_refinement_json(o.out / fs::path("dfa.json"), reports);
      const auto md = refinement_markdown(reports);
      write_text(o.out / fs::path("dfa.md"), md);
      fmt::print("{}", md);
      return kOk;
    }

    if (*pipeline_cmd) {
      PipelineConfig cfg;
      cfg.bank = o.bank;
      cfg.transactions = optional_path(o.transactions);
      cfg.backend = o.backend;
      cfg.cache = optional_path(o.cache);
      cfg.methods = parse_methods(o.methods, Method::kcluster);
      cfg.discovery = discovery;
      cfg.folds = o.folds;
      cfg.cv_seed_count = o.cv_seeds;
      cfg.first_attempt_only = o.first_attempt_only;
      cfg.strict = o.strict;
      cfg.seed = o.seed;
      cfg.jobs = o.jobs;
      cfg.max_opportunity = o.max_opportunity;
      cfg.out = o.out;
      return run_pipeline(cfg);
    }
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return kConfigError;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kConfigError;
  } catch (const BackendError& e) {
    spdlog::error("backend: {}", e.what());
    return kBackendError;
  } catch (const CapabilityError& e) {
    spdlog::error("backend: {}", e.what());
    return kBackendError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kOk;
}

}  // namespace kcluster::app
