#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>
#include <sstream>

#include "shpjf/cli.hpp"
#include "shpjf/data.hpp"
#include "shpjf/errors.hpp"
#include "shpjf/metrics.hpp"
#include "shpjf/model.hpp"
#include "shpjf/serving.hpp"
#include "shpjf/train.hpp"

namespace py = pybind11;
using namespace shpjf;

namespace {

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["gauc"] = r.gauc;
  d["recall_at_1"] = r.recall_at_1;
  d["recall_at_5"] = r.recall_at_5;
  d["mrr"] = r.mrr;
  d["per_user_auc"] = r.per_user_auc;
  d["skipped_users"] = r.skipped_users;
  d["impressions"] = r.impressions;
  return d;
}

GaucWeighting parse_weighting(const std::string& name) {
  if (name == "unweighted") return GaucWeighting::unweighted;
  if (name == "impressions") return GaucWeighting::impressions;
  throw ConfigError("unknown GAUC weighting '" + name + "' (unweighted, impressions)");
}

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::list ranked_list(const std::vector<ScoredPair>& pairs) {
  py::list out;
  for (const auto& p : pairs) out.append(py::make_tuple(p.job_id, p.y_hat));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SHPJF person-job fit: synthetic data, model, training, metrics and cached serving.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<EvaluationError>(m, "EvaluationError", base);
  py::register_exception<TrainingError>(m, "TrainingError", base);
  // ConfigError and ParseError derive from ValidationError in C++; pybind
  // matches the most recently registered type first, so register them last.
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<GeneratorConfig>(m, "GeneratorConfig")
      .def(py::init<>())
      .def_readwrite("users", &GeneratorConfig::users)
      .def_readwrite("jobs", &GeneratorConfig::jobs)
      .def_readwrite("positives", &GeneratorConfig::positives)
      .def_readwrite("vocab_terms", &GeneratorConfig::vocab_terms)
      .def_readwrite("categories", &GeneratorConfig::categories)
      .def_readwrite("terms_per_category", &GeneratorConfig::terms_per_category)
      .def_readwrite("days", &GeneratorConfig::days)
      .def_readwrite("mean_history", &GeneratorConfig::mean_history)
      .def_readwrite("zero_history_fraction", &GeneratorConfig::zero_history_fraction)
      .def_readwrite("intention_strength", &GeneratorConfig::intention_strength)
      .def_readwrite("uninformative_resume_fraction", &GeneratorConfig::uninformative_resume_fraction)
      .def_readwrite("min_intentions", &GeneratorConfig::min_intentions)
      .def_readwrite("max_intentions", &GeneratorConfig::max_intentions)
      .def_readwrite("negatives_per_positive", &GeneratorConfig::negatives_per_positive)
      .def_readwrite("exposure_size", &GeneratorConfig::exposure_size)
      .def_readwrite("jd_min_tokens", &GeneratorConfig::jd_min_tokens)
      .def_readwrite("jd_max_tokens", &GeneratorConfig::jd_max_tokens)
      .def_readwrite("jd_category_share", &GeneratorConfig::jd_category_share)
      .def("validate", &GeneratorConfig::validate)
      .def("to_text", &GeneratorConfig::to_text)
      .def_static("parse", &GeneratorConfig::parse);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("lambda_", &ModelConfig::lambda)
      .def_readwrite("clusters", &ModelConfig::clusters)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("id_dim", &ModelConfig::id_dim)
      .def_readwrite("word_dim", &ModelConfig::word_dim)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def_readwrite("max_history", &ModelConfig::max_history)
      .def_readwrite("encoder_layers", &ModelConfig::encoder_layers)
      .def_readwrite("encoder_heads", &ModelConfig::encoder_heads)
      .def_readwrite("encoder_ff", &ModelConfig::encoder_ff)
      .def_readwrite("max_tokens", &ModelConfig::max_tokens)
      .def_readwrite("intention_hidden", &ModelConfig::intention_hidden)
      .def_readwrite("intention_out", &ModelConfig::intention_out)
      .def_readwrite("prediction_hidden", &ModelConfig::prediction_hidden)
      .def_property(
          "variant", [](const ModelConfig& c) { return to_string(c.variant); },
          [](ModelConfig& c, const std::string& v) { c.variant = parse_variant(v); })
      .def("validate", &ModelConfig::validate)
      .def("to_text", &ModelConfig::to_text)
      .def_static("parse", &ModelConfig::parse);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("seed", &TrainConfig::seed)
      .def("validate", &TrainConfig::validate);

  py::class_<HistoryEntry>(m, "HistoryEntry")
      .def(py::init<std::vector<TokenId>, JobId, Timestamp>(), py::arg("query"), py::arg("job_id"), py::arg("ts") = 0)
      .def_readwrite("query", &HistoryEntry::query)
      .def_readwrite("job_id", &HistoryEntry::job_id)
      .def_readwrite("ts", &HistoryEntry::ts);

  py::class_<UserView>(m, "UserView")
      .def(py::init([](UserId id, std::vector<TokenId> resume, SearchHistory history) {
             return UserView{id, std::move(resume), std::move(history)};
           }),
           py::arg("user_id"), py::arg("resume"), py::arg("history") = SearchHistory{})
      .def_readwrite("user_id", &UserView::user_id)
      .def_readwrite("resume", &UserView::resume)
      .def_readwrite("history", &UserView::history);

  py::class_<JobView>(m, "JobView")
      .def(py::init([](JobId id, std::vector<TokenId> jd) { return JobView{id, std::move(jd)}; }), py::arg("job_id"),
           py::arg("jd"))
      .def_readwrite("job_id", &JobView::job_id)
      .def_readwrite("jd", &JobView::jd);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("vocab_size", [](const Dataset& d) { return d.vocab.size(); })
      .def_property_readonly("num_users", [](const Dataset& d) { return d.candidates.size(); })
      .def_property_readonly("num_jobs", [](const Dataset& d) { return d.jobs.size(); })
      .def_property_readonly("num_interactions", [](const Dataset& d) { return d.interactions.size(); })
      .def("token", [](const Dataset& d, TokenId id) { return d.vocab.token(id); })
      .def("stats",
           [](const Dataset& d) {
             const auto s = dataset_stats(d);
             py::dict out;
             out["candidates"] = s.candidates;
             out["jobs"] = s.jobs;
             out["positives"] = s.positives;
             out["negatives"] = s.negatives;
             out["mean_history"] = s.mean_history;
             out["mean_query_words"] = s.mean_query_words;
             return out;
           })
      .def("user_views", &make_user_views, py::arg("cutoff"), py::arg("max_history"))
      .def("job_views", &make_job_views)
      .def("save", [](const Dataset& d, const std::filesystem::path& dir) { save_dataset(d, dir); })
      .def_static("load", &load_dataset);

  m.def(
      "generate", [](const GeneratorConfig& c, std::uint64_t seed) { return generate_synthetic(c, seed).data; },
      py::arg("config"), py::arg("seed") = 1, "Synthetic recruitment log with planted search intentions.");

  py::class_<ShpjfModel>(m, "Model")
      .def(py::init<const ModelConfig&, std::size_t, std::size_t, std::size_t, std::uint64_t>(), py::arg("config"),
           py::arg("vocab_size"), py::arg("users"), py::arg("jobs"), py::arg("seed") = 1)
      .def_property_readonly("config", &ShpjfModel::config)
      .def("parameter_names",
           [](const ShpjfModel& model) {
             std::vector<std::string> names;
             for (const auto& [name, t] : model.named_parameters()) names.push_back(name);
             return names;
           })
      .def("parameter",
           [](const ShpjfModel& model, const std::string& name) {
             const auto t = model.parameter(name);
             if (!t) throw LookupError("no parameter named '" + name + "'");
             return to_numpy(*t);
           })
      .def("score_pair", [](const ShpjfModel& model, const UserView& u, const JobView& j) {
        return model.score_pair(u, j).y_hat;
      })
      .def("score_group",
           [](const ShpjfModel& model, const UserView& u, const std::vector<JobView>& jobs) {
             return ranked_list(model.score_group(u, jobs));
           })
      .def("copy_shared_parameters", &ShpjfModel::copy_shared_parameters)
      .def("save", &ShpjfModel::save)
      .def_static("load", &ShpjfModel::load);

  m.def(
      "fit",
      [](ShpjfModel& model, const Dataset& data, const TrainConfig& config, std::size_t val_days,
         std::size_t test_days) {
        const auto split = temporal_split(data.interactions, val_days, test_days);
        TrainResult result;
        EvalReport test;
        {
          py::gil_scoped_release release;
          const Corpus corpus(data, split.val_start, model.config().max_history);
          result = train(model, corpus, split.train, split.val, config);
          test = evaluate(model, corpus, split.test, config.weighting);
        }
        py::dict out;
        out["best_epoch"] = result.best_epoch;
        out["best_val_gauc"] = result.best_val_gauc;
        std::vector<double> losses, gaucs;
        for (const auto& e : result.log) {
          losses.push_back(e.train_loss);
          gaucs.push_back(e.val_gauc);
        }
        out["train_loss"] = losses;
        out["val_gauc"] = gaucs;
        out["test"] = report_dict(test);
        return out;
      },
      py::arg("model"), py::arg("data"), py::arg("config"), py::arg("val_days") = 1, py::arg("test_days") = 1,
      "Trains with early stopping on the validation days and reports test metrics.");

  m.def(
      "compute_report",
      [](const std::vector<std::tuple<UserId, JobId, std::int64_t, int, double>>& rows, const std::string& weighting) {
        std::vector<ScoredInteraction> entries;
        entries.reserve(rows.size());
        for (const auto& [u, j, imp, label, score] : rows) entries.push_back({u, j, imp, label, score});
        return report_dict(compute_report(entries, parse_weighting(weighting)));
      },
      py::arg("rows"), py::arg("weighting") = "unweighted",
      "GAUC, R@1, R@5 and MRR from (user_id, job_id, impression_id, label, score) rows.");

  m.def("micro_grad_check", &micro_grad_check, py::arg("step") = 1e-5, py::arg("seed") = 11,
        "Largest relative gradient error of the full model on the micro configuration.");

  py::class_<IntentionCache>(m, "IntentionCache")
      .def(py::init<Timestamp>(), py::arg("refresh_interval") = 0)
      .def_property_readonly("generation", &IntentionCache::generation)
      .def_property_readonly("misses", &IntentionCache::misses)
      .def("due", &IntentionCache::due)
      .def(
          "refresh",
          [](IntentionCache& cache, const ShpjfModel& model, const std::vector<UserView>& users, Timestamp at) {
            return cache.refresh(model, users, at);
          },
          py::arg("model"), py::arg("users"), py::arg("at") = 0)
      .def("save", &IntentionCache::save)
      .def_static("load", &IntentionCache::load);

  m.def(
      "score_online",
      [](const ShpjfModel& model, const UserView& user, const std::vector<JobView>& jobs, const IntentionCache& cache) {
        const auto r = score_online(model, user, jobs, cache);
        py::dict out;
        out["ranked"] = ranked_list(r.ranked);
        out["generation"] = r.generation;
        out["cache_hit"] = r.cache_hit;
        return out;
      },
      py::arg("model"), py::arg("user"), py::arg("jobs"), py::arg("cache"),
      "Ranks an impression from cached intentions, best first.");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv{"shpjf"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::ostringstream out, err;
        const int code = cli::run(argv, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the shpjf command line; returns (exit code, stdout, stderr).");
}
