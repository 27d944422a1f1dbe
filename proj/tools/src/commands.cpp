#include "raft/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "raft/adapters/classifier.hpp"
#include "raft/corpus/splits.hpp"
#include "raft/corpus/synthetic.hpp"
#include "raft/explain/explain.hpp"
#include "raft/harness/harness.hpp"
#include "raft/harness/report.hpp"
#include "raft/metrics/metrics.hpp"
#include "raft/multitask/rlt.hpp"
#include "raft/numerics/checkpoint.hpp"
#include "raft/numerics/errors.hpp"

namespace raft::cli {

namespace fs = std::filesystem;
using harness::Dataset;
using harness::TextTable;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
};

// Config document; relative paths resolve against the file's directory.
class ConfigDoc {
 public:
  static ConfigDoc load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path.string());
    ConfigDoc doc;
    try {
      in >> doc.j_;
    } catch (const json::exception& e) {
      throw DataError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.j_.is_object()) throw DataError("config " + path.string() + " must be a JSON object");
    doc.base_ = path.parent_path();
    return doc;
  }

  const json& raw() const { return j_; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& at(const std::string& key) const {
    if (!has(key)) throw DataError("config is missing \"" + key + "\"");
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    return has(key) ? j_.at(key).get<T>() : fallback;
  }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_ / path;
  }

  fs::path path(const std::string& key) const { return resolve(at(key).get<std::string>()); }

  std::vector<fs::path> paths(const std::string& key) const {
    std::vector<fs::path> out;
    for (const auto& p : at(key)) out.push_back(resolve(p.get<std::string>()));
    return out;
  }

 private:
  json j_;
  fs::path base_;
};

corpus::SplitSpec split_spec(const json* j, corpus::SplitSpec fallback) {
  if (!j) return fallback;
  auto s = j->get<corpus::SplitSpec>();
  if (!j->contains("seed")) s.seed = fallback.seed;
  return s;
}

Dataset load_dataset(const fs::path& dir, const corpus::SplitSpec& spec) {
  auto manifest = corpus::DatasetManifest::load(dir / "manifest.json");
  auto posts = corpus::load_jsonl(dir / "posts.jsonl", manifest);
  return harness::split_dataset(std::move(manifest), std::move(posts), spec);
}

Dataset load_target(const ConfigDoc& doc, const std::string& key, std::uint64_t seed) {
  return load_dataset(doc.path(key), split_spec(doc.has("splits") ? &doc.at("splits") : nullptr,
                                                corpus::SplitSpec::target_default(seed)));
}

Dataset load_source(const ConfigDoc& doc, const fs::path& dir, std::uint64_t seed) {
  return load_dataset(dir, split_spec(doc.has("source_splits") ? &doc.at("source_splits") : nullptr,
                                      corpus::SplitSpec::source_default(seed)));
}

multitask::RltModel load_extractor(const fs::path& path) {
  return multitask::RltModel::from_checkpoint(numerics::ModelCheckpoint::load(path));
}

void write_lines(const fs::path& path, const std::vector<ordered_json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  harness::write_text(path, text);
}

void save_model(const fs::path& out, const numerics::ModelCheckpoint& ckpt, const encoder::Vocabulary& vocab) {
  fs::create_directories(out);
  ckpt.save(out / "checkpoint.raft");
  vocab.save(out / "vocab.txt");
}

void emit_table(std::ostream& os, const fs::path& path, const std::string& text) {
  harness::write_text(path, text);
  os << text;
}

std::vector<corpus::TokenizedPost> split_posts(const Dataset& d, const std::string& split) {
  switch (corpus::parse_split(split)) {
    case corpus::Split::kTrain:
      return d.train;
    case corpus::Split::kDev:
      return d.dev;
    case corpus::Split::kTest:
      return d.test;
    default:
      throw DataError("split must be train, dev or test");
  }
}

struct TrainingSet {
  std::vector<corpus::TokenizedPost> posts;
  std::optional<std::size_t> k;
  std::size_t set = 0;
};

// Full training split, or one few-shot set when the config names "k".
TrainingSet training_set(const ConfigDoc& doc, const Dataset& d, std::uint64_t seed) {
  if (!doc.has("k")) return {d.train, std::nullopt, 0};
  TrainingSet t;
  t.k = doc.at("k").get<std::size_t>();
  t.set = doc.get<std::size_t>("set", 0);
  t.posts = harness::draw_fewshot_sets(d, *t.k, t.set + 1, seed)[t.set];
  return t;
}

std::uint64_t model_seed(const TrainingSet& t, harness::Variant v, std::uint64_t seed) {
  return t.k ? harness::run_seed(seed, v, *t.k, t.set) : seed;
}

metrics::MetricsReport classifier_report(const std::string& method, const Dataset& d, const TrainingSet& t,
                                         std::uint64_t seed, double f1) {
  metrics::MetricsReport r;
  r.run_id = method + "/" + d.id() + (t.k ? "/k" + std::to_string(*t.k) + "/set" + std::to_string(t.set) : "");
  r.seed = seed;
  r.k = t.k;
  r.dataset = d.id();
  r.macro_f1 = f1;
  r.method = method;
  return r;
}

void finish_classifier(std::ostream& os, const fs::path& out, const adapters::Classifier& model,
                       const multitask::FitResult& fit, const metrics::MetricsReport& report) {
  save_model(out, model.to_checkpoint(), model.vocabulary());
  multitask::write_training_log(out / "training_log.jsonl", fit.log);
  harness::write_json(out / "report.json", metrics::report_to_json(report));
  TextTable t{{"method", "dataset", "k", "test_macro_f1"}, {}};
  t.rows.push_back({report.method, report.dataset, report.k ? std::to_string(*report.k) : "all",
                    harness::fixed(report.macro_f1)});
  emit_table(os, out / "report.txt", t.render());
}

// ---- subcommands -----------------------------------------------------------

void gen_corpus(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  std::vector<json> specs;
  if (doc.has("datasets")) {
    for (const auto& s : doc.at("datasets")) specs.push_back(s);
  } else {
    specs.push_back(doc.raw());
  }
  const fs::path out(o.out);
  TextTable table{{"dataset", "posts", "train", "dev", "test", "shift_rate"}, {}};
  std::set<std::string> seen;
  for (const auto& spec : specs) {
    const auto config = spec.get<corpus::SyntheticConfig>();
    if (!seen.insert(config.dataset_id).second) throw DataError("duplicate dataset id " + config.dataset_id);
    const auto seed = spec.value("seed", o.seed);
    auto gen = corpus::generate_synthetic(config, seed);
    const auto splits = split_spec(spec.contains("splits") ? &spec.at("splits") : nullptr,
                                   corpus::SplitSpec::target_default(seed));
    const auto posts = corpus::make_splits(std::move(gen.posts), splits, config.classes);
    const auto dir = out / config.dataset_id;
    fs::create_directories(dir);
    corpus::write_jsonl(dir / "posts.jsonl", posts);
    gen.manifest.save(dir / "manifest.json");
    ordered_json provenance = {{"seed", seed}, {"generator", json(config)}, {"splits", json(splits)}};
    harness::write_json(dir / "generator.json", provenance);
    std::map<corpus::Split, std::size_t> n;
    for (const auto& p : posts) ++n[p.split];
    table.rows.push_back({config.dataset_id, std::to_string(posts.size()), std::to_string(n[corpus::Split::kTrain]),
                          std::to_string(n[corpus::Split::kDev]), std::to_string(n[corpus::Split::kTest]),
                          harness::fixed(config.shift_rate, 2)});
  }
  emit_table(os, out / "corpus.txt", table.render());
}

void train_rlt(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  const auto data = load_target(doc, "data", o.seed);
  const auto config = doc.get<multitask::RltConfig>("model", {});
  const auto r = multitask::train_rlt(data.train, data.dev, data.manifest.classes, data.manifest.targets, config,
                                      o.seed);
  const fs::path out(o.out);
  save_model(out, r.model.to_checkpoint(), r.model.vocabulary());
  multitask::write_training_log(out / "training_log.jsonl", r.fit.log);

  const auto dev = multitask::evaluate_rlt(r.model, data.dev);
  const auto test = multitask::evaluate_rlt(r.model, data.test);
  auto eval_json = [](const multitask::RltEvaluation& e) {
    return ordered_json{{"label_macro_f1", e.label_macro_f1},
                        {"rationale_macro_f1", e.rationale_macro_f1},
                        {"n_posts", e.n_posts}};
  };
  const ordered_json evaluation = {{"dataset", data.id()},
                                   {"heads", config.heads.name()},
                                   {"best_epoch", r.fit.best_epoch},
                                   {"dev", eval_json(dev)},
                                   {"test", eval_json(test)}};
  harness::write_json(out / "evaluation.json", evaluation);

  metrics::MetricsReport report;
  report.run_id = "rlt-" + config.heads.name() + "/" + data.id();
  report.seed = o.seed;
  report.dataset = data.id();
  report.macro_f1 = test.label_macro_f1;
  report.method = config.heads.name();
  harness::write_json(out / "report.json", metrics::report_to_json(report));

  TextTable t{{"split", "posts", "label_macro_f1", "rationale_macro_f1"}, {}};
  for (const auto& [name, e] : {std::pair{"dev", dev}, std::pair{"test", test}}) {
    t.rows.push_back({name, std::to_string(e.n_posts), harness::fixed(e.label_macro_f1),
                      harness::fixed(e.rationale_macro_f1)});
  }
  emit_table(os, out / "evaluation.txt", t.render());
}

void train_baseline(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  const auto data = load_target(doc, "data", o.seed);
  auto config = doc.get<adapters::ClassifierConfig>("classifier", {});
  config.kind = adapters::ClassifierKind::kBaseline;
  const auto train = training_set(doc, data, o.seed);
  const fs::path out(o.out);
  if (doc.has("source")) {
    const auto source = load_source(doc, doc.path("source"), o.seed);
    auto vocab = adapters::build_vocabulary({&source.train, &train.posts}, config.min_count);
    auto pre = harness::pretrain_source(source, std::move(vocab), config, harness::derive_seed(o.seed, "dom"));
    fs::create_directories(out);
    multitask::write_training_log(out / "source_training_log.jsonl", pre.fit.log);
    const auto v = harness::Variant::kBaselineLDom;
    auto r = harness::finetune_target(std::move(pre.model), train.posts, data.dev, data.manifest.classes,
                                      model_seed(train, v, o.seed));
    const auto report = classifier_report(harness::to_string(v), data, train, o.seed,
                                          adapters::evaluate_classifier(r.model, data.test));
    finish_classifier(os, out, r.model, r.fit, report);
    return;
  }
  const auto v = harness::Variant::kBaselineL;
  auto r = adapters::baseline_l(train.posts, data.dev, data.manifest.classes, config, model_seed(train, v, o.seed));
  const auto report = classifier_report(harness::to_string(v), data, train, o.seed,
                                        adapters::evaluate_classifier(r.model, data.test));
  finish_classifier(os, out, r.model, r.fit, report);
}

void train_raft(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  const auto data = load_target(doc, "data", o.seed);
  const auto extractor = load_extractor(doc.path("extractor"));
  const auto config = doc.get<adapters::ClassifierConfig>("classifier", {});
  if (!adapters::is_raft(config.kind)) throw ContractError("train-raft needs classifier.kind raft-sa or raft-ca");
  const auto v = config.kind == adapters::ClassifierKind::kRaftSA ? harness::Variant::kRaftSA
                                                                   : harness::Variant::kRaftCA;
  const auto train = training_set(doc, data, o.seed);
  auto r = adapters::train_raft(train.posts, data.dev, data.manifest.classes, config, extractor,
                                model_seed(train, v, o.seed));
  const auto gates = adapters::compute_gates(adapters::extractor_gates(extractor), r.model, data.test);
  const auto report = classifier_report(harness::to_string(v), data, train, o.seed,
                                        adapters::evaluate_classifier(r.model, data.test, &gates));
  finish_classifier(os, fs::path(o.out), r.model, r.fit, report);
}

harness::FewShotPlan load_plan(const ConfigDoc& doc, std::uint64_t seed, bool raft_only) {
  harness::FewShotPlan plan;
  if (doc.has("plan")) plan = doc.at("plan").get<harness::FewShotPlan>();
  if (!doc.has("plan") || !doc.at("plan").contains("seeds")) plan.seeds = {seed};
  if (raft_only && (!doc.has("plan") || !doc.at("plan").contains("variants")))
    plan.variants = {harness::Variant::kRaftSA, harness::Variant::kRaftCA};
  return plan;
}

ordered_json selection_json(const harness::SourceSelection& s) {
  ordered_json sims = ordered_json::array();
  for (const auto& [id, sim] : s.similarities) sims.push_back({{"dataset", id}, {"similarity", sim}});
  return {{"mode", harness::to_string(s.mode)}, {"chosen", s.chosen}, {"similarities", sims}};
}

void fewshot(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  const auto target = load_target(doc, "target", o.seed);
  const auto plan = load_plan(doc, o.seed, false);
  const fs::path out(o.out);
  fs::create_directories(out);
  harness::write_json(out / "plan.json", ordered_json(json(plan)));

  std::optional<Dataset> source;
  if (doc.has("source")) {
    source = load_source(doc, doc.path("source"), o.seed);
  } else if (doc.has("sources")) {
    std::vector<Dataset> candidates;
    for (const auto& p : doc.paths("sources")) candidates.push_back(load_source(doc, p, o.seed));
    const auto mode = harness::parse_source_mode(doc.get<std::string>("source_mode", "best-single"));
    auto selection = harness::select_best_source(target, candidates, mode);
    harness::write_json(out / "selection.json", selection_json(selection));
    source = std::move(selection.source);
  }
  std::optional<multitask::RltModel> extractor;
  if (doc.has("extractor")) extractor = load_extractor(doc.path("extractor"));

  const auto table =
      harness::run_fewshot_experiment(plan, target, source ? &*source : nullptr, extractor ? &*extractor : nullptr);
  harness::write_json(out / "fewshot.json", harness::fewshot_to_json(table));
  std::vector<ordered_json> reports;
  for (const auto& r : table.runs) reports.push_back(metrics::report_to_json(r.report));
  write_lines(out / "reports.jsonl", reports);
  emit_table(os, out / "fewshot.txt", harness::fewshot_to_text(table));
}

void ablate(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  const auto target = load_target(doc, "target", o.seed);
  const auto extractor = load_extractor(doc.path("extractor"));
  const auto plan = load_plan(doc, o.seed, true);
  harness::AblationConfig config;
  if (doc.has("ablation")) config = doc.at("ablation").get<harness::AblationConfig>();
  if (!doc.has("ablation") || !doc.at("ablation").contains("seed")) config.seed = o.seed;
  const auto table = harness::run_ablation_experiment(plan, config, target, extractor);
  const fs::path out(o.out);
  harness::write_json(out / "ablation.json", harness::ablation_to_json(table));
  emit_table(os, out / "ablation.txt", harness::ablation_to_text(table));
}

harness::ExplainabilityConfig explain_config(const ConfigDoc& doc, std::uint64_t seed) {
  harness::ExplainabilityConfig c;
  if (doc.has("explain")) c = doc.at("explain").get<harness::ExplainabilityConfig>();
  if (!doc.has("explain") || !doc.at("explain").contains("seed")) c.seed = seed;
  return c;
}

void explain_cmd(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  const auto data = load_target(doc, "data", o.seed);
  const auto model = adapters::Classifier::from_checkpoint(numerics::ModelCheckpoint::load(doc.path("model")));
  std::optional<multitask::RltModel> extractor;
  if (doc.has("extractor")) extractor = load_extractor(doc.path("extractor"));
  const auto config = explain_config(doc, o.seed);
  const bool raft = adapters::is_raft(model.config().kind);
  const auto method = explain::parse_method(doc.get<std::string>("method", raft ? "extractor" : "occlusion"));
  const auto name = doc.get<std::string>("name", adapters::to_string(model.config().kind));
  const harness::ExplainSubject subject{name, &model, extractor ? &*extractor : nullptr};

  const auto posts = split_posts(data, doc.get<std::string>("split", "test"));
  const auto limit = std::min(doc.get<std::size_t>("limit", posts.size()), posts.size());
  std::vector<explain::ExplanationRecord> records;
  for (std::size_t i = 0; i < limit; ++i) {
    const auto tokens = model.truncate(posts[i].tokens);
    if (tokens.empty()) continue;
    auto scores = harness::subject_importances(subject, method, tokens, config,
                                               harness::derive_seed(config.seed, name + "/" + posts[i].id));
    auto top = harness::discrete_rationale(scores, config.top_k);
    records.push_back({posts[i].id, method, std::move(scores), std::move(top)});
  }
  const fs::path out(o.out);
  fs::create_directories(out);
  explain::write_explanations(out / "explanations.jsonl", records);
  TextTable t{{"model", "method", "posts"}, {{name, explain::to_string(method), std::to_string(records.size())}}};
  emit_table(os, out / "explanations.txt", t.render());
}

void eval_explain(const Options& o, std::ostream& os, std::ostream& es) {
  const auto doc = ConfigDoc::load(o.config);
  const auto data = load_target(doc, "data", o.seed);
  const auto config = explain_config(doc, o.seed);
  auto posts = split_posts(data, doc.get<std::string>("split", "test"));
  if (doc.get<bool>("abusive_only", true)) {
    std::erase_if(posts, [&](const auto& p) { return p.label == data.manifest.classes.front(); });
  }
  const auto n_posts = std::min(doc.get<std::size_t>("n_posts", 50), posts.size());
  posts.resize(n_posts);

  std::deque<adapters::Classifier> models;
  std::deque<multitask::RltModel> extractors;
  std::vector<harness::ExplainSubject> subjects;
  std::vector<std::optional<std::size_t>> ks;
  for (const auto& m : doc.at("models")) {
    models.push_back(adapters::Classifier::from_checkpoint(
        numerics::ModelCheckpoint::load(doc.resolve(m.at("checkpoint").get<std::string>()))));
    const multitask::RltModel* ext = nullptr;
    if (m.contains("extractor")) {
      extractors.push_back(load_extractor(doc.resolve(m.at("extractor").get<std::string>())));
      ext = &extractors.back();
    }
    subjects.push_back({m.at("name").get<std::string>(), &models.back(), ext});
    ks.push_back(m.contains("k") ? std::optional<std::size_t>(m.at("k").get<std::size_t>()) : std::nullopt);
  }
  const auto result = harness::explainability_evaluation(subjects, posts, config);
  for (const auto& w : result.warnings) es << "warning: " << w << "\n";

  const fs::path out(o.out);
  harness::write_json(out / "explainability.json", harness::explainability_to_json(result));
  std::map<std::string, double> f1;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    if (adapters::is_raft(s.model->config().kind)) {
      if (!s.extractor) throw ContractError("RAFT model " + s.name + " needs an extractor");
      const auto gates = adapters::compute_gates(adapters::extractor_gates(*s.extractor), *s.model, data.test);
      f1[s.name] = adapters::evaluate_classifier(*s.model, data.test, &gates);
    } else {
      f1[s.name] = adapters::evaluate_classifier(*s.model, data.test);
    }
  }
  std::vector<ordered_json> reports;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& row = result.rows[i];
    const auto subject = std::find_if(subjects.begin(), subjects.end(), [&](const auto& s) { return s.name == row.model; });
    metrics::MetricsReport r;
    r.run_id = "explain/" + row.model + "/" + explain::to_string(row.method);
    r.seed = o.seed;
    r.k = ks[static_cast<std::size_t>(subject - subjects.begin())];
    r.dataset = data.id();
    r.macro_f1 = f1.at(row.model);
    r.auprc = row.auprc;
    r.token_f1 = row.token_f1;
    r.iou_f1 = row.iou_f1;
    r.comprehensiveness = row.comprehensiveness;
    r.sufficiency = row.sufficiency;
    r.method = explain::to_string(row.method);
    reports.push_back(metrics::report_to_json(r));
    const auto& set = result.explanations[i];
    fs::create_directories(out / "explanations");
    explain::write_explanations(out / "explanations" / (set.model + "-" + explain::to_string(set.method) + ".jsonl"),
                                set.records);
  }
  write_lines(out / "reports.jsonl", reports);
  emit_table(os, out / "explainability.txt", harness::explainability_to_text(result));
}

void simdomains(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  std::vector<Dataset> datasets;
  for (const auto& p : doc.paths("datasets")) datasets.push_back(load_source(doc, p, o.seed));
  const auto m = harness::similarity_matrix(datasets);
  const fs::path out(o.out);
  fs::create_directories(out);

  std::vector<std::string> ids;
  for (const auto& d : datasets) ids.push_back(d.id());
  ordered_json j = {{"datasets", ids}, {"similarity", m}};
  TextTable t{{"dataset"}, {}};
  t.header.insert(t.header.end(), ids.begin(), ids.end());
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    std::vector<std::string> row = {ids[i]};
    for (double x : m[i]) row.push_back(harness::fixed(x));
    t.rows.push_back(std::move(row));
  }
  if (doc.has("target")) {
    const auto target_id = doc.at("target").get<std::string>();
    const auto it = std::find(ids.begin(), ids.end(), target_id);
    if (it == ids.end()) throw DataError("target " + target_id + " is not among the datasets");
    std::vector<Dataset> candidates;
    for (const auto& d : datasets)
      if (d.id() != target_id) candidates.push_back(d);
    const auto mode = harness::parse_source_mode(doc.get<std::string>("source_mode", "best-single"));
    j["selection"] = selection_json(harness::select_best_source(datasets[it - ids.begin()], candidates, mode));
  }
  harness::write_json(out / "similarity.json", j);
  emit_table(os, out / "similarity.txt", t.render());
}

void sweep_cmd(const Options& o, std::ostream& os) {
  const auto doc = ConfigDoc::load(o.config);
  const auto data = load_target(doc, "data", o.seed);
  const auto spec = doc.get<harness::SweepSpec>("sweep", {});
  const auto result = harness::sweep(spec, data, o.seed);
  const fs::path out(o.out);
  harness::write_json(out / "sweep.json", harness::sweep_to_json(result));
  std::vector<ordered_json> rows;
  for (const auto& r : harness::sweep_to_json(result)["rows"]) rows.push_back(r);
  write_lines(out / "sweep_log.jsonl", rows);
  emit_table(os, out / "sweep.txt", harness::sweep_to_text(result));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rationale-guided abuse detection experiments", "raft"};
  app.require_subcommand(1, 1);
  Options opts;
  using Handler = std::function<void()>;
  std::map<std::string, Handler> handlers;
  auto add = [&](const std::string& name, const std::string& help, Handler h) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "JSON config file")->required();
    sub->add_option("--seed", opts.seed, "Base random seed");
    sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
    handlers[name] = std::move(h);
  };
  add("gen-corpus", "Generate synthetic corpora", [&] { gen_corpus(opts, out); });
  add("train-rlt", "Train a rationale/label/target model", [&] { train_rlt(opts, out); });
  add("train-raft", "Train a RAFT classifier on extractor gates", [&] { train_raft(opts, out); });
  add("train-baseline", "Train a baseline label classifier", [&] { train_baseline(opts, out); });
  add("fewshot", "Run the few-shot protocol", [&] { fewshot(opts, out); });
  add("ablate", "Random-rationale ablation", [&] { ablate(opts, out); });
  add("explain", "Dump per-token explanations", [&] { explain_cmd(opts, out); });
  add("eval-explain", "Plausibility and faithfulness of explanations", [&] { eval_explain(opts, out, err); });
  add("simdomains", "Term-distribution similarity between datasets", [&] { simdomains(opts, out); });
  add("sweep", "Learning-rate and loss-weight grid on dev", [&] { sweep_cmd(opts, out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitContractError;
  }
  try {
    handlers.at(app.get_subcommands().front()->get_name())();
    return kExitOk;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const ContractError& e) {
    err << "contract error: " << e.what() << "\n";
    return kExitContractError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv = {"raft"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace raft::cli
