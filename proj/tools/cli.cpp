/*
 * Copyright (C) 2026 The Widgetcap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "widgetcap/pipeline.hpp"
#include "widgetcap/synthetic.hpp"

namespace widgetcap::cli {

namespace {

namespace fs = std::filesystem;

/// Error in the inputs a command was given (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::string split = "test";
  std::string subset = "full";
  std::string out;
  std::string data;
  std::string model;
  std::string corpus;
  std::string captions;
  std::string pretrained;
  std::string hierarchy;
  std::string screenshot;
  std::size_t screens = 500;
  std::size_t apps = 100;
  bool overfit = false;
};

/// --config takes a file, or a model configuration name when no such file exists.
RunConfig resolve_config(const Options& o, bool& explicit_model) {
  RunConfig cfg;
  explicit_model = false;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) {
      const auto kind = parse_model_kind(o.config);
      if (!kind) throw ConfigError("--config: no file or model configuration named '" + o.config + "'");
      cfg.model.kind = *kind;
    } else {
      cfg = load_run_config(o.config);
    }
    explicit_model = true;
  }
  if (o.seed) cfg.set_seed(*o.seed);
  if (!o.corpus.empty()) cfg.corpus = o.corpus;
  if (!o.captions.empty()) cfg.captions = o.captions;
  return cfg;
}

WidgetRegistry registry_for(const RunConfig& cfg) {
  return cfg.registry.empty() ? WidgetRegistry::standard() : WidgetRegistry::load(cfg.registry);
}

SplitName split_option(const std::string& name) {
  auto s = parse_split_name(name);
  if (!s) throw ConfigError("--split: unknown split '" + name + "'");
  return *s;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

void report_problems(const CorpusReport& report, std::ostream& err) {
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  for (const auto& e : report.errors) err << "error: " << e << "\n";
  if (report.missing_screenshots)
    err << "summary: " << report.missing_screenshots << " screen(s) skipped for missing screenshots\n";
}

void fail_on_errors(const CorpusReport& report) {
  if (!report.errors.empty())
    throw DataError(std::to_string(report.errors.size()) + " input file(s) could not be read");
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::vector<std::vector<std::string>> word_list_or_empty(const fs::path& path) {
  if (path.empty()) return {};
  return load_word_list(path);
}

// ---------------------------------------------------------------------------

int cmd_generate(const Options& o, const RunConfig& cfg, std::ostream& out) {
  require(o.out, "--out");
  std::vector<SyntheticScreen> screens;
  if (o.overfit) {
    screens = generate_overfit_fixture(o.screens, cfg.seed);
  } else {
    SyntheticConfig sc;
    sc.screens = o.screens;
    sc.apps = o.apps;
    sc.seed = cfg.seed;
    screens = generate_synthetic(sc);
  }
  write_corpus(o.out, screens);
  std::size_t records = 0;
  for (const auto& s : screens) records += s.records.size();
  out << "wrote " << screens.size() << " screens, " << records << " captioned elements to "
      << o.out << "\n";
  return kSuccess;
}

int cmd_preprocess(const Options& o, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(o.out, "--out");
  if (cfg.corpus.empty()) throw ConfigError("corpus directory required (--corpus or config)");
  fs::path captions = cfg.captions.empty() ? cfg.corpus / "captions.tsv" : cfg.captions;
  const auto records = read_caption_file(captions);
  const auto registry = registry_for(cfg);
  AssemblyOptions options;
  options.max_text_tokens = cfg.max_text_tokens;
  options.max_elements = cfg.model.max_elements;
  CorpusReport report;
  const auto all = load_corpus(cfg.corpus, records, registry, options, report);
  report_problems(report, err);
  fail_on_errors(report);
  if (all.examples.empty()) throw DataError("no captioned elements found in the corpus");

  std::array<DatasetSplit, 3> splits;
  if (!cfg.splits.empty()) {
    const auto by_screen = read_split_assignment(cfg.splits);
    std::map<std::string, SplitName> by_app;
    for (const auto& e : all.examples) {
      auto it = by_screen.find(e.screen_id);
      if (it == by_screen.end()) continue;
      by_app.emplace(e.app_id, it->second);
    }
    splits = split_by_assignment(all, by_app);
  } else {
    splits = split_dataset(all, cfg.ratios, cfg.seed);
  }

  const fs::path dir = o.out;
  fs::create_directories(dir);
  for (const auto& s : splits) {
    const auto recs = split_records(s);
    write_caption_file(dir / (std::string(to_string(s.name)) + ".tsv"), recs);
  }
  std::vector<std::string> train_refs;
  std::vector<std::vector<std::string>> train_tokens;
  for (const auto& e : splits[0].examples)
    for (const auto& r : e.references) {
      train_refs.push_back(r);
      train_tokens.push_back(tokenize(r));
    }
  const auto vocab = Vocabulary::build(train_tokens, cfg.vocab_size);
  vocab.save(dir / "vocab.txt");
  PhraseVocabulary::build(splits[0], cfg.phrase_count).save(dir / "phrases.txt");

  nn::Manifest manifest{
      {"corpus", fs::absolute(cfg.corpus).lexically_normal().string()},
      {"max_text_tokens", std::to_string(cfg.max_text_tokens)},
      {"max_elements", std::to_string(cfg.model.max_elements)},
      {"seed", std::to_string(cfg.seed)},
      {"vocab_size", std::to_string(cfg.vocab_size)},
  };
  nn::write_manifest(dir / "data.manifest", manifest);

  auto stats = open_out(dir / "stats.tsv");
  stats << "key\tvalue\n";
  stats << "screens\t" << report.screens << "\n";
  stats << "widgets\t" << all.examples.size() << "\n";
  for (const auto& s : splits) {
    std::set<std::string> apps;
    for (const auto& e : s.examples) apps.insert(e.app_id);
    const std::string name(to_string(s.name));
    stats << name << "_widgets\t" << s.examples.size() << "\n";
    stats << name << "_screens\t" << s.screens.size() << "\n";
    stats << name << "_apps\t" << apps.size() << "\n";
  }
  double coverage = 0.0;
  for (double c : report.caption_coverage) coverage += c;
  if (!report.caption_coverage.empty()) coverage /= double(report.caption_coverage.size());
  stats << "caption_coverage_mean\t" << fixed(coverage, 4) << "\n";
  stats << "vocabulary_size\t" << vocab.size() << "\n";
  stats << "vocabulary_token_coverage\t" << fixed(vocab.coverage(train_tokens), 4) << "\n";
  stats << "skipped_records\t" << report.skipped_records << "\n";
  stats << "missing_screenshots\t" << report.missing_screenshots << "\n";
  out << "preprocessed " << all.examples.size() << " widgets: " << splits[0].examples.size()
      << " / " << splits[1].examples.size() << " / " << splits[2].examples.size() << "\n";
  return kSuccess;
}

int cmd_pretrain(const Options& o, RunConfig cfg, std::ostream& out, std::ostream& err) {
  require(o.data, "--data");
  require(o.out, "--out");
  if (o.steps) cfg.pretrain.steps = *o.steps;
  const auto data = DataDir::open(o.data);
  CorpusReport report;
  const auto train = data.load(SplitName::kTraining, registry_for(cfg), report);
  report_problems(report, err);
  fail_on_errors(report);
  std::vector<const GrayImage*> images;
  for (const auto& e : train.examples) images.push_back(&e.image);
  if (images.empty()) throw DataError("training split has no images");
  ImageAutoencoder<float> ae(cfg.seed);
  const auto rep = pretrain_autoencoder(ae, images, cfg.pretrain);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  nn::save_checkpoint(dir / "image.ckpt", ae.store,
                      {{"kind", "image_autoencoder"},
                       {"steps", std::to_string(cfg.pretrain.steps)},
                       {"initial_mse", fixed(rep.initial_mse, 6)},
                       {"final_mse", fixed(rep.final_mse, 6)}});
  auto log = open_out(dir / "pretrain_loss.tsv");
  log << "step\tloss\n";
  for (std::size_t i = 0; i < rep.losses.size(); ++i)
    log << i + 1 << '\t' << fixed(rep.losses[i], 6) << '\n';
  out << "reconstruction mse " << fixed(rep.initial_mse, 6) << " -> " << fixed(rep.final_mse, 6)
      << "\n";
  return kSuccess;
}

int cmd_train(const Options& o, RunConfig cfg, std::ostream& out, std::ostream& err) {
  require(o.data, "--data");
  require(o.out, "--out");
  if (o.steps) cfg.train.steps = *o.steps;
  const auto data = DataDir::open(o.data);
  ModelBundle bundle;
  bundle.vocab = data.vocabulary();
  bundle.phrases = data.phrases();
  bundle.config = cfg.model;
  bundle.config.vocab_size = bundle.vocab.size();
  bundle.config.phrase_count =
      cfg.model.kind == ModelKind::kPlcClassification ? bundle.phrases.size() : 0;
  nn::Manifest extra{{"seed", std::to_string(cfg.seed)}, {"data", data.dir.string()}};
  if (cfg.model.kind == ModelKind::kTemplate) {
    save_bundle(o.out, bundle, extra);
    out << "template model needs no training; index is built from the training split\n";
    return kSuccess;
  }
  CorpusReport report;
  const auto train = data.load(SplitName::kTraining, registry_for(cfg), report);
  report_problems(report, err);
  fail_on_errors(report);

  bundle.net = std::make_unique<CaptionModel<float>>(bundle.config, cfg.seed);
  if (!cfg.embeddings.empty()) {
    auto table = bundle.net->store().get("embed.words");
    const auto filled = load_word_vectors(cfg.embeddings, bundle.vocab, table);
    out << "word vectors loaded for " << filled << " of " << bundle.vocab.size() << " tokens\n";
  }
  if (!o.pretrained.empty()) {
    ImageAutoencoder<float> ae(0);
    nn::load_into(nn::read_checkpoint(fs::path(o.pretrained) / "image.ckpt"), ae.store);
    copy_parameters(ae.store, bundle.net->store(), "image.");
    extra["pretrained"] = o.pretrained;
  }

  const fs::path dir = o.out;
  fs::create_directories(dir);
  auto log = open_out(dir / "loss.tsv");
  log << "step\tloss\n";
  const PhraseVocabulary* phrases =
      cfg.model.kind == ModelKind::kPlcClassification ? &bundle.phrases : nullptr;
  const auto rep = train_model(*bundle.net, train, bundle.vocab, cfg.train, phrases,
                               [&](std::size_t step, double loss) {
                                 log << step << '\t' << fixed(loss, 6) << '\n';
                                 return false;
                               });
  extra["steps"] = std::to_string(rep.steps);
  extra["final_loss"] = rep.losses.empty() ? "n/a" : fixed(rep.losses.back(), 6);
  save_bundle(dir, bundle, extra);
  out << "trained " << to_string(cfg.model.kind) << " for " << rep.steps << " steps, final loss "
      << extra["final_loss"] << "\n";
  return kSuccess;
}

int cmd_evaluate(const Options& o, const RunConfig& cfg, bool explicit_model, std::ostream& out,
                 std::ostream& err) {
  require(o.data, "--data");
  require(o.model, "--model");
  if (o.subset != "full" && o.subset != "predicate_object")
    throw ConfigError("--subset must be full or predicate_object");
  const auto data = DataDir::open(o.data);
  const auto registry = registry_for(cfg);
  const auto split_name = split_option(o.split);

  const auto manifest = nn::read_manifest(fs::path(o.model) / "model.ckpt.manifest");
  std::optional<DatasetSplit> train;
  CorpusReport report;
  if (manifest.count("model") && manifest.at("model") == "template")
    train = data.load(SplitName::kTraining, registry, report);
  std::optional<ModelConfig> expected;
  if (explicit_model) expected = cfg.model;
  const auto bundle = load_bundle(o.model, train ? &*train : nullptr, expected);

  const auto split = data.load(split_name, registry, report);
  report_problems(report, err);
  fail_on_errors(report);

  std::vector<std::size_t> examples;
  if (o.subset == "full") {
    for (std::size_t i = 0; i < split.examples.size(); ++i) examples.push_back(i);
  } else {
    if (cfg.verbs.empty() || cfg.nouns.empty())
      throw ConfigError("--subset predicate_object needs verbs and nouns in the configuration");
    const auto verbs = load_word_list(cfg.verbs);
    const auto nouns = load_word_list(cfg.nouns);
    examples = predicate_object_subset(split, verbs, nouns, data.caption_counts());
  }
  const auto eval = evaluate_model(bundle, split, examples);
  const std::string title = std::string(to_string(bundle.config.kind)) + " on " +
                            std::string(to_string(split_name)) + " (" + o.subset + ")";
  if (o.out.empty()) {
    write_metrics_report(out, eval.metrics, eval.labels, title);
  } else {
    auto f = open_out(o.out);
    write_metrics_report(f, eval.metrics, eval.labels, title);
    out << title << ": BLEU-1 " << fixed(eval.metrics.bleu1 * 100, 2) << "  BLEU-2 "
        << fixed(eval.metrics.bleu2 * 100, 2) << "  ROUGE-L " << fixed(eval.metrics.rouge_l * 100, 2)
        << "  CIDEr " << fixed(eval.metrics.cider * 100, 2) << "\n";
  }
  return kSuccess;
}

int cmd_predict(const Options& o, const RunConfig& cfg, bool explicit_model, std::ostream& out) {
  require(o.model, "--model");
  require(o.hierarchy, "--hierarchy");
  require(o.screenshot, "--screenshot");
  const auto registry = registry_for(cfg);
  std::optional<DatasetSplit> train;
  const auto manifest = nn::read_manifest(fs::path(o.model) / "model.ckpt.manifest");
  if (manifest.count("model") && manifest.at("model") == "template") {
    require(o.data, "--data (template models rebuild their index)");
    CorpusReport report;
    train = DataDir::open(o.data).load(SplitName::kTraining, registry, report);
  }
  std::optional<ModelConfig> expected;
  if (explicit_model) expected = cfg.model;
  const auto bundle = load_bundle(o.model, train ? &*train : nullptr, expected);
  const auto tree = load_view_hierarchy(o.hierarchy, {});
  const auto shot = load_image(o.screenshot);
  const auto split = single_screen_split(tree, shot, registry, cfg.max_text_tokens,
                                         bundle.config.max_elements);
  std::vector<std::size_t> examples(split.examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) examples[i] = i;
  const auto predictions = predict_examples(bundle, split, examples);
  if (o.out.empty()) {
    write_predictions(out, predictions);
  } else {
    auto f = open_out(o.out);
    write_predictions(f, predictions);
  }
  return kSuccess;
}

int cmd_analyze(const Options& o, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(o.data, "--data");
  require(o.out, "--out");
  const auto data = DataDir::open(o.data);
  const auto registry = registry_for(cfg);
  const fs::path dir = o.out;
  fs::create_directories(dir);

  CorpusReport report;
  std::array<DatasetSplit, 3> splits;
  const SplitName names[] = {SplitName::kTraining, SplitName::kValidation, SplitName::kTest};
  for (int i = 0; i < 3; ++i) splits[i] = data.load(names[i], registry, report);
  report_problems(report, err);
  fail_on_errors(report);

  auto lengths = open_out(dir / "caption_lengths.tsv");
  lengths << "split\tlength\tcount\n";
  auto summary = open_out(dir / "summary.tsv");
  summary << "key\tvalue\n";
  DatasetSplit all;
  for (const auto& s : splits) {
    const auto dist = caption_length_distribution(s);
    for (const auto& [len, count] : dist.histogram)
      lengths << to_string(s.name) << '\t' << (len >= 10 ? "10+" : std::to_string(len)) << '\t'
              << count << '\n';
    summary << to_string(s.name) << "_caption_length_mean\t"
            << (dist.mean ? fixed(*dist.mean, 4) : "n/a") << "\n";
    for (const auto& e : s.examples) all.examples.push_back(e);
  }
  const auto overall = caption_length_distribution(all);
  summary << "caption_length_mean\t" << (overall.mean ? fixed(*overall.mean, 4) : "n/a") << "\n";
  if (!report.hierarchy_sizes.empty()) {
    summary << "hierarchy_size_median\t" << fixed(median(report.hierarchy_sizes), 1) << "\n";
    summary << "hierarchy_depth_median\t" << fixed(median(report.hierarchy_depths), 1) << "\n";
  }
  auto hier = open_out(dir / "hierarchy.tsv");
  hier << "size\tdepth\n";
  for (std::size_t i = 0; i < report.hierarchy_sizes.size(); ++i)
    hier << report.hierarchy_sizes[i] << '\t' << report.hierarchy_depths[i] << '\n';

  const auto agreement = word_agreement(all);
  auto words = open_out(dir / "agreement_words.tsv");
  words << "rank\tword\toccurrences\tprecision\trecall\n";
  for (std::size_t i = 0; i < agreement.words.size(); ++i) {
    const auto& w = agreement.words[i];
    words << i << '\t' << w.word << '\t' << w.occurrences << '\t' << fixed(w.precision, 4) << '\t'
          << fixed(w.recall, 4) << '\n';
  }
  auto buckets = open_out(dir / "agreement_buckets.tsv");
  buckets << "first_rank\twords\tprecision\trecall\n";
  for (const auto& b : agreement.buckets)
    buckets << b.first_rank << '\t' << b.words << '\t' << fixed(b.precision, 4) << '\t'
            << fixed(b.recall, 4) << '\n';
  summary << "agreement_words\t" << agreement.words.size() << "\n";
  summary << "agreement_buckets\t" << agreement.buckets.size() << "\n";

  const auto verbs = word_list_or_empty(cfg.verbs);
  const auto nouns = word_list_or_empty(cfg.nouns);
  if (!verbs.empty() && !nouns.empty()) {
    const auto counts = data.caption_counts();
    for (const auto& s : splits) {
      const auto subset = predicate_object_subset(s, verbs, nouns, counts);
      summary << to_string(s.name) << "_predicate_object\t" << subset.size() << "\n";
    }
    summary << "noun_list_entries\t" << nouns.size() << "\n";
  } else {
    summary << "predicate_object\tn/a (verbs and nouns not configured)\n";
  }
  out << "analysis written to " << dir.string() << "\n";
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Widget captioning: preprocessing, training, evaluation and analysis"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Configuration file, or a model configuration name");
    c->add_option("--seed", o.seed, "Random seed");
  };
  auto* gen = app.add_subcommand("generate-synthetic", "Write a synthetic screen corpus");
  common(gen);
  gen->add_option("--out", o.out, "Output corpus directory")->required();
  gen->add_option("--screens", o.screens, "Number of screens");
  gen->add_option("--apps", o.apps, "Number of apps");
  gen->add_flag("--overfit", o.overfit, "Small fixture with identical references");

  auto* pre = app.add_subcommand("preprocess", "Assemble examples and split app-wise");
  common(pre);
  pre->add_option("--corpus", o.corpus, "Directory of view hierarchies and screenshots");
  pre->add_option("--captions", o.captions, "Caption file");
  pre->add_option("--out", o.out, "Output data directory")->required();

  auto* pt = app.add_subcommand("pretrain-image", "Pretrain the image encoder as an autoencoder");
  common(pt);
  pt->add_option("--data", o.data, "Preprocessed data directory")->required();
  pt->add_option("--steps", o.steps, "Training steps");
  pt->add_option("--out", o.out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a captioning model");
  common(tr);
  tr->add_option("--data", o.data, "Preprocessed data directory")->required();
  tr->add_option("--steps", o.steps, "Training steps");
  tr->add_option("--pretrained", o.pretrained, "Directory from pretrain-image");
  tr->add_option("--out", o.out, "Output model directory")->required();

  auto* ev = app.add_subcommand("evaluate", "Score a model on a split");
  common(ev);
  ev->add_option("--data", o.data, "Preprocessed data directory")->required();
  ev->add_option("--model", o.model, "Model directory")->required();
  ev->add_option("--split", o.split, "training | validation | test");
  ev->add_option("--subset", o.subset, "full | predicate_object");
  ev->add_option("--out", o.out, "Metrics report file");

  auto* pr = app.add_subcommand("predict", "Caption the caption-missing elements of one screen");
  common(pr);
  pr->add_option("--model", o.model, "Model directory")->required();
  pr->add_option("--hierarchy", o.hierarchy, "View hierarchy JSON")->required();
  pr->add_option("--screenshot", o.screenshot, "Screenshot image")->required();
  pr->add_option("--data", o.data, "Preprocessed data directory (template models)");
  pr->add_option("--out", o.out, "Prediction file");

  auto* an = app.add_subcommand("analyze", "Corpus statistics and annotator agreement");
  common(an);
  an->add_option("--data", o.data, "Preprocessed data directory")->required();
  an->add_option("--out", o.out, "Output directory")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    bool explicit_model = false;
    const RunConfig cfg = resolve_config(o, explicit_model);
    if (*gen) return cmd_generate(o, cfg, out);
    if (*pre) return cmd_preprocess(o, cfg, out, err);
    if (*pt) return cmd_pretrain(o, cfg, out, err);
    if (*tr) return cmd_train(o, cfg, out, err);
    if (*ev) return cmd_evaluate(o, cfg, explicit_model, out, err);
    if (*pr) return cmd_predict(o, cfg, explicit_model, out);
    if (*an) return cmd_analyze(o, cfg, out, err);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const nn::NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const nn::CheckpointMismatch& e) {
    err << "refusing to load: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsageError;
}

}  // namespace widgetcap::cli
