#include "relkit/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "relkit/attnmap.hpp"
#include "relkit/corpus.hpp"
#include "relkit/depgraph.hpp"
#include "relkit/eval.hpp"
#include "relkit/pairgen.hpp"
#include "relkit/pipeline.hpp"
#include "relkit/trainer.hpp"

namespace fs = std::filesystem;

namespace relkit::cli {

namespace {

/// Relative input paths that do not exist are retried under $RELKIT_DATA_DIR.
fs::path resolve_input(const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || fs::exists(path)) return path;
  if (const char* dir = std::getenv("RELKIT_DATA_DIR"); dir && *dir) {
    fs::path alt = fs::path(dir) / path;
    if (fs::exists(alt)) return alt;
  }
  return path;
}

fs::path prepare_out_dir(const std::string& p) {
  fs::path dir(p);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

/// Every option of a subcommand with its effective value.
nlohmann::ordered_json echo_options(const CLI::App* app) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (opt->get_type_size() == 0) {
        j[name] = true;
      } else if (res.size() == 1) {
        j[name] = res.front();
      } else {
        j[name] = res;
      }
    } else if (!opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    } else if (opt->get_type_size() == 0) {
      j[name] = false;
    }
  }
  return j;
}

Corpus open_corpus(const std::string& path, bool strict) {
  CorpusLoadStats stats;
  Corpus c = load_corpus(resolve_input(path), strict ? Strictness::kStrict : Strictness::kLenient,
                         &stats);
  if (stats.skipped_overlap > 0) {
    spdlog::warn("{}: skipped {} record(s) with overlapping entity spans", path,
                 stats.skipped_overlap);
  }
  if (c.empty()) throw DataError(path + ": corpus has no records");
  return c;
}

bool fully_labelled(const Corpus& c) {
  return std::all_of(c.records().begin(), c.records().end(),
                     [](const SentenceRecord& r) { return r.gold_label.has_value(); });
}

std::map<std::string, Label> read_label_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file " + path.string());
  std::map<std::string, Label> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected <id>\\t<label>");
    }
    const std::string id = line.substr(0, tab);
    Label y;
    try {
      y = parse_label(line.substr(tab + 1));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!out.emplace(id, y).second) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate id '" + id + "'");
    }
  }
  return out;
}

int auto_embedding_layer(const TensorPack& pack, int requested) {
  if (requested >= 0) return requested;
  if (pack.entries().empty()) throw DataError("tensor pack has no entries");
  const auto& files = pack.entries().begin()->second.embedding_files;
  if (files.empty()) throw DataError("tensor pack has no embeddings");
  return files.rbegin()->first;
}

void write_predictions(const fs::path& path, std::span<const Label> preds, const Corpus& corpus) {
  write_labels(path, preds, corpus);
}

void maybe_write_metrics(const fs::path& dir, std::span<const Label> preds, const Corpus& corpus,
                         const RunEcho& echo) {
  if (!fully_labelled(corpus)) {
    spdlog::info("corpus lacks gold labels; metrics not written");
    return;
  }
  const Metrics m = score(preds, corpus.gold_labels());
  write_json(dir / "metrics.json", metrics_to_json(m, echo));
  std::cout << "P=" << format_real(m.precision) << " R=" << format_real(m.recall)
            << " F1=" << format_real(m.f1) << '\n';
}

/// Options shared by the subcommands that train heads.
struct HyperOpts {
  double lr = 1e-3;
  std::size_t batch = 256;
  int epochs = 50;
  double dropout = 0.3;

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app->add_option("--batch-size", batch, "Mini-batch size")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--dropout", dropout, "Dropout rate")->capture_default_str();
  }
  TrainHyper hyper() const {
    TrainHyper h;
    h.learning_rate = lr;
    h.batch_size = batch;
    h.epochs = epochs;
    h.dropout = dropout;
    return h;
  }
};

struct EstimatorOpts {
  std::string method = "pcomp_unbiased";
  double pi_plus = 0.5;
  std::vector<double> thetas;
  std::string rates = "theory";
  double ema = 0.99;
  double lambda_max = 1.0;
  int ramp = 5;

  void add(CLI::App* app) {
    app->add_option("--estimator", method,
                    "binary_biased|uu|pcomp_unbiased|pcomp_relu|pcomp_abs|noisy_unbiased|"
                    "rank_pruning|pcomp_teacher")
        ->capture_default_str();
    app->add_option("--pi-plus", pi_plus, "Class prior used by the estimator")->capture_default_str();
    app->add_option("--uu-thetas", thetas, "theta theta' for uu (default: pair mixture weights)")
        ->expected(2);
    app->add_option("--rates", rates, "Noise rates for pruning: theory|estimate")
        ->capture_default_str();
    app->add_option("--ema-decay", ema, "Teacher EMA decay")->capture_default_str();
    app->add_option("--lambda-max", lambda_max, "Consistency weight")->capture_default_str();
    app->add_option("--ramp-epochs", ramp, "Consistency ramp length")->capture_default_str();
  }
  EstimatorConfig config(std::uint64_t seed) const {
    EstimatorConfig c;
    c.method = parse_estimator(method);
    c.pi_plus = pi_plus;
    c.seed = seed;
    if (rates == "theory") c.rates_mode = RatesMode::kTheory;
    else if (rates == "estimate") c.rates_mode = RatesMode::kEstimate;
    else throw std::invalid_argument("--rates must be theory or estimate");
    c.teacher = {ema, lambda_max, ramp};
    if (c.method == Estimator::kUU) {
      if (thetas.size() == 2) {
        c.uu_thetas = std::make_pair(thetas[0], thetas[1]);
      } else {
        const auto w = mixture_weights(pi_plus);
        c.uu_thetas = std::make_pair(w.pos, w.neg);
      }
    }
    c.validate();
    return c;
  }
};

std::vector<Label> silver_labels(const std::string& source, const Corpus& corpus,
                                 const std::string& parses, int a, int h, const std::string& pack_dir,
                                 const std::string& dataset, int layer, double threshold, int jobs,
                                 nlohmann::ordered_json& echo) {
  if (source == "sard") {
    if (parses.empty()) throw std::invalid_argument("silver labels from sard need --parses");
    const TreeBank trees = load_conllu(resolve_input(parses));
    check_against_corpus(trees, corpus);
    echo["silver"] = {{"method", "sard"}, {"a", a}, {"h", h}};
    return sard_predict_corpus(corpus, trees, SardConfig::from_ids(a, h), jobs);
  }
  if (source == "conex") {
    if (pack_dir.empty()) throw std::invalid_argument("silver labels from conex need --pack");
    int l = layer;
    double t = threshold;
    if (l < 0 || t <= 0.0) {
      const auto def = default_conex_silver(dataset);
      if (!def) {
        throw std::invalid_argument(
            "conex silver labels need --silver-layer and --silver-threshold or a known --dataset");
      }
      if (l < 0) l = def->layer;
      if (t <= 0.0) t = def->threshold;
    }
    const TensorPack pack = TensorPack::open(resolve_input(pack_dir));
    echo["silver"] = {{"method", "conex"}, {"layer", l}, {"threshold", t}};
    return attention_predict_corpus(AttnMethod::kConEx, corpus, pack, l, t, {}, jobs);
  }
  throw std::invalid_argument("unknown label source '" + source + "' (gold|sard|conex)");
}

std::string joined_args(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) {
    if (!s.empty()) s += ' ';
    s += a;
  }
  return s;
}

void setup_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("relkit");
  logger->set_pattern("relkit: %l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
}

}  // namespace

std::vector<std::string> apply_config_file(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
      continue;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      continue;
    }
    out.push_back(args[i]);
  }
  if (!config_path) return out;

  const fs::path path = resolve_input(*config_path);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::set<std::string> given;
  for (const auto& a : out) {
    if (a.rfind("--", 0) != 0) continue;
    given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty key");
    if (given.count(key)) continue;
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

int run(const std::vector<std::string>& raw_args) {
  setup_logging();
  CLI::App app{"Relation detection toolkit: dependency and attention heuristics plus "
               "pairwise-comparison risk minimisation"};
  app.name("relkit");
  // Long form only: sard and xval use --h for the heuristic id.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.fallthrough();
  int jobs = 1;
  app.add_option("--jobs,-j", jobs, "Worker threads")->capture_default_str();
  bool verbose = false;
  app.add_flag("--verbose,-v", verbose, "Log progress to stderr");
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // Storage shared across subcommands; only the selected one is filled.
  std::string corpus_path, parses_path, pack_path, out_dir, labels_path, sets_path;
  bool strict = false;
  int a_id = 3, h_id = 1;
  std::string conj_mode = "upos";
  std::string method;
  int layer = 11;
  double threshold = 0.0;
  double lo = 0.0, hi = 0.0, step = 0.0;
  bool no_mask = false;
  std::uint64_t seed = 0;
  std::size_t n_pairs = 0;
  double pi_plus = 0.5;
  std::string label_source = "gold";
  std::string dataset;
  int silver_layer = -1;
  double silver_threshold = 0.0;
  int emb_layer = -1;
  std::string dev_sets_path, dev_labels_path;
  std::string pred_path, gold_path, out_path;
  int folds = 5;
  std::string fold_file;
  std::vector<std::string> inputs;
  std::vector<double> pi_grid;
  HyperOpts hyper_opts;
  EstimatorOpts est_opts;

  auto add_corpus = [&](CLI::App* s) {
    s->add_option("--corpus", corpus_path, "Corpus (line-delimited JSON)")->required();
    s->add_flag("--strict", strict, "Reject records with overlapping entity spans");
  };

  CLI::App* sard = app.add_subcommand("sard", "Dependency-path relation detection");
  add_corpus(sard);
  sard->add_option("--parses", parses_path, "CoNLL-U parses")->required();
  sard->add_option("--a", a_id, "Assumption id (1-3)")->capture_default_str();
  sard->add_option("--h", h_id, "Heuristic id (1-2)")->capture_default_str();
  sard->add_option("--conj", conj_mode, "Conjunction test: upos|deprel")->capture_default_str();
  sard->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* attn = app.add_subcommand("attn", "Attention-based relation detection");
  add_corpus(attn);
  attn->add_option("--pack", pack_path, "Tensor pack directory")->required();
  attn->add_option("--method", method, "picmi|picmi-up|conex")->required();
  attn->add_option("--layer", layer, "Attention layer")->capture_default_str();
  attn->add_option("--threshold", threshold, "Decision threshold")->required();
  attn->add_flag("--no-mask", no_mask, "Keep special-token attention");
  attn->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "Threshold sweep for an attention method");
  add_corpus(sweep);
  sweep->add_option("--pack", pack_path, "Tensor pack directory")->required();
  sweep->add_option("--method", method, "picmi|picmi-up|conex")->required();
  sweep->add_option("--layer", layer, "Attention layer")->capture_default_str();
  sweep->add_option("--lo", lo, "Lowest threshold (default per method)");
  sweep->add_option("--hi", hi, "Highest threshold (default per method)");
  sweep->add_option("--step", step, "Threshold step (default per method)");
  sweep->add_flag("--no-mask", no_mask, "Keep special-token attention");
  sweep->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* pairgen = app.add_subcommand("pairgen", "Generate pairwise-comparison data");
  add_corpus(pairgen);
  pairgen->add_option("--labels", labels_path, "Silver label file (default: gold labels)");
  pairgen->add_option("--label-source", label_source, "Name recorded for the label source")
      ->capture_default_str();
  pairgen->add_option("--n-pairs", n_pairs, "Accepted pairs to draw (default: corpus size)");
  pairgen->add_option("--pi-plus", pi_plus, "Prior recorded with the sets")->capture_default_str();
  pairgen->add_option("--seed", seed, "Random seed")->capture_default_str();
  pairgen->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* trn = app.add_subcommand("train", "Train a classifier head on pointwise sets");
  add_corpus(trn);
  trn->add_option("--pack", pack_path, "Tensor pack directory with embeddings")->required();
  trn->add_option("--sets", sets_path, "Pointwise sets file from pairgen")->required();
  trn->add_option("--dev-sets", dev_sets_path, "Development sets file");
  trn->add_option("--dev-labels", dev_labels_path, "Development labels (from the training label source)");
  trn->add_option("--emb-layer", emb_layer, "Embedding layer (default: highest in pack)");
  trn->add_option("--seed", seed, "Random seed")->capture_default_str();
  est_opts.add(trn);
  hyper_opts.add(trn);
  trn->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* ev = app.add_subcommand("eval", "Score predictions");
  ev->add_option("--pred", pred_path, "Prediction file (<id>\\t<label>)")->required();
  auto* gold_opt = ev->add_option("--gold", gold_path, "Gold label file");
  auto* corpus_opt = ev->add_option("--corpus", corpus_path, "Corpus holding gold labels");
  gold_opt->excludes(corpus_opt);
  ev->add_option("--method", method, "Method name echoed into the report");
  ev->add_option("--out", out_path, "Metrics JSON path")->required();

  CLI::App* xval = app.add_subcommand("xval", "Cross-validated pipeline");
  add_corpus(xval);
  xval->add_option("--method", method, "sard|picmi|picmi-up|conex|<estimator>")->required();
  xval->add_option("--parses", parses_path, "CoNLL-U parses");
  xval->add_option("--pack", pack_path, "Tensor pack directory");
  xval->add_option("--folds", folds, "Number of folds")->capture_default_str();
  xval->add_option("--fold-file", fold_file, "Predefined fold assignment");
  xval->add_option("--seed", seed, "Random seed")->capture_default_str();
  xval->add_option("--a", a_id, "SARD assumption id")->capture_default_str();
  xval->add_option("--h", h_id, "SARD heuristic id")->capture_default_str();
  xval->add_option("--conj", conj_mode, "Conjunction test: upos|deprel")->capture_default_str();
  xval->add_option("--layer", layer, "Attention layer")->capture_default_str();
  xval->add_option("--threshold", threshold, "Attention threshold");
  xval->add_option("--label-source", label_source, "gold|sard|conex")->capture_default_str();
  xval->add_option("--dataset", dataset, "Dataset name for default ConEx silver settings");
  xval->add_option("--silver-layer", silver_layer, "ConEx silver layer");
  xval->add_option("--silver-threshold", silver_threshold, "ConEx silver threshold");
  xval->add_option("--emb-layer", emb_layer, "Embedding layer (default: highest in pack)");
  xval->add_option("--n-pairs", n_pairs, "Pairs per training fold (default: fold size)");
  xval->add_option("--pi-grid", pi_grid, "Priors to run (overrides --pi-plus)");
  est_opts.add(xval);
  hyper_opts.add(xval);
  xval->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* report = app.add_subcommand("report", "Aggregate metrics objects into one table");
  report->add_option("inputs", inputs, "Metrics or cross-validation JSON files")->required();
  report->add_option("--out", out_path, "Summary CSV path")->required();

  std::vector<std::string> args;
  try {
    args = apply_config_file(raw_args);
  } catch (const DataError& e) {
    std::cerr << "relkit: error: " << e.what() << '\n';
    return kExitData;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (verbose) spdlog::set_level(spdlog::level::info);
  spdlog::info("relkit {}", joined_args(args));

  auto conj = [&]() {
    if (conj_mode == "upos") return ConjunctionMode::kUpos;
    if (conj_mode == "deprel") return ConjunctionMode::kDeprel;
    throw std::invalid_argument("--conj must be upos or deprel");
  };

  try {
    if (jobs < 1) throw std::invalid_argument("--jobs must be at least 1");

    if (*sard) {
      const Corpus corpus = open_corpus(corpus_path, strict);
      const TreeBank trees = load_conllu(resolve_input(parses_path));
      check_against_corpus(trees, corpus);
      const SardConfig cfg = SardConfig::from_ids(a_id, h_id, conj());
      const fs::path dir = prepare_out_dir(out_dir);
      const auto preds = sard_predict_corpus(corpus, trees, cfg, jobs);
      write_predictions(dir / "predictions.tsv", preds, corpus);
      RunEcho echo;
      echo.method = "sard";
      echo.extra = echo_options(sard);
      maybe_write_metrics(dir, preds, corpus, echo);
      return kExitOk;
    }

    if (*attn) {
      const AttnMethod m = parse_attn_method(method);
      const Corpus corpus = open_corpus(corpus_path, strict);
      const TensorPack pack = TensorPack::open(resolve_input(pack_path));
      const fs::path dir = prepare_out_dir(out_dir);
      AttentionOptions opts;
      opts.mask_special = !no_mask;
      const auto preds = attention_predict_corpus(m, corpus, pack, layer, threshold, opts, jobs);
      write_predictions(dir / "predictions.tsv", preds, corpus);
      RunEcho echo;
      echo.method = to_string(m);
      echo.layer = layer;
      echo.threshold = threshold;
      echo.extra = echo_options(attn);
      maybe_write_metrics(dir, preds, corpus, echo);
      return kExitOk;
    }

    if (*sweep) {
      const AttnMethod m = parse_attn_method(method);
      ThresholdRange range = ThresholdRange::defaults(m);
      if (sweep->count("--lo")) range.lo = lo;
      if (sweep->count("--hi")) range.hi = hi;
      if (sweep->count("--step")) range.step = step;
      const Corpus corpus = open_corpus(corpus_path, strict);
      if (!fully_labelled(corpus)) throw DataError(corpus_path + ": sweep needs gold labels");
      const TensorPack pack = TensorPack::open(resolve_input(pack_path));
      const fs::path dir = prepare_out_dir(out_dir);
      AttentionOptions opts;
      opts.mask_special = !no_mask;
      const auto rows = sweep_thresholds(m, corpus, pack, layer, range, opts, jobs);
      RunEcho echo;
      echo.method = to_string(m);
      echo.layer = layer;
      echo.extra = echo_options(sweep);
      echo.extra["range"] = {{"lo", range.lo}, {"hi", range.hi}, {"step", range.step}};
      write_sweep_csv(dir / "sweep.csv", rows, echo);
      nlohmann::ordered_json j;
      j["config"] = echo.extra;
      j["rows"] = nlohmann::ordered_json::array();
      for (const auto& r : rows) {
        auto row = metrics_to_json(r.metrics, RunEcho{to_string(m), layer, r.threshold, {}, {}, {}});
        row["predicted_positive"] = r.predicted_positive;
        j["rows"].push_back(row);
      }
      write_json(dir / "sweep.json", j);
      std::cout << rows.size() << " thresholds written to " << (dir / "sweep.csv").string() << '\n';
      return kExitOk;
    }

    if (*pairgen) {
      const Corpus corpus = open_corpus(corpus_path, strict);
      std::vector<Label> labels;
      std::string source = label_source;
      if (!labels_path.empty()) {
        labels = read_labels(resolve_input(labels_path), corpus);
        if (source == "gold") source = "silver:" + fs::path(labels_path).stem().string();
      } else {
        labels = corpus.gold_labels();
      }
      const std::size_t n = n_pairs ? n_pairs : corpus.size();
      const fs::path dir = prepare_out_dir(out_dir);
      const PairGeneration gen = generate_pairs(labels, n, seed);
      const PointwiseSets sets = split_pointwise(gen.pairs, source, pi_plus);
      write_pairs(dir / "pairs.tsv", gen.pairs, corpus);
      write_sets(dir / "sets.tsv", sets, corpus);
      auto rep = generation_report(gen, source, seed);
      rep["config"] = echo_options(pairgen);
      write_json(dir / "pairgen.json", rep);
      std::cout << "accepted " << gen.accepted << " of " << gen.drawn << " drawn pairs\n";
      return kExitOk;
    }

    if (*trn) {
      const EstimatorConfig cfg = est_opts.config(seed);
      const TrainHyper hyper = hyper_opts.hyper();
      hyper.validate();
      const Corpus corpus = open_corpus(corpus_path, strict);
      const TensorPack pack = TensorPack::open(resolve_input(pack_path));
      const int el = auto_embedding_layer(pack, emb_layer);
      PointwiseSets sets = read_sets(resolve_input(sets_path), corpus);
      sets.pi_plus = cfg.pi_plus;
      const FeatureMatrix x = build_features(corpus, pack, el, jobs);
      std::optional<DevData> dev;
      if (!dev_sets_path.empty() || !dev_labels_path.empty()) {
        dev.emplace();
        if (!dev_sets_path.empty()) dev->sets = read_sets(resolve_input(dev_sets_path), corpus);
        if (!dev_labels_path.empty()) {
          for (const auto& [id, y] : read_label_map(resolve_input(dev_labels_path))) {
            dev->rows.push_back(corpus.require_index(id));
            dev->labels.push_back(y);
          }
        }
      }
      const fs::path dir = prepare_out_dir(out_dir);
      const TrainedHead model = train(sets, x, cfg, hyper, dev ? &*dev : nullptr);
      save_head(dir / "head.json", model);
      write_training_log(dir / "training_log.jsonl", model.log);
      std::vector<std::size_t> all(corpus.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      write_predictions(dir / "predictions.tsv", predict(model, x, all), corpus);
      auto meta = head_metadata(model);
      meta["config"] = echo_options(trn);
      meta["embedding_layer"] = el;
      write_json(dir / "train.json", meta);
      std::cout << "selected epoch " << model.selected_epoch << '\n';
      return kExitOk;
    }

    if (*ev) {
      const auto preds = read_label_map(resolve_input(pred_path));
      std::map<std::string, Label> golds;
      if (!gold_path.empty()) {
        golds = read_label_map(resolve_input(gold_path));
      } else if (!corpus_path.empty()) {
        const Corpus corpus = open_corpus(corpus_path, strict);
        for (const auto& r : corpus.records()) {
          if (!r.gold_label) throw DataError(corpus_path + ": record '" + r.id + "' has no gold label");
          golds.emplace(r.id, *r.gold_label);
        }
      } else {
        throw std::invalid_argument("eval needs --gold or --corpus");
      }
      const Metrics m = score(preds, golds);
      RunEcho echo;
      echo.method = method.empty() ? fs::path(pred_path).stem().string() : method;
      echo.extra = echo_options(ev);
      const fs::path out(out_path);
      if (out.has_parent_path()) prepare_out_dir(out.parent_path().string());
      write_json(out, metrics_to_json(m, echo));
      std::cout << "P=" << format_real(m.precision) << " R=" << format_real(m.recall)
                << " F1=" << format_real(m.f1) << '\n';
      return kExitOk;
    }

    if (*xval) {
      const Corpus corpus = open_corpus(corpus_path, strict);
      const std::vector<Label> golds = corpus.gold_labels();
      const FoldPlan plan = fold_file.empty() ? make_folds(corpus, folds, seed)
                                              : load_fold_file(resolve_input(fold_file), corpus);
      const fs::path dir = prepare_out_dir(out_dir);
      write_fold_file(dir / "folds.tsv", plan, corpus);
      RunEcho echo;
      echo.method = method;
      echo.seed = seed;
      echo.extra = echo_options(xval);

      auto emit = [&](const CrossValidationResult& cv, const RunEcho& e, const std::string& name) {
        write_json(dir / name, cross_validation_to_json(cv, e));
        std::cout << e.method << (e.pi_plus ? " pi+=" + format_real(*e.pi_plus) : std::string())
                  << " mean F1=" << format_real(cv.mean.f1) << '\n';
      };
      auto by_fold = [&](const std::vector<Label>& preds) {
        return [&plan, &golds, preds](int f) {
          std::vector<Label> p, g;
          for (std::size_t i : plan.test_indices(f)) {
            p.push_back(preds[i]);
            g.push_back(golds[i]);
          }
          return score(p, g);
        };
      };

      if (method == "sard") {
        if (parses_path.empty()) throw std::invalid_argument("xval --method sard needs --parses");
        const TreeBank trees = load_conllu(resolve_input(parses_path));
        check_against_corpus(trees, corpus);
        const auto preds = sard_predict_corpus(corpus, trees, SardConfig::from_ids(a_id, h_id, conj()), jobs);
        emit(cross_validate(plan.k, by_fold(preds), 1), echo, "xval.json");
        return kExitOk;
      }
      if (method == "picmi" || method == "picmi-up" || method == "picmi_up" || method == "conex") {
        if (pack_path.empty()) throw std::invalid_argument("xval with an attention method needs --pack");
        if (!xval->count("--threshold")) throw std::invalid_argument("xval with an attention method needs --threshold");
        const AttnMethod m = parse_attn_method(method);
        const TensorPack pack = TensorPack::open(resolve_input(pack_path));
        const auto preds = attention_predict_corpus(m, corpus, pack, layer, threshold, {}, jobs);
        echo.method = to_string(m);
        echo.layer = layer;
        echo.threshold = threshold;
        emit(cross_validate(plan.k, by_fold(preds), 1), echo, "xval.json");
        return kExitOk;
      }

      // Risk-minimisation methods.
      est_opts.method = method;
      if (pack_path.empty()) throw std::invalid_argument("xval with an estimator needs --pack");
      const TensorPack pack = TensorPack::open(resolve_input(pack_path));
      const int el = auto_embedding_layer(pack, emb_layer);
      const FeatureMatrix x = build_features(corpus, pack, el, jobs);
      std::vector<Label> labeler = golds;
      std::string source = "gold";
      if (label_source != "gold") {
        labeler = silver_labels(label_source, corpus, parses_path, a_id, h_id, pack_path, dataset,
                                silver_layer, silver_threshold, jobs, echo.extra);
        source = "silver:" + label_source;
      }
      std::vector<double> grid = pi_grid.empty() ? std::vector<double>{est_opts.pi_plus} : pi_grid;
      for (double p : grid) {
        EstimatorOpts opts = est_opts;
        opts.pi_plus = p;
        const EstimatorConfig base = opts.config(seed);
        PcompRunConfig run_cfg;
        run_cfg.hyper = hyper_opts.hyper();
        run_cfg.hyper.validate();
        run_cfg.n_pairs = n_pairs;
        run_cfg.label_source = source;
        const auto cv = cross_validate(
            plan.k,
            [&](int f) {
              PcompRunConfig c = run_cfg;
              c.estimator = base;
              c.estimator.seed = seed + static_cast<std::uint64_t>(f) * 1000003ULL;
              const auto train_idx = plan.train_indices(f);
              const auto test_idx = plan.test_indices(f);
              return run_pcomp_fold(x, labeler, golds, train_idx, test_idx, c).metrics;
            },
            jobs);
        RunEcho e = echo;
        e.method = to_string(base.method);
        e.pi_plus = p;
        e.layer = el;
        emit(cv, e, "xval_" + to_string(base.method) + "_pi" + format_real(p) + ".json");
      }
      return kExitOk;
    }

    if (*report) {
      std::vector<std::pair<std::string, nlohmann::json>> results;
      for (const auto& in_path : inputs) {
        const fs::path p = resolve_input(in_path);
        std::ifstream in(p);
        if (!in) throw DataError("cannot open report input " + p.string());
        try {
          results.emplace_back(p.filename().string(), nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
          throw DataError(p.string() + ": " + e.what());
        }
      }
      const fs::path out(out_path);
      if (out.has_parent_path()) prepare_out_dir(out.parent_path().string());
      write_summary_csv(out, results);
      std::cout << results.size() << " result(s) summarised in " << out.string() << '\n';
      return kExitOk;
    }
  } catch (const DataError& e) {
    std::cerr << "relkit: data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "relkit: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "relkit: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace relkit::cli
