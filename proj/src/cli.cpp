#include "relwalk/cli.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "relwalk/compress.hpp"
#include "relwalk/diagnostics.hpp"
#include "relwalk/eval.hpp"
#include "relwalk/textio.hpp"

namespace relwalk {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? sep : "") + parts[i];
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const std::vector<std::string> kSubcommands = {"train", "eval", "classify", "diagnose", "compress", "validate-theory"};

bool uses_dataset(const std::string& sub) { return sub != "validate-theory"; }
bool uses_model(const std::string& sub) { return sub != "train" && sub != "validate-theory"; }

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = open_for_write(path);
  out << j.dump(2) << '\n';
}

std::string factor_mode_name(FactorMode m) { return m == FactorMode::svd ? "svd" : "symmetric-eigen"; }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems, "; ")), problems_(std::move(problems)) {}

std::vector<std::string> preset_names() { return {"FB15K237", "WN18RR", "FB13", "custom"}; }

Hyperparams config_defaults(const std::string& preset) {
  Hyperparams h;  // lambda1 = lambda2 = 10, 100 negatives, 1000 epochs, 100 batches, eval every 20
  if (preset == "FB15K237") {
    h.dim = 100;
    h.learning_rate = 0.001;
  } else if (preset == "WN18RR") {
    h.dim = 100;
    h.learning_rate = 0.01;
  } else if (preset == "FB13") {
    h.dim = 50;
    h.learning_rate = 0.001;
  } else if (preset == "custom") {
    h.dim = 0;
    h.learning_rate = 0.0;
  } else {
    throw ConfigError({"unknown preset '" + preset + "' (expected one of " + join(preset_names(), ", ") + ")"});
  }
  return h;
}

std::vector<std::string> parse_config_text(std::istream& in, std::vector<std::string>& problems) {
  std::vector<std::string> args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      problems.push_back("config line " + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || key.find_first_of(" \t") != std::string::npos) {
      problems.push_back("config line " + std::to_string(lineno) + ": bad key '" + key + "'");
      continue;
    }
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["subcommand"] = c.subcommand;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  if (uses_dataset(c.subcommand)) {
    nlohmann::json d{{"train", c.data.train.string()}, {"valid", c.data.valid.string()}, {"test", c.data.test.string()}};
    if (c.data.valid_labeled) d["valid_labeled"] = c.data.valid_labeled->string();
    if (c.data.test_labeled) d["test_labeled"] = c.data.test_labeled->string();
    j["data"] = d;
  }
  if (uses_model(c.subcommand)) j["model"] = c.model.string();
  if (c.subcommand == "train") {
    j["preset"] = c.preset;
    j["hyperparams"] = to_json(c.hyper);
  }
  if (c.subcommand == "eval" || c.subcommand == "compress" || c.subcommand == "diagnose") j["split"] = c.split;
  if (c.subcommand == "compress") {
    j["ranks"] = c.ranks;
    j["rank"] = c.rank;
    j["factor_mode"] = factor_mode_name(c.factor_mode);
  }
  if (c.subcommand == "diagnose") {
    j["num_c"] = c.num_c;
    j["subset_size"] = c.subset_size;
  }
  if (c.subcommand == "validate-theory") {
    j["world"] = to_json(c.world);
    j["num_triples"] = c.num_triples;
    j["n_mc"] = c.n_mc;
    j["concentration_c"] = c.concentration_c;
  }
  return j;
}

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> errs;
  if (std::find(kSubcommands.begin(), kSubcommands.end(), c.subcommand) == kSubcommands.end()) {
    errs.push_back("unknown subcommand '" + c.subcommand + "'");
    return errs;
  }
  if (c.out.empty() && !c.dry_run) errs.push_back("--out is required");
  if (!c.out.empty() && fs::exists(c.out) && !fs::is_directory(c.out)) {
    errs.push_back("output path exists and is not a directory: " + c.out.string());
  }
  if (c.threads < 1) errs.push_back("threads must be >= 1");

  auto need_file = [&](const fs::path& p, const std::string& flag) {
    if (p.empty()) {
      errs.push_back(flag + " is required");
    } else if (!fs::is_regular_file(p)) {
      errs.push_back("file not found: " + p.string() + " (" + flag + ")");
    }
  };
  if (uses_dataset(c.subcommand)) {
    need_file(c.data.train, "--train");
    need_file(c.data.valid, "--valid");
    need_file(c.data.test, "--test");
    if (c.data.valid_labeled) need_file(*c.data.valid_labeled, "--valid-labeled");
    if (c.data.test_labeled) need_file(*c.data.test_labeled, "--test-labeled");
  }
  if (uses_model(c.subcommand)) need_file(c.model, "--model");
  if (c.split != "test" && c.split != "valid") errs.push_back("split must be 'test' or 'valid'");

  if (c.subcommand == "train") {
    const bool custom = c.preset == "custom";
    if (custom && c.hyper.dim == 0) errs.push_back("preset 'custom' requires an explicit --dim");
    if (custom && c.hyper.learning_rate == 0.0) errs.push_back("preset 'custom' requires an explicit --lr");
    for (auto& e : c.hyper.validate()) {
      if (custom && c.hyper.dim == 0 && e.starts_with("dim")) continue;
      if (custom && c.hyper.learning_rate == 0.0 && e.starts_with("learning rate")) continue;
      errs.push_back(e);
    }
  }
  if (c.subcommand == "compress") {
    if (c.ranks.empty()) errs.push_back("--ranks needs at least one rank");
    for (std::size_t k : c.ranks) {
      if (k < 1) errs.push_back("ranks must be >= 1");
    }
  }
  if (c.subcommand == "diagnose") {
    if (c.num_c < 2) errs.push_back("num-c must be >= 2");
    if (c.subset_size < 1) errs.push_back("subset-size must be >= 1");
  }
  if (c.subcommand == "validate-theory") {
    const auto& w = c.world;
    if (w.num_entities < 1) errs.push_back("entities must be >= 1");
    if (w.num_relations < 1) errs.push_back("relations must be >= 1");
    if (w.dim < 2) errs.push_back("dim must be >= 2");
    if (!(w.kappa > 0.0)) errs.push_back("kappa must be > 0");
    if (!(w.step_bound > 0.0 && w.step_bound <= 2.0)) errs.push_back("step-bound must be in (0, 2]");
    if (w.walk_length < 2) errs.push_back("walk-length must be >= 2");
    if (c.num_triples < 3) errs.push_back("triples must be >= 3");
    if (c.n_mc < 2) errs.push_back("n-mc must be >= 2");
    if (c.concentration_c < 2) errs.push_back("concentration-c must be >= 2");
  }
  return errs;
}

namespace {

LoadedModel load_checked_model(const RunConfig& c) {
  LoadedModel lm = load_model(c.model);
  if (lm.vocab.empty() && lm.model.num_entities() > 0) {
    throw ConfigError({"model has no vocabulary, cannot map names: " + c.model.string()});
  }
  return lm;
}

const std::vector<Triple>& pick_split(const Dataset& ds, const std::string& split) {
  return split == "valid" ? ds.valid : ds.test;
}

void prepare_out(const RunConfig& c) {
  fs::create_directories(c.out);
  write_json(c.out / "run_config.json", to_json(c));
}

void run_train(const RunConfig& c, std::ostream& log) {
  const Dataset ds = load_dataset(c.data);
  prepare_out(c);
  TrainOptions opts;
  opts.threads = c.threads;
  opts.on_epoch = [&](const EpochRecord& rec, const Model&) {
    if (!rec.validation_mrr) return;
    log << "epoch " << rec.epoch << " loss " << format_double(rec.mean_loss) << " penalty "
        << format_double(rec.mean_penalty) << " valid_mrr " << format_double(*rec.validation_mrr) << std::endl;
  };
  const TrainState state = train(ds, c.hyper, opts);
  nlohmann::json side;
  side["config"] = to_json(c);
  side["training"] = {{"epochs_run", state.epochs_run},
                      {"best_epoch", state.best_epoch},
                      {"best_valid_mrr", state.best_metric},
                      {"stopped_early", state.stopped_early}};
  save_model(c.out / "model.bin", state.best_model, ds.vocab, &side);
  write_training_log(c.out / "train_log.tsv", state.history);
  log << "trained " << state.epochs_run << " epochs, best valid MRR " << format_double(state.best_metric)
      << " at epoch " << state.best_epoch << '\n';
}

void run_eval(const RunConfig& c, std::ostream& log) {
  const LoadedModel lm = load_checked_model(c);
  const Dataset ds = load_dataset(c.data, &lm.vocab);
  prepare_out(c);
  const RankingReport report = link_prediction(lm.model, pick_split(ds, c.split), ds.known, c.threads);
  nlohmann::json j = to_json(report, ds.vocab);
  j["config"] = to_json(c);
  write_json(c.out / "ranking.json", j);
  const std::string text = ranking_text(report, ds.vocab);
  open_for_write(c.out / "ranking.txt") << text;
  write_per_relation_tsv(c.out / "ranking_per_relation.tsv", report, ds.vocab);
  log << text;
}

void run_classify(const RunConfig& c, std::ostream& log) {
  const LoadedModel lm = load_checked_model(c);
  const Dataset ds = load_dataset(c.data, &lm.vocab);
  const std::size_t n = lm.model.num_entities();
  std::vector<LabeledTriple> valid, test;
  if (ds.valid_labeled) {
    valid = *ds.valid_labeled;
  } else {
    Rng rng = Rng::substream(c.seed, "classify-valid");
    valid = corrupt_labeled_split(ds.valid, n, rng);
  }
  if (ds.test_labeled) {
    test = *ds.test_labeled;
  } else {
    Rng rng = Rng::substream(c.seed, "classify-test");
    test = corrupt_labeled_split(ds.test, n, rng);
  }
  prepare_out(c);
  const Thresholds th = learn_thresholds(lm.model, valid);
  const ClassificationReport report = classify(lm.model, th, test);
  write_thresholds_tsv(c.out / "thresholds.tsv", th, ds.vocab);
  nlohmann::json j = to_json(report, ds.vocab);
  j["config"] = to_json(c);
  j["generated_negatives"] = {{"valid", !ds.valid_labeled}, {"test", !ds.test_labeled}};
  write_json(c.out / "classification.json", j);
  log << "accuracy " << format_double(report.accuracy) << " (" << report.correct << "/" << report.total << ")\n";
}

void run_diagnose(const RunConfig& c, std::ostream& log) {
  const LoadedModel lm = load_checked_model(c);
  const Dataset ds = load_dataset(c.data, &lm.vocab);
  prepare_out(c);
  const Model& model = lm.model;
  const RankingReport ranking = link_prediction(model, pick_split(ds, c.split), ds.known, c.threads);
  const auto conc = concentration_report(model, {c.num_c, c.subset_size, c.seed}, c.threads);
  std::vector<DiagnosticsRow> rows;
  for (RelationId r = 0; r < model.num_relations(); ++r) {
    if (ranking.per_relation[r].queries == 0) continue;
    rows.push_back({r, ranking.per_relation[r].hits10, nu_r(model.relation(r)), conc[r]});
  }
  write_diagnostics_tsv(c.out / "diagnostics.tsv", rows, ds.vocab);
  fs::create_directories(c.out / "gram");
  for (RelationId r = 0; r < model.num_relations(); ++r) {
    const std::string stem = "relation_" + std::to_string(r);
    dump_gram(c.out / "gram" / (stem + "_R1.tsv"), model.relation(r), WhichMatrix::r1);
    dump_gram(c.out / "gram" / (stem + "_R2.tsv"), model.relation(r), WhichMatrix::r2);
  }
  log << "diagnosed " << rows.size() << " relations with queries\n";
}

void run_compress(const RunConfig& c, std::ostream& log) {
  const LoadedModel lm = load_checked_model(c);
  const std::size_t d = lm.model.dim();
  std::vector<std::string> errs;
  for (std::size_t k : c.ranks) {
    if (k > d) errs.push_back("rank " + std::to_string(k) + " exceeds model dimension " + std::to_string(d));
  }
  const std::size_t keep = c.rank ? c.rank : *std::max_element(c.ranks.begin(), c.ranks.end());
  if (keep > d) errs.push_back("--rank exceeds model dimension " + std::to_string(d));
  if (!errs.empty()) throw ConfigError(errs);
  const Dataset ds = load_dataset(c.data, &lm.vocab);
  prepare_out(c);
  const auto rows = sweep_ranks(lm.model, pick_split(ds, c.split), ds.known, c.ranks, c.factor_mode, c.threads);
  write_tradeoff_tsv(c.out / "tradeoff.tsv", rows);
  const CompressedModel cm = compress_model(lm.model, keep, c.factor_mode, c.threads);
  nlohmann::json side;
  side["config"] = to_json(c);
  save_compressed_model(c.out / ("model_k" + std::to_string(keep) + ".bin"), lm.model, cm, ds.vocab, &side);
  for (const auto& row : rows) {
    log << "K=" << row.rank << " ratio " << format_double(row.ratio) << " MRR " << format_double(row.metrics.mrr)
        << '\n';
  }
}

void run_validate_theory(const RunConfig& c, std::ostream& log) {
  prepare_out(c);
  const SyntheticWorld world = make_world(c.world);
  const TheoremCheck th = check_theorem(world, c.num_triples, c.n_mc, c.seed, c.threads);
  nlohmann::json tj = to_json(th);
  tj["config"] = to_json(c);
  write_json(c.out / "theorem.json", tj);
  write_theorem_scatter_tsv(c.out / "theorem_scatter.tsv", th);
  const ConcentrationCheck cc = check_concentration(world.model, c.concentration_c, c.seed, c.threads);
  nlohmann::json cj = to_json(cc);
  cj["config"] = to_json(c);
  write_json(c.out / "concentration.json", cj);
  log << "pearson " << (th.pearson ? format_double(*th.pearson) : "NA") << " slope " << format_double(th.slope)
      << " max_cv " << format_double(cc.max_cv) << '\n';
}

}  // namespace

void execute(const RunConfig& c, std::ostream& log) {
  if (c.subcommand == "train") return run_train(c, log);
  if (c.subcommand == "eval") return run_eval(c, log);
  if (c.subcommand == "classify") return run_classify(c, log);
  if (c.subcommand == "diagnose") return run_diagnose(c, log);
  if (c.subcommand == "compress") return run_compress(c, log);
  if (c.subcommand == "validate-theory") return run_validate_theory(c, log);
  throw ConfigError({"unknown subcommand '" + c.subcommand + "'"});
}

namespace {

void report_error(std::ostream& err, const std::string& kind, const std::vector<std::string>& problems) {
  nlohmann::json j{{"error", kind}, {"problems", problems}};
  err << j.dump() << std::endl;
}

struct HyperOverrides {
  std::optional<double> margin, lr, lambda1, lambda2;
  std::optional<std::size_t> negatives, dim, max_epochs, batches, eval_every, patience;
  std::optional<std::string> loss_mode;
};

std::vector<std::size_t> parse_ranks(const std::string& text, std::vector<std::string>& errs) {
  std::vector<std::size_t> out;
  for (const auto& tok : split(text, ',')) {
    const std::string t = trim(tok);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      errs.push_back("bad rank '" + t + "' in --ranks");
    } else {
      out.push_back(v);
    }
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  HyperOverrides ov;
  std::string out_dir, model_path, train_path, valid_path, test_path, valid_labeled, test_labeled, config_path;
  std::string ranks_text, mode_text = "svd";
  std::size_t theory_dim = cfg.world.dim;

  CLI::App app{"Relation embeddings with orthogonal matrix pairs", "relwalk"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::map<std::string, CLI::App*> subs;
  subs["train"] = app.add_subcommand("train", "Train a model");
  subs["eval"] = app.add_subcommand("eval", "Filtered link prediction");
  subs["classify"] = app.add_subcommand("classify", "Triple classification with per-relation thresholds");
  subs["diagnose"] = app.add_subcommand("diagnose", "Orthogonality and partition-function diagnostics");
  subs["compress"] = app.add_subcommand("compress", "Low-rank relation compression sweep");
  subs["validate-theory"] = app.add_subcommand("validate-theory", "Check the generative model on a synthetic world");

  for (auto& [name, s] : subs) {
    s->add_option("--config", config_path, "key = value file, command-line flags override it");
    s->add_option("--seed", cfg.seed, "Root random seed");
    s->add_option("--out", out_dir, "Output directory");
    s->add_option("--threads", cfg.threads, "Worker threads (1 = bit-reproducible)");
    s->add_flag("--dry-run", cfg.dry_run, "Print the resolved configuration and exit");
    if (uses_dataset(name)) {
      s->add_option("--train", train_path, "Training triples (TSV)");
      s->add_option("--valid", valid_path, "Validation triples");
      s->add_option("--test", test_path, "Test triples");
    }
    if (uses_model(name)) s->add_option("--model", model_path, "Model file");
    if (name == "eval" || name == "compress" || name == "diagnose") {
      s->add_option("--split", cfg.split, "Split to evaluate: test or valid");
    }
  }
  auto* tr = subs["train"];
  tr->add_option("--preset", cfg.preset, "FB15K237, WN18RR, FB13 or custom");
  tr->add_option("--dim", ov.dim, "Embedding dimension");
  tr->add_option("--lr", ov.lr, "Learning rate");
  tr->add_option("--margin", ov.margin, "Margin gamma");
  tr->add_option("--lambda1", ov.lambda1, "Orthogonality weight for R1");
  tr->add_option("--lambda2", ov.lambda2, "Orthogonality weight for R2");
  tr->add_option("--negatives", ov.negatives, "Negatives per positive");
  tr->add_option("--max-epochs", ov.max_epochs);
  tr->add_option("--batches", ov.batches, "Mini-batches per epoch");
  tr->add_option("--eval-every", ov.eval_every, "Epochs between validation runs");
  tr->add_option("--patience", ov.patience, "Validation rounds without improvement before stopping");
  tr->add_option("--loss-mode", ov.loss_mode, "single or multi-max");

  auto* cl = subs["classify"];
  cl->add_option("--valid-labeled", valid_labeled, "Labeled validation triples (4th column 1 / -1)");
  cl->add_option("--test-labeled", test_labeled, "Labeled test triples");

  auto* dg = subs["diagnose"];
  dg->add_option("--num-c", cfg.num_c, "Knowledge vectors sampled per relation");
  dg->add_option("--subset-size", cfg.subset_size, "Entities used for each partition sum");

  auto* cp = subs["compress"];
  cp->add_option("--ranks", ranks_text, "Comma-separated ranks to sweep");
  cp->add_option("--rank", cfg.rank, "Rank of the saved compressed model (default: largest swept)");
  cp->add_option("--mode", mode_text, "svd or symmetric-eigen");

  auto* vt = subs["validate-theory"];
  vt->add_option("--entities", cfg.world.num_entities);
  vt->add_option("--relations", cfg.world.num_relations);
  vt->add_option("--dim", theory_dim);
  vt->add_option("--kappa", cfg.world.kappa, "Entity norm bound");
  vt->add_option("--step-bound", cfg.world.step_bound, "Maximum walk step");
  vt->add_option("--walk-length", cfg.world.walk_length);
  vt->add_option("--triples", cfg.num_triples, "Triples compared against the closed form");
  vt->add_option("--n-mc", cfg.n_mc, "Monte Carlo draws per relation");
  vt->add_option("--concentration-c", cfg.concentration_c, "Knowledge vectors for the partition check");

  // Expand --config before parsing: file entries go right after the
  // subcommand so later command-line flags take precedence.
  std::vector<std::string> problems;
  std::vector<std::string> argv_s{"relwalk"};
  std::size_t sub_pos = args.size();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (subs.count(args[i])) {
      sub_pos = i;
      break;
    }
  }
  if (sub_pos < args.size()) {
    std::optional<std::string> cfg_file;
    for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) cfg_file = args[i + 1];
      if (args[i].starts_with("--config=")) cfg_file = args[i].substr(9);
    }
    std::vector<std::string> from_file;
    if (cfg_file) {
      std::ifstream in(*cfg_file);
      if (!in) {
        problems.push_back("config file not found: " + *cfg_file);
      } else {
        from_file = parse_config_text(in, problems);
        CLI::App* sub = subs[args[sub_pos]];
        for (const auto& a : from_file) {
          const std::string key = a.substr(2, a.find('=') - 2);
          if (key == "config" || sub->get_option_no_throw("--" + key) == nullptr) {
            problems.push_back("unknown config key '" + key + "' for " + args[sub_pos]);
          }
        }
      }
    }
    argv_s.insert(argv_s.end(), args.begin(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1);
    if (problems.empty()) argv_s.insert(argv_s.end(), from_file.begin(), from_file.end());
    argv_s.insert(argv_s.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, args.end());
  } else {
    argv_s.insert(argv_s.end(), args.begin(), args.end());
  }

  std::vector<const char*> argv;
  for (const auto& s : argv_s) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    problems.push_back(e.what());
    report_error(err, "invalid_config", problems);
    return 2;
  }

  cfg.subcommand = app.get_subcommands().front()->get_name();
  cfg.out = out_dir;
  cfg.model = model_path;
  cfg.data.train = train_path;
  cfg.data.valid = valid_path;
  cfg.data.test = test_path;
  if (!valid_labeled.empty()) cfg.data.valid_labeled = valid_labeled;
  if (!test_labeled.empty()) cfg.data.test_labeled = test_labeled;
  cfg.world.dim = theory_dim;
  cfg.world.seed = cfg.seed;

  if (cfg.subcommand == "train") {
    try {
      cfg.hyper = config_defaults(cfg.preset);
    } catch (const ConfigError& e) {
      problems.insert(problems.end(), e.problems().begin(), e.problems().end());
      cfg.hyper = config_defaults("custom");
    }
    auto& h = cfg.hyper;
    if (ov.dim) h.dim = *ov.dim;
    if (ov.lr) h.learning_rate = *ov.lr;
    if (ov.margin) h.margin = *ov.margin;
    if (ov.lambda1) h.lambda1 = *ov.lambda1;
    if (ov.lambda2) h.lambda2 = *ov.lambda2;
    if (ov.negatives) h.negatives = *ov.negatives;
    if (ov.max_epochs) h.max_epochs = *ov.max_epochs;
    if (ov.batches) h.batches_per_epoch = *ov.batches;
    if (ov.eval_every) h.eval_every = *ov.eval_every;
    if (ov.patience) h.patience = *ov.patience;
    if (ov.loss_mode) {
      try {
        h.loss_mode = parse_loss_mode(*ov.loss_mode);
      } catch (const std::exception& e) {
        problems.push_back(e.what());
      }
    }
    h.seed = cfg.seed;
  }
  if (cfg.subcommand == "compress") {
    cfg.ranks = parse_ranks(ranks_text, problems);
    if (mode_text == "svd") {
      cfg.factor_mode = FactorMode::svd;
    } else if (mode_text == "symmetric-eigen") {
      cfg.factor_mode = FactorMode::symmetric_eigen;
    } else {
      problems.push_back("unknown factor mode '" + mode_text + "' (expected svd or symmetric-eigen)");
    }
  }

  for (auto& e : validate(cfg)) problems.push_back(std::move(e));
  if (!problems.empty()) {
    report_error(err, "invalid_config", problems);
    return 2;
  }
  if (cfg.dry_run) {
    out << to_json(cfg).dump(2) << '\n';
    return 0;
  }

  try {
    execute(cfg, out);
  } catch (const ConfigError& e) {
    report_error(err, "invalid_config", e.problems());
    return 2;
  } catch (const DivergenceError& e) {
    nlohmann::json j{{"error", "divergence"}, {"epoch", e.epoch()}, {"batch", e.batch()}, {"message", e.what()}};
    err << j.dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    report_error(err, "runtime", {e.what()});
    return 1;
  }
  return 0;
}

}  // namespace relwalk
