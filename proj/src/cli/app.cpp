#include "lesr/cli/app.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "lesr/common/binary_io.hpp"
#include "lesr/common/error.hpp"
#include "lesr/common/parallel.hpp"
#include "lesr/corpus/corpus.hpp"
#include "lesr/corpus/synth.hpp"
#include "lesr/distill/retrieval.hpp"
#include "lesr/dualview/checkpoint.hpp"
#include "lesr/evalkit/aggregate.hpp"
#include "lesr/evalkit/metrics.hpp"
#include "lesr/semantic/cache.hpp"
#include "lesr/semantic/embedding.hpp"
#include "lesr/semantic/prompts.hpp"
#include "lesr/trainer/trainer.hpp"

namespace lesr::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using num::Index;

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError(path + ":" + std::to_string(line_no) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

namespace {

// ---- Shared plumbing ------------------------------------------------------------

struct Common {
  std::uint64_t seed = 42;
  std::size_t workers = default_workers();
  std::string out;
  std::string config;
};

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--seed", c.seed, "Run seed; every random substream derives from it")->capture_default_str();
  sub->add_option("--workers", c.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  auto* o = sub->add_option("--out", c.out, "Output directory");
  if (needs_out) o->required();
  sub->add_option("--config", c.config, "Flat key=value file; command-line flags take precedence");
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& p) { return hex64(fnv1a(read_file_bytes(p))); }

// Effective value of every option of a subcommand except bookkeeping ones.
json resolved_options(const CLI::App* sub) {
  json j = json::object();
  for (const auto* opt : sub->get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "out") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      std::string v;
      for (std::size_t i = 0; i < r.size(); ++i) v += (i ? "," : "") + r[i];
      j[name] = v;
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

class Manifest {
 public:
  Manifest(std::string subcommand, fs::path dir, json config)
      : dir_(std::move(dir)) {
    j_["subcommand"] = std::move(subcommand);
    j_["tool_version"] = kToolVersion;
    j_["config"] = std::move(config);
    j_["config_hash"] = hex64(fnv1a(j_["config"].dump()));
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
    j_["created_utc"] = utc_now();
  }
  void input(const std::string& key, const fs::path& p) {
    j_["inputs"][key] = p.string();
    if (fs::is_regular_file(p)) j_["input_hashes"][key] = file_hash(p);
  }
  void output(const std::string& key, const fs::path& p) { j_["outputs"][key] = p.string(); }
  json& extra() { return j_; }
  void write() const { write_text_atomic(dir_ / "manifest.json", j_.dump(1) + "\n"); }
  void finish() {
    j_["finished_utc"] = utc_now();
    write();
  }

 private:
  fs::path dir_;
  json j_;
};

void require(const fs::path& p, const std::string& what, const std::string& producer) {
  if (p.empty()) throw DataError("missing " + what + "; produce it with `lesr " + producer + "`");
  if (!fs::exists(p))
    throw DataError("missing " + what + " at " + p.string() + "; produce it with `lesr " + producer + "`");
}

// A directory holding `name`, or the file itself.
fs::path resolve(const std::string& arg, const std::string& name) {
  fs::path p(arg);
  if (!arg.empty() && fs::is_directory(p)) return p / name;
  return p;
}

// ---- Training options ------------------------------------------------------------

struct TrainArgs {
  train::TrainConfig cfg;
  std::string backbone = "attention";
  std::string loss = "auto";
  std::string init = "pca";
  std::string corpus, items, retrieval;
};

void add_train_options(CLI::App* sub, TrainArgs& a) {
  auto& c = a.cfg;
  sub->add_option("--corpus", a.corpus, "corpus.bin (or a directory holding it)");
  sub->add_option("--items", a.items, "Item embedding cache items.emb (or a directory holding it)");
  sub->add_option("--retrieval", a.retrieval, "retrieval.bin (or a directory holding it); needed when alpha > 0");
  sub->add_option("--batch-size", c.batch_size, "Users per mini-batch")->capture_default_str();
  sub->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
  sub->add_option("--alpha", c.alpha, "Self-distillation weight")->capture_default_str();
  sub->add_option("--retrieve-n", c.retrieve_n, "Similar users per teacher")->capture_default_str();
  sub->add_option("--dim", c.dim, "Embedding dimension d")->capture_default_str();
  sub->add_option("--max-len", c.max_len, "Maximum sequence length")->capture_default_str();
  sub->add_option("--dropout", c.dropout, "Encoder dropout rate")->capture_default_str();
  sub->add_option("--max-epochs", c.max_epochs, "Epoch limit")->capture_default_str();
  sub->add_option("--patience", c.patience, "Early-stop patience in epochs")->capture_default_str();
  sub->add_option("--max-steps", c.max_steps, "Optimizer step limit (0: none)")->capture_default_str();
  sub->add_option("--backbone", a.backbone, "attention | recurrent")->capture_default_str();
  sub->add_option("--loss", a.loss, "auto | seq2seq | seq2one")->capture_default_str();
  sub->add_option("--co-view", c.flags.co_view, "Collaborative view")->capture_default_str();
  sub->add_option("--se-view", c.flags.se_view, "Semantic view")->capture_default_str();
  sub->add_option("--share-encoder", c.flags.share_encoder, "One encoder for both views")->capture_default_str();
  sub->add_option("--cross-attention", c.flags.cross_attention, "Cross-attention fusion")->capture_default_str();
  sub->add_option("--adapter-layers", c.flags.adapter_layers, "Adapter affine maps (1 or 2)")->capture_default_str();
  sub->add_option("--init", a.init, "Collaborative table init: pca | random")->capture_default_str();
  sub->add_option("--residual-fusion", c.flags.residual_fusion, "Add fusion output to its input (experimental)")
      ->capture_default_str();
  sub->add_option("--causal-fusion", c.flags.causal_fusion, "Mask future positions in cross-attention")
      ->capture_default_str();
}

train::TrainConfig finish_config(TrainArgs& a, const Common& common) {
  auto c = a.cfg;
  c.seed = common.seed;
  c.workers = common.workers;
  c.backbone = enc::parse_encoder_kind(a.backbone);
  c.loss = train::parse_loss_kind(a.loss);
  c.flags.init_mode = dual::parse_init_mode(a.init);
  c.validate();
  return c;
}

struct Inputs {
  fs::path corpus_path, items_path, retrieval_path;
  corpus::Corpus corpus;
  semantic::EmbeddingTable items;
  std::optional<distill::RetrievalSets> retrieval;
};

Inputs load_inputs(const TrainArgs& a, bool need_retrieval) {
  Inputs in;
  in.corpus_path = resolve(a.corpus, "corpus.bin");
  in.items_path = resolve(a.items, "items.emb");
  require(in.corpus_path, "corpus snapshot (--corpus)", "synth` or `lesr preprocess");
  require(in.items_path, "item embedding cache (--items)", "embed` or `lesr synth");
  in.corpus = corpus::read_corpus(in.corpus_path);
  in.items = semantic::read_cache(in.items_path);
  if (in.items.kind != semantic::EntityKind::kItem) throw DataError(in.items_path.string() + " is not an item cache");
  if (in.items.count != in.corpus.num_items())
    throw DataError("item cache has " + std::to_string(in.items.count) + " rows, corpus has " +
                    std::to_string(in.corpus.num_items()) + " items");
  if (need_retrieval) {
    in.retrieval_path = resolve(a.retrieval, "retrieval.bin");
    require(in.retrieval_path, "retrieval sets (--retrieval)", "retrieve");
    in.retrieval = distill::read_retrieval(in.retrieval_path);
  }
  return in;
}

struct RunOutcome {
  train::TrainResult result;
  eval::MetricsReport report;
};

RunOutcome train_into(const fs::path& dir, const Inputs& in, const train::TrainConfig& cfg, const std::string& sub,
                      json options, std::ostream& out) {
  fs::create_directories(dir);
  options["resolved"] = train::describe(cfg);
  Manifest m(sub, dir, options);
  m.input("corpus", in.corpus_path);
  m.input("items", in.items_path);
  if (!in.retrieval_path.empty()) m.input("retrieval", in.retrieval_path);
  for (auto name : {"config.txt", "train_log.jsonl", "best.ckpt", "final.ckpt", "report.json"}) m.output(name, dir / name);
  m.write();
  write_text_atomic(dir / "config.txt", train::describe(cfg));

  corpus::SplitCorpus split(in.corpus);
  const auto tags = corpus::assign_groups(in.corpus);
  std::optional<distill::RetrievalSets> sets;
  if (cfg.alpha > 0) sets = distill::truncate(*in.retrieval, cfg.retrieve_n);

  auto model = dual::make_model<float>(in.items, cfg.model_config(), cfg.seed);
  auto result = train::train(std::move(model), split, sets ? &*sets : nullptr, cfg, [&](const train::EpochRecord& r) {
    out << "epoch " << r.epoch << " rank " << r.rank_loss << " sd " << r.sd_loss << " valid_ndcg10 " << r.valid_ndcg
        << (r.best ? " *" : "") << "\n";
    return true;
  });
  write_text_atomic(dir / "train_log.jsonl", result.log.to_jsonl(false));
  dual::write_checkpoint(result.model, dir / "best.ckpt");
  dual::write_checkpoint(result.last, dir / "final.ckpt");
  auto report = eval::evaluate(result.model, split, tags, cfg.seed, cfg.workers);
  eval::write_report(report, dir / "report.json");

  json secs = json::array();
  for (const auto& e : result.log.epochs) secs.push_back(e.seconds);
  m.extra()["epoch_seconds"] = secs;
  m.extra()["best_epoch"] = result.log.best_epoch;
  m.finish();
  return {std::move(result), std::move(report)};
}

std::string slug(std::string name) {
  std::string s;
  for (char ch : name) {
    if (std::isalnum(static_cast<unsigned char>(ch))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    else if (!s.empty() && s.back() != '-') s += '-';
  }
  while (!s.empty() && s.back() == '-') s.pop_back();
  return s;
}

// Appends --key=value for config-file keys not given on the command line.
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  const auto given = [&](const std::string& key) {
    for (std::size_t i = 1; i < args.size(); ++i)
      if (args[i] == "--" + key || args[i].rfind("--" + key + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& [k, v] : read_config_file(path))
    if (!given(k)) extra.push_back("--" + k + "=" + v);
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-tail sequential recommendation with dual-view LLM embeddings", "lesr"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common common;

  // synth
  corpus::SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic long-tail corpus with embedding caches");
  add_common(synth, common);
  synth->add_option("--users", sc.n_users, "Users")->capture_default_str();
  synth->add_option("--items", sc.n_items, "Items")->capture_default_str();
  synth->add_option("--clusters", sc.n_clusters, "Latent clusters")->capture_default_str();
  synth->add_option("--zipf", sc.zipf_s, "Zipf exponent of item popularity")->capture_default_str();
  synth->add_option("--mean-len", sc.mean_len, "Mean sequence length")->capture_default_str();
  synth->add_option("--d-llm", sc.d_llm, "Embedding dimension of the synthetic caches")->capture_default_str();

  // preprocess
  std::string interactions, item_meta;
  Index min_len = 3;
  auto* pre = app.add_subcommand("preprocess", "Build a corpus snapshot from interaction logs");
  add_common(pre, common);
  pre->add_option("--interactions", interactions, "TSV of user, item, timestamp")->required();
  pre->add_option("--item-meta", item_meta, "JSON-lines item attributes with an \"id\" key");
  pre->add_option("--min-len", min_len, "Drop users with fewer interactions")->capture_default_str();

  // prompts
  std::string prompt_corpus, dataset = "yelp";
  std::size_t max_titles = semantic::kDefaultMaxTitles;
  auto* prompts = app.add_subcommand("prompts", "Render item and user prompts");
  add_common(prompts, common);
  prompts->add_option("--corpus", prompt_corpus, "corpus.bin (or a directory holding it)")->required();
  prompts->add_option("--dataset", dataset, "yelp | fashion | beauty")->capture_default_str();
  prompts->add_option("--max-titles", max_titles, "Titles per user prompt")->capture_default_str();

  // embed
  std::string prompt_file, provider = "mock", endpoint;
  std::size_t mock_dim = 64;
  auto* embed = app.add_subcommand("embed", "Fetch embeddings for prompts into binary caches");
  add_common(embed, common);
  embed->add_option("--prompts", prompt_file, "prompts.jsonl (or a directory holding it)")->required();
  embed->add_option("--provider", provider, "mock | http")->capture_default_str();
  embed->add_option("--endpoint", endpoint, "Endpoint config file (http provider)");
  embed->add_option("--mock-dim", mock_dim, "Dimension of the mock provider")->capture_default_str();

  // retrieve
  std::string user_cache;
  Index retrieve_n = distill::kDefaultRetrieveN;
  auto* retrieve = app.add_subcommand("retrieve", "Precompute similar-user sets");
  add_common(retrieve, common);
  retrieve->add_option("--users", user_cache, "users.emb (or a directory holding it)")->required();
  retrieve->add_option("--n", retrieve_n, "Similar users per user")->capture_default_str();

  // train
  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model into a run directory");
  add_common(trn, common);
  add_train_options(trn, ta);

  // eval
  std::string run_dir, eval_corpus;
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint with the sampled-negative protocol");
  add_common(evl, common);
  evl->add_option("--run", run_dir, "Run directory (uses best.ckpt) or a checkpoint file")->required();
  evl->add_option("--corpus", eval_corpus, "corpus.bin (or a directory holding it)")->required();

  // ablate
  TrainArgs aa;
  std::string variants;
  auto* abl = app.add_subcommand("ablate", "Train and evaluate every ablation variant");
  add_common(abl, common);
  add_train_options(abl, aa);
  abl->add_option("--variants", variants, "Comma-separated subset of variants (default: all)");

  // report
  std::vector<std::string> systems;
  std::string baseline;
  auto* rep = app.add_subcommand("report", "Aggregate per-seed reports into a comparison table");
  add_common(rep, common);
  rep->add_option("--system", systems, "NAME=report[,report...] (report files or run directories)")->required();
  rep->add_option("--baseline", baseline, "System used for the significance test");

  std::vector<std::string> args;
  try {
    args = apply_config_file(raw_args);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand help requests arrive as CallForHelp from the subcommand.
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const fs::path dir(common.out);
    if (synth->parsed()) {
      fs::create_directories(dir);
      Manifest m("synth", dir, resolved_options(synth));
      for (auto n : {"corpus.bin", "items.emb", "users.emb"}) m.output(n, dir / n);
      m.write();
      const auto data = corpus::synth_generate(sc, common.seed);
      corpus::write_corpus(data.corpus, dir / "corpus.bin");
      semantic::write_cache(data.item_embeddings, dir / "items.emb");
      semantic::write_cache(data.user_embeddings, dir / "users.emb");
      m.extra()["corpus_hash"] = file_hash(dir / "corpus.bin");
      m.finish();
      out << "synth: " << data.corpus.num_users() << " users, " << data.corpus.num_items() << " items, "
          << data.corpus.num_interactions() << " interactions -> " << dir.string() << "\n";
    } else if (pre->parsed()) {
      require(interactions, "interaction log (--interactions)", "preprocess");
      fs::create_directories(dir);
      Manifest m("preprocess", dir, resolved_options(pre));
      m.input("interactions", interactions);
      if (!item_meta.empty()) m.input("item_meta", item_meta);
      m.output("corpus.bin", dir / "corpus.bin");
      m.write();
      const auto c = corpus::preprocess(corpus::load_interactions(interactions, item_meta), min_len);
      corpus::write_corpus(c, dir / "corpus.bin");
      m.extra()["corpus_hash"] = file_hash(dir / "corpus.bin");
      m.finish();
      out << "preprocess: " << c.num_users() << " users, " << c.num_items() << " items\n";
    } else if (prompts->parsed()) {
      const auto cp = resolve(prompt_corpus, "corpus.bin");
      require(cp, "corpus snapshot (--corpus)", "synth` or `lesr preprocess");
      const auto kind = semantic::parse_dataset_kind(dataset);
      fs::create_directories(dir);
      Manifest m("prompts", dir, resolved_options(prompts));
      m.input("corpus", cp);
      m.output("prompts.jsonl", dir / "prompts.jsonl");
      m.write();
      const auto records = semantic::build_prompts(corpus::read_corpus(cp), kind, max_titles);
      semantic::write_prompts(records, dir / "prompts.jsonl");
      m.finish();
      out << "prompts: " << records.size() << " records\n";
    } else if (embed->parsed()) {
      const auto pp = resolve(prompt_file, "prompts.jsonl");
      require(pp, "prompt file (--prompts)", "prompts");
      fs::create_directories(dir);
      Manifest m("embed", dir, resolved_options(embed));
      m.input("prompts", pp);
      m.output("items.emb", dir / "items.emb");
      m.output("users.emb", dir / "users.emb");
      m.write();
      const auto records = semantic::read_prompts(pp);
      std::unique_ptr<semantic::EmbeddingProvider> prov;
      semantic::FetchOptions fo;
      if (provider == "mock") {
        prov = std::make_unique<semantic::MockProvider>(mock_dim, common.seed);
      } else if (provider == "http") {
        if (endpoint.empty()) throw ParameterError("--provider http needs --endpoint");
        auto ec = semantic::EndpointConfig::load(endpoint);
        fo = {ec.batch_size, ec.concurrency, ec.retries, ec.backoff_ms};
        prov = std::make_unique<semantic::HttpProvider>(ec);
      } else {
        throw ParameterError("unknown provider '" + provider + "' (expected mock or http)");
      }
      for (auto kind : {semantic::EntityKind::kItem, semantic::EntityKind::kUser}) {
        std::vector<std::string> texts;
        for (const auto& r : records)
          if (r.kind == kind) {
            if (r.id != static_cast<Index>(texts.size())) throw DataError("prompt ids are not dense");
            texts.push_back(r.text);
          }
        if (texts.empty()) throw DataError(std::string("no ") + semantic::to_string(kind) + " prompts");
        semantic::FetchStats st;
        const auto vecs = semantic::fetch_embeddings(texts, *prov, fo, &st);
        const auto name = kind == semantic::EntityKind::kItem ? "items.emb" : "users.emb";
        semantic::write_cache(semantic::to_table(kind, vecs), dir / name);
        out << "embed: " << texts.size() << " " << semantic::to_string(kind) << " vectors of dim " << st.dim << "\n";
      }
      m.finish();
    } else if (retrieve->parsed()) {
      const auto up = resolve(user_cache, "users.emb");
      require(up, "user embedding cache (--users)", "embed` or `lesr synth");
      fs::create_directories(dir);
      Manifest m("retrieve", dir, resolved_options(retrieve));
      m.input("users", up);
      m.output("retrieval.bin", dir / "retrieval.bin");
      m.write();
      const auto users = semantic::read_cache(up);
      if (users.kind != semantic::EntityKind::kUser) throw DataError(up.string() + " is not a user cache");
      const auto index = distill::build_index(users, retrieve_n);
      distill::write_retrieval(distill::retrieve_all(index, common.workers), dir / "retrieval.bin");
      m.finish();
      out << "retrieve: " << users.count << " users, N=" << retrieve_n << "\n";
    } else if (trn->parsed()) {
      const auto cfg = finish_config(ta, common);
      const auto in = load_inputs(ta, cfg.alpha > 0);
      auto outcome = train_into(dir, in, cfg, "train", resolved_options(trn), out);
      out << "train: best epoch " << outcome.result.log.best_epoch << ", valid N@10 " << outcome.result.log.best_valid
          << ", test N@10 " << outcome.report.slice("overall").n10 << "\n";
    } else if (evl->parsed()) {
      const auto ckpt = resolve(run_dir, "best.ckpt");
      require(ckpt, "checkpoint (--run)", "train");
      const auto cp = resolve(eval_corpus, "corpus.bin");
      require(cp, "corpus snapshot (--corpus)", "synth` or `lesr preprocess");
      fs::create_directories(dir);
      Manifest m("eval", dir, resolved_options(evl));
      m.input("checkpoint", ckpt);
      m.input("corpus", cp);
      m.output("report.json", dir / "report.json");
      m.write();
      const auto model = dual::read_checkpoint(ckpt);
      const auto c = corpus::read_corpus(cp);
      if (c.num_items() != model.num_items()) throw DataError("checkpoint and corpus disagree on the item count");
      corpus::SplitCorpus split(c);
      const auto report = eval::evaluate(model, split, corpus::assign_groups(c), common.seed, common.workers);
      eval::write_report(report, dir / "report.json");
      m.finish();
      for (const auto& s : report.slices)
        if (s.name.find('_') == std::string::npos || s.name.find("_g") == std::string::npos)
          out << s.name << " H@10 " << s.h10 << " N@10 " << s.n10 << " (" << s.count << ")\n";
    } else if (abl->parsed()) {
      const auto base = finish_config(aa, common);
      std::vector<std::string> names;
      if (variants.empty()) {
        names = train::ablation_names();
      } else {
        std::stringstream ss(variants);
        for (std::string v; std::getline(ss, v, ',');) names.push_back(v);
      }
      std::vector<train::TrainConfig> cfgs;
      for (const auto& n : names) cfgs.push_back(train::run_ablation(n, base));
      bool need_retrieval = false;
      for (const auto& c : cfgs) need_retrieval = need_retrieval || c.alpha > 0;
      const auto in = load_inputs(aa, need_retrieval);
      fs::create_directories(dir);
      Manifest m("ablate", dir, resolved_options(abl));
      for (const auto& n : names) m.output(n, dir / slug(n));
      m.write();
      std::vector<eval::TableRow> rows;
      for (std::size_t i = 0; i < names.size(); ++i) {
        out << "== " << names[i] << "\n";
        auto opts = resolved_options(abl);
        opts["variant"] = names[i];
        auto outcome = train_into(dir / slug(names[i]), in, cfgs[i], "ablate", opts, out);
        eval::Summary s;
        for (const auto& sl : outcome.report.slices) s.slices.push_back({sl.name, {sl.h10, 0}, {sl.n10, 0}, {}, {}, {}, {}});
        rows.push_back({names[i], s});
      }
      const auto table = eval::format_table(rows);
      write_text_atomic(dir / "table.txt", table);
      m.finish();
      out << table;
    } else if (rep->parsed()) {
      std::vector<eval::TableRow> rows;
      std::map<std::string, std::vector<eval::MetricsReport>> by_name;
      std::vector<std::string> order;
      fs::create_directories(dir);
      Manifest m("report", dir, resolved_options(rep));
      for (const auto& s : systems) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ParameterError("--system expects NAME=path[,path...]: " + s);
        const auto name = s.substr(0, eq);
        std::stringstream ss(s.substr(eq + 1));
        for (std::string p; std::getline(ss, p, ',');) {
          const auto rp = resolve(p, "report.json");
          require(rp, "report for " + name, "eval` or `lesr train");
          m.input(name + ":" + p, rp);
          by_name[name].push_back(eval::read_report(rp));
        }
        order.push_back(name);
      }
      m.output("table.txt", dir / "table.txt");
      m.output("summary.json", dir / "summary.json");
      m.write();
      if (!baseline.empty() && !by_name.count(baseline)) throw ParameterError("baseline '" + baseline + "' is not a --system");
      json summary = json::object();
      for (const auto& name : order) {
        const auto& reps = by_name[name];
        const auto sum = baseline.empty() || name == baseline
                             ? eval::aggregate_seeds(reps)
                             : eval::aggregate_seeds(reps, by_name[baseline]);
        rows.push_back({name, sum});
        json js = json::object();
        for (const auto& sl : sum.slices) {
          json e = {{"h10_mean", sl.h10.mean}, {"h10_std", sl.h10.std}, {"n10_mean", sl.n10.mean}, {"n10_std", sl.n10.std}};
          if (sum.has_baseline) {
            e["h10_p"] = sl.h10_test.p;
            e["n10_p"] = sl.n10_test.p;
          }
          js[sl.slice] = e;
        }
        summary[name] = js;
      }
      const auto table = eval::format_table(rows);
      write_text_atomic(dir / "table.txt", table);
      write_text_atomic(dir / "summary.json", summary.dump(1) + "\n");
      m.finish();
      out << table;
    }
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "error: training diverged at batch " << e.batch_index() << ": " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const semantic::FetchError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace lesr::cli
