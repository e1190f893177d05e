// reverso: reversal-training data pipeline, symbolic-task trainer, and
// evaluation harness. See README.md for the file formats and a tour of the
// subcommands.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reverso/corpus.hpp"
#include "reverso/evalharness.hpp"
#include "reverso/lm.hpp"
#include "reverso/manifest.hpp"
#include "reverso/reversal.hpp"
#include "reverso/symbolic.hpp"
#include "reverso/textseg.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace reverso;

namespace {

std::string quote_command_line(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) out += ' ';
    out += argv[i];
  }
  return out;
}

// Flat "key = value" config files; '#' starts a comment.
std::map<std::string, std::string> read_kv_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::runtime_error(path.string() + ":" +
                                 std::to_string(line_no) +
                                 ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": empty key");
    kv[key] = value;
  }
  return kv;
}

void apply_model_config(const std::map<std::string, std::string>& kv,
                        ModelConfig& cfg) {
  for (const auto& [k, v] : kv) {
    if (k == "n_layers") cfg.n_layers = std::stoi(v);
    else if (k == "dim") cfg.dim = std::stoi(v);
    else if (k == "n_heads") cfg.n_heads = std::stoi(v);
    else if (k == "max_seq") cfg.max_seq = std::stoi(v);
    else if (k == "dropout") cfg.dropout = std::stod(v);
    else throw std::runtime_error("unknown model config key \"" + k + "\"");
  }
}

void apply_train_config(const std::map<std::string, std::string>& kv,
                        TrainConfig& cfg) {
  for (const auto& [k, v] : kv) {
    if (k == "epochs") cfg.epochs = std::stoi(v);
    else if (k == "batch_size") cfg.batch_size = std::stoi(v);
    else if (k == "learning_rate") cfg.learning_rate = std::stod(v);
    else if (k == "seed") cfg.seed = std::stoull(v);
    else if (k == "beta1") cfg.beta1 = std::stod(v);
    else if (k == "beta2") cfg.beta2 = std::stod(v);
    else if (k == "adam_eps") cfg.adam_eps = std::stod(v);
    else if (k == "weight_decay") cfg.weight_decay = std::stod(v);
    else if (k == "warmup_steps") cfg.warmup_steps = std::stoi(v);
    else throw std::runtime_error("unknown train config key \"" + k + "\"");
  }
}

struct TransformArgs {
  std::string in, out, kind = "none", gazetteer, vocab_out;
  int k = 0;
  double mix = 0.5;
  std::uint64_t seed = 0;
};

int cmd_transform(const TransformArgs& args,
                  const std::string& command_line) {
  std::vector<Document> docs = read_jsonl(args.in);
  if (!args.gazetteer.empty()) {
    const Gazetteer gaz = Gazetteer::load(args.gazetteer);
    for (Document& doc : docs) doc = annotate(std::move(doc), gaz);
  }
  const TransformKind kind = transform_kind_from_string(args.kind);

  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.seeds = {args.seed};
  manifest.config = {{"kind", args.kind},
                     {"k", std::to_string(args.k)},
                     {"mix", std::to_string(args.mix)}};
  manifest.add_input(args.in);
  if (!args.gazetteer.empty()) manifest.add_input(args.gazetteer);

  std::ofstream out(args.out, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + args.out);

  if (kind == TransformKind::none) {
    // Byte-identical passthrough of the text fields.
    for (const Document& doc : docs) out << document_to_json(doc) << '\n';
  } else {
    VocabBuilder vb;
    for (const Document& doc : docs) vb.add(word_split(doc.text));
    const Vocab vocab = vb.finish();
    StreamConfig cfg;
    cfg.transform = {kind, args.k, true};
    cfg.transform.validate();
    cfg.mix = args.mix;
    cfg.seed = args.seed;
    ExampleStream stream(&docs, &vocab, cfg);
    while (auto ex = stream.next()) {
      json j;
      j["id"] = ex->source_id;
      j["direction"] = std::string(to_string(ex->direction));
      j["transform"] = {{"kind", std::string(to_string(ex->transform.kind))},
                        {"k", ex->transform.k}};
      j["text"] = decode(ex->ids);
      out << j.dump() << '\n';
    }
    if (!args.vocab_out.empty()) {
      vocab.save(args.vocab_out);
      manifest.add_output(args.vocab_out);
    }
  }
  out.close();
  manifest.add_output(args.out);
  manifest.write(args.out + ".manifest.json");
  return 0;
}

struct GenSymbolicArgs {
  std::string out_dir;
  int entity_len = 2;
  int pairs = 2000;
  int words_per_position = 100;
  std::uint64_t seed = 0;
};

int cmd_gen_symbolic(const GenSymbolicArgs& args,
                     const std::string& command_line) {
  SymbolicConfig cfg;
  cfg.entity_len = args.entity_len;
  cfg.n_pairs = args.pairs;
  cfg.words_per_position = args.words_per_position;
  cfg.seed = args.seed;
  cfg.validate();
  const SymbolicDataset ds = make_dataset(cfg);

  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);
  write_jsonl(ds.train, dir / "train.jsonl");
  write_jsonl(test_documents(ds), dir / "test.jsonl");
  VocabBuilder vb;
  for (const Document& doc : ds.train) vb.add(word_split(doc.text));
  const Vocab vocab = vb.finish();
  vocab.save(dir / "vocab.txt");

  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.seeds = {args.seed};
  manifest.config = {
      {"entity_len", std::to_string(args.entity_len)},
      {"pairs", std::to_string(args.pairs)},
      {"words_per_position", std::to_string(args.words_per_position)},
      {"train_lines", std::to_string(ds.train.size())},
      {"test_lines", std::to_string(ds.test.size())}};
  manifest.add_output(dir / "train.jsonl");
  manifest.add_output(dir / "test.jsonl");
  manifest.add_output(dir / "vocab.txt");
  manifest.write(dir / "manifest.json");

  std::cout << "wrote " << ds.train.size() << " train lines, "
            << ds.test.size() << " test items to " << args.out_dir << "\n";
  return 0;
}

struct TrainArgs {
  std::string data_dir, out, model_cfg_path, train_cfg_path, resume;
  std::string transform = "none";
  int k = 0;
  double mix = 0.5;
  bool quiet = false;
  // CLI overrides; negative/zero sentinels mean "not set".
  int epochs = -1, batch_size = -1, warmup = -1;
  double lr = -1.0, dropout = -1.0, weight_decay = -1.0;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& args, const std::string& command_line) {
  const fs::path dir(args.data_dir);
  if (!fs::exists(dir / "train.jsonl"))
    throw std::runtime_error("missing " + (dir / "train.jsonl").string());
  const std::vector<Document> train_docs = read_jsonl(dir / "train.jsonl");
  const Vocab vocab = fs::exists(dir / "vocab.txt")
                          ? Vocab::load(dir / "vocab.txt")
                          : [&] {
                              VocabBuilder vb;
                              for (const Document& d : train_docs)
                                vb.add(word_split(d.text));
                              return vb.finish();
                            }();

  ModelConfig mcfg;
  mcfg.vocab_size = vocab.size();
  if (!args.model_cfg_path.empty())
    apply_model_config(read_kv_config(args.model_cfg_path), mcfg);
  if (args.dropout >= 0) mcfg.dropout = args.dropout;

  TrainConfig tcfg;
  tcfg.epochs = 60;
  if (!args.train_cfg_path.empty())
    apply_train_config(read_kv_config(args.train_cfg_path), tcfg);
  if (args.epochs > 0) tcfg.epochs = args.epochs;
  if (args.batch_size > 0) tcfg.batch_size = args.batch_size;
  if (args.lr >= 0) tcfg.learning_rate = args.lr;
  if (args.warmup >= 0) tcfg.warmup_steps = args.warmup;
  if (args.weight_decay >= 0) tcfg.weight_decay = args.weight_decay;
  tcfg.seed = Rng::derive(args.seed, 202);

  StreamConfig stream;
  const TransformKind kind = transform_kind_from_string(args.transform);
  if (kind == TransformKind::none) {
    stream.transform = TransformSpec::none();
    stream.mix = 0.0;
  } else {
    stream.transform = {kind, args.k, true};
    stream.transform.validate();
    stream.mix = args.mix;
  }
  stream.seed = Rng::derive(args.seed, 203);

  Model model;
  if (!args.resume.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(args.resume);
    if (loaded.model.cfg.vocab_size != vocab.size())
      throw std::runtime_error("resume checkpoint vocab size mismatch");
    model = std::move(loaded.model);
  } else {
    mcfg.validate();
    model = lm_init<float>(mcfg, Rng::derive(args.seed, 201));
  }

  const TrainResult result =
      lm_train(model, make_epoch_source(&train_docs, &vocab, stream), tcfg,
               args.quiet ? nullptr : &std::cerr);

  save_checkpoint(model, args.out, &tcfg);
  const std::string loss_csv = args.out + ".loss.csv";
  {
    std::ofstream csv(loss_csv, std::ios::binary);
    csv << "epoch,mean_loss\n";
    for (std::size_t i = 0; i < result.epoch_mean_loss.size(); ++i)
      csv << i + 1 << "," << result.epoch_mean_loss[i] << "\n";
  }

  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.seeds = {args.seed};
  manifest.config = {{"transform", args.transform},
                     {"k", std::to_string(args.k)},
                     {"mix", std::to_string(stream.mix)},
                     {"epochs", std::to_string(tcfg.epochs)},
                     {"batch_size", std::to_string(tcfg.batch_size)},
                     {"learning_rate", std::to_string(tcfg.learning_rate)},
                     {"n_layers", std::to_string(model.cfg.n_layers)},
                     {"dim", std::to_string(model.cfg.dim)},
                     {"n_heads", std::to_string(model.cfg.n_heads)},
                     {"steps", std::to_string(model.step)}};
  manifest.add_input(dir / "train.jsonl");
  manifest.add_output(args.out);
  manifest.add_output(loss_csv);
  manifest.write(args.out + ".manifest.json");

  std::cout << "final loss " << result.epoch_mean_loss.back() << " after "
            << model.step << " steps; checkpoint at " << args.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, test_path, vocab_path, metric = "exact", out;
  int n = 5;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  int max_new = 64;
};

int cmd_eval(const EvalArgs& args, const std::string& command_line) {
  const LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
  const Vocab vocab = Vocab::load(args.vocab_path);
  if (vocab.size() != loaded.model.cfg.vocab_size)
    throw std::runtime_error("vocab size does not match checkpoint");
  const std::vector<Document> test_docs = read_jsonl(args.test_path);
  if (test_docs.empty()) throw std::runtime_error("empty test set");
  std::vector<TestItem> items;
  items.reserve(test_docs.size());
  for (const Document& doc : test_docs)
    items.push_back(test_item_from_document(doc));

  long hits = 0;
  if (args.metric == "exact") {
    const double acc = evaluate_exact_match(loaded.model, vocab, items);
    hits = std::lround(acc / 100.0 * static_cast<double>(items.size()));
  } else if (args.metric == "contain64" || args.metric == "best") {
    const int n_samples = args.metric == "best" ? args.n : 1;
    for (const TestItem& item : items) {
      std::vector<TokenId> prompt;
      prompt.push_back(Vocab::kBos);
      for (const std::string& w : word_split(item.prompt))
        prompt.push_back(vocab.id_of(w));
      std::vector<std::string> texts;
      if (args.metric == "contain64") {
        const auto row =
            generate_greedy(loaded.model, prompt, args.max_new);
        TokenSeq cont{{row.begin() + static_cast<std::ptrdiff_t>(prompt.size()),
                       row.end()},
                      &vocab};
        texts.push_back(decode(cont));
      } else {
        const auto rows =
            lm_sample(loaded.model, prompt, args.temperature, n_samples,
                      Rng::derive(args.seed, fnv1a64(item.prompt.data(),
                                                     item.prompt.size())),
                      args.max_new);
        for (const auto& row : rows) {
          TokenSeq cont{
              {row.begin() + static_cast<std::ptrdiff_t>(prompt.size()),
               row.end()},
              &vocab};
          texts.push_back(decode(cont));
        }
      }
      if (best_at_n(texts, item.target)) ++hits;
    }
  } else {
    throw std::invalid_argument("unknown metric \"" + args.metric +
                                "\" (expected exact, contain64, or best)");
  }

  const double accuracy =
      100.0 * static_cast<double>(hits) / static_cast<double>(items.size());
  json j;
  j["metric"] = args.metric;
  if (args.metric == "best") {
    j["n"] = args.n;
    j["temperature"] = args.temperature;
  }
  j["items"] = items.size();
  j["hits"] = hits;
  j["accuracy"] = accuracy;
  const std::string report = j.dump(2) + "\n";
  std::cout << report;
  if (!args.out.empty()) {
    std::ofstream out(args.out, std::ios::binary);
    out << report;
    RunManifest manifest;
    manifest.command_line = command_line;
    manifest.seeds = {args.seed};
    manifest.add_input(args.checkpoint);
    manifest.add_input(args.test_path);
    manifest.add_output(args.out);
    manifest.write(args.out + ".manifest.json");
  }
  return 0;
}

struct Table3Args {
  std::string scale = "desk", out_dir = "table3", cells = "default";
  std::uint64_t seed = 1;
  int jobs = 0;  // 0: use REVERSO_JOBS or 1
  int n_seeds = 3;
  int epochs = -1;
  int pairs = -1;
  bool quiet = false;
};

int cmd_reproduce_table3(const Table3Args& args,
                         const std::string& command_line) {
  ExperimentConfig cfg;
  if (args.scale == "desk") {
    cfg = desk_profile();
  } else if (args.scale == "full") {
    cfg = full_profile();
  } else {
    throw std::invalid_argument("unknown scale \"" + args.scale +
                                "\" (expected desk or full)");
  }
  if (args.cells == "all") {
    const ExperimentConfig full = full_profile();
    cfg.cells = full.cells;
  } else if (args.cells != "default") {
    throw std::invalid_argument("unknown cell set \"" + args.cells +
                                "\" (expected default or all)");
  }
  cfg.seeds.clear();
  for (int i = 0; i < args.n_seeds; ++i)
    cfg.seeds.push_back(args.seed + static_cast<std::uint64_t>(i));
  if (args.epochs > 0) cfg.train.epochs = args.epochs;
  if (args.pairs > 0) cfg.n_pairs = args.pairs;

  int jobs = args.jobs;
  if (jobs <= 0) {
    if (const char* env = std::getenv("REVERSO_JOBS")) jobs = std::atoi(env);
    if (jobs <= 0) jobs = 1;
  }
  cfg.jobs = jobs;

  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);

  const EvalReport report = run_symbolic_experiment(
      cfg, args.quiet ? std::function<void(const std::string&)>{}
                      : [](const std::string& line) {
                          std::cerr << line << "\n";
                        });

  const std::string table = report.render_table(&cfg.reference);
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    out << report.to_json();
  }
  {
    std::ofstream out(dir / "table.txt", std::ios::binary);
    out << table;
  }
  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.seeds = cfg.seeds;
  manifest.config = {
      {"scale", args.scale},
      {"cells", std::to_string(cfg.cells.size())},
      {"n_pairs", std::to_string(cfg.n_pairs)},
      {"epochs", std::to_string(cfg.train.epochs)},
      {"batch_size", std::to_string(cfg.train.batch_size)},
      {"learning_rate", std::to_string(cfg.train.learning_rate)},
      {"model", std::to_string(cfg.model.n_layers) + "L-" +
                    std::to_string(cfg.model.dim) + "d-" +
                    std::to_string(cfg.model.n_heads) + "h"},
      {"jobs", std::to_string(cfg.jobs)}};
  manifest.add_output(dir / "report.json");
  manifest.add_output(dir / "table.txt");
  manifest.write(dir / "manifest.json");

  std::cout << table;
  bool any_failed = false;
  for (const CellResult& c : report.cells) any_failed |= c.failed;
  if (any_failed) {
    std::cerr << "warning: some cells failed; see report.json\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reversal-training toolkit"};
  app.require_subcommand(1);
  const std::string command_line = quote_command_line(argc, argv);

  TransformArgs t;
  CLI::App* transform = app.add_subcommand(
      "transform", "Apply a reversal transform to a JSONL corpus");
  transform->add_option("--in", t.in, "input JSONL")->required();
  transform->add_option("--out", t.out, "output JSONL")->required();
  transform->add_option("--kind", t.kind,
                        "none|token|word|entity|rand (default none)");
  transform->add_option("--k", t.k, "max segment length for --kind rand");
  transform->add_option("--mix", t.mix,
                        "fraction of reversed samples (default 0.5)");
  transform->add_option("--gazetteer", t.gazetteer,
                        "surface forms for entity annotation, one per line");
  transform->add_option("--vocab-out", t.vocab_out, "save the vocabulary");
  transform->add_option("--seed", t.seed, "random seed (default 0)");

  GenSymbolicArgs g;
  CLI::App* gen = app.add_subcommand("gen-symbolic",
                                     "Generate the symbolic reverse task");
  gen->add_option("--out", g.out_dir, "output directory")->required();
  gen->add_option("--entity-len", g.entity_len, "words per entity (default 2)");
  gen->add_option("--pairs", g.pairs, "number of entity pairs (default 2000)");
  gen->add_option("--words-per-position", g.words_per_position,
                  "code words per entity position (default 100)");
  gen->add_option("--seed", g.seed, "random seed (default 0)");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "Train the small LM");
  train->add_option("--data", tr.data_dir,
                    "directory with train.jsonl (+ vocab.txt)")
      ->required();
  train->add_option("--out", tr.out, "checkpoint path")->required();
  train->add_option("--model-cfg", tr.model_cfg_path,
                    "flat key=value model config");
  train->add_option("--train-cfg", tr.train_cfg_path,
                    "flat key=value train config");
  train->add_option("--transform", tr.transform,
                    "reversal kind for the training stream (default none)");
  train->add_option("--k", tr.k, "max segment length for rand");
  train->add_option("--mix", tr.mix, "reversed fraction (default 0.5)");
  train->add_option("--epochs", tr.epochs, "override epochs");
  train->add_option("--batch-size", tr.batch_size, "override batch size");
  train->add_option("--lr", tr.lr, "override learning rate");
  train->add_option("--warmup", tr.warmup, "override warmup steps");
  train->add_option("--weight-decay", tr.weight_decay, "override weight decay");
  train->add_option("--dropout", tr.dropout, "override dropout");
  train->add_option("--resume", tr.resume, "resume from checkpoint");
  train->add_option("--seed", tr.seed, "random seed (default 0)");
  train->add_flag("--quiet", tr.quiet, "suppress per-epoch logging");

  EvalArgs e;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", e.checkpoint, "model checkpoint")
      ->required();
  eval->add_option("--test", e.test_path, "test JSONL (prompt/target)")
      ->required();
  eval->add_option("--vocab", e.vocab_path, "vocabulary file")->required();
  eval->add_option("--metric", e.metric, "exact|contain64|best (default exact)");
  eval->add_option("--n", e.n, "samples for best@N (default 5)");
  eval->add_option("--temperature", e.temperature,
                   "sampling temperature (default 1.0)");
  eval->add_option("--max-new", e.max_new,
                   "generation budget for contain64/best (default 64)");
  eval->add_option("--out", e.out, "write the JSON report here");
  eval->add_option("--seed", e.seed, "random seed (default 0)");

  Table3Args t3;
  CLI::App* table3 = app.add_subcommand(
      "reproduce-table3", "Run the symbolic experiment matrix");
  table3->add_option("--scale", t3.scale, "desk|full (default desk)");
  table3->add_option("--out", t3.out_dir,
                     "output directory (default table3)");
  table3->add_option("--seed", t3.seed, "base seed (default 1)");
  table3->add_option("--n-seeds", t3.n_seeds, "seeds per cell (default 3)");
  table3->add_option("--jobs", t3.jobs,
                     "parallel cells (default REVERSO_JOBS or 1)");
  table3->add_option("--cells", t3.cells,
                     "default (acceptance subset) or all (full 6x3 matrix)");
  table3->add_option("--epochs", t3.epochs, "override training epochs");
  table3->add_option("--pairs", t3.pairs, "override n_pairs");
  table3->add_flag("--quiet", t3.quiet, "suppress per-cell progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);  // 0 for --help, 1+ otherwise
  }

  try {
    if (transform->parsed()) return cmd_transform(t, command_line);
    if (gen->parsed()) return cmd_gen_symbolic(g, command_line);
    if (train->parsed()) return cmd_train(tr, command_line);
    if (eval->parsed()) return cmd_eval(e, command_line);
    if (table3->parsed()) return cmd_reproduce_table3(t3, command_line);
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::runtime_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 2;
  }
  return 2;
}
