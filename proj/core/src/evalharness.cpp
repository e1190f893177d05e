#include "reverso/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace reverso {

using json = nlohmann::ordered_json;

namespace {

// Stream tags hanging off an experiment seed.
enum : std::uint64_t {
  kStreamDataset = 100,
  kStreamInit = 201,
  kStreamTrain = 202,
  kStreamStream = 203,
};

#if defined(__GNUC__)
extern "C" void openblas_set_num_threads(int) __attribute__((weak));
#endif

void pin_blas_threads() {
#if defined(__GNUC__)
  if (openblas_set_num_threads) openblas_set_num_threads(1);
#endif
}

std::string join_words(const std::vector<std::string>& words,
                       std::size_t limit) {
  std::string out;
  const std::size_t n = std::min(words.size(), limit);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

bool exact_match_entity(const std::vector<TokenId>& prediction,
                        const std::vector<TokenId>& target) {
  if (target.empty())
    throw std::invalid_argument("exact_match_entity: empty target");
  if (prediction.size() < target.size()) return false;
  return std::equal(target.begin(), target.end(), prediction.begin());
}

bool containment_at_64(const std::string& prediction_text,
                       const std::string& target_text) {
  const std::string pred = join_words(word_split(prediction_text), 64);
  const std::string tgt =
      join_words(word_split(target_text), std::string::npos);
  if (tgt.empty()) return true;
  return pred.find(tgt) != std::string::npos;
}

bool best_at_n(const std::vector<std::string>& samples,
               const std::string& target_text) {
  for (const std::string& s : samples)
    if (containment_at_64(s, target_text)) return true;
  return false;
}

std::string Method::label() const {
  if (kind == TransformKind::none) return "standard";
  std::string l(to_string(kind));
  if (kind == TransformKind::rand) l += " k=" + std::to_string(k);
  return l;
}

const CellResult* EvalReport::find(const Method& m, int entity_len) const {
  for (const CellResult& c : cells)
    if (c.cell.method.kind == m.kind && c.cell.method.k == m.k &&
        c.cell.entity_len == entity_len)
      return &c;
  return nullptr;
}

EpochSource make_epoch_source(const std::vector<Document>* train_docs,
                              const Vocab* vocab, StreamConfig base) {
  return [train_docs, vocab, base](int epoch) {
    StreamConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(epoch);
    ExampleStream stream(train_docs, vocab, cfg);
    std::vector<std::vector<TokenId>> rows;
    while (auto ex = stream.next()) {
      std::vector<TokenId> row;
      row.reserve(ex->ids.ids.size() + 2);
      row.push_back(Vocab::kBos);
      row.insert(row.end(), ex->ids.ids.begin(), ex->ids.ids.end());
      row.push_back(Vocab::kEos);
      rows.push_back(std::move(row));
    }
    return rows;
  };
}

double evaluate_exact_match(const Model& m, const Vocab& vocab,
                            const std::vector<TestItem>& items,
                            int batch_size) {
  if (items.empty())
    throw std::invalid_argument("evaluate_exact_match: no test items");
  long hits = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    const std::size_t end =
        std::min(items.size(), i + static_cast<std::size_t>(batch_size));
    // Group rows of one prompt length per decode batch.
    std::vector<std::vector<TokenId>> prompts;
    std::vector<std::vector<TokenId>> targets;
    std::size_t j = i;
    const std::size_t first_len =
        word_split(items[i].prompt).size();
    int max_target = 0;
    for (; j < end; ++j) {
      const std::vector<std::string> pw = word_split(items[j].prompt);
      if (pw.size() != first_len) break;
      std::vector<TokenId> prompt;
      prompt.reserve(pw.size() + 1);
      prompt.push_back(Vocab::kBos);
      for (const std::string& w : pw) prompt.push_back(vocab.id_of(w));
      prompts.push_back(std::move(prompt));
      targets.push_back(encode(word_split(items[j].target), vocab).ids);
      max_target =
          std::max(max_target, static_cast<int>(targets.back().size()));
    }
    const auto decoded = generate_greedy_batch(m, prompts, max_target);
    for (std::size_t r = 0; r < decoded.size(); ++r) {
      const std::size_t plen = prompts[r].size();
      std::vector<TokenId> continuation(decoded[r].begin() +
                                            static_cast<std::ptrdiff_t>(plen),
                                        decoded[r].end());
      if (exact_match_entity(continuation, targets[r])) ++hits;
    }
    i = j;
  }
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(items.size());
}

double run_symbolic_cell(const ExperimentCell& cell,
                         const ExperimentConfig& cfg, std::uint64_t seed,
                         double* final_loss, std::ostream* log) {
  SymbolicConfig scfg;
  scfg.entity_len = cell.entity_len;
  scfg.words_per_position = cfg.words_per_position;
  scfg.n_pairs = cfg.n_pairs;
  scfg.seed = Rng::derive(seed, kStreamDataset);
  const SymbolicDataset ds = make_dataset(scfg);

  VocabBuilder vb;
  for (const Document& doc : ds.train) vb.add(word_split(doc.text));
  const Vocab vocab = vb.finish();

  StreamConfig stream;
  if (cell.method.kind == TransformKind::none) {
    stream.transform = TransformSpec::none();
    stream.mix = 0.0;
  } else {
    stream.transform = {cell.method.kind, cell.method.k, true};
    stream.mix = 0.5;
  }
  stream.shuffle_buffer = cfg.shuffle_buffer;
  stream.seed = Rng::derive(seed, kStreamStream);

  ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  mcfg.validate();

  TrainConfig tcfg = cfg.train;
  tcfg.seed = Rng::derive(seed, kStreamTrain);

  Model model = lm_init<float>(mcfg, Rng::derive(seed, kStreamInit));
  const TrainResult tr =
      lm_train(model, make_epoch_source(&ds.train, &vocab, stream), tcfg, log);
  if (final_loss) *final_loss = tr.epoch_mean_loss.back();
  return evaluate_exact_match(model, vocab, ds.test);
}

EvalReport run_symbolic_experiment(
    const ExperimentConfig& cfg,
    const std::function<void(const std::string&)>& progress) {
  if (cfg.cells.empty())
    throw std::invalid_argument("run_symbolic_experiment: no cells");
  if (cfg.seeds.empty())
    throw std::invalid_argument("run_symbolic_experiment: no seeds");

  EvalReport report;
  report.seeds = cfg.seeds;
  report.cells.resize(cfg.cells.size());
  for (std::size_t c = 0; c < cfg.cells.size(); ++c) {
    report.cells[c].cell = cfg.cells[c];
    report.cells[c].per_seed_accuracy.assign(cfg.seeds.size(), 0.0);
    report.cells[c].final_epoch_loss.assign(cfg.seeds.size(), 0.0);
  }

  struct Task {
    std::size_t cell;
    std::size_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cfg.cells.size(); ++c)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
      tasks.push_back({c, s});

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  const int jobs = std::max(1, cfg.jobs);
  if (jobs > 1) pin_blas_threads();

  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const Task task = tasks[t];
      CellResult& result = report.cells[task.cell];
      const std::uint64_t seed = cfg.seeds[task.seed];
      try {
        double loss = 0.0;
        const double acc =
            run_symbolic_cell(result.cell, cfg, seed, &loss, nullptr);
        {
          std::lock_guard<std::mutex> lock(mu);
          result.per_seed_accuracy[task.seed] = acc;
          result.final_epoch_loss[task.seed] = loss;
          if (progress) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "%-12s len=%d seed=%llu  acc=%.1f%%  loss=%.4f",
                          result.cell.method.label().c_str(),
                          result.cell.entity_len,
                          static_cast<unsigned long long>(seed), acc, loss);
            progress(buf);
          }
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        result.failed = true;
        if (!result.error.empty()) result.error += "; ";
        result.error += "seed " + std::to_string(seed) + ": " + e.what();
        if (progress)
          progress(result.cell.method.label() + " len=" +
                   std::to_string(result.cell.entity_len) + " seed=" +
                   std::to_string(seed) + " FAILED: " + e.what());
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (CellResult& c : report.cells) {
    double sum = 0;
    for (double a : c.per_seed_accuracy) sum += a;
    c.mean_accuracy =
        sum / static_cast<double>(c.per_seed_accuracy.size());
  }
  return report;
}

std::string EvalReport::to_json() const {
  json j;
  j["metric"] = metric;
  j["seeds"] = seeds;
  j["cells"] = json::array();
  for (const CellResult& c : cells) {
    json jc;
    jc["method"] = std::string(to_string(c.cell.method.kind));
    jc["k"] = c.cell.method.k;
    jc["entity_len"] = c.cell.entity_len;
    jc["per_seed_accuracy"] = c.per_seed_accuracy;
    jc["mean_accuracy"] = c.mean_accuracy;
    jc["final_epoch_loss"] = c.final_epoch_loss;
    jc["failed"] = c.failed;
    jc["error"] = c.error;
    j["cells"].push_back(std::move(jc));
  }
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport report;
  report.metric = j.at("metric").get<std::string>();
  report.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const json& jc : j.at("cells")) {
    CellResult c;
    c.cell.method.kind =
        transform_kind_from_string(jc.at("method").get<std::string>());
    c.cell.method.k = jc.at("k").get<int>();
    c.cell.entity_len = jc.at("entity_len").get<int>();
    c.per_seed_accuracy = jc.at("per_seed_accuracy").get<std::vector<double>>();
    c.mean_accuracy = jc.at("mean_accuracy").get<double>();
    c.final_epoch_loss = jc.at("final_epoch_loss").get<std::vector<double>>();
    c.failed = jc.at("failed").get<bool>();
    c.error = jc.at("error").get<std::string>();
    report.cells.push_back(std::move(c));
  }
  return report;
}

std::string EvalReport::render_table(
    const std::vector<std::pair<ExperimentCell, double>>* reference) const {
  // Method rows in first-appearance order; entity lengths as columns.
  std::vector<Method> methods;
  std::vector<int> lens;
  for (const CellResult& c : cells) {
    bool seen = false;
    for (const Method& m : methods)
      seen |= m.kind == c.cell.method.kind && m.k == c.cell.method.k;
    if (!seen) methods.push_back(c.cell.method);
    if (std::find(lens.begin(), lens.end(), c.cell.entity_len) == lens.end())
      lens.push_back(c.cell.entity_len);
  }
  std::sort(lens.begin(), lens.end());

  auto ref_for = [&](const Method& m, int len) -> const double* {
    if (!reference) return nullptr;
    for (const auto& [cell, acc] : *reference)
      if (cell.method.kind == m.kind && cell.method.k == m.k &&
          cell.entity_len == len)
        return &acc;
    return nullptr;
  };

  std::ostringstream out;
  out << "Test accuracy (%) on the symbolic reverse task, metric " << metric
      << ", mean over " << seeds.size() << " seeds";
  if (reference)
    out << "\n(values in parentheses: paper full-scale reference)";
  out << "\n\n";
  const int col = reference ? 18 : 12;
  out << "  " << std::left;
  out.width(26);
  out << "training method";
  for (int len : lens) {
    std::string h = std::to_string(len) + (len == 1 ? " word" : " words");
    out << std::right;
    out.width(col);
    out << h;
  }
  out << "\n";
  for (const Method& m : methods) {
    std::string label = m.kind == TransformKind::none
                            ? "standard"
                            : "reverse (" + m.label() + ")";
    out << "  " << std::left;
    out.width(26);
    out << label;
    for (int len : lens) {
      const CellResult* c = find(m, len);
      const double* ref = ref_for(m, len);
      std::string text;
      char buf[48];
      if (!c) {
        text = "-";
      } else if (c->failed) {
        text = "FAILED";
      } else {
        std::snprintf(buf, sizeof(buf), "%.1f", c->mean_accuracy);
        text = buf;
      }
      if (ref && c) {
        std::snprintf(buf, sizeof(buf), " (%.1f)", *ref);
        text += buf;
      }
      out << std::right;
      out.width(col);
      out << text;
    }
    out << "\n";
  }
  return out.str();
}

namespace {

void add_cell(ExperimentConfig& cfg, TransformKind kind, int k,
              int entity_len) {
  cfg.cells.push_back({{kind, k}, entity_len});
}

void add_reference(ExperimentConfig& cfg) {
  struct Ref {
    TransformKind kind;
    int k;
    double acc[3];  // entity lengths 2, 3, 5
  };
  static const Ref refs[] = {
      {TransformKind::none, 0, {0.0, 0.0, 0.0}},
      {TransformKind::word, 0, {95.8, 16.9, 2.0}},
      {TransformKind::entity, 0, {100.0, 100.0, 100.0}},
      {TransformKind::rand, 2, {100.0, 98.4, 22.7}},
      {TransformKind::rand, 3, {100.0, 100.0, 79.2}},
      {TransformKind::rand, 5, {100.0, 100.0, 100.0}},
  };
  static const int lens[3] = {2, 3, 5};
  for (const Ref& r : refs)
    for (int i = 0; i < 3; ++i)
      cfg.reference.push_back({{{r.kind, r.k}, lens[i]}, r.acc[i]});
}

}  // namespace

ExperimentConfig desk_profile() {
  ExperimentConfig cfg;
  cfg.n_pairs = 2000;
  cfg.words_per_position = 100;
  cfg.seeds = {1, 2, 3};
  cfg.model.n_layers = 4;
  cfg.model.dim = 256;
  cfg.model.n_heads = 4;
  cfg.model.max_seq = 64;
  cfg.model.dropout = 0.1;
  cfg.train.epochs = 60;
  cfg.train.batch_size = 128;
  cfg.train.learning_rate = 1e-3;
  cfg.train.warmup_steps = 100;
  // The acceptance-relevant subset of the 6x3 matrix.
  add_cell(cfg, TransformKind::none, 0, 2);
  add_cell(cfg, TransformKind::none, 0, 3);
  add_cell(cfg, TransformKind::none, 0, 5);
  add_cell(cfg, TransformKind::word, 0, 2);
  add_cell(cfg, TransformKind::word, 0, 5);
  add_cell(cfg, TransformKind::entity, 0, 2);
  add_cell(cfg, TransformKind::entity, 0, 3);
  add_cell(cfg, TransformKind::entity, 0, 5);
  add_cell(cfg, TransformKind::rand, 2, 5);
  add_cell(cfg, TransformKind::rand, 5, 5);
  add_reference(cfg);
  return cfg;
}

ExperimentConfig full_profile() {
  ExperimentConfig cfg;
  cfg.n_pairs = 10000;
  cfg.words_per_position = 100;
  cfg.seeds = {1, 2, 3};
  cfg.model.n_layers = 8;
  cfg.model.dim = 512;
  cfg.model.n_heads = 8;
  cfg.model.max_seq = 64;
  cfg.model.dropout = 0.1;
  cfg.train.epochs = 500;
  cfg.train.batch_size = 1024;
  cfg.train.learning_rate = 3e-4;
  cfg.train.warmup_steps = 0;
  static const int lens[3] = {2, 3, 5};
  for (int len : lens) add_cell(cfg, TransformKind::none, 0, len);
  for (int len : lens) add_cell(cfg, TransformKind::word, 0, len);
  for (int len : lens) add_cell(cfg, TransformKind::entity, 0, len);
  for (int k : {2, 3, 5})
    for (int len : lens) add_cell(cfg, TransformKind::rand, k, len);
  add_reference(cfg);
  return cfg;
}

}  // namespace reverso
