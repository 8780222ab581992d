#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tasd/checkpoint.hpp"
#include "tasd/config.hpp"
#include "tasd/dataset.hpp"
#include "tasd/deliberation.hpp"
#include "tasd/metrics.hpp"

namespace fs = std::filesystem;
using namespace tasd;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

// --tr on|off|first|second
void apply_tr_flag(TrConfig& tr, const std::string& flag) {
  if (flag == "off") {
    tr.enabled = false;
  } else if (flag == "on") {
    tr.enabled = true;
    tr.pass = TrPass::kBoth;
  } else {
    tr.enabled = true;
    tr.pass = parse_tr_pass(flag);
  }
}

const Dataset& pick_split(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

void log_history(std::ostream& out, const char* pass, const TrainedModel& m) {
  for (const auto& h : m.history) {
    nlohmann::ordered_json j;
    j["pass"] = pass;
    j["epoch"] = h.epoch;
    j["train_loss"] = h.train_loss;
    j["val_loss"] = h.val_loss;
    out << j.dump() << '\n';
  }
}

struct SynthArgs {
  std::string out;
  std::size_t records = 32, rows = 3, cols = 3, words = 50;
  std::uint64_t seed = 0;
  std::string schema = "open";
};

void run_synth(const SynthArgs& a) {
  const Dataset d = synth_dataset(a.records, a.rows, a.cols, a.words, a.seed, parse_schema(a.schema));
  if (a.out.empty() || a.out == "-") {
    write_dataset(std::cout, d);
  } else {
    save_dataset(a.out, d);
  }
}

struct SerializeArgs {
  std::string data;
  bool with_ids = false;
};

void run_serialize(const SerializeArgs& a) {
  LoadOptions opts;
  opts.require_targets = false;
  for (const auto& rec : load_dataset(a.data, opts)) {
    if (a.with_ids) std::cout << rec.id << '\t';
    std::cout << serialize_text(rec.table) << '\n';
  }
}

struct TrainArgs {
  std::string config, data, out, mode, tr;
  bool print_config = false;
};

void run_train(const TrainArgs& a) {
  HarnessConfig cfg = a.config.empty() ? config_from_json(nlohmann::json::object())
                                       : load_config(a.config);
  if (!a.mode.empty()) cfg.pipeline.mode = parse_mode(a.mode);
  if (!a.tr.empty()) apply_tr_flag(cfg.pipeline.tr, a.tr);
  cfg.pipeline.validate();
  if (a.print_config) {
    std::cout << config_to_json(cfg).dump(2) << '\n';
    return;
  }
  if (a.data.empty() || a.out.empty()) throw std::invalid_argument("train needs --data and --out");

  const Dataset data = load_dataset(a.data, cfg.load);
  const Splits splits = split_dataset(data, cfg.split);
  if (splits.train.empty() || splits.val.empty()) {
    throw std::invalid_argument("train: split leaves " + std::to_string(splits.train.size()) +
                                " train and " + std::to_string(splits.val.size()) +
                                " validation records; both must be nonempty");
  }
  const Vocab vocab = Vocab::build(vocab_corpus(splits.train), cfg.min_count);
  TasatgConfig model_cfg = cfg.model;
  model_cfg.vocab_size = vocab.size();
  model_cfg.cell_views = view_keys(splits.train.front().table.schema()).size();
  model_cfg.validate();

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  vocab.save((dir / "vocab.txt").string());
  write_json((dir / "config.json").string(), config_to_json(cfg));

  std::cerr << "train: " << splits.train.size() << " train / " << splits.val.size() << " val / "
            << splits.test.size() << " test records, vocab " << vocab.size() << ", mode "
            << mode_name(cfg.pipeline.mode) << '\n';
  const PipelineResult result = run_pipeline(splits.train, splits.val, vocab, cfg.pipeline, model_cfg);

  std::ofstream history(dir / "history.jsonl", std::ios::binary);
  log_history(history, "first", result.first);
  save_checkpoint(result.first.model, (dir / "first.ckpt").string(), vocab.fingerprint());
  std::cerr << "first pass: best epoch " << result.first.best_epoch << ", val loss "
            << result.first.best_val_loss << '\n';
  fs::remove(dir / "second.ckpt");
  fs::remove(dir / "drafts.jsonl");
  if (result.second) {
    log_history(history, "second", *result.second);
    save_checkpoint(result.second->model, (dir / "second.ckpt").string(), vocab.fingerprint());
    DraftSet drafts = result.train_drafts;
    drafts.insert(result.val_drafts.begin(), result.val_drafts.end());
    save_drafts((dir / "drafts.jsonl").string(), drafts, vocab);
    std::cerr << "second pass: best epoch " << result.second->best_epoch << ", val loss "
              << result.second->best_val_loss << '\n';
  }
}

struct GenerateArgs {
  std::string model_dir, data, split = "test", out, refs_out;
  std::size_t beam = 5;
  bool greedy = false;
  std::size_t max_len = 0;
};

TasatgModel load_model(const fs::path& path, const Vocab& vocab) {
  LoadedCheckpoint ck = load_checkpoint(path.string());
  if (ck.vocab_fingerprint != vocab.fingerprint()) {
    throw std::invalid_argument(path.string() + " was trained with a different vocabulary");
  }
  return std::move(ck.model);
}

void run_generate(const GenerateArgs& a) {
  const fs::path dir(a.model_dir);
  HarnessConfig cfg = load_config((dir / "config.json").string());
  const Vocab vocab = Vocab::load((dir / "vocab.txt").string());
  PipelineConfig& p = cfg.pipeline;
  p.decode.strategy = a.greedy ? DecodeStrategy::kGreedy : DecodeStrategy::kBeam;
  p.decode.beam_width = a.beam;
  if (a.max_len) p.decode.max_len = a.max_len;
  p.decode.validate();

  const TasatgModel first = load_model(dir / "first.ckpt", vocab);
  std::optional<TasatgModel> second;
  if (p.has_second_pass()) second.emplace(load_model(dir / "second.ckpt", vocab));

  LoadOptions opts = cfg.load;
  opts.require_targets = false;
  const Dataset data = load_dataset(a.data, opts);
  const Splits splits = split_dataset(data, cfg.split);
  const Dataset& records = a.split == "all" ? data : pick_split(splits, a.split);

  std::vector<std::string> hyps, refs;
  for (const auto& rec : records) {
    hyps.push_back(infer_two_pass(first, second ? &*second : nullptr, rec.table, vocab, p));
    refs.push_back(rec.target);
  }
  if (a.out.empty() || a.out == "-") {
    for (const auto& h : hyps) std::cout << h << '\n';
  } else {
    write_lines(a.out, hyps);
  }
  if (!a.refs_out.empty()) write_lines(a.refs_out, refs);
}

struct EvaluateArgs {
  std::string refs, hyps, out;
};

void run_evaluate(const EvaluateArgs& a) {
  const auto refs = read_lines(a.refs);
  const auto hyps = read_lines(a.hyps);
  if (refs.size() != hyps.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(hyps.size()) + " hypotheses vs " +
                                std::to_string(refs.size()) + " references");
  }
  const auto report = evaluate_texts(hyps, refs).to_json();
  if (!a.out.empty()) write_json(a.out, report);
  std::cout << report.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table-structure-aware two-pass table-to-text generation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic JSON-lines dataset");
  s->add_option("--out", synth.out, "Output file (stdout when omitted)");
  s->add_option("--records", synth.records)->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--rows", synth.rows)->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--cols", synth.cols)->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--words", synth.words, "Synthetic word types")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--schema", synth.schema)->capture_default_str()->check(CLI::IsMember({"open", "numeric"}));

  SerializeArgs ser;
  auto* z = app.add_subcommand("serialize", "Print the template serialization of each table");
  z->add_option("--data", ser.data, "JSON-lines table file")->required();
  z->add_flag("--ids", ser.with_ids, "Prefix each line with the record id and a tab");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the first pass and, unless wo-d, the second");
  t->add_option("--config", train.config, "JSON config file");
  t->add_option("--data", train.data, "JSON-lines dataset");
  t->add_option("--out", train.out, "Output directory");
  t->add_option("--mode", train.mode, "TASD | wo-d | wo-tas | wo-1st-tas");
  t->add_option("--tr", train.tr, "Table reconstruction loss")
      ->check(CLI::IsMember({"on", "off", "first", "second"}));
  t->add_flag("--print-config", train.print_config, "Print the effective config and exit");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate descriptions with a trained model directory");
  g->add_option("--model", gen.model_dir, "Directory written by `tasd train`")->required();
  g->add_option("--data", gen.data, "JSON-lines dataset")->required();
  g->add_option("--split", gen.split, "train | val | test | all")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  g->add_option("--beam", gen.beam, "Beam width")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_flag("--greedy", gen.greedy, "Greedy decoding instead of beam search");
  g->add_option("--max-len", gen.max_len, "Decoding step budget (config value when omitted)");
  g->add_option("--out", gen.out, "Hypotheses, one per line (stdout when omitted)");
  g->add_option("--refs-out", gen.refs_out, "Also write the matching references");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score hypotheses against references");
  e->add_option("--refs", ev.refs, "Reference file, one per line")->required();
  e->add_option("--hyps", ev.hyps, "Hypothesis file, one per line")->required();
  e->add_option("--out", ev.out, "Also write the report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) run_synth(synth);
    if (*z) run_serialize(ser);
    if (*t) run_train(train);
    if (*g) run_generate(gen);
    if (*e) run_evaluate(ev);
  } catch (const std::exception& ex) {
    std::cerr << "tasd: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
