#include "tasd/deliberation.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "tasd/optim.hpp"
#include "tasd/rng.hpp"

namespace tasd {

namespace {

// Keeps the second model's initialization independent of the first's.
constexpr std::uint64_t kSecondPassSeedSalt = 0x9e3779b97f4a7c15ULL;

void require_cell_views(const Dataset& data, const TasatgConfig& model_config) {
  for (const auto& rec : data) {
    const std::size_t views = view_keys(rec.table.schema()).size();
    if (views != model_config.cell_views) {
      throw std::invalid_argument("record '" + rec.id + "' has " + std::to_string(views) +
                                  " views per cell but the model expects " +
                                  std::to_string(model_config.cell_views));
    }
  }
}

}  // namespace

std::string mode_name(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kTasd: return "TASD";
    case PipelineMode::kWithoutDeliberation: return "wo-d";
    case PipelineMode::kWithoutTas: return "wo-tas";
    case PipelineMode::kWithoutFirstTas: return "wo-1st-tas";
  }
  return "TASD";
}

PipelineMode parse_mode(const std::string& name) {
  if (name == "TASD" || name == "tasd") return PipelineMode::kTasd;
  if (name == "wo-d" || name == "w/o_D") return PipelineMode::kWithoutDeliberation;
  if (name == "wo-tas" || name == "w/o_TAS") return PipelineMode::kWithoutTas;
  if (name == "wo-1st-tas" || name == "w/o_1st_TAS") return PipelineMode::kWithoutFirstTas;
  throw std::invalid_argument("unknown pipeline mode '" + name + "'");
}

bool PipelineConfig::fuse_in(PassRole role) const {
  if (mode == PipelineMode::kWithoutTas) return false;
  if (mode == PipelineMode::kWithoutFirstTas) return role == PassRole::kSecondPass;
  return true;
}

bool PipelineConfig::tr_in(PassRole role) const {
  if (!fuse_in(role)) return false;
  return role == PassRole::kFirstPass ? tr.applies_to_first() : tr.applies_to_second();
}

void PipelineConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train.lr must be >= 0");
  tr.validate();
  decode.validate();
}

PackedExample pack(const Example& ex, std::size_t max_len) {
  if (max_len < 4) throw std::invalid_argument("pack: max_len must be >= 4");
  std::size_t prefix_len = ex.prefix.size();
  std::size_t target_len = ex.target.size();
  const std::size_t overhead = 3;  // <bos>, separating <eos>, closing <eos>
  if (prefix_len + target_len + overhead > max_len) {
    const std::size_t room = max_len - overhead;
    prefix_len = room > target_len ? std::min(prefix_len, room - target_len) : 0;
    target_len = std::min(target_len, room - prefix_len);
  }
  PackedExample out;
  out.ids.push_back(kBosId);
  out.ids.insert(out.ids.end(), ex.prefix.begin(), ex.prefix.begin() + static_cast<std::ptrdiff_t>(prefix_len));
  out.ids.push_back(kEosId);
  out.loss_mask.assign(out.ids.size(), false);
  out.ids.insert(out.ids.end(), ex.target.begin(), ex.target.begin() + static_cast<std::ptrdiff_t>(target_len));
  out.ids.push_back(kEosId);
  out.loss_mask.resize(out.ids.size(), true);
  return out;
}

std::vector<TokenId> generation_prefix(const std::vector<TokenId>& text, std::size_t max_len) {
  if (max_len < 3) throw std::invalid_argument("generation_prefix: max_len must be >= 3");
  // Leave at least one slot for generated text.
  const std::size_t keep = std::min(text.size(), max_len - 3);
  std::vector<TokenId> out{kBosId};
  out.insert(out.end(), text.begin(), text.begin() + static_cast<std::ptrdiff_t>(keep));
  out.push_back(kEosId);
  return out;
}

double mean_lm_loss(const TasatgModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw std::invalid_argument("mean_lm_loss: no examples");
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : examples) {
    const PackedExample p = pack(ex, model.config().max_seq_len);
    const Tensor logits =
        model.forward_lm(p.ids, ex.table ? &*ex.table : nullptr);
    total += lm_loss(logits, p.ids, p.loss_mask).item();
  }
  return total / static_cast<double>(examples.size());
}

TrainedModel train_model(const std::vector<Example>& train, const std::vector<Example>& val,
                         bool use_tr, const PipelineConfig& config,
                         const TasatgConfig& model_config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("train: empty training split");
  if (val.empty()) throw std::invalid_argument("train: empty validation split");

  TasatgModel model(model_config);
  Adam adam(model.parameters(), config.learning_rate);
  Rng rng(config.seed);
  std::vector<PackedExample> packed;
  for (const auto& ex : train) packed.push_back(pack(ex, model_config.max_seq_len));

  TrainedModel result{model.clone(), {}, 0, 0.0};
  result.best_val_loss = mean_lm_loss(model, val);
  result.history.push_back({0, mean_lm_loss(model, train), result.best_val_loss});

  std::vector<std::size_t> order(train.size());
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double total = 0.0;
    for (std::size_t idx : order) {
      const Example& ex = train[idx];
      const PackedExample& p = packed[idx];
      adam.zero_grad();
      Tensor e2;
      if (ex.table) e2 = model.encode_table(*ex.table).e2;
      Tensor loss = lm_loss(model.forward_lm(p.ids, e2), p.ids, p.loss_mask);
      total += loss.item();
      if (use_tr && ex.table) {
        loss = combined_loss(loss, reconstruction_loss(model, e2, config.tr, rng),
                             config.tr.lambda);
      }
      loss.backward();
      adam.step();
    }
    const double train_loss = total / static_cast<double>(train.size());
    const double val_loss = mean_lm_loss(model, val);
    result.history.push_back({epoch, train_loss, val_loss});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.model.copy_values_from(model);
      stale = 0;
    } else {
      ++stale;
    }
    if (config.patience > 0 && stale >= config.patience) break;
    if (config.stop_at_train_loss > 0.0 && train_loss <= config.stop_at_train_loss) break;
  }
  return result;
}

std::vector<Example> first_pass_examples(const Dataset& data, const Vocab& vocab,
                                         std::size_t view_len, bool with_table) {
  std::vector<Example> out;
  for (const auto& rec : data) {
    Example ex;
    ex.id = rec.id;
    ex.prefix = serialize(rec.table, vocab).token_seq.ids;
    ex.target = tokenize(rec.target, vocab).ids;
    if (with_table) ex.table = encode_cells(rec.table, vocab, view_len);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> second_pass_examples(const Dataset& data, const DraftSet& drafts,
                                          const Vocab& vocab, std::size_t view_len,
                                          bool with_table) {
  std::vector<Example> out;
  for (const auto& rec : data) {
    auto it = drafts.find(rec.id);
    if (it == drafts.end()) {
      throw std::invalid_argument("second pass: no draft for record '" + rec.id + "'");
    }
    Example ex;
    ex.id = rec.id;
    ex.prefix = it->second;
    ex.target = tokenize(rec.target, vocab).ids;
    if (with_table) ex.table = encode_cells(rec.table, vocab, view_len);
    out.push_back(std::move(ex));
  }
  return out;
}

TrainedModel train_first_pass(const Dataset& train, const Dataset& val, const Vocab& vocab,
                              const PipelineConfig& config, const TasatgConfig& model_config) {
  require_cell_views(train, model_config);
  const bool fuse = config.fuse_in(PassRole::kFirstPass);
  return train_model(first_pass_examples(train, vocab, model_config.view_len, fuse),
                     first_pass_examples(val, vocab, model_config.view_len, fuse),
                     config.tr_in(PassRole::kFirstPass), config, model_config);
}

DraftSet generate_drafts(const TasatgModel& first, const Dataset& data, const Vocab& vocab,
                         const PipelineConfig& config) {
  const bool fuse = config.fuse_in(PassRole::kFirstPass);
  const std::size_t ctx = first.config().max_seq_len;
  DraftSet drafts;
  for (const auto& rec : data) {
    std::optional<TableTokens> cells;
    if (fuse) cells = encode_cells(rec.table, vocab, first.config().view_len);
    const ModelScorer scorer(first, cells ? &*cells : nullptr);
    const auto prefix = generation_prefix(serialize(rec.table, vocab).token_seq.ids, ctx);
    drafts[rec.id] = decode(scorer, prefix, config.decode).tokens;
  }
  return drafts;
}

TrainedModel train_second_pass(const DraftSet& drafts, const Dataset& train, const Dataset& val,
                               const Vocab& vocab, const PipelineConfig& config,
                               const TasatgConfig& model_config) {
  require_cell_views(train, model_config);
  const bool fuse = config.fuse_in(PassRole::kSecondPass);
  TasatgConfig second_config = model_config;
  second_config.seed ^= kSecondPassSeedSalt;
  PipelineConfig second = config;
  second.seed ^= kSecondPassSeedSalt;
  return train_model(second_pass_examples(train, drafts, vocab, model_config.view_len, fuse),
                     second_pass_examples(val, drafts, vocab, model_config.view_len, fuse),
                     config.tr_in(PassRole::kSecondPass), second, second_config);
}

std::string infer_two_pass(const TasatgModel& first, const TasatgModel* second,
                           const Table& table, const Vocab& vocab, const PipelineConfig& config) {
  if (config.has_second_pass() && !second) {
    throw std::invalid_argument("infer: mode " + mode_name(config.mode) +
                                " needs a second-pass model");
  }
  auto run = [&](const TasatgModel& model, PassRole role, const std::vector<TokenId>& text) {
    std::optional<TableTokens> cells;
    if (config.fuse_in(role)) cells = encode_cells(table, vocab, model.config().view_len);
    const ModelScorer scorer(model, cells ? &*cells : nullptr);
    return decode(scorer, generation_prefix(text, model.config().max_seq_len), config.decode)
        .tokens;
  };
  const auto draft = run(first, PassRole::kFirstPass, serialize(table, vocab).token_seq.ids);
  if (!config.has_second_pass()) return detokenize(draft, vocab);
  return detokenize(run(*second, PassRole::kSecondPass, draft), vocab);
}

PipelineResult run_pipeline(const Dataset& train, const Dataset& val, const Vocab& vocab,
                            const PipelineConfig& config, const TasatgConfig& model_config) {
  PipelineResult result{train_first_pass(train, val, vocab, config, model_config), {}, {}, {}};
  if (!config.has_second_pass()) return result;
  result.train_drafts = generate_drafts(result.first.model, train, vocab, config);
  result.val_drafts = generate_drafts(result.first.model, val, vocab, config);
  DraftSet all = result.train_drafts;
  all.insert(result.val_drafts.begin(), result.val_drafts.end());
  result.second = train_second_pass(all, train, val, vocab, config, model_config);
  return result;
}

void save_drafts(const std::string& path, const DraftSet& drafts, const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write drafts " + path);
  for (const auto& [id, tokens] : drafts) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["draft"] = detokenize(tokens, vocab);
    out << j.dump() << '\n';
  }
}

DraftSet load_drafts(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open drafts " + path);
  DraftSet drafts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      drafts[j.at("id").get<std::string>()] = tokenize(j.at("draft").get<std::string>(), vocab).ids;
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("drafts line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return drafts;
}

}  // namespace tasd
