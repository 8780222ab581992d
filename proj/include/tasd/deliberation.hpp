#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tasd/dataset.hpp"
#include "tasd/decoding.hpp"
#include "tasd/model.hpp"
#include "tasd/reconstruction.hpp"
#include "tasd/text.hpp"

namespace tasd {

enum class PassRole { kFirstPass, kSecondPass };

/// TASD: table fusion in both passes. The other modes are the ablations:
/// no second pass, no fusion anywhere, no fusion in the first pass.
enum class PipelineMode { kTasd, kWithoutDeliberation, kWithoutTas, kWithoutFirstTas };

std::string mode_name(PipelineMode mode);
/// Accepts "TASD", "wo-d", "wo-tas", "wo-1st-tas" (and the w/o_* spellings).
PipelineMode parse_mode(const std::string& name);

struct PipelineConfig {
  PipelineMode mode = PipelineMode::kTasd;
  std::size_t epochs = 20;
  double learning_rate = 3e-5;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 5;
  /// Stop once the epoch's mean training loss falls to this value; 0 disables.
  double stop_at_train_loss = 0.0;
  std::uint64_t seed = 0;
  TrConfig tr;
  /// Used for drafts and final generation.
  DecodeConfig decode;

  bool fuse_in(PassRole role) const;
  bool has_second_pass() const { return mode != PipelineMode::kWithoutDeliberation; }
  bool tr_in(PassRole role) const;
  void validate() const;
};

/// One training sequence: <bos> prefix <eos> target <eos>, loss on the target
/// segment and its closing <eos>.
struct Example {
  std::string id;
  std::vector<TokenId> prefix;
  std::vector<TokenId> target;
  std::optional<TableTokens> table;
};

struct PackedExample {
  std::vector<TokenId> ids;
  std::vector<bool> loss_mask;
};

/// Drops prefix tokens from the right (then target tokens) to fit max_len.
PackedExample pack(const Example& ex, std::size_t max_len);
/// <bos> prefix <eos>, trimmed to leave room for generation.
std::vector<TokenId> generation_prefix(const std::vector<TokenId>& text, std::size_t max_len);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainedModel {
  TasatgModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

using DraftSet = std::map<std::string, std::vector<TokenId>>;

double mean_lm_loss(const TasatgModel& model, const std::vector<Example>& examples);

/// Adam on lm_loss (+ lambda * TRLoss when `use_tr`), one example per step,
/// seeded shuffling; keeps the parameters of the best validation epoch.
TrainedModel train_model(const std::vector<Example>& train, const std::vector<Example>& val,
                         bool use_tr, const PipelineConfig& config,
                         const TasatgConfig& model_config);

std::vector<Example> first_pass_examples(const Dataset& data, const Vocab& vocab,
                                         std::size_t view_len, bool with_table);
std::vector<Example> second_pass_examples(const Dataset& data, const DraftSet& drafts,
                                          const Vocab& vocab, std::size_t view_len,
                                          bool with_table);

TrainedModel train_first_pass(const Dataset& train, const Dataset& val, const Vocab& vocab,
                              const PipelineConfig& config, const TasatgConfig& model_config);

/// Decodes each record's draft from <bos> T_S <eos>; the table is fused
/// unless the mode disables first-pass fusion.
DraftSet generate_drafts(const TasatgModel& first, const Dataset& data, const Vocab& vocab,
                         const PipelineConfig& config);

TrainedModel train_second_pass(const DraftSet& drafts, const Dataset& train, const Dataset& val,
                               const Vocab& vocab, const PipelineConfig& config,
                               const TasatgConfig& model_config);

/// Draft with the first model, then rewrite it with the second; without a
/// second model the draft is the output.
std::string infer_two_pass(const TasatgModel& first, const TasatgModel* second,
                           const Table& table, const Vocab& vocab, const PipelineConfig& config);

struct PipelineResult {
  TrainedModel first;
  std::optional<TrainedModel> second;
  DraftSet train_drafts;
  DraftSet val_drafts;
};

PipelineResult run_pipeline(const Dataset& train, const Dataset& val, const Vocab& vocab,
                            const PipelineConfig& config, const TasatgConfig& model_config);

/// JSON-lines {"id", "draft"}.
void save_drafts(const std::string& path, const DraftSet& drafts, const Vocab& vocab);
DraftSet load_drafts(const std::string& path, const Vocab& vocab);

}  // namespace tasd
