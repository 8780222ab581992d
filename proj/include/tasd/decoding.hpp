#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tasd/model.hpp"
#include "tasd/text.hpp"

namespace tasd {

enum class DecodeStrategy { kGreedy, kBeam };

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::kBeam;
  std::size_t beam_width = 5;
  /// Decoding steps; a finished hypothesis spends its last step on <eos>.
  /// Also capped by the scorer's context.
  std::size_t max_len = 64;
  /// Final ranking divides summed log-probs by length^alpha; 0 keeps pure sums.
  double length_penalty_alpha = 0.0;

  void validate() const;
};

/// Anything that yields next-token log-probabilities for a token history.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::vector<double> next_log_probs(std::span<const TokenId> history) const = 0;
  virtual std::size_t vocab_size() const = 0;
  /// Longest history the scorer accepts.
  virtual std::size_t max_context() const { return std::numeric_limits<std::size_t>::max(); }
};

/// Wraps a trained model; the table encoding is computed once up front.
class ModelScorer : public StepScorer {
 public:
  ModelScorer(const TasatgModel& model, const TableTokens* table);

  std::vector<double> next_log_probs(std::span<const TokenId> history) const override;
  std::size_t vocab_size() const override { return model_.config().vocab_size; }
  std::size_t max_context() const override { return model_.config().max_seq_len; }

 private:
  const TasatgModel& model_;
  Tensor e2_;
};

struct DecodeResult {
  /// Generated suffix, <eos> excluded.
  std::vector<TokenId> tokens;
  /// Sum of token log-probs, including the <eos> step when finished.
  double score = 0.0;
  bool finished = false;
};

DecodeResult greedy_decode(const StepScorer& scorer, std::span<const TokenId> prefix,
                           const DecodeConfig& config);
DecodeResult beam_search(const StepScorer& scorer, std::span<const TokenId> prefix,
                         const DecodeConfig& config);
/// Dispatches on config.strategy.
DecodeResult decode(const StepScorer& scorer, std::span<const TokenId> prefix,
                    const DecodeConfig& config);

}  // namespace tasd
