#include "tasd/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tasd {

void DecodeConfig::validate() const {
  if (beam_width == 0) throw std::invalid_argument("decode: beam_width must be >= 1");
  if (max_len == 0) throw std::invalid_argument("decode: max_len must be >= 1");
}

ModelScorer::ModelScorer(const TasatgModel& model, const TableTokens* table)
    : model_(model) {
  if (table) {
    NoGradGuard no_grad;
    e2_ = model_.encode_table(*table).e2;
  }
}

std::vector<double> ModelScorer::next_log_probs(std::span<const TokenId> history) const {
  NoGradGuard no_grad;
  const Tensor logits = model_.forward_lm(history, e2_);
  const std::size_t vocab = logits.shape()[1];
  auto last = logits.values().subspan((history.size() - 1) * vocab, vocab);
  const double mx = *std::max_element(last.begin(), last.end());
  double total = 0.0;
  for (double v : last) total += std::exp(v - mx);
  const double log_z = mx + std::log(total);
  std::vector<double> out(vocab);
  for (std::size_t i = 0; i < vocab; ++i) out[i] = last[i] - log_z;
  return out;
}

namespace {

std::size_t step_budget(const StepScorer& scorer, std::size_t prefix_len,
                        const DecodeConfig& config) {
  const std::size_t ctx = scorer.max_context();
  if (prefix_len >= ctx) {
    throw std::invalid_argument("decode: prefix of " + std::to_string(prefix_len) +
                                " tokens leaves no room in a context of " +
                                std::to_string(ctx));
  }
  return std::min(config.max_len, ctx - prefix_len);
}

struct Hypothesis {
  std::vector<TokenId> tokens;  // includes <eos> when finished
  double score = 0.0;
  bool finished = false;
};

// Higher score first; ties resolved by lexicographically smaller token ids.
bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

double final_score(const Hypothesis& h, double alpha) {
  if (alpha == 0.0) return h.score;
  const double len = static_cast<double>(std::max<std::size_t>(h.tokens.size(), 1));
  return h.score / std::pow(len, alpha);
}

}  // namespace

DecodeResult greedy_decode(const StepScorer& scorer, std::span<const TokenId> prefix,
                           const DecodeConfig& config) {
  config.validate();
  const std::size_t budget = step_budget(scorer, prefix.size(), config);
  std::vector<TokenId> history(prefix.begin(), prefix.end());
  DecodeResult result;
  while (result.tokens.size() < budget) {
    const auto lp = scorer.next_log_probs(history);
    // max_element returns the first maximum, i.e. the lowest id on ties.
    const auto best = std::max_element(lp.begin(), lp.end());
    const auto tok = static_cast<TokenId>(best - lp.begin());
    result.score += *best;
    if (tok == kEosId) {
      result.finished = true;
      break;
    }
    result.tokens.push_back(tok);
    history.push_back(tok);
  }
  return result;
}

DecodeResult beam_search(const StepScorer& scorer, std::span<const TokenId> prefix,
                         const DecodeConfig& config) {
  config.validate();
  const std::size_t budget = step_budget(scorer, prefix.size(), config);
  const double alpha = config.length_penalty_alpha;
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;
  bool exhausted_budget = true;
  std::vector<TokenId> history(prefix.begin(), prefix.end());

  for (std::size_t step = 0; step < budget; ++step) {
    std::vector<Hypothesis> candidates;
    for (const auto& h : live) {
      history.resize(prefix.size());
      history.insert(history.end(), h.tokens.begin(), h.tokens.end());
      const auto lp = scorer.next_log_probs(history);
      for (std::size_t tok = 0; tok < lp.size(); ++tok) {
        Hypothesis next = h;
        next.tokens.push_back(static_cast<TokenId>(tok));
        next.score += lp[tok];
        next.finished = tok == static_cast<std::size_t>(kEosId);
        candidates.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min(config.beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), ranks_before);
    live.clear();
    for (std::size_t k = 0; k < keep; ++k) {
      (candidates[k].finished ? finished : live).push_back(std::move(candidates[k]));
    }
    if (live.empty()) {
      exhausted_budget = false;
      break;
    }
    // Extensions only lower a pure log-prob sum, so a finished hypothesis at
    // least as good as every live one settles the search.
    if (alpha == 0.0 && !finished.empty()) {
      const auto best_finished = std::min_element(finished.begin(), finished.end(), ranks_before);
      if (best_finished->score >= live.front().score) {
        exhausted_budget = false;
        break;
      }
    }
  }

  std::vector<Hypothesis> pool = finished;
  if (exhausted_budget) pool.insert(pool.end(), live.begin(), live.end());
  const auto best = std::min_element(pool.begin(), pool.end(),
                                     [alpha](const Hypothesis& a, const Hypothesis& b) {
                                       const double sa = final_score(a, alpha);
                                       const double sb = final_score(b, alpha);
                                       if (sa != sb) return sa > sb;
                                       return a.tokens < b.tokens;
                                     });
  DecodeResult result;
  result.tokens = best->tokens;
  result.score = best->score;
  result.finished = best->finished;
  if (result.finished) result.tokens.pop_back();
  return result;
}

DecodeResult decode(const StepScorer& scorer, std::span<const TokenId> prefix,
                    const DecodeConfig& config) {
  return config.strategy == DecodeStrategy::kGreedy ? greedy_decode(scorer, prefix, config)
                                                     : beam_search(scorer, prefix, config);
}

}  // namespace tasd
