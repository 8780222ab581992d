#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "tasd/text.hpp"

namespace tasd {

using Corpus = std::vector<std::vector<TokenId>>;

/// Corpus scores on a 0-100 scale. METEOR is the exact-match variant.
struct MetricReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double meteor_lite = 0.0;
  std::size_t n_pairs = 0;

  nlohmann::ordered_json to_json() const;
};

/// Corpus BLEU-1..max_n: clipped n-gram precisions pooled over the corpus,
/// geometric mean, brevity penalty. No smoothing.
std::vector<double> bleu_n(const Corpus& candidates, const Corpus& references,
                           std::size_t max_n = 4);

/// Mean per-pair LCS F-measure with beta = 1.2.
double rouge_l(const Corpus& candidates, const Corpus& references);

/// Mean per-pair exact-match METEOR: alpha = 0.9, beta = 3, gamma = 0.5.
double meteor_lite(const Corpus& candidates, const Corpus& references);

MetricReport evaluate(const Corpus& candidates, const Corpus& references);

/// Tokenizes both sides with the shared word tokenizer (joint vocabulary)
/// before scoring.
MetricReport evaluate_texts(const std::vector<std::string>& candidates,
                            const std::vector<std::string>& references);

}  // namespace tasd
