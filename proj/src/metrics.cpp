#include "tasd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace tasd {

namespace {

void check_corpus(const Corpus& candidates, const Corpus& references, const char* op) {
  if (candidates.empty()) throw std::invalid_argument(std::string(op) + ": empty corpus");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(candidates.size()) +
                                " candidates vs " + std::to_string(references.size()) +
                                " references");
  }
}

std::map<std::vector<TokenId>, std::size_t> ngram_counts(const std::vector<TokenId>& seq,
                                                         std::size_t n) {
  std::map<std::vector<TokenId>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[std::vector<TokenId>(seq.begin() + i, seq.begin() + i + n)];
  }
  return counts;
}

std::size_t lcs_length(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double meteor_pair(const std::vector<TokenId>& cand, const std::vector<TokenId>& ref) {
  constexpr double kAlpha = 0.9;
  constexpr double kBeta = 3.0;
  constexpr double kGamma = 0.5;
  // Greedy left-to-right alignment; each reference position used at most once.
  std::vector<bool> used(ref.size(), false);
  std::vector<std::ptrdiff_t> aligned(cand.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == cand[i]) {
        used[j] = true;
        aligned[i] = static_cast<std::ptrdiff_t>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  std::size_t chunks = 0;
  std::ptrdiff_t last = -2;
  bool in_chunk = false;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (aligned[i] < 0) {
      in_chunk = false;
      continue;
    }
    if (!in_chunk || aligned[i] != last + 1) ++chunks;
    in_chunk = true;
    last = aligned[i];
  }
  const double p = static_cast<double>(matches) / static_cast<double>(cand.size());
  const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
  const double f_mean = p * r / (kAlpha * p + (1.0 - kAlpha) * r);
  const double penalty =
      kGamma * std::pow(static_cast<double>(chunks) / static_cast<double>(matches), kBeta);
  return f_mean * (1.0 - penalty);
}

}  // namespace

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["bleu"] = std::vector<double>(bleu.begin(), bleu.end());
  j["rouge_l"] = rouge_l;
  j["meteor_lite"] = meteor_lite;
  j["n_pairs"] = n_pairs;
  return j;
}

std::vector<double> bleu_n(const Corpus& candidates, const Corpus& references,
                           std::size_t max_n) {
  check_corpus(candidates, references, "bleu");
  if (max_n == 0) throw std::invalid_argument("bleu: max_n must be >= 1");
  std::vector<double> clipped(max_n, 0.0), total(max_n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    cand_len += static_cast<double>(candidates[k].size());
    ref_len += static_cast<double>(references[k].size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto ref_counts = ngram_counts(references[k], n);
      for (const auto& [gram, count] : ngram_counts(candidates[k], n)) {
        auto it = ref_counts.find(gram);
        clipped[n - 1] += static_cast<double>(it == ref_counts.end() ? 0 : std::min(count, it->second));
        total[n - 1] += static_cast<double>(count);
      }
    }
  }
  const double bp = cand_len == 0.0 ? 0.0
                    : cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len)
                                         : 1.0;
  std::vector<double> scores(max_n, 0.0);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (total[n - 1] == 0.0 || clipped[n - 1] == 0.0) zero = true;
    if (!zero) log_sum += std::log(clipped[n - 1] / total[n - 1]);
    scores[n - 1] = zero ? 0.0 : 100.0 * bp * std::exp(log_sum / static_cast<double>(n));
  }
  return scores;
}

double rouge_l(const Corpus& candidates, const Corpus& references) {
  check_corpus(candidates, references, "rouge_l");
  constexpr double kBeta2 = 1.2 * 1.2;
  double total = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& c = candidates[k];
    const auto& r = references[k];
    if (c.empty() || r.empty()) continue;
    const auto l = static_cast<double>(lcs_length(c, r));
    if (l == 0.0) continue;
    const double p = l / static_cast<double>(c.size());
    const double rec = l / static_cast<double>(r.size());
    total += (1.0 + kBeta2) * p * rec / (rec + kBeta2 * p);
  }
  return 100.0 * total / static_cast<double>(candidates.size());
}

double meteor_lite(const Corpus& candidates, const Corpus& references) {
  check_corpus(candidates, references, "meteor_lite");
  double total = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    total += meteor_pair(candidates[k], references[k]);
  }
  return 100.0 * total / static_cast<double>(candidates.size());
}

MetricReport evaluate(const Corpus& candidates, const Corpus& references) {
  MetricReport report;
  const auto bleu = bleu_n(candidates, references, 4);
  std::copy(bleu.begin(), bleu.end(), report.bleu.begin());
  report.rouge_l = rouge_l(candidates, references);
  report.meteor_lite = meteor_lite(candidates, references);
  report.n_pairs = candidates.size();
  return report;
}

MetricReport evaluate_texts(const std::vector<std::string>& candidates,
                            const std::vector<std::string>& references) {
  std::vector<std::string> all = candidates;
  all.insert(all.end(), references.begin(), references.end());
  const Vocab vocab = Vocab::build(all, 1);
  Corpus c, r;
  for (const auto& s : candidates) c.push_back(tokenize(s, vocab).ids);
  for (const auto& s : references) r.push_back(tokenize(s, vocab).ids);
  return evaluate(c, r);
}

}  // namespace tasd
