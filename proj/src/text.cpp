#include "tasd/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tasd {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kReserved = {"<pad>", "<bos>", "<eos>",
                                                     "<unk>"};
  return kReserved;
}

bool is_split_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '(' || c == ')';
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (is_split_punct(raw)) {
      flush();
      out.emplace_back(1, raw);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocab::Vocab() {
  for (const auto& t : reserved_tokens()) add(t);
}

void Vocab::add(std::string token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus) {
    for (auto& w : split_words(line)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (auto& [tok, n] : ranked) v.add(tok);
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kReservedCount ||
      !std::equal(reserved_tokens().begin(), reserved_tokens().end(), tokens.begin())) {
    throw std::invalid_argument("vocab: first four tokens must be <pad> <bos> <eos> <unk>");
  }
  Vocab v;
  for (std::size_t i = kReservedCount; i < tokens.size(); ++i) {
    if (tokens[i].empty() || v.contains(tokens[i])) {
      throw std::invalid_argument("vocab: empty or duplicate token at line " +
                                  std::to_string(i));
    }
    v.add(tokens[i]);
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocab: cannot open " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(tokens);
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("vocab: cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocab: id " + std::to_string(id) +
                            " outside vocabulary of " + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& t : tokens_) {
    for (char c : t) feed(static_cast<unsigned char>(c));
    feed('\n');
  }
  return h;
}

TokenSeq tokenize(std::string_view text, const Vocab& vocab) {
  TokenSeq seq;
  seq.text_origin = std::string(text);
  for (const auto& w : split_words(text)) seq.ids.push_back(vocab.id(w));
  return seq;
}

std::string detokenize(const std::vector<TokenId>& ids, const Vocab& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace tasd
