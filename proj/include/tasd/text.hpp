#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tasd {

using TokenId = int;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr std::size_t kReservedCount = 4;

struct TokenSeq {
  std::vector<TokenId> ids;
  std::optional<std::string> text_origin;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

/// Lowercased word pieces: whitespace separated, with . , ; : ( ) split off
/// as standalone tokens.
std::vector<std::string> split_words(std::string_view text);

class Vocab {
 public:
  /// Reserved tokens only.
  Vocab();

  /// Tokens with count >= min_count, ordered by (count desc, token asc).
  static Vocab build(const std::vector<std::string>& corpus, std::size_t min_count);
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  /// kUnkId when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the persisted text form; used to tie checkpoints to a vocab.
  std::uint64_t fingerprint() const;

 private:
  void add(std::string token);

  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::string> tokens_;
};

TokenSeq tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(const std::vector<TokenId>& ids, const Vocab& vocab);

}  // namespace tasd
