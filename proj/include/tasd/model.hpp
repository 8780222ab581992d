#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tasd/table.hpp"
#include "tasd/tensor.hpp"
#include "tasd/text.hpp"

namespace tasd {

struct TasatgConfig {
  std::size_t d = 64;
  std::size_t h = 4;
  std::size_t n_layers = 2;
  std::size_t view_len = 4;
  /// Views per cell: 2 for the open schema, 4 for the numeric schema.
  std::size_t cell_views = 2;
  std::size_t max_seq_len = 128;
  std::size_t vocab_size = 0;
  std::size_t m_max = 8;
  std::size_t n_max = 8;
  /// Hidden width of the reconstruction MLP; 0 means d.
  std::size_t tr_hidden = 0;
  std::uint64_t seed = 0;

  /// Tokens per cell (s).
  std::size_t cell_len() const { return cell_views * view_len; }
  std::size_t reconstruction_hidden() const { return tr_hidden ? tr_hidden : d; }
  void validate() const;
  bool operator==(const TasatgConfig&) const = default;
};

/// Attention probabilities captured during a forward pass, shaped
/// [batch, heads, queries, keys].
struct AttentionTrace {
  Shape shape;
  std::vector<double> probs;
};

struct ForwardTrace {
  std::vector<AttentionTrace> backbone;
  std::optional<AttentionTrace> cell;
  std::optional<AttentionTrace> structure;
  /// Per generated position: weights over the m*n cells, per head.
  std::optional<AttentionTrace> fusion;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]; undefined when the layer has no bias

  Tensor forward(const Tensor& x) const;
};

/// Multi-head attention over inputs shaped [..., L, d]. W^Q/W^K/W^V are
/// stored as [d, d] with head i owning columns [i*d/h, (i+1)*d/h).
struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;
  double score_scale = 1.0;

  Tensor forward(const Tensor& q_in, const Tensor& kv_in,
                 std::span<const double> mask = {},
                 AttentionTrace* trace = nullptr) const;
};

struct BackboneBlock {
  Tensor ln1_gamma, ln1_beta;
  MultiHeadAttention attention;
  Tensor ln2_gamma, ln2_beta;
  Linear fc1, fc2;
};

/// Cell token ids of a table, [m, n, s] row-major.
struct TableTokens {
  std::size_t m = 0, n = 0, s = 0;
  std::vector<TokenId> ids;
};

TableTokens encode_cells(const Table& table, const Vocab& vocab, std::size_t view_len);

struct TableEncoding {
  Tensor e0;  // [m, n, s, d]
  Tensor e1;  // [m, n, d]
  Tensor e2;  // [m, n, d]
};

class TasatgModel {
 public:
  explicit TasatgModel(const TasatgConfig& config);

  const TasatgConfig& config() const { return config_; }

  /// Every trainable tensor, in a fixed order with stable names.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  /// Deep copy with independent storage.
  TasatgModel clone() const;
  void copy_values_from(const TasatgModel& other);

  Tensor embed_table(const TableTokens& cells) const;
  Tensor cell_self_attention(const Tensor& e0, AttentionTrace* trace = nullptr) const;
  Tensor table_self_attention(const Tensor& e1, AttentionTrace* trace = nullptr) const;
  TableEncoding encode_table(const TableTokens& cells, ForwardTrace* trace = nullptr) const;

  /// Final-block hidden states after the closing layer norm, [l, d].
  Tensor backbone_hidden(std::span<const TokenId> ids, ForwardTrace* trace = nullptr) const;
  /// MHA(hid, E2, E2) + hid.
  Tensor fuse_hidden(const Tensor& hidden, const Tensor& e2,
                     AttentionTrace* trace = nullptr) const;
  /// Logits [l, vocab]. With `e2` undefined the fusion step is skipped.
  Tensor forward_lm(std::span<const TokenId> ids, const Tensor& e2,
                    ForwardTrace* trace = nullptr) const;
  Tensor forward_lm(std::span<const TokenId> ids, const TableTokens* table,
                    ForwardTrace* trace = nullptr) const;

  // Parameters are public so tests can pin them to closed-form values.
  Tensor token_embedding;  // [V, d]
  Tensor pos_embedding;    // [max_seq_len, d]
  std::vector<BackboneBlock> blocks;
  Tensor lnf_gamma, lnf_beta;
  Tensor ctpe;     // [s, d]
  Tensor tpe_row;  // [m_max, d]
  Tensor tpe_col;  // [n_max, d]
  MultiHeadAttention mha1, mha2, mha3;
  Tensor lm_head;  // [d, V]
  Linear tr_fc1, tr_fc2;

 private:
  TasatgConfig config_;
};

/// Mean next-token cross-entropy: logits[t] scored against ids[t+1] wherever
/// loss_mask[t+1] is set.
Tensor lm_loss(const Tensor& logits, std::span<const TokenId> ids,
               const std::vector<bool>& loss_mask);

}  // namespace tasd
