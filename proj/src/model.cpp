#include "tasd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tasd/rng.hpp"

namespace tasd {

namespace {

constexpr double kInitStd = 0.02;

Tensor normal_param(Rng& rng, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, kInitStd);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Linear make_linear(Rng& rng, std::size_t in, std::size_t out, bool bias) {
  Linear l;
  l.weight = normal_param(rng, {in, out});
  if (bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

MultiHeadAttention make_mha(Rng& rng, std::size_t d, std::size_t heads,
                            double score_scale, bool bias) {
  MultiHeadAttention mha;
  mha.query = make_linear(rng, d, d, bias);
  mha.key = make_linear(rng, d, d, bias);
  mha.value = make_linear(rng, d, d, bias);
  mha.output = make_linear(rng, d, d, bias);
  mha.heads = heads;
  mha.score_scale = score_scale;
  return mha;
}

std::vector<double> causal_mask(std::size_t l) {
  std::vector<double> mask(l * l, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = i + 1; j < l; ++j) {
      mask[i * l + j] = -std::numeric_limits<double>::infinity();
    }
  }
  return mask;
}

void append_linear(std::vector<std::pair<std::string, Tensor>>& out,
                   const std::string& prefix, const Linear& l) {
  out.emplace_back(prefix + ".weight", l.weight);
  if (l.bias.defined()) out.emplace_back(prefix + ".bias", l.bias);
}

void append_mha(std::vector<std::pair<std::string, Tensor>>& out,
                const std::string& prefix, const MultiHeadAttention& m) {
  append_linear(out, prefix + ".query", m.query);
  append_linear(out, prefix + ".key", m.key);
  append_linear(out, prefix + ".value", m.value);
  append_linear(out, prefix + ".output", m.output);
}

}  // namespace

void TasatgConfig::validate() const {
  if (d == 0 || h == 0 || n_layers == 0 || view_len == 0 || cell_views == 0 ||
      max_seq_len == 0 || vocab_size == 0 || m_max == 0 || n_max == 0) {
    throw std::invalid_argument("model config: all sizes must be positive");
  }
  if (d % h != 0) {
    throw std::invalid_argument("model config: d=" + std::to_string(d) +
                                " is not divisible by h=" + std::to_string(h));
  }
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

Tensor MultiHeadAttention::forward(const Tensor& q_in, const Tensor& kv_in,
                                   std::span<const double> mask,
                                   AttentionTrace* trace) const {
  if (q_in.dim() < 2 || kv_in.dim() != q_in.dim()) {
    throw std::invalid_argument("attention: incompatible inputs " +
                                shape_str(q_in.shape()) + " and " +
                                shape_str(kv_in.shape()));
  }
  const std::size_t rank = q_in.dim();
  const std::size_t d = q_in.shape().back();
  if (kv_in.shape().back() != d || d != query.weight.shape()[0]) {
    throw std::invalid_argument("attention: width mismatch " +
                                shape_str(q_in.shape()) + " / " +
                                shape_str(kv_in.shape()) + " for d=" +
                                std::to_string(query.weight.shape()[0]));
  }
  const Shape lead(q_in.shape().begin(), q_in.shape().end() - 2);
  if (!std::equal(lead.begin(), lead.end(), kv_in.shape().begin())) {
    throw std::invalid_argument("attention: batch mismatch " +
                                shape_str(q_in.shape()) + " / " +
                                shape_str(kv_in.shape()));
  }
  const std::size_t batch = shape_numel(lead);
  const std::size_t lq = q_in.shape()[rank - 2];
  const std::size_t lk = kv_in.shape()[rank - 2];
  const std::size_t dh = d / heads;

  auto split_heads = [&](const Tensor& x, std::size_t len) {
    return permute(reshape(x, {batch, len, heads, dh}), {0, 2, 1, 3});
  };
  const Tensor q = split_heads(query.forward(q_in), lq);
  const Tensor k = split_heads(key.forward(kv_in), lk);
  const Tensor v = split_heads(value.forward(kv_in), lk);

  const Tensor scores = scale(matmul(q, transpose(k, 2, 3)), score_scale);
  const Tensor probs = softmax_lastdim(scores, mask);
  if (trace) {
    trace->shape = probs.shape();
    trace->probs.assign(probs.values().begin(), probs.values().end());
  }
  Shape merged = lead;
  merged.push_back(lq);
  merged.push_back(d);
  const Tensor context = reshape(permute(matmul(probs, v), {0, 2, 1, 3}), merged);
  return output.forward(context);
}

TableTokens encode_cells(const Table& table, const Vocab& vocab, std::size_t view_len) {
  TableTokens out;
  out.m = table.rows();
  out.n = table.cols();
  out.s = view_keys(table.schema()).size() * view_len;
  out.ids.reserve(out.m * out.n * out.s);
  for (std::size_t i = 0; i < out.m; ++i) {
    for (std::size_t j = 0; j < out.n; ++j) {
      const auto seq = cell_multiview_sequence(table.cell(i, j), vocab, view_len);
      out.ids.insert(out.ids.end(), seq.ids.begin(), seq.ids.end());
    }
  }
  return out;
}

TasatgModel::TasatgModel(const TasatgConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d;
  Rng rng(config_.seed);
  token_embedding = normal_param(rng, {config_.vocab_size, d});
  pos_embedding = normal_param(rng, {config_.max_seq_len, d});
  const double backbone_scale = 1.0 / std::sqrt(static_cast<double>(d / config_.h));
  for (std::size_t b = 0; b < config_.n_layers; ++b) {
    BackboneBlock block;
    block.ln1_gamma = Tensor::full({d}, 1.0, true);
    block.ln1_beta = Tensor::zeros({d}, true);
    block.attention = make_mha(rng, d, config_.h, backbone_scale, true);
    block.ln2_gamma = Tensor::full({d}, 1.0, true);
    block.ln2_beta = Tensor::zeros({d}, true);
    block.fc1 = make_linear(rng, d, 4 * d, true);
    block.fc2 = make_linear(rng, 4 * d, d, true);
    blocks.push_back(std::move(block));
  }
  lnf_gamma = Tensor::full({d}, 1.0, true);
  lnf_beta = Tensor::zeros({d}, true);

  // Table layers score with 1/sqrt(d) and carry no biases.
  const double table_scale = 1.0 / std::sqrt(static_cast<double>(d));
  ctpe = normal_param(rng, {config_.cell_len(), d});
  tpe_row = normal_param(rng, {config_.m_max, d});
  tpe_col = normal_param(rng, {config_.n_max, d});
  mha1 = make_mha(rng, d, config_.h, table_scale, false);
  mha2 = make_mha(rng, d, config_.h, table_scale, false);
  mha3 = make_mha(rng, d, config_.h, table_scale, false);
  // Fusion starts as an exact no-op.
  mha3.output.weight = Tensor::zeros({d, d}, true);

  lm_head = normal_param(rng, {d, config_.vocab_size});
  tr_fc1 = make_linear(rng, d, config_.reconstruction_hidden(), true);
  tr_fc2 = make_linear(rng, config_.reconstruction_hidden(), d, true);
}

std::vector<std::pair<std::string, Tensor>> TasatgModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("token_embedding", token_embedding);
  out.emplace_back("pos_embedding", pos_embedding);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string p = "blocks." + std::to_string(b);
    const auto& blk = blocks[b];
    out.emplace_back(p + ".ln1.gamma", blk.ln1_gamma);
    out.emplace_back(p + ".ln1.beta", blk.ln1_beta);
    append_mha(out, p + ".attention", blk.attention);
    out.emplace_back(p + ".ln2.gamma", blk.ln2_gamma);
    out.emplace_back(p + ".ln2.beta", blk.ln2_beta);
    append_linear(out, p + ".fc1", blk.fc1);
    append_linear(out, p + ".fc2", blk.fc2);
  }
  out.emplace_back("lnf.gamma", lnf_gamma);
  out.emplace_back("lnf.beta", lnf_beta);
  out.emplace_back("ctpe", ctpe);
  out.emplace_back("tpe_row", tpe_row);
  out.emplace_back("tpe_col", tpe_col);
  append_mha(out, "mha1", mha1);
  append_mha(out, "mha2", mha2);
  append_mha(out, "mha3", mha3);
  out.emplace_back("lm_head", lm_head);
  append_linear(out, "tr.fc1", tr_fc1);
  append_linear(out, "tr.fc2", tr_fc2);
  return out;
}

std::vector<Tensor> TasatgModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void TasatgModel::copy_values_from(const TasatgModel& other) {
  auto dst = named_parameters();
  auto src = other.named_parameters();
  if (dst.size() != src.size()) {
    throw std::invalid_argument("copy_values_from: parameter count mismatch");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].second.shape() != src[i].second.shape()) {
      throw std::invalid_argument("copy_values_from: shape mismatch at " + dst[i].first);
    }
    auto out = dst[i].second.mutable_values();
    auto in = src[i].second.values();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

TasatgModel TasatgModel::clone() const {
  TasatgModel copy(config_);
  copy.copy_values_from(*this);
  return copy;
}

Tensor TasatgModel::embed_table(const TableTokens& cells) const {
  if (cells.m > config_.m_max || cells.n > config_.n_max) {
    throw std::invalid_argument("embed_table: " + std::to_string(cells.m) + "x" +
                                std::to_string(cells.n) + " table exceeds " +
                                std::to_string(config_.m_max) + "x" +
                                std::to_string(config_.n_max));
  }
  if (cells.s != config_.cell_len()) {
    throw std::invalid_argument("embed_table: cell length " + std::to_string(cells.s) +
                                " does not match model cell length " +
                                std::to_string(config_.cell_len()));
  }
  return reshape(embedding(token_embedding, cells.ids),
                 {cells.m, cells.n, cells.s, config_.d});
}

Tensor TasatgModel::cell_self_attention(const Tensor& e0, AttentionTrace* trace) const {
  if (e0.dim() != 4 || e0.shape()[2] != ctpe.shape()[0] || e0.shape()[3] != config_.d) {
    throw std::invalid_argument("cell_self_attention: e0 " + shape_str(e0.shape()) +
                                " does not match ctpe " + shape_str(ctpe.shape()));
  }
  const Tensor x = add(e0, ctpe);
  return mean(mha1.forward(x, x, {}, trace), 2);
}

Tensor TasatgModel::table_self_attention(const Tensor& e1, AttentionTrace* trace) const {
  if (e1.dim() != 3 || e1.shape()[2] != config_.d) {
    throw std::invalid_argument("table_self_attention: e1 must be [m,n," +
                                std::to_string(config_.d) + "], got " +
                                shape_str(e1.shape()));
  }
  const std::size_t m = e1.shape()[0];
  const std::size_t n = e1.shape()[1];
  if (m > config_.m_max || n > config_.n_max) {
    throw std::invalid_argument("table_self_attention: " + std::to_string(m) + "x" +
                                std::to_string(n) + " table exceeds positional tables");
  }
  std::vector<int> row_ids, col_ids;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      row_ids.push_back(static_cast<int>(i));
      col_ids.push_back(static_cast<int>(j));
    }
  }
  Tensor x = reshape(e1, {m * n, config_.d});
  x = add(add(x, embedding(tpe_row, row_ids)), embedding(tpe_col, col_ids));
  return reshape(mha2.forward(x, x, {}, trace), {m, n, config_.d});
}

TableEncoding TasatgModel::encode_table(const TableTokens& cells, ForwardTrace* trace) const {
  TableEncoding enc;
  enc.e0 = embed_table(cells);
  AttentionTrace* cell_trace = nullptr;
  AttentionTrace* structure_trace = nullptr;
  if (trace) {
    cell_trace = &trace->cell.emplace();
    structure_trace = &trace->structure.emplace();
  }
  enc.e1 = cell_self_attention(enc.e0, cell_trace);
  enc.e2 = table_self_attention(enc.e1, structure_trace);
  return enc;
}

Tensor TasatgModel::backbone_hidden(std::span<const TokenId> ids, ForwardTrace* trace) const {
  const std::size_t l = ids.size();
  if (l == 0) throw std::invalid_argument("forward: empty token sequence");
  if (l > config_.max_seq_len) {
    throw std::invalid_argument("forward: sequence of " + std::to_string(l) +
                                " tokens exceeds max_seq_len " +
                                std::to_string(config_.max_seq_len));
  }
  std::vector<int> positions(l);
  for (std::size_t i = 0; i < l; ++i) positions[i] = static_cast<int>(i);
  Tensor x = add(embedding(token_embedding, ids), embedding(pos_embedding, positions));
  const auto mask = causal_mask(l);
  if (trace) trace->backbone.clear();
  for (const auto& blk : blocks) {
    AttentionTrace* at = nullptr;
    if (trace) at = &trace->backbone.emplace_back();
    const Tensor a = layer_norm(x, blk.ln1_gamma, blk.ln1_beta);
    x = add(x, blk.attention.forward(a, a, mask, at));
    const Tensor f = layer_norm(x, blk.ln2_gamma, blk.ln2_beta);
    x = add(x, blk.fc2.forward(gelu(blk.fc1.forward(f))));
  }
  return layer_norm(x, lnf_gamma, lnf_beta);
}

Tensor TasatgModel::fuse_hidden(const Tensor& hidden, const Tensor& e2,
                                AttentionTrace* trace) const {
  if (hidden.dim() != 2 || hidden.shape()[1] != config_.d) {
    throw std::invalid_argument("fuse_hidden: hidden " + shape_str(hidden.shape()) +
                                " does not have width d=" + std::to_string(config_.d));
  }
  if (e2.dim() != 3 || e2.shape()[2] != config_.d) {
    throw std::invalid_argument("fuse_hidden: e2 " + shape_str(e2.shape()) +
                                " does not have width d=" + std::to_string(config_.d));
  }
  const Tensor cells = reshape(e2, {e2.shape()[0] * e2.shape()[1], config_.d});
  return add(mha3.forward(hidden, cells, {}, trace), hidden);
}

Tensor TasatgModel::forward_lm(std::span<const TokenId> ids, const Tensor& e2,
                               ForwardTrace* trace) const {
  Tensor hidden = backbone_hidden(ids, trace);
  if (e2.defined()) {
    AttentionTrace* ft = trace ? &trace->fusion.emplace() : nullptr;
    hidden = fuse_hidden(hidden, e2, ft);
  }
  return matmul(hidden, lm_head);
}

Tensor TasatgModel::forward_lm(std::span<const TokenId> ids, const TableTokens* table,
                               ForwardTrace* trace) const {
  if (!table) return forward_lm(ids, Tensor(), trace);
  const TableEncoding enc = encode_table(*table, trace);
  return forward_lm(ids, enc.e2, trace);
}

Tensor lm_loss(const Tensor& logits, std::span<const TokenId> ids,
               const std::vector<bool>& loss_mask) {
  const std::size_t l = ids.size();
  if (loss_mask.size() != l || logits.dim() != 2 || logits.shape()[0] != l) {
    throw std::invalid_argument("lm_loss: mask/logits do not match " +
                                std::to_string(l) + " tokens");
  }
  std::vector<int> targets(l, 0);
  std::vector<bool> valid(l, false);
  for (std::size_t t = 0; t + 1 < l; ++t) {
    targets[t] = ids[t + 1];
    valid[t] = loss_mask[t + 1];
  }
  if (std::find(valid.begin(), valid.end(), true) == valid.end()) {
    throw std::invalid_argument("lm_loss: loss mask selects no predicted position");
  }
  return cross_entropy(logits, targets, valid);
}

}  // namespace tasd
