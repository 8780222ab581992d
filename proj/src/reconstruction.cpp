#include "tasd/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tasd {

namespace {

Tensor cell_mask_tensor(const std::vector<bool>& mask, const Shape& shape) {
  const std::size_t d = shape.back();
  std::vector<double> v(mask.size() * d);
  for (std::size_t c = 0; c < mask.size(); ++c) {
    std::fill_n(v.begin() + c * d, d, mask[c] ? 1.0 : 0.0);
  }
  return Tensor::from(shape, std::move(v));
}

void require_cells(const Tensor& e2, const char* op) {
  if (e2.dim() != 3) {
    throw std::invalid_argument(std::string(op) + ": expected [m,n,d], got " +
                                shape_str(e2.shape()));
  }
}

}  // namespace

std::string tr_pass_name(TrPass pass) {
  switch (pass) {
    case TrPass::kBoth: return "both";
    case TrPass::kFirst: return "first";
    case TrPass::kSecond: return "second";
  }
  return "both";
}

TrPass parse_tr_pass(const std::string& name) {
  if (name == "both") return TrPass::kBoth;
  if (name == "first") return TrPass::kFirst;
  if (name == "second") return TrPass::kSecond;
  throw std::invalid_argument("unknown tr.pass '" + name + "'");
}

void TrConfig::validate() const {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw std::invalid_argument("tr.rho must lie in [0, 1), got " + std::to_string(rho));
  }
  if (!(lambda >= 0.0)) {
    throw std::invalid_argument("tr.lambda must be >= 0, got " + std::to_string(lambda));
  }
}

MaskedTable mask_cells(const Tensor& e2, double rho, Rng& rng) {
  require_cells(e2, "mask_cells");
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw std::invalid_argument("mask_cells: rho must lie in [0, 1)");
  }
  const std::size_t cells = e2.shape()[0] * e2.shape()[1];
  // The epsilon keeps products like 0.25*4 from rounding up past an integer.
  const auto count = static_cast<std::size_t>(
      std::ceil(rho * static_cast<double>(cells) - 1e-9));
  if (count >= cells) {
    throw std::invalid_argument("mask_cells: rho=" + std::to_string(rho) + " masks all " +
                                std::to_string(cells) + " cells");
  }
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = 0; k < count; ++k) {
    std::swap(order[k], order[k + rng.below(cells - k)]);
  }
  MaskedTable out;
  out.mask.assign(cells, false);
  for (std::size_t k = 0; k < count; ++k) out.mask[order[k]] = true;
  out.count = count;
  if (count == 0) {
    out.masked = e2;
    return out;
  }
  std::vector<bool> keep(cells);
  for (std::size_t c = 0; c < cells; ++c) keep[c] = !out.mask[c];
  out.masked = mul(e2, cell_mask_tensor(keep, e2.shape()));
  return out;
}

Tensor reconstruct(const Tensor& e2_masked, const Linear& fc1, const Linear& fc2,
                   bool linear_only) {
  require_cells(e2_masked, "reconstruct");
  const std::size_t d = e2_masked.shape()[2];
  if (fc1.weight.shape()[0] != d || fc2.weight.shape()[1] != d ||
      fc1.weight.shape()[1] != fc2.weight.shape()[0]) {
    throw std::invalid_argument("reconstruct: MLP widths " + shape_str(fc1.weight.shape()) +
                                " -> " + shape_str(fc2.weight.shape()) +
                                " do not fit d=" + std::to_string(d));
  }
  const Tensor hidden = fc1.forward(e2_masked);
  return fc2.forward(linear_only ? hidden : gelu(hidden));
}

Tensor tr_loss(const Tensor& e2_hat, const Tensor& e2_clean,
               const std::vector<bool>& mask, bool full_table) {
  if (e2_hat.shape() != e2_clean.shape()) {
    throw std::invalid_argument("tr_loss: shape mismatch " + shape_str(e2_hat.shape()) +
                                " vs " + shape_str(e2_clean.shape()));
  }
  if (full_table) return mse(e2_hat, e2_clean);
  require_cells(e2_hat, "tr_loss");
  const std::size_t cells = e2_hat.shape()[0] * e2_hat.shape()[1];
  if (mask.size() != cells) {
    throw std::invalid_argument("tr_loss: mask has " + std::to_string(mask.size()) +
                                " entries for " + std::to_string(cells) + " cells");
  }
  const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (count == 0) return Tensor::scalar(0.0);
  const Tensor diff = sub(e2_hat, e2_clean);
  const Tensor weighted = mul(mul(diff, diff), cell_mask_tensor(mask, e2_hat.shape()));
  return scale(sum(weighted), 1.0 / static_cast<double>(count * e2_hat.shape()[2]));
}

Tensor combined_loss(const Tensor& lm, const Tensor& tr, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("combined_loss: lambda must be >= 0");
  if (lambda == 0.0) return lm;
  return add(lm, scale(tr, lambda));
}

Tensor reconstruction_loss(const TasatgModel& model, const Tensor& e2,
                           const TrConfig& config, Rng& rng) {
  const MaskedTable masked = mask_cells(e2, config.rho, rng);
  const Tensor restored = reconstruct(masked.masked, model.tr_fc1, model.tr_fc2);
  return tr_loss(restored, e2.detach(), masked.mask, config.full_table);
}

}  // namespace tasd
