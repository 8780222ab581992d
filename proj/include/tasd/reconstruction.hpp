#pragma once

#include <vector>

#include "tasd/model.hpp"
#include "tasd/rng.hpp"
#include "tasd/tensor.hpp"

namespace tasd {

/// Which deliberation pass carries the reconstruction loss.
enum class TrPass { kBoth, kFirst, kSecond };

std::string tr_pass_name(TrPass pass);
TrPass parse_tr_pass(const std::string& name);

struct TrConfig {
  bool enabled = false;
  double rho = 0.15;
  double lambda = 1e-2;
  TrPass pass = TrPass::kBoth;
  /// Score every cell instead of only the masked ones.
  bool full_table = false;

  void validate() const;
  bool applies_to_first() const { return enabled && pass != TrPass::kSecond; }
  bool applies_to_second() const { return enabled && pass != TrPass::kFirst; }
};

struct MaskedTable {
  Tensor masked;           // [m, n, d], chosen cells zeroed
  std::vector<bool> mask;  // m*n row-major, true where zeroed
  std::size_t count = 0;
};

/// Zeroes ceil(rho*m*n) distinct cells of e2 chosen uniformly with `rng`.
MaskedTable mask_cells(const Tensor& e2, double rho, Rng& rng);

/// Per-cell two-layer MLP: fc2(gelu(fc1(x))). `linear_only` drops the
/// nonlinearity.
Tensor reconstruct(const Tensor& e2_masked, const Linear& fc1, const Linear& fc2,
                   bool linear_only = false);

/// Mean squared error over the d components of masked cells; zero when no
/// cell is masked.
Tensor tr_loss(const Tensor& e2_hat, const Tensor& e2_clean,
               const std::vector<bool>& mask, bool full_table = false);

/// lm + lambda * tr.
Tensor combined_loss(const Tensor& lm, const Tensor& tr, double lambda);

/// Masks, restores and scores one table encoding with the model's MLP. The
/// target is detached from the graph.
Tensor reconstruction_loss(const TasatgModel& model, const Tensor& e2,
                           const TrConfig& config, Rng& rng);

}  // namespace tasd
