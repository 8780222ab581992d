#pragma once

#include <string>

#include <json.hpp>

#include "tasd/dataset.hpp"
#include "tasd/deliberation.hpp"
#include "tasd/model.hpp"

namespace tasd {

/// Everything `tasd train` needs besides the data file.
///
/// JSON layout (all keys optional, defaults shown by `tasd train --print-config`):
///   model  {d, h, n_layers, view_len, max_seq_len, M_max, N_max, tr_hidden}
///   train  {lr, epochs, patience, seed, mode, stop_at_train_loss}
///   tr     {enabled, rho, lambda, pass, full_table}
///   decode {strategy, beam_width, max_len, length_penalty_alpha}
///   split  {ratios: [8,1,1]} or {train_ids, val_ids, test_ids}
///   data   {min_count, totto_filter}
struct HarnessConfig {
  TasatgConfig model;
  PipelineConfig pipeline;
  SplitSpec split;
  std::size_t min_count = 1;
  LoadOptions load;
};

HarnessConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const HarnessConfig& config);
HarnessConfig load_config(const std::string& path);

nlohmann::ordered_json model_config_to_json(const TasatgConfig& config);
TasatgConfig model_config_from_json(const nlohmann::json& j);

}  // namespace tasd
