#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tasd/table.hpp"

namespace tasd {

struct DatasetRecord {
  std::string id;
  Table table;
  std::string target;
};

using Dataset = std::vector<DatasetRecord>;

struct LoadOptions {
  /// Drop tables with 8 or more rows or columns.
  bool totto_filter = false;
  /// Require a nonempty target on every record.
  bool require_targets = true;
};

/// One JSON object per line:
/// {"id", "schema": "numeric"|"open", "meta": {...},
///  "rows": [[{"views": {...}}, ...], ...], "target"}
Dataset read_dataset(std::istream& in, const LoadOptions& options = {});
Dataset load_dataset(const std::string& path, const LoadOptions& options = {});
void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::string& path, const Dataset& data);

nlohmann::ordered_json record_to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const nlohmann::json& j, bool require_target = true);

/// Tables filled with synthetic words w0..w{word_count-1}; every string field
/// has a fixed word count so all serializations of one shape have equal token
/// length. The target is the table's own template serialization.
Dataset synth_dataset(std::size_t n_records, std::size_t rows, std::size_t cols,
                      std::size_t word_count, std::uint64_t seed,
                      Schema schema = Schema::kOpen);

struct SplitSpec {
  /// train:val:test proportions, used when no id lists are given.
  std::vector<double> ratios = {8.0, 1.0, 1.0};
  std::optional<std::vector<std::string>> train_ids, val_ids, test_ids;
};

struct Splits {
  Dataset train, val, test;
};

/// Ratio splits are contiguous in file order: train gets floor(n*r0/sum),
/// val floor(n*r1/sum), test the rest.
Splits split_dataset(const Dataset& data, const SplitSpec& spec);

/// Serializations and targets; every cell view appears in the serialization.
std::vector<std::string> vocab_corpus(const Dataset& data);

}  // namespace tasd
