#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tasd/text.hpp"

namespace tasd {

enum class Schema { kNumeric, kOpen };

std::string schema_name(Schema schema);
Schema parse_schema(const std::string& name);

/// View keys of a cell, in template order.
const std::vector<std::string>& view_keys(Schema schema);
/// Metadata keys every table of the schema carries.
const std::vector<std::string>& meta_keys(Schema schema);

struct Cell {
  /// Ordered (key, text) pairs matching view_keys(schema).
  std::vector<std::pair<std::string, std::string>> views;

  const std::string& view(const std::string& key) const;
};

class Table {
 public:
  /// Validates rectangularity, view keys and required metadata.
  Table(Schema schema, std::vector<std::vector<Cell>> rows,
        std::map<std::string, std::string> meta);

  Schema schema() const { return schema_; }
  std::size_t rows() const { return rows_.size(); }
  std::size_t cols() const { return rows_.front().size(); }
  const Cell& cell(std::size_t i, std::size_t j) const { return rows_[i][j]; }
  const std::map<std::string, std::string>& meta() const { return meta_; }
  const std::string& meta(const std::string& key) const;

 private:
  Schema schema_;
  std::vector<std::vector<Cell>> rows_;
  std::map<std::string, std::string> meta_;
};

/// Convenience builders; views are taken in schema order.
Cell make_open_cell(std::string header, std::string value);
Cell make_numeric_cell(std::string metric, std::string row_header,
                       std::string col_header, std::string value);

struct SerializedTable {
  std::string text;
  TokenSeq token_seq;
};

/// "<table_id> shows <caption>. <metric> of <row> <col> is <value>, ... ."
SerializedTable serialize_numeric(const Table& table, const Vocab& vocab);
/// "As <page_title> <section_title>, <section_text>. <header> is <value>, ... ."
SerializedTable serialize_open(const Table& table, const Vocab& vocab);
/// Dispatches on the table schema.
SerializedTable serialize(const Table& table, const Vocab& vocab);
/// Text only, no vocabulary needed.
std::string serialize_text(const Table& table);

/// Each view tokenized, truncated or <pad>-filled to view_len, concatenated in
/// schema view order. Length is view_keys(schema).size() * view_len.
TokenSeq cell_multiview_sequence(const Cell& cell, const Vocab& vocab,
                                 std::size_t view_len);

}  // namespace tasd
