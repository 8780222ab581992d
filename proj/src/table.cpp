#include "tasd/table.hpp"

#include <stdexcept>

namespace tasd {

namespace {

// Collapses runs of spaces and trims both ends.
std::string squeeze_spaces(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// Cell clauses joined by ", " with a terminal period.
std::string finish(std::string head, const std::vector<std::string>& clauses) {
  for (std::size_t k = 0; k < clauses.size(); ++k) {
    head += clauses[k];
    head += k + 1 == clauses.size() ? "." : ", ";
  }
  return squeeze_spaces(head);
}

}  // namespace

std::string schema_name(Schema schema) {
  return schema == Schema::kNumeric ? "numeric" : "open";
}

Schema parse_schema(const std::string& name) {
  if (name == "numeric") return Schema::kNumeric;
  if (name == "open") return Schema::kOpen;
  throw std::invalid_argument("unknown schema '" + name + "'");
}

const std::vector<std::string>& view_keys(Schema schema) {
  static const std::vector<std::string> kNumeric = {"metric", "row_header",
                                                    "col_header", "value"};
  static const std::vector<std::string> kOpen = {"header", "value"};
  return schema == Schema::kNumeric ? kNumeric : kOpen;
}

const std::vector<std::string>& meta_keys(Schema schema) {
  static const std::vector<std::string> kNumeric = {"table_id", "caption"};
  static const std::vector<std::string> kOpen = {"page_title", "section_title",
                                                 "section_text"};
  return schema == Schema::kNumeric ? kNumeric : kOpen;
}

const std::string& Cell::view(const std::string& key) const {
  for (const auto& [k, v] : views) {
    if (k == key) return v;
  }
  throw std::out_of_range("cell has no view '" + key + "'");
}

Table::Table(Schema schema, std::vector<std::vector<Cell>> rows,
             std::map<std::string, std::string> meta)
    : schema_(schema), rows_(std::move(rows)), meta_(std::move(meta)) {
  if (rows_.empty() || rows_.front().empty()) {
    throw std::invalid_argument("table: needs at least one row and one column");
  }
  const auto& keys = view_keys(schema_);
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].size() != rows_.front().size()) {
      throw std::invalid_argument("table: ragged rows (row " + std::to_string(i) +
                                  " has " + std::to_string(rows_[i].size()) +
                                  " cells, expected " +
                                  std::to_string(rows_.front().size()) + ")");
    }
    for (const auto& c : rows_[i]) {
      bool ok = c.views.size() == keys.size();
      for (std::size_t k = 0; ok && k < keys.size(); ++k) ok = c.views[k].first == keys[k];
      if (!ok) {
        throw std::invalid_argument("table: cell views do not match " +
                                    schema_name(schema_) + " schema");
      }
    }
  }
  for (const auto& k : meta_keys(schema_)) {
    if (!meta_.count(k)) {
      throw std::invalid_argument("table: missing meta key '" + k + "'");
    }
  }
}

const std::string& Table::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw std::out_of_range("table: no meta key '" + key + "'");
  return it->second;
}

Cell make_open_cell(std::string header, std::string value) {
  return Cell{{{"header", std::move(header)}, {"value", std::move(value)}}};
}

Cell make_numeric_cell(std::string metric, std::string row_header,
                       std::string col_header, std::string value) {
  return Cell{{{"metric", std::move(metric)},
               {"row_header", std::move(row_header)},
               {"col_header", std::move(col_header)},
               {"value", std::move(value)}}};
}

namespace {

std::string numeric_text(const Table& t) {
  std::string head = t.meta("table_id") + " shows " + t.meta("caption") + ". ";
  std::vector<std::string> clauses;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      const Cell& c = t.cell(i, j);
      clauses.push_back(c.view("metric") + " of " + c.view("row_header") + " " +
                        c.view("col_header") + " is " + c.view("value"));
    }
  }
  return finish(std::move(head), clauses);
}

std::string open_text(const Table& t) {
  std::string head = "As " + t.meta("page_title") + " " + t.meta("section_title") +
                     ", " + t.meta("section_text") + ". ";
  std::vector<std::string> clauses;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      const Cell& c = t.cell(i, j);
      clauses.push_back(c.view("header") + " is " + c.view("value"));
    }
  }
  return finish(std::move(head), clauses);
}

SerializedTable wrap(std::string text, const Vocab& vocab) {
  SerializedTable out;
  out.token_seq = tokenize(text, vocab);
  out.text = std::move(text);
  return out;
}

}  // namespace

SerializedTable serialize_numeric(const Table& table, const Vocab& vocab) {
  if (table.schema() != Schema::kNumeric) {
    throw std::invalid_argument("serialize_numeric: table has open schema");
  }
  return wrap(numeric_text(table), vocab);
}

SerializedTable serialize_open(const Table& table, const Vocab& vocab) {
  if (table.schema() != Schema::kOpen) {
    throw std::invalid_argument("serialize_open: table has numeric schema");
  }
  return wrap(open_text(table), vocab);
}

SerializedTable serialize(const Table& table, const Vocab& vocab) {
  return table.schema() == Schema::kNumeric ? serialize_numeric(table, vocab)
                                            : serialize_open(table, vocab);
}

std::string serialize_text(const Table& table) {
  return table.schema() == Schema::kNumeric ? numeric_text(table) : open_text(table);
}

TokenSeq cell_multiview_sequence(const Cell& cell, const Vocab& vocab,
                                 std::size_t view_len) {
  if (view_len == 0) throw std::invalid_argument("cell_multiview_sequence: view_len must be >= 1");
  TokenSeq seq;
  seq.ids.reserve(cell.views.size() * view_len);
  for (const auto& [key, text] : cell.views) {
    auto ids = tokenize(text, vocab).ids;
    ids.resize(view_len, kPadId);
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
  }
  return seq;
}

}  // namespace tasd
