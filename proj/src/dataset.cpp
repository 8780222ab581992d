#include "tasd/dataset.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tasd/rng.hpp"

namespace tasd {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string required_string(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw std::invalid_argument(where + ": missing string field '" + key + "'");
  }
  return j.at(key).get<std::string>();
}

}  // namespace

DatasetRecord record_from_json(const json& j, bool require_target) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  const std::string id = required_string(j, "id", "record");
  const std::string where = "record '" + id + "'";
  const Schema schema = parse_schema(required_string(j, "schema", where));

  std::map<std::string, std::string> meta;
  if (j.contains("meta")) {
    if (!j.at("meta").is_object()) throw std::invalid_argument(where + ": meta is not an object");
    for (const auto& [k, v] : j.at("meta").items()) {
      if (!v.is_string()) throw std::invalid_argument(where + ": meta '" + k + "' is not a string");
      meta[k] = v.get<std::string>();
    }
  }
  for (const auto& k : meta_keys(schema)) {
    if (!meta.count(k)) throw std::invalid_argument(where + ": missing meta key '" + k + "'");
  }

  if (!j.contains("rows") || !j.at("rows").is_array() || j.at("rows").empty()) {
    throw std::invalid_argument(where + ": 'rows' must be a nonempty array");
  }
  std::vector<std::vector<Cell>> rows;
  for (const auto& row : j.at("rows")) {
    if (!row.is_array()) throw std::invalid_argument(where + ": row is not an array");
    std::vector<Cell> cells;
    for (const auto& cj : row) {
      if (!cj.contains("views") || !cj.at("views").is_object()) {
        throw std::invalid_argument(where + ": cell without a 'views' object");
      }
      const auto& views = cj.at("views");
      if (views.size() != view_keys(schema).size()) {
        throw std::invalid_argument(where + ": cell views do not match the " +
                                    schema_name(schema) + " schema");
      }
      Cell cell;
      for (const auto& key : view_keys(schema)) {
        cell.views.emplace_back(key, required_string(views, key, where + " cell"));
      }
      cells.push_back(std::move(cell));
    }
    rows.push_back(std::move(cells));
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw std::invalid_argument(where + ": ragged rows (row " + std::to_string(i) + " has " +
                                  std::to_string(rows[i].size()) + " cells, row 0 has " +
                                  std::to_string(rows[0].size()) + ")");
    }
  }
  std::string target;
  if (j.contains("target")) {
    if (!j.at("target").is_string()) throw std::invalid_argument(where + ": target is not a string");
    target = j.at("target").get<std::string>();
  }
  if (require_target && target.empty()) {
    throw std::invalid_argument(where + ": empty target");
  }
  try {
    return DatasetRecord{id, Table(schema, std::move(rows), std::move(meta)), target};
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(where + ": " + e.what());
  }
}

ordered_json record_to_json(const DatasetRecord& record) {
  const Table& t = record.table;
  ordered_json j;
  j["id"] = record.id;
  j["schema"] = schema_name(t.schema());
  ordered_json meta = ordered_json::object();
  for (const auto& k : meta_keys(t.schema())) meta[k] = t.meta(k);
  j["meta"] = meta;
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) {
      ordered_json views = ordered_json::object();
      for (const auto& [k, v] : t.cell(i, c).views) views[k] = v;
      row.push_back(ordered_json{{"views", views}});
    }
    rows.push_back(row);
  }
  j["rows"] = rows;
  j["target"] = record.target;
  return j;
}

Dataset read_dataset(std::istream& in, const LoadOptions& options) {
  Dataset out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": malformed JSON (" +
                                  e.what() + ")");
    }
    DatasetRecord rec = [&] {
      try {
        return record_from_json(j, options.require_targets);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
      }
    }();
    if (!ids.insert(rec.id).second) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": duplicate id '" +
                                  rec.id + "'");
    }
    if (options.totto_filter && (rec.table.rows() >= 8 || rec.table.cols() >= 8)) continue;
    out.push_back(std::move(rec));
  }
  return out;
}

Dataset load_dataset(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  return read_dataset(in, options);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  for (const auto& rec : data) out << record_to_json(rec).dump() << '\n';
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path);
  write_dataset(out, data);
}

Dataset synth_dataset(std::size_t n_records, std::size_t rows, std::size_t cols,
                      std::size_t word_count, std::uint64_t seed, Schema schema) {
  if (n_records == 0 || rows == 0 || cols == 0 || word_count == 0) {
    throw std::invalid_argument("synth: all sizes must be positive");
  }
  Rng rng(seed);
  auto word = [&] { return "w" + std::to_string(rng.below(word_count)); };
  auto words = [&](std::size_t k) {
    std::string s = word();
    for (std::size_t i = 1; i < k; ++i) s += " " + word();
    return s;
  };
  Dataset out;
  for (std::size_t r = 0; r < n_records; ++r) {
    std::vector<std::vector<Cell>> grid(rows);
    std::map<std::string, std::string> meta;
    if (schema == Schema::kOpen) {
      meta["page_title"] = word();
      meta["section_title"] = word();
      meta["section_text"] = words(2);
      std::vector<std::string> headers(cols);
      for (auto& h : headers) h = word();
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) grid[i].push_back(make_open_cell(headers[j], word()));
      }
    } else {
      meta["table_id"] = "table " + std::to_string(r % 10);
      meta["caption"] = words(2);
      const std::string metric = word();
      std::vector<std::string> row_headers(rows), col_headers(cols);
      for (auto& h : row_headers) h = word();
      for (auto& h : col_headers) h = word();
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          grid[i].push_back(make_numeric_cell(metric, row_headers[i], col_headers[j], word()));
        }
      }
    }
    Table table(schema, std::move(grid), std::move(meta));
    std::ostringstream id;
    id << "syn-" << r;
    std::string target = serialize_text(table);
    out.push_back(DatasetRecord{id.str(), std::move(table), std::move(target)});
  }
  return out;
}

Splits split_dataset(const Dataset& data, const SplitSpec& spec) {
  Splits out;
  if (spec.train_ids || spec.val_ids || spec.test_ids) {
    std::map<std::string, const DatasetRecord*> by_id;
    for (const auto& rec : data) by_id[rec.id] = &rec;
    auto take = [&](const std::optional<std::vector<std::string>>& ids, Dataset& dst) {
      if (!ids) return;
      for (const auto& id : *ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw std::invalid_argument("split: unknown record id '" + id + "'");
        dst.push_back(*it->second);
      }
    };
    take(spec.train_ids, out.train);
    take(spec.val_ids, out.val);
    take(spec.test_ids, out.test);
    return out;
  }
  if (spec.ratios.size() != 3) throw std::invalid_argument("split: need three ratios");
  double total = 0.0;
  for (double r : spec.ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("split: ratios must be >= 0");
    total += r;
  }
  if (total <= 0.0) throw std::invalid_argument("split: ratios sum to zero");
  const auto n = static_cast<double>(data.size());
  const auto n_train = static_cast<std::size_t>(n * spec.ratios[0] / total);
  const auto n_val = static_cast<std::size_t>(n * spec.ratios[1] / total);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Dataset& dst = i < n_train ? out.train : i < n_train + n_val ? out.val : out.test;
    dst.push_back(data[i]);
  }
  return out;
}

std::vector<std::string> vocab_corpus(const Dataset& data) {
  std::vector<std::string> out;
  for (const auto& rec : data) {
    out.push_back(serialize_text(rec.table));
    out.push_back(rec.target);
  }
  return out;
}

}  // namespace tasd
