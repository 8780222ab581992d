#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "tasd/dataset.hpp"
#include "tasd/rng.hpp"
#include "tasd/table.hpp"

using namespace tasd;

namespace {

std::string data_dir() {
  const char* d = std::getenv("TASD_TEST_DATA");
  return d ? d : "tests";
}

Table open_table(std::vector<std::vector<Cell>> rows, std::string p = "P", std::string s = "S",
                 std::string t = "T") {
  return Table(Schema::kOpen, std::move(rows),
               {{"page_title", std::move(p)}, {"section_title", std::move(s)}, {"section_text", std::move(t)}});
}

Table numeric_table(std::vector<std::vector<Cell>> rows, std::string id = "Table 1",
                    std::string caption = "results") {
  return Table(Schema::kNumeric, std::move(rows),
               {{"table_id", std::move(id)}, {"caption", std::move(caption)}});
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("serialize_numeric examples") {
  const Vocab v;
  const Cell c = make_numeric_cell("accuracy", "model", "A", "0.9");
  CHECK(serialize_numeric(numeric_table({{c}}), v).text ==
        "Table 1 shows results. accuracy of model A is 0.9.");
  CHECK(serialize_numeric(numeric_table({{c}}, "Table 1", ""), v).text ==
        "Table 1 shows . accuracy of model A is 0.9.");
  const Cell d = make_numeric_cell("f1", "model", "B", "0.7");
  CHECK(serialize_numeric(numeric_table({{c, d}}), v).text ==
        "Table 1 shows results. accuracy of model A is 0.9, f1 of model B is 0.7.");
  CHECK_THROWS_AS(serialize_numeric(open_table({{make_open_cell("a", "b")}}), v),
                  std::invalid_argument);
}

TEST_CASE("serialize_open examples") {
  const Vocab v;
  CHECK(serialize_open(open_table({{make_open_cell("year", "1999")}}), v).text ==
        "As P S, T. year is 1999.");
  CHECK(serialize_open(open_table({{make_open_cell("year", "1999")}}, "", "", ""), v).text ==
        "As , . year is 1999.");
  CHECK(serialize_open(open_table({{make_open_cell("a", "1")}, {make_open_cell("b", "2")}}), v).text ==
        "As P S, T. a is 1, b is 2.");
  CHECK_THROWS_AS(serialize_open(numeric_table({{make_numeric_cell("m", "r", "c", "v")}}), v),
                  std::invalid_argument);
}

TEST_CASE("serialized token sequence uses the vocabulary") {
  const Vocab v = Vocab::build({"as p s , t . year is 1999"}, 1);
  const auto st = serialize(open_table({{make_open_cell("year", "1999")}}), v);
  CHECK(st.token_seq.ids == tokenize(st.text, v).ids);
  for (TokenId id : st.token_seq.ids) CHECK(id != kUnkId);
}

TEST_CASE("golden fixtures serialize byte-exactly") {
  const Dataset fixtures = load_dataset(data_dir() + "/golden/fixtures.jsonl");
  std::ifstream golden(data_dir() + "/golden/fixtures.golden");
  REQUIRE(golden);
  REQUIRE(fixtures.size() == 6);
  std::string expected;
  for (const auto& rec : fixtures) {
    CAPTURE(rec.id);
    REQUIRE(std::getline(golden, expected));
    CHECK(serialize_text(rec.table) == expected);
  }
}

TEST_CASE("cell_multiview_sequence examples") {
  const Vocab v = Vocab::build({"year 1999 a b c d e f"}, 1);
  CHECK(cell_multiview_sequence(make_open_cell("year", "1999"), v, 2).ids ==
        std::vector<TokenId>{v.id("year"), kPadId, v.id("1999"), kPadId});
  CHECK(cell_multiview_sequence(make_open_cell("", ""), v, 2).ids ==
        std::vector<TokenId>{0, 0, 0, 0});
  CHECK(cell_multiview_sequence(make_numeric_cell("a b c d e", "", "f", "a"), v, 3).size() == 12);
  // Truncation keeps the leading tokens of a view.
  CHECK(cell_multiview_sequence(make_open_cell("a b c", "d"), v, 2).ids ==
        std::vector<TokenId>{v.id("a"), v.id("b"), v.id("d"), kPadId});
  CHECK_THROWS_AS(cell_multiview_sequence(make_open_cell("a", "b"), v, 0), std::invalid_argument);
}

TEST_CASE("serialization covers each distinct value once and is pure") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(4), n = 1 + rng.below(4);
    std::vector<std::vector<Cell>> open_rows(m), num_rows(m);
    std::vector<std::string> values;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::string val = "val" + std::to_string(trial) + "x" + std::to_string(i * n + j) + "q";
        values.push_back(val);
        open_rows[i].push_back(make_open_cell("h" + std::to_string(j), val));
        num_rows[i].push_back(make_numeric_cell("acc", "r" + std::to_string(i), "c" + std::to_string(j), val));
      }
    }
    const Table ot = open_table(open_rows);
    const Table nt = numeric_table(num_rows);
    const std::string os = serialize_text(ot), ns = serialize_text(nt);
    for (const auto& val : values) {
      CHECK(count_occurrences(os, val) == 1);
      CHECK(count_occurrences(ns, val) == 1);
    }
    CHECK(serialize_text(ot) == os);
    CHECK(os.back() == '.');
    CHECK(count_occurrences(os, ", ") == m * n - 1 + 1);  // head comma plus separators

    const Vocab v = Vocab::build({os, ns}, 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(cell_multiview_sequence(nt.cell(i, j), v, 3).size() == 12);
        CHECK(cell_multiview_sequence(ot.cell(i, j), v, 3).size() == 6);
      }
    }
  }
}

TEST_CASE("table validation") {
  CHECK_THROWS_AS(open_table({{make_open_cell("a", "1"), make_open_cell("b", "2")}, {make_open_cell("c", "3")}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(open_table({}), std::invalid_argument);
  CHECK_THROWS_AS(Table(Schema::kOpen, {{make_open_cell("a", "1")}}, {{"page_title", "x"}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(open_table({{make_numeric_cell("m", "r", "c", "v")}}), std::invalid_argument);
  CHECK(parse_schema("numeric") == Schema::kNumeric);
  CHECK_THROWS_AS(parse_schema("html"), std::invalid_argument);
}
