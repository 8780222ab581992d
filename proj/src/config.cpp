#include "tasd/config.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>

namespace tasd {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const json& section(const json& j, const char* name) {
  static const json kEmpty = json::object();
  if (!j.contains(name)) return kEmpty;
  if (!j.at(name).is_object()) {
    throw std::invalid_argument(std::string("config: section '") + name + "' is not an object");
  }
  return j.at(name);
}

void reject_unknown(const json& j, const char* name, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) {
      throw std::invalid_argument(std::string("config: unknown key '") + key + "' in " + name);
    }
  }
}

DecodeStrategy parse_strategy(const std::string& s) {
  if (s == "greedy") return DecodeStrategy::kGreedy;
  if (s == "beam") return DecodeStrategy::kBeam;
  throw std::invalid_argument("config: unknown decode strategy '" + s + "'");
}

}  // namespace

ordered_json model_config_to_json(const TasatgConfig& c) {
  ordered_json j;
  j["d"] = c.d;
  j["h"] = c.h;
  j["n_layers"] = c.n_layers;
  j["view_len"] = c.view_len;
  j["cell_views"] = c.cell_views;
  j["max_seq_len"] = c.max_seq_len;
  j["vocab_size"] = c.vocab_size;
  j["M_max"] = c.m_max;
  j["N_max"] = c.n_max;
  j["tr_hidden"] = c.tr_hidden;
  j["seed"] = c.seed;
  return j;
}

TasatgConfig model_config_from_json(const json& j) {
  TasatgConfig c;
  c.d = j.value("d", c.d);
  c.h = j.value("h", c.h);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.view_len = j.value("view_len", c.view_len);
  c.cell_views = j.value("cell_views", c.cell_views);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.m_max = j.value("M_max", c.m_max);
  c.n_max = j.value("N_max", c.n_max);
  c.tr_hidden = j.value("tr_hidden", c.tr_hidden);
  c.seed = j.value("seed", c.seed);
  return c;
}

HarnessConfig config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  HarnessConfig c;
  reject_unknown(j, "config", {"model", "train", "tr", "decode", "split", "data"});
  reject_unknown(section(j, "model"), "model",
                 {"d", "h", "n_layers", "view_len", "cell_views", "max_seq_len", "M_max", "N_max",
                  "tr_hidden"});
  reject_unknown(section(j, "train"), "train",
                 {"lr", "epochs", "patience", "seed", "mode", "stop_at_train_loss"});
  reject_unknown(section(j, "tr"), "tr", {"enabled", "rho", "lambda", "pass", "full_table"});
  reject_unknown(section(j, "decode"), "decode",
                 {"strategy", "beam_width", "max_len", "length_penalty_alpha"});
  reject_unknown(section(j, "split"), "split", {"ratios", "train_ids", "val_ids", "test_ids"});
  reject_unknown(section(j, "data"), "data", {"min_count", "totto_filter"});
  try {
    c.model = model_config_from_json(section(j, "model"));

    const json& train = section(j, "train");
    auto& p = c.pipeline;
    p.learning_rate = train.value("lr", p.learning_rate);
    p.epochs = train.value("epochs", p.epochs);
    p.patience = train.value("patience", p.patience);
    p.seed = train.value("seed", p.seed);
    p.stop_at_train_loss = train.value("stop_at_train_loss", p.stop_at_train_loss);
    if (train.contains("mode")) p.mode = parse_mode(train.at("mode").get<std::string>());
    c.model.seed = p.seed;

    const json& tr = section(j, "tr");
    p.tr.enabled = tr.value("enabled", p.tr.enabled);
    p.tr.rho = tr.value("rho", p.tr.rho);
    p.tr.lambda = tr.value("lambda", p.tr.lambda);
    p.tr.full_table = tr.value("full_table", p.tr.full_table);
    if (tr.contains("pass")) p.tr.pass = parse_tr_pass(tr.at("pass").get<std::string>());

    const json& dec = section(j, "decode");
    if (dec.contains("strategy")) p.decode.strategy = parse_strategy(dec.at("strategy").get<std::string>());
    p.decode.beam_width = dec.value("beam_width", p.decode.beam_width);
    p.decode.max_len = dec.value("max_len", p.decode.max_len);
    p.decode.length_penalty_alpha = dec.value("length_penalty_alpha", p.decode.length_penalty_alpha);

    const json& split = section(j, "split");
    if (split.contains("ratios")) c.split.ratios = split.at("ratios").get<std::vector<double>>();
    if (split.contains("train_ids")) c.split.train_ids = split.at("train_ids").get<std::vector<std::string>>();
    if (split.contains("val_ids")) c.split.val_ids = split.at("val_ids").get<std::vector<std::string>>();
    if (split.contains("test_ids")) c.split.test_ids = split.at("test_ids").get<std::vector<std::string>>();

    const json& data = section(j, "data");
    c.min_count = data.value("min_count", c.min_count);
    c.load.totto_filter = data.value("totto_filter", c.load.totto_filter);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.pipeline.validate();
  // vocab_size is only known once the vocabulary is built.
  TasatgConfig probe = c.model;
  probe.vocab_size = 1;
  probe.validate();
  return c;
}

ordered_json config_to_json(const HarnessConfig& c) {
  ordered_json j;
  ordered_json model = model_config_to_json(c.model);
  model.erase("seed");
  model.erase("vocab_size");
  model.erase("cell_views");
  j["model"] = model;
  const auto& p = c.pipeline;
  j["train"] = {{"lr", p.learning_rate},     {"epochs", p.epochs},
                {"patience", p.patience},    {"seed", p.seed},
                {"mode", mode_name(p.mode)}, {"stop_at_train_loss", p.stop_at_train_loss}};
  j["tr"] = {{"enabled", p.tr.enabled},
             {"rho", p.tr.rho},
             {"lambda", p.tr.lambda},
             {"pass", tr_pass_name(p.tr.pass)},
             {"full_table", p.tr.full_table}};
  j["decode"] = {{"strategy", p.decode.strategy == DecodeStrategy::kGreedy ? "greedy" : "beam"},
                 {"beam_width", p.decode.beam_width},
                 {"max_len", p.decode.max_len},
                 {"length_penalty_alpha", p.decode.length_penalty_alpha}};
  ordered_json split;
  if (c.split.train_ids || c.split.val_ids || c.split.test_ids) {
    split["train_ids"] = c.split.train_ids.value_or(std::vector<std::string>{});
    split["val_ids"] = c.split.val_ids.value_or(std::vector<std::string>{});
    split["test_ids"] = c.split.test_ids.value_or(std::vector<std::string>{});
  } else {
    split["ratios"] = c.split.ratios;
  }
  j["split"] = split;
  j["data"] = {{"min_count", c.min_count}, {"totto_filter", c.load.totto_filter}};
  return j;
}

HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace tasd
