#include "tasd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "tasd/config.hpp"

namespace tasd {

namespace {

constexpr char kMagic[] = {'T', 'A', 'S', 'D', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void put_doubles(std::span<const double> v) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_doubles(std::span<double> out) {
    need(out.size() * sizeof(double));
    std::memcpy(out.data(), bytes_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

struct StoredParam {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Stored {
  TasatgConfig config;
  std::uint64_t fingerprint = 0;
  std::vector<StoredParam> params;
};

Stored read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  r.need(sizeof(kMagic));
  char magic[sizeof(kMagic)];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  Stored s;
  try {
    s.config = model_config_from_json(nlohmann::json::parse(r.get_string()));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: corrupt config (") + e.what() + ")");
  }
  s.fingerprint = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    StoredParam p;
    p.name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < rank; ++i) p.shape.push_back(r.get<std::uint64_t>());
    p.values.resize(shape_numel(p.shape));
    r.get_doubles(p.values);
    s.params.push_back(std::move(p));
  }
  if (!r.at_end()) throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return s;
}

void fill(TasatgModel& model, const Stored& stored) {
  auto params = model.named_parameters();
  if (params.size() != stored.params.size()) {
    throw std::runtime_error("checkpoint: holds " + std::to_string(stored.params.size()) +
                             " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& [name, tensor] = params[k];
    const StoredParam& p = stored.params[k];
    if (p.name != name) {
      throw std::runtime_error("checkpoint: expected parameter '" + name + "', found '" +
                               p.name + "'");
    }
    if (p.shape != tensor.shape()) {
      throw std::runtime_error("checkpoint: parameter '" + name + "' has shape " +
                               shape_str(p.shape) + " but the model expects " +
                               shape_str(tensor.shape()));
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto dst = params[k].second.mutable_values();
    std::copy(stored.params[k].values.begin(), stored.params[k].values.end(), dst.begin());
  }
}

}  // namespace

void save_checkpoint(const TasatgModel& model, const std::string& path,
                     std::uint64_t vocab_fingerprint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  Writer w(out);
  out.write(kMagic, sizeof(kMagic));
  w.put_string(model_config_to_json(model.config()).dump());
  w.put(vocab_fingerprint);
  const auto params = model.named_parameters();
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
    w.put_doubles(t.values());
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const Stored stored = read_file(path);
  LoadedCheckpoint out{TasatgModel(stored.config), stored.fingerprint};
  fill(out.model, stored);
  return out;
}

std::uint64_t load_checkpoint_into(TasatgModel& model, const std::string& path) {
  const Stored stored = read_file(path);
  fill(model, stored);
  return stored.fingerprint;
}

}  // namespace tasd
