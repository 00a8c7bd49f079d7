#include "dart/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dart/error.hpp"

namespace dart {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'R', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw IoError("checkpoint truncated reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

std::string read_string(std::istream& in, std::uint64_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IoError("checkpoint truncated reading " + what);
  }
  return s;
}

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  const std::string header = data.header.dump();
  put_le<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_le<std::uint64_t>(out, data.arrays.size());
  for (const auto& [name, m] : data.arrays) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) put_le<double>(out, m(i, j));
    }
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint file");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  CheckpointData data;
  const auto header_len = get_le<std::uint64_t>(in, "header length");
  try {
    data.header = nlohmann::json::parse(read_string(in, header_len, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("corrupt checkpoint header: " + std::string(e.what()));
  }
  const auto count = get_le<std::uint64_t>(in, "array count");
  for (std::uint64_t a = 0; a < count; ++a) {
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    std::string name = read_string(in, name_len, "array name");
    const auto rows = static_cast<Index>(get_le<std::uint64_t>(in, name));
    const auto cols = static_cast<Index>(get_le<std::uint64_t>(in, name));
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = get_le<double>(in, name);
    }
    data.arrays.emplace(std::move(name), std::move(m));
  }
  return data;
}

void save_checkpoint(const std::filesystem::path& path, const DartModel& model, const Trainer* trainer) {
  CheckpointData data;
  data.header["format"] = "dart-checkpoint";
  data.header["config"] = model.config().to_json();
  data.header["vocab"] = model.vocab().to_json();
  data.header["graph"] = model.graph().to_json();
  data.header["backbone_checksum"] = std::to_string(model.backbone().checksum());
  const auto& items = model.params().items();
  for (const auto& p : items) data.arrays["param/" + p.name] = p.tensor.value();
  if (trainer) {
    const TrainState& s = trainer->state();
    std::ostringstream rng;
    rng << s.rng;
    data.header["state"] = {{"step", s.step},   {"lambda", s.lambda}, {"rng", rng.str()},
                            {"order", s.order}, {"cursor", s.cursor}, {"adam_t", trainer->optimizer().state().t}};
    const AdamState& adam = trainer->optimizer().state();
    for (std::size_t i = 0; i < adam.m.size() && i < items.size(); ++i) {
      data.arrays["adam_m/" + items[i].name] = adam.m[i];
      data.arrays["adam_v/" + items[i].name] = adam.v[i];
    }
  } else {
    data.header["state"] = nullptr;
  }
  write_checkpoint_file(path, data);
}

LoadedRun load_model(const std::filesystem::path& path) {
  CheckpointData data = read_checkpoint_file(path);
  if (data.header.value("format", "") != "dart-checkpoint") {
    throw IoError(path.string() + ": unknown checkpoint format");
  }
  const ModelConfig cfg = ModelConfig::from_json(data.header.at("config"));
  Vocabulary vocab = Vocabulary::from_json(data.header.at("vocab"));
  ClassGraph graph = ClassGraph::from_json(data.header.at("graph"));
  LoadedRun run;
  run.model = std::make_unique<DartModel>(cfg, std::move(vocab), std::move(graph));
  for (auto& p : run.model->params().items()) {
    auto it = data.arrays.find("param/" + p.name);
    if (it == data.arrays.end()) throw IoError("checkpoint lacks parameter " + p.name);
    if (it->second.rows() != p.tensor.rows() || it->second.cols() != p.tensor.cols()) {
      throw DimensionError("checkpoint parameter " + p.name + " has the wrong shape");
    }
    p.tensor.mutable_value() = it->second;
  }
  run.header = std::move(data.header);
  return run;
}

void restore_trainer(const std::filesystem::path& path, Trainer& trainer) {
  const CheckpointData data = read_checkpoint_file(path);
  const auto& state = data.header.at("state");
  if (state.is_null()) throw ContractError(path.string() + " carries no training state");
  TrainState& s = trainer.state();
  s.step = state.at("step").get<Index>();
  s.lambda = state.at("lambda").get<double>();
  std::istringstream rng(state.at("rng").get<std::string>());
  rng >> s.rng;
  s.order = state.at("order").get<std::vector<Index>>();
  s.cursor = state.at("cursor").get<Index>();
  AdamState& adam = trainer.optimizer().state();
  adam.t = state.at("adam_t").get<Index>();
  adam.m.clear();
  adam.v.clear();
  if (adam.t == 0) return;
  for (const auto& p : trainer.model().params().items()) {
    const auto m = data.arrays.find("adam_m/" + p.name);
    const auto v = data.arrays.find("adam_v/" + p.name);
    if (m == data.arrays.end() || v == data.arrays.end()) {
      throw IoError("checkpoint lacks optimizer moments for " + p.name);
    }
    adam.m.push_back(m->second);
    adam.v.push_back(v->second);
  }
}

}  // namespace dart
