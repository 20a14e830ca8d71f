#include "frost/io.hpp"

#include <cstdio>

namespace frost {

namespace {

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\r\n") != std::string::npos;
}

std::string quote(const std::string& s) {
  if (!needs_quoting(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw ConfigError("CsvWriter: cannot open " + path.string());
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) {
    throw ShapeError("CsvWriter: expected " + std::to_string(columns_) + " fields, got " +
                     std::to_string(fields.size()));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << quote(fields[i]);
  }
  out_ << '\n';
}

std::string CsvWriter::field(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string CsvWriter::field(int v) { return std::to_string(v); }
std::string CsvWriter::field(long v) { return std::to_string(v); }

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  m.data = j.at("data").get<Vec>();
  if (m.data.size() != static_cast<std::size_t>(m.rows) * m.cols) {
    throw ConfigError("matrix_from_json: data length does not match shape");
  }
  return m;
}

nlohmann::json affine_to_json(const AffineMap& m) {
  return {{"weight", matrix_to_json(m.weight)}, {"bias", m.bias}};
}

AffineMap affine_from_json(const nlohmann::json& j) {
  AffineMap m;
  m.weight = matrix_from_json(j.at("weight"));
  m.bias = j.at("bias").get<Vec>();
  if (static_cast<int>(m.bias.size()) != m.weight.rows) {
    throw ConfigError("affine_from_json: bias length does not match weight rows");
  }
  return m;
}

namespace {

nlohmann::json mlp_to_json(const MLPMap& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers) layers.push_back(affine_to_json(l));
  return {{"activation", activation_name(m.activation)}, {"layers", layers}};
}

MLPMap mlp_from_json(const nlohmann::json& j) {
  MLPMap m;
  m.activation = activation_from_name(j.at("activation").get<std::string>());
  for (const auto& l : j.at("layers")) m.layers.push_back(affine_from_json(l));
  if (m.layers.empty()) throw ConfigError("mlp_from_json: no layers");
  return m;
}

}  // namespace

nlohmann::json sketch_to_json(const KllSketch& s) {
  return {{"k", s.k()},
          {"seed", s.seed()},
          {"coin_counter", s.coin_counter()},
          {"n", s.count()},
          {"levels", s.compactors()}};
}

KllSketch sketch_from_json(const nlohmann::json& j) {
  return KllSketch::restore(j.at("k").get<int>(), j.at("seed").get<std::uint64_t>(),
                            j.at("coin_counter").get<std::uint64_t>(),
                            j.at("n").get<std::uint64_t>(),
                            j.at("levels").get<std::vector<std::vector<double>>>());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& o : ckpt.model.ops) {
    ops.push_back({{"a", mlp_to_json(o.a)},
                   {"b", affine_to_json(o.b)},
                   {"c", affine_to_json(o.c)},
                   {"d", affine_to_json(o.d)},
                   {"rho", o.scale.rho},
                   {"hurst", o.scale.hurst}});
  }
  nlohmann::json j = {
      {"format", "frost-checkpoint"},
      {"version", 1},
      {"model",
       {{"kind", model_kind_name(ckpt.model.kind)},
        {"dims",
         {{"d_in", ckpt.model.dims.d_in},
          {"d_hid", ckpt.model.dims.d_hid},
          {"d_out", ckpt.model.dims.d_out}}},
        {"t_max", ckpt.model.t_max},
        {"step_mode", ckpt.model.step_mode == StepMode::kGated ? "gated" : "standard"},
        {"ops", ops},
        {"gate", affine_to_json(ckpt.model.gate)}}},
      {"head", {{"w_s", ckpt.head.w_s}, {"b_s", ckpt.head.b_s}}},
      {"sketch", sketch_to_json(ckpt.sketch)}};
  write_json_file(path, j);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  if (j.value("format", "") != "frost-checkpoint") {
    throw ConfigError("load_checkpoint: not a checkpoint file: " + path.string());
  }
  if (j.at("version").get<int>() != 1) {
    throw ConfigError("load_checkpoint: unsupported version");
  }
  Checkpoint ckpt;
  const auto& jm = j.at("model");
  ckpt.model.kind = model_kind_from_name(jm.at("kind").get<std::string>());
  ckpt.model.dims.d_in = jm.at("dims").at("d_in").get<int>();
  ckpt.model.dims.d_hid = jm.at("dims").at("d_hid").get<int>();
  ckpt.model.dims.d_out = jm.at("dims").at("d_out").get<int>();
  ckpt.model.t_max = jm.at("t_max").get<int>();
  ckpt.model.step_mode =
      jm.at("step_mode").get<std::string>() == "gated" ? StepMode::kGated : StepMode::kStandard;
  for (const auto& jo : jm.at("ops")) {
    OperatorSet o;
    o.a = mlp_from_json(jo.at("a"));
    o.b = affine_from_json(jo.at("b"));
    o.c = affine_from_json(jo.at("c"));
    o.d = affine_from_json(jo.at("d"));
    o.scale.rho = jo.at("rho").get<double>();
    o.scale.hurst = jo.at("hurst").get<double>();
    ckpt.model.ops.push_back(std::move(o));
  }
  ckpt.model.gate = affine_from_json(jm.at("gate"));
  ckpt.head.w_s = j.at("head").at("w_s").get<Vec>();
  ckpt.head.b_s = j.at("head").at("b_s").get<double>();
  ckpt.sketch = sketch_from_json(j.at("sketch"));
  return ckpt;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("write_json_file: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("read_json_file: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace frost
