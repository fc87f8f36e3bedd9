#include "mcgcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mcgcl/errors.hpp"

namespace mcgcl {

namespace {

constexpr std::string_view kMagic = "MCGCLCKPT 1";

void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_tensors(const std::filesystem::path& path, std::span<const NamedMatrix> tensors) {
  std::string out;
  out += std::string(kMagic) + "\n";
  out += "tensors " + std::to_string(tensors.size()) + "\n";
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.find_first_of(" \t\n") != std::string::npos) {
      throw ContractError("checkpoint: tensor name '" + t.name + "' must be a non-empty word");
    }
    out += t.name + " " + std::to_string(t.value.rows()) + " " + std::to_string(t.value.cols()) + "\n";
  }
  out += "payload\n";
  for (const auto& t : tensors)
    for (double v : t.value.values()) put_le(out, v);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw OutputError("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw OutputError("write failed for checkpoint " + path.string());
}

std::vector<NamedMatrix> load_tensors(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << file.rdbuf();
  const std::string data = buffer.str();
  const std::string where = "checkpoint " + path.string() + ": ";

  std::size_t pos = 0;
  const auto next_line = [&]() -> std::string {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) throw DataError(where + "header ends before the payload marker");
    std::string line = data.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != kMagic) throw DataError(where + "bad header magic");
  std::size_t count = 0;
  {
    std::istringstream in(next_line());
    std::string word;
    if (!(in >> word >> count) || word != "tensors") throw DataError(where + "malformed tensor count line");
  }
  std::vector<NamedMatrix> tensors;
  std::size_t values = 0;
  for (std::size_t k = 0; k < count; ++k) {
    std::istringstream in(next_line());
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw DataError(where + "malformed entry for tensor " + std::to_string(k));
    tensors.push_back({name, Matrix(rows, cols)});
    values += rows * cols;
  }
  if (next_line() != "payload") throw DataError(where + "missing payload marker");
  const std::size_t expected = values * 8;
  const std::size_t found = data.size() - pos;
  if (found != expected) {
    throw DataError(where + "header declares " + std::to_string(expected) + " payload bytes, found " +
                    std::to_string(found) + (found < expected ? " (truncated)" : ""));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
  for (auto& t : tensors) {
    for (double& v : t.value.values()) {
      v = get_le(p);
      p += 8;
    }
  }
  return tensors;
}

void save_model(const std::filesystem::path& path, const ModelCheckpoint& model) {
  const NamedMatrix tensors[] = {
      {"meta", Matrix{{static_cast<double>(model.seed), static_cast<double>(label_count(model.mode))}}},
      {"z_user", model.z_user},
      {"z_item", model.z_item},
      {"head.w1", model.head.w1.value()},
      {"head.b1", model.head.b1.value()},
      {"head.w2", model.head.w2.value()},
      {"head.b2", model.head.b2.value()},
  };
  save_tensors(path, tensors);
}

ModelCheckpoint load_model(const std::filesystem::path& path) {
  auto tensors = load_tensors(path);
  const auto find = [&](std::string_view name) -> Matrix& {
    for (auto& t : tensors)
      if (t.name == name) return t.value;
    throw DataError("checkpoint " + path.string() + ": missing tensor '" + std::string(name) + "'");
  };
  ModelCheckpoint m;
  const Matrix& meta = find("meta");
  if (meta.rows() != 1 || meta.cols() != 2) throw DataError("checkpoint: meta tensor must be 1x2");
  m.seed = static_cast<std::uint64_t>(meta(0, 0));
  const double arity = meta(0, 1);
  if (arity == 3.0) {
    m.mode = LabelMode::multi;
  } else if (arity == 2.0) {
    m.mode = LabelMode::binary;
  } else {
    throw DataError("checkpoint: label arity must be 2 or 3");
  }
  m.z_user = std::move(find("z_user"));
  m.z_item = std::move(find("z_item"));
  m.head = {Tensor::constant(find("head.w1")), Tensor::constant(find("head.b1")), Tensor::constant(find("head.w2")),
            Tensor::constant(find("head.b2"))};
  const std::size_t d = m.z_user.cols();
  if (m.z_item.cols() != d || m.head.w1.rows() != 2 * d || m.head.w2.cols() != label_count(m.mode) ||
      m.head.b1.cols() != m.head.w1.cols() || m.head.w2.rows() != m.head.w1.cols() || m.head.b2.cols() != m.head.w2.cols()) {
    throw DataError("checkpoint: tensor shapes are inconsistent");
  }
  return m;
}

}  // namespace mcgcl
