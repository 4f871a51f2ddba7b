#include "wavec2r/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "wavec2r/errors.hpp"

namespace wavec2r {

namespace {
constexpr char kMagic[8] = {'W', '2', 'R', 'C', 'K', 'P', 'T', '\0'};
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  detail::write_le<std::uint32_t>(os, Checkpoint::kVersion);
  detail::write_string(os, ckpt.section);
  detail::write_le<std::uint64_t>(os, ckpt.step);
  detail::write_string(os, ckpt.config);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, t] : ckpt.arrays) {
    detail::write_string(os, name);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.values()) detail::write_le<float>(os, static_cast<float>(v));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto version = detail::read_le<std::uint32_t>(is, "checkpoint version");
  if (version != Checkpoint::kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.section = detail::read_string(is, "checkpoint section");
  ckpt.step = detail::read_le<std::uint64_t>(is, "checkpoint step");
  ckpt.config = detail::read_string(is, "checkpoint config");
  const auto count = detail::read_le<std::uint32_t>(is, "checkpoint array count");
  for (std::uint32_t a = 0; a < count; ++a) {
    std::string name = detail::read_string(is, "array name");
    const auto rank = detail::read_le<std::uint32_t>(is, "array rank");
    if (rank > 8) throw IoError("implausible array rank in checkpoint");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(detail::read_le<std::uint32_t>(is, "array dim")));
    }
    Tensor t(shape);
    for (double& v : t.values()) v = detail::read_le<float>(is, "array values");
    ckpt.arrays.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

Checkpoint capture_parameters(const nn::ParameterSet& params, std::string section,
                              std::uint64_t step, std::string config) {
  Checkpoint ckpt{std::move(section), step, std::move(config), {}};
  for (const auto& [name, var] : params.entries()) ckpt.arrays.emplace_back(name, var.value());
  return ckpt;
}

void restore_parameters(nn::ParameterSet& params, const Checkpoint& ckpt,
                        const std::string& expected_section) {
  if (ckpt.section != expected_section) {
    throw ConfigurationError("checkpoint section '" + ckpt.section + "' but expected '" +
                             expected_section + "'");
  }
  if (ckpt.arrays.size() != params.entries().size()) {
    throw ConfigurationError("checkpoint holds " + std::to_string(ckpt.arrays.size()) +
                             " arrays, model expects " + std::to_string(params.entries().size()));
  }
  for (const auto& [name, t] : ckpt.arrays) {
    ag::Var* v = params.find(name);
    if (!v) throw ConfigurationError("checkpoint array '" + name + "' has no matching parameter");
    if (v->shape() != t.shape()) {
      throw ConfigurationError("checkpoint array '" + name + "' has shape " + to_string(t.shape()) +
                               ", model expects " + to_string(v->shape()));
    }
    v->mutable_value() = t;
  }
}

}  // namespace wavec2r
