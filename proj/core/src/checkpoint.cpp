#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

#include "muranet/checkpoint.hpp"
#include "muranet/errors.hpp"

namespace mura {

namespace {

constexpr char kMagic[4] = {'M', 'N', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw DataError("truncated checkpoint: " + path);
  return v;
}

std::ifstream open_and_check(const std::string& path, nlohmann::json& config_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  const auto version = get<uint32_t>(in, path);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  const auto json_len = get<uint64_t>(in, path);
  std::string buf(json_len, '\0');
  if (!in.read(buf.data(), static_cast<std::streamsize>(json_len)))
    throw DataError("truncated checkpoint: " + path);
  try {
    config_out = nlohmann::json::parse(buf);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint config in " + path + ": " + e.what());
  }
  return in;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  put(out, kVersion);
  const std::string config = model_config_to_json(model.config()).dump();
  put(out, static_cast<uint64_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));

  const std::vector<Param*>& params = model.params();
  put(out, static_cast<uint64_t>(params.size()));
  for (const Param* p : params) {
    put(out, static_cast<uint32_t>(p->path.size()));
    out.write(p->path.data(), static_cast<std::streamsize>(p->path.size()));
    put(out, static_cast<uint32_t>(p->value.ndim()));
    for (int d = 0; d < p->value.ndim(); ++d) put(out, static_cast<int64_t>(p->value.dim(d)));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
  }
  if (!out) throw DataError("write failed for checkpoint: " + path);
}

ModelConfig checkpoint_config(const std::string& path) {
  nlohmann::json config;
  open_and_check(path, config);
  return model_config_from_json(config);
}

void load_checkpoint(const std::string& path, Model& model) {
  nlohmann::json config;
  std::ifstream in = open_and_check(path, config);

  const std::vector<Param*>& params = model.params();
  const auto count = get<uint64_t>(in, path);
  if (count != params.size())
    throw DataError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                    std::to_string(params.size()) + ": " + path);
  for (Param* p : params) {
    const auto path_len = get<uint32_t>(in, path);
    std::string name(path_len, '\0');
    if (!in.read(name.data(), path_len)) throw DataError("truncated checkpoint: " + path);
    if (name != p->path)
      throw DataError("checkpoint parameter '" + name + "' does not match model parameter '" +
                      p->path + "': " + path);
    const auto ndim = get<uint32_t>(in, path);
    if (static_cast<int>(ndim) != p->value.ndim())
      throw DataError("rank mismatch for parameter '" + name + "': " + path);
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      const auto dim = get<int64_t>(in, path);
      if (dim != p->value.dim(static_cast<int>(d)))
        throw DataError("shape mismatch for parameter '" + name + "': " + path);
      numel *= dim;
    }
    if (!in.read(reinterpret_cast<char*>(p->value.data()),
                 static_cast<std::streamsize>(numel * sizeof(double))))
      throw DataError("truncated checkpoint: " + path);
  }
}

std::unique_ptr<Model> load_model(const std::string& path) {
  auto model = std::make_unique<Model>(checkpoint_config(path));
  load_checkpoint(path, *model);
  return model;
}

}  // namespace mura
