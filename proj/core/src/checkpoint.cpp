#include "psvf/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "psvf/error.hpp"

namespace psvf {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'S', 'V', 'F', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

json config_to_json(const TdnnConfig& cfg) {
  json blocks = json::array();
  for (const BlockSpec& b : cfg.blocks)
    blocks.push_back({b.in_channels, b.out_channels, b.kernel, b.dilation});
  return {{"blocks", blocks}, {"embed_dim", cfg.embed_dim}, {"frozen_blocks", cfg.frozen_blocks}};
}

TdnnConfig config_from_json(const json& j) {
  TdnnConfig cfg;
  cfg.blocks.clear();
  for (const json& b : j.at("blocks")) {
    if (!b.is_array() || b.size() != 4) throw ShapeMismatch("checkpoint: malformed block spec");
    cfg.blocks.push_back({b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()});
  }
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.frozen_blocks = j.at("frozen_blocks").get<int>();
  return cfg;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.params.check_shapes(ckpt.config);
  json header;
  header["config"] = config_to_json(ckpt.config);
  header["metadata"] = {{"seed", ckpt.meta.seed},
                        {"epoch", ckpt.meta.epoch},
                        {"fold", ckpt.meta.fold},
                        {"train_config", json::parse(ckpt.meta.train_config_json)}};
  json dir = json::array();
  std::string data;
  for (const auto& t : ckpt.params.tensors) {
    dir.push_back({{"name", t.name},
                   {"shape", {t.value.rows(), t.value.cols()}},
                   {"offset", data.size()},
                   {"frozen", t.frozen}});
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      std::uint32_t u;
      std::memcpy(&u, t.value.data() + i, 4);
      put_u32(data, u);
    }
  }
  header["tensors"] = std::move(dir);
  header["data_bytes"] = data.size();
  const std::string header_text = header.dump();

  std::string out(kMagic, 8);
  put_u32(out, ckpt.version);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out += data;

  // Write to a sibling temp file first so a crash never leaves half a model.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write " + tmp);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename to " + path);
}

Checkpoint load_checkpoint(const std::string& path, const TdnnConfig* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string in = ss.str();

  if (in.size() < 16) throw IoError(path + ": truncated checkpoint");
  if (std::memcmp(in.data(), kMagic, 8) != 0) throw IoError(path + ": not a PSVFCKPT file");
  Checkpoint ck;
  ck.version = get_u32(in, 8);
  if (ck.version != kCheckpointVersion)
    throw VersionMismatch(path + ": checkpoint version " + std::to_string(ck.version) +
                          ", supported " + std::to_string(kCheckpointVersion));
  const std::uint32_t header_len = get_u32(in, 12);
  if (in.size() < 16 + static_cast<std::size_t>(header_len))
    throw IoError(path + ": truncated checkpoint header");

  json header;
  try {
    header = json::parse(in.substr(16, header_len));
  } catch (const json::exception& e) {
    throw IoError(path + ": corrupt checkpoint header (" + e.what() + ")");
  }
  const std::size_t data_start = 16 + header_len;
  const std::size_t data_len = in.size() - data_start;

  try {
    ck.config = config_from_json(header.at("config"));
    try {
      ck.config.validate(false);
    } catch (const ConfigError& e) {
      throw ShapeMismatch(path + ": " + e.what());
    }
    if (header.at("data_bytes").get<std::size_t>() != data_len)
      throw IoError(path + ": truncated checkpoint data");
    const json& meta = header.at("metadata");
    ck.meta.seed = meta.at("seed").get<std::uint64_t>();
    ck.meta.epoch = meta.at("epoch").get<int>();
    ck.meta.fold = meta.at("fold").get<int>();
    ck.meta.train_config_json = meta.at("train_config").dump();

    for (const json& t : header.at("tensors")) {
      NamedTensor<float> nt;
      nt.name = t.at("name").get<std::string>();
      const auto rows = t.at("shape").at(0).get<Eigen::Index>();
      const auto cols = t.at("shape").at(1).get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::size_t>();
      nt.frozen = t.at("frozen").get<bool>();
      if (rows < 0 || cols < 0) throw ShapeMismatch(path + ": negative tensor shape");
      const std::size_t bytes = static_cast<std::size_t>(rows * cols) * 4;
      if (offset > data_len || bytes > data_len - offset)
        throw IoError(path + ": tensor " + nt.name + " lies outside the data section");
      nt.value.resize(rows, cols);
      for (Eigen::Index i = 0; i < nt.value.size(); ++i) {
        const std::uint32_t u = get_u32(in, data_start + offset + static_cast<std::size_t>(i) * 4);
        std::memcpy(nt.value.data() + i, &u, 4);
      }
      ck.params.tensors.push_back(std::move(nt));
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": malformed checkpoint header (" + e.what() + ")");
  }

  ck.params.check_shapes(ck.config);
  if (expected) {
    if (expected->blocks != ck.config.blocks || expected->embed_dim != ck.config.embed_dim) {
      std::ostringstream msg;
      msg << path << ": checkpoint architecture (embed_dim " << ck.config.embed_dim << ", "
          << ck.config.blocks.size() << " blocks) does not match the expected one (embed_dim "
          << expected->embed_dim << ", " << expected->blocks.size() << " blocks)";
      throw ShapeMismatch(msg.str());
    }
  }
  return ck;
}

}  // namespace psvf
