#include "dpl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace dpl {

using ojson = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'D', 'P', 'L', 'C', 'K', 'P', 'T', '\n'};

void append_bytes(std::string& buf, const void* data, size_t len) {
  buf.append(static_cast<const char*>(data), len);
}

template <typename T>
void append_pod(std::string& buf, T v) {
  append_bytes(buf, &v, sizeof(v));
}

template <typename T>
T read_pod(const std::string& buf, size_t& off) {
  if (off + sizeof(T) > buf.size()) throw DplError("checkpoint corrupt (truncated)");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

const std::vector<double>& CheckpointData::tensor(const std::string& name) const {
  for (const auto& [n, data] : tensors)
    if (n == name) return data;
  throw DplError("checkpoint is missing tensor '" + name + "'");
}

void save_checkpoint_file(const std::string& path, const ojson& meta,
                          const std::vector<ConstTensorView>& tensors) {
  ojson full_meta = meta;
  ojson tensor_list = ojson::array();
  for (const auto& t : tensors) {
    ojson entry;
    entry["name"] = t.name;
    entry["size"] = static_cast<int64_t>(t.size);
    tensor_list.push_back(std::move(entry));
  }
  full_meta["tensors"] = std::move(tensor_list);
  std::string meta_bytes = full_meta.dump();

  std::string body;
  append_pod<uint32_t>(body, kCheckpointVersion);
  append_pod<uint64_t>(body, meta_bytes.size());
  body += meta_bytes;
  for (const auto& t : tensors)
    append_bytes(body, t.data, static_cast<size_t>(t.size) * sizeof(double));
  uint64_t checksum = fnv1a64(body.data(), body.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DplError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  if (!out) throw DplError("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DplError("cannot open checkpoint: " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (raw.size() < sizeof(kMagic) + sizeof(uint64_t) ||
      std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0)
    throw DplError("not a checkpoint file: " + path);

  std::string body = raw.substr(sizeof(kMagic), raw.size() - sizeof(kMagic) - sizeof(uint64_t));
  uint64_t stored;
  std::memcpy(&stored, raw.data() + raw.size() - sizeof(uint64_t), sizeof(stored));
  if (fnv1a64(body.data(), body.size()) != stored)
    throw DplError("checkpoint corrupt (checksum mismatch): " + path);

  size_t off = 0;
  uint32_t version = read_pod<uint32_t>(body, off);
  if (version != kCheckpointVersion)
    throw DplError("checkpoint version mismatch: got " + std::to_string(version) + ", expected " +
                   std::to_string(kCheckpointVersion));
  uint64_t meta_len = read_pod<uint64_t>(body, off);
  if (off + meta_len > body.size()) throw DplError("checkpoint corrupt (truncated)");

  CheckpointData ckpt;
  try {
    ckpt.meta = ojson::parse(body.substr(off, meta_len));
  } catch (const std::exception& e) {
    throw DplError(std::string("checkpoint meta is invalid JSON: ") + e.what());
  }
  off += meta_len;

  for (const auto& entry : ckpt.meta.at("tensors")) {
    std::string name = entry.at("name").get<std::string>();
    auto count = entry.at("size").get<int64_t>();
    std::vector<double> data(static_cast<size_t>(count));
    size_t bytes = data.size() * sizeof(double);
    if (off + bytes > body.size()) throw DplError("checkpoint corrupt (truncated)");
    std::memcpy(data.data(), body.data() + off, bytes);
    off += bytes;
    ckpt.tensors.emplace_back(std::move(name), std::move(data));
  }
  if (off != body.size()) throw DplError("checkpoint has trailing bytes: " + path);
  return ckpt;
}

}  // namespace dpl
