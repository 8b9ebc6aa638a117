#include "fsw/core/serialize.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fsw/errors.hpp"

namespace fsw {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'W', 'T'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("tensor container truncated");
  return v;
}

}  // namespace

void save_tensor_file(const std::string& path, const std::vector<std::pair<std::string, const Array*>>& tensors,
                      const std::string& meta) {
  static_assert(sizeof(double) == 8);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + tmp);
    os.write(kMagic, 4);
    write_pod<uint32_t>(os, kVersion);
    write_pod<uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_pod<uint64_t>(os, tensors.size());
    for (const auto& [name, arr] : tensors) {
      write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_pod<uint32_t>(os, static_cast<uint32_t>(arr->ndim()));
      for (int i = 0; i < arr->ndim(); ++i) write_pod<int64_t>(os, arr->dim(i));
      os.write(reinterpret_cast<const char*>(arr->data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(arr->numel())));
    }
    if (!os) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TensorFile load_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFile("tensor container not found: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4))
    throw ParseError("not a tensor container: " + path);
  const uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw ParseError("unsupported container version " + std::to_string(version) + " in " + path);
  TensorFile out;
  const uint64_t meta_len = read_pod<uint64_t>(is);
  out.meta.resize(meta_len);
  is.read(out.meta.data(), static_cast<std::streamsize>(meta_len));
  const uint64_t count = read_pod<uint64_t>(is);
  for (uint64_t t = 0; t < count; ++t) {
    const uint32_t name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t ndim = read_pod<uint32_t>(is);
    std::vector<int> shape;
    for (uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<int>(read_pod<int64_t>(is)));
    Array arr(shape);
    is.read(reinterpret_cast<char*>(arr.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(arr.numel())));
    if (!is) throw ParseError("tensor container truncated in " + path);
    out.tensors.emplace(std::move(name), std::move(arr));
  }
  return out;
}

}  // namespace fsw
