#include "pbench/object_store.hpp"

namespace pbench {

Digest MemoryObjectStore::put(std::span<const std::uint8_t> bytes) {
  Digest d = sha256(bytes);
  objects_.try_emplace(d, bytes.begin(), bytes.end());
  return d;
}

Bytes MemoryObjectStore::get(const Digest& d) const {
  auto it = objects_.find(d);
  if (it == objects_.end()) throw IoError("object " + to_hex(d) + " not found");
  return it->second;
}

bool MemoryObjectStore::contains(const Digest& d) const { return objects_.count(d) != 0; }

bool MemoryObjectStore::intact(const Digest& d) const {
  auto it = objects_.find(d);
  return it != objects_.end() && sha256(it->second) == d;
}

DirectoryObjectStore::DirectoryObjectStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path DirectoryObjectStore::path_for(const Digest& d) const {
  const std::string hex = to_hex(d);
  return root_ / hex.substr(0, 2) / hex;
}

Digest DirectoryObjectStore::put(std::span<const std::uint8_t> bytes) {
  Digest d = sha256(bytes);
  const auto path = path_for(d);
  if (!std::filesystem::exists(path)) write_file_atomic(path, bytes);
  return d;
}

Bytes DirectoryObjectStore::get(const Digest& d) const { return read_file(path_for(d)); }

bool DirectoryObjectStore::contains(const Digest& d) const { return std::filesystem::exists(path_for(d)); }

bool DirectoryObjectStore::intact(const Digest& d) const {
  const auto path = path_for(d);
  if (!std::filesystem::is_regular_file(path)) return false;
  return hash_file(path) == d;
}

}  // namespace pbench
