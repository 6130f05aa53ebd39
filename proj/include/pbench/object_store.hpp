#pragma once

#include <filesystem>
#include <map>
#include <span>

#include "pbench/digest.hpp"

namespace pbench {

/// Content-addressed, append-only blob store. An object is never overwritten once present.
class ObjectStore {
 public:
  virtual ~ObjectStore() = default;

  /// Stores `bytes` and returns their SHA-256. Storing existing content is a no-op.
  virtual Digest put(std::span<const std::uint8_t> bytes) = 0;
  /// Throws IoError when the object is absent.
  virtual Bytes get(const Digest& d) const = 0;
  virtual bool contains(const Digest& d) const = 0;
  /// True when the object exists and its content still hashes to its name.
  virtual bool intact(const Digest& d) const = 0;
};

class MemoryObjectStore final : public ObjectStore {
 public:
  Digest put(std::span<const std::uint8_t> bytes) override;
  Bytes get(const Digest& d) const override;
  bool contains(const Digest& d) const override;
  bool intact(const Digest& d) const override;
  std::size_t size() const noexcept { return objects_.size(); }

 private:
  std::map<Digest, Bytes> objects_;
};

/// Objects live at <root>/<first two hex>/<hex>.
class DirectoryObjectStore final : public ObjectStore {
 public:
  explicit DirectoryObjectStore(std::filesystem::path root);

  Digest put(std::span<const std::uint8_t> bytes) override;
  Bytes get(const Digest& d) const override;
  bool contains(const Digest& d) const override;
  bool intact(const Digest& d) const override;

  std::filesystem::path path_for(const Digest& d) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
};

}  // namespace pbench
