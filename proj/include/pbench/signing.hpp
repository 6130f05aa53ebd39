#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbench/digest.hpp"
#include "pbench/manifest.hpp"

namespace pbench {

class SigningError : public Error {
 public:
  using Error::Error;
};

class UnsupportedScheme : public SigningError {
 public:
  using SigningError::SigningError;
};

class RoleMismatch : public SigningError {
 public:
  using SigningError::SigningError;
};

/// Pluggable signature backend.
class SignatureScheme {
 public:
  virtual ~SignatureScheme() = default;
  virtual std::string_view name() const noexcept = 0;
  virtual std::size_t public_key_size() const noexcept = 0;
  virtual std::size_t secret_key_size() const noexcept = 0;
  virtual std::size_t signature_size() const noexcept = 0;
  /// Returns {public key, secret key}.
  virtual std::pair<Bytes, Bytes> keygen() const = 0;
  virtual Bytes sign(std::span<const std::uint8_t> secret_key, std::span<const std::uint8_t> message) const = 0;
  virtual bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> message,
                      std::span<const std::uint8_t> signature) const = 0;
};

inline constexpr std::string_view kDefaultScheme = "ML-DSA-65";

/// Looks up a registered scheme ("ML-DSA-65", "Ed25519"). Throws UnsupportedScheme.
const SignatureScheme& find_scheme(std::string_view name);
std::vector<std::string> registered_schemes();

enum class Role { device, annotator, pipeline, orchestrator, trainer };
inline constexpr Role kAllRoles[] = {Role::device, Role::annotator, Role::pipeline, Role::orchestrator, Role::trainer};

std::string_view role_name(Role r) noexcept;
Role parse_role(std::string_view name);
/// The one stage each role may sign.
Stage stage_of(Role r) noexcept;
Role role_for(Stage s) noexcept;

struct PublicKey {
  std::string scheme;
  Role role = Role::device;
  Bytes key;
};

struct StageKeypair {
  Role role = Role::device;
  std::string scheme;
  Bytes public_key;
  Bytes secret_key;

  PublicKey public_part() const { return {scheme, role, public_key}; }
};

struct StageSignature {
  Stage stage = Stage::raw;
  Digest manifest_hash{};
  Digest signer_fingerprint{};  // SHA-256 of the signer's public key
  Bytes signature;
  bool operator==(const StageSignature&) const = default;
};

StageKeypair keygen(Role role, std::string_view scheme = kDefaultScheme);

/// "PBENCH-SIG/1" || 0x00 || stage || 0x00 || SHA-256(manifest bytes)
Bytes signing_message(Stage stage, const Digest& manifest_hash);

/// Throws RoleMismatch before signing when `stage` is not the keypair's stage.
StageSignature sign_manifest(const StageKeypair& kp, Stage stage, std::span<const std::uint8_t> manifest_bytes);
StageSignature sign_manifest(const StageKeypair& kp, Stage stage, std::string_view manifest_text);

/// False for any mismatch or bad signature. Throws only when the key encoding is malformed.
bool verify_manifest(const PublicKey& pk, Stage stage, std::span<const std::uint8_t> manifest_bytes,
                     const StageSignature& sig);
bool verify_manifest(const PublicKey& pk, Stage stage, std::string_view manifest_text, const StageSignature& sig);

/// PBK1, kind (1 public, 2 secret), u16 scheme, u16 role, u32 public key, [u32 secret key].
Bytes serialize_public_key(const PublicKey& pk);
Bytes serialize_keypair(const StageKeypair& kp);
PublicKey parse_public_key(std::span<const std::uint8_t> bytes);
StageKeypair parse_keypair(std::span<const std::uint8_t> bytes);

/// PBS1, u16 stage name, 64 hex characters of the manifest hash, 32-byte fingerprint, u32 signature.
Bytes serialize_signature(const StageSignature& s);
StageSignature parse_signature(std::span<const std::uint8_t> bytes);

}  // namespace pbench
