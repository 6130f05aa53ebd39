#include "pbench/signing.hpp"

#include <openssl/evp.h>

#include <cstring>

extern "C" {
#include "api.h"
}

namespace pbench {

namespace {

class MlDsa65 final : public SignatureScheme {
 public:
  std::string_view name() const noexcept override { return "ML-DSA-65"; }
  std::size_t public_key_size() const noexcept override { return PQCLEAN_MLDSA65_CLEAN_CRYPTO_PUBLICKEYBYTES; }
  std::size_t secret_key_size() const noexcept override { return PQCLEAN_MLDSA65_CLEAN_CRYPTO_SECRETKEYBYTES; }
  std::size_t signature_size() const noexcept override { return PQCLEAN_MLDSA65_CLEAN_CRYPTO_BYTES; }

  std::pair<Bytes, Bytes> keygen() const override {
    Bytes pk(public_key_size()), sk(secret_key_size());
    if (PQCLEAN_MLDSA65_CLEAN_crypto_sign_keypair(pk.data(), sk.data()) != 0)
      throw SigningError("ML-DSA-65 key generation failed");
    return {std::move(pk), std::move(sk)};
  }

  Bytes sign(std::span<const std::uint8_t> sk, std::span<const std::uint8_t> msg) const override {
    if (sk.size() != secret_key_size()) throw SigningError("ML-DSA-65 secret key has the wrong length");
    Bytes sig(signature_size());
    std::size_t len = 0;
    if (PQCLEAN_MLDSA65_CLEAN_crypto_sign_signature_ctx(sig.data(), &len, msg.data(), msg.size(), nullptr, 0,
                                                        sk.data()) != 0)
      throw SigningError("ML-DSA-65 signing failed");
    sig.resize(len);
    return sig;
  }

  bool verify(std::span<const std::uint8_t> pk, std::span<const std::uint8_t> msg,
              std::span<const std::uint8_t> sig) const override {
    if (pk.size() != public_key_size()) throw SigningError("ML-DSA-65 public key has the wrong length");
    return PQCLEAN_MLDSA65_CLEAN_crypto_sign_verify_ctx(sig.data(), sig.size(), msg.data(), msg.size(), nullptr, 0,
                                                        pk.data()) == 0;
  }
};

struct PkeyDeleter {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

class Ed25519 final : public SignatureScheme {
 public:
  std::string_view name() const noexcept override { return "Ed25519"; }
  std::size_t public_key_size() const noexcept override { return 32; }
  std::size_t secret_key_size() const noexcept override { return 32; }
  std::size_t signature_size() const noexcept override { return 64; }

  std::pair<Bytes, Bytes> keygen() const override {
    EVP_PKEY* raw = nullptr;
    EVP_PKEY_CTX* ctx = EVP_PKEY_CTX_new_id(EVP_PKEY_ED25519, nullptr);
    const bool ok = ctx && EVP_PKEY_keygen_init(ctx) == 1 && EVP_PKEY_keygen(ctx, &raw) == 1;
    EVP_PKEY_CTX_free(ctx);
    PkeyPtr key(raw);
    if (!ok) throw SigningError("Ed25519 key generation failed");
    Bytes pk(32), sk(32);
    std::size_t pl = 32, sl = 32;
    if (EVP_PKEY_get_raw_public_key(key.get(), pk.data(), &pl) != 1 ||
        EVP_PKEY_get_raw_private_key(key.get(), sk.data(), &sl) != 1)
      throw SigningError("Ed25519 key export failed");
    return {std::move(pk), std::move(sk)};
  }

  Bytes sign(std::span<const std::uint8_t> sk, std::span<const std::uint8_t> msg) const override {
    if (sk.size() != 32) throw SigningError("Ed25519 secret key has the wrong length");
    PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, sk.data(), sk.size()));
    MdCtxPtr ctx(EVP_MD_CTX_new());
    Bytes sig(64);
    std::size_t len = sig.size();
    if (!key || !ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1 ||
        EVP_DigestSign(ctx.get(), sig.data(), &len, msg.data(), msg.size()) != 1)
      throw SigningError("Ed25519 signing failed");
    sig.resize(len);
    return sig;
  }

  bool verify(std::span<const std::uint8_t> pk, std::span<const std::uint8_t> msg,
              std::span<const std::uint8_t> sig) const override {
    if (pk.size() != 32) throw SigningError("Ed25519 public key has the wrong length");
    PkeyPtr key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pk.data(), pk.size()));
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!key || !ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1)
      throw SigningError("Ed25519 verifier setup failed");
    return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size()) == 1;
  }
};

const SignatureScheme* const kSchemes[] = {
    [] {
      static const MlDsa65 s;
      return static_cast<const SignatureScheme*>(&s);
    }(),
    [] {
      static const Ed25519 s;
      return static_cast<const SignatureScheme*>(&s);
    }(),
};

class Writer {
 public:
  explicit Writer(std::string_view magic) : out_(magic.begin(), magic.end()) {}
  Writer& u8(std::uint8_t v) {
    out_.push_back(v);
    return *this;
  }
  Writer& u16str(std::string_view s) {
    if (s.size() > 0xffff) throw SigningError("field too long");
    for (int k = 0; k < 2; ++k) out_.push_back(static_cast<std::uint8_t>(s.size() >> (8 * k)));
    out_.insert(out_.end(), s.begin(), s.end());
    return *this;
  }
  Writer& raw(std::span<const std::uint8_t> b) {
    out_.insert(out_.end(), b.begin(), b.end());
    return *this;
  }
  Writer& u32bytes(std::span<const std::uint8_t> b) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(b.size() >> (8 * k)));
    return raw(b);
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, std::string_view magic, const char* what) : b_(b), what_(what) {
    if (b.size() < magic.size() || std::memcmp(b.data(), magic.data(), magic.size()) != 0)
      throw SigningError(std::string(what) + ": bad magic");
    pos_ = magic.size();
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::string u16str() {
    need(2);
    const std::size_t n = b_[pos_] | (b_[pos_ + 1] << 8);
    pos_ += 2;
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Bytes raw(std::size_t n) {
    need(n);
    Bytes out(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  Bytes u32bytes() {
    need(4);
    std::size_t n = 0;
    for (int k = 0; k < 4; ++k) n |= static_cast<std::size_t>(b_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return raw(n);
  }
  void finish() const {
    if (pos_ != b_.size()) throw SigningError(std::string(what_) + ": trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw SigningError(std::string(what_) + ": truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  const char* what_;
};

Digest fingerprint(std::span<const std::uint8_t> pk) { return sha256(pk); }

std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

const SignatureScheme& find_scheme(std::string_view name) {
  for (const auto* s : kSchemes)
    if (s->name() == name) return *s;
  throw UnsupportedScheme("unsupported signature scheme '" + std::string(name) + "'");
}

std::vector<std::string> registered_schemes() {
  std::vector<std::string> out;
  for (const auto* s : kSchemes) out.emplace_back(s->name());
  return out;
}

std::string_view role_name(Role r) noexcept {
  switch (r) {
    case Role::device: return "device";
    case Role::annotator: return "annotator";
    case Role::pipeline: return "pipeline";
    case Role::orchestrator: return "orchestrator";
    case Role::trainer: return "trainer";
  }
  return "?";
}

Role parse_role(std::string_view name) {
  for (Role r : kAllRoles)
    if (role_name(r) == name) return r;
  throw SigningError("unknown role '" + std::string(name) + "'");
}

Stage stage_of(Role r) noexcept { return static_cast<Stage>(static_cast<int>(r)); }
Role role_for(Stage s) noexcept { return static_cast<Role>(static_cast<int>(s)); }

StageKeypair keygen(Role role, std::string_view scheme) {
  const auto& s = find_scheme(scheme);
  auto [pk, sk] = s.keygen();
  return {role, std::string(s.name()), std::move(pk), std::move(sk)};
}

Bytes signing_message(Stage stage, const Digest& manifest_hash) {
  Bytes msg = to_bytes("PBENCH-SIG/1");
  msg.push_back(0x00);
  const auto name = stage_name(stage);
  msg.insert(msg.end(), name.begin(), name.end());
  msg.push_back(0x00);
  msg.insert(msg.end(), manifest_hash.begin(), manifest_hash.end());
  return msg;
}

StageSignature sign_manifest(const StageKeypair& kp, Stage stage, std::span<const std::uint8_t> manifest_bytes) {
  if (stage_of(kp.role) != stage)
    throw RoleMismatch("role " + std::string(role_name(kp.role)) + " may not sign the " +
                       std::string(stage_name(stage)) + " stage");
  const auto& scheme = find_scheme(kp.scheme);
  StageSignature sig;
  sig.stage = stage;
  sig.manifest_hash = sha256(manifest_bytes);
  sig.signer_fingerprint = fingerprint(kp.public_key);
  sig.signature = scheme.sign(kp.secret_key, signing_message(stage, sig.manifest_hash));
  return sig;
}

StageSignature sign_manifest(const StageKeypair& kp, Stage stage, std::string_view manifest_text) {
  return sign_manifest(kp, stage, as_bytes(manifest_text));
}

bool verify_manifest(const PublicKey& pk, Stage stage, std::span<const std::uint8_t> manifest_bytes,
                     const StageSignature& sig) {
  const auto& scheme = find_scheme(pk.scheme);
  if (pk.key.size() != scheme.public_key_size())
    throw SigningError("public key has " + std::to_string(pk.key.size()) + " bytes, " + std::string(scheme.name()) +
                       " needs " + std::to_string(scheme.public_key_size()));
  if (sig.stage != stage) return false;
  const Digest h = sha256(manifest_bytes);
  if (sig.manifest_hash != h) return false;
  if (sig.signer_fingerprint != fingerprint(pk.key)) return false;
  return scheme.verify(pk.key, signing_message(stage, h), sig.signature);
}

bool verify_manifest(const PublicKey& pk, Stage stage, std::string_view manifest_text, const StageSignature& sig) {
  return verify_manifest(pk, stage, as_bytes(manifest_text), sig);
}

Bytes serialize_public_key(const PublicKey& pk) {
  return Writer("PBK1").u8(1).u16str(pk.scheme).u16str(role_name(pk.role)).u32bytes(pk.key).take();
}

Bytes serialize_keypair(const StageKeypair& kp) {
  return Writer("PBK1")
      .u8(2)
      .u16str(kp.scheme)
      .u16str(role_name(kp.role))
      .u32bytes(kp.public_key)
      .u32bytes(kp.secret_key)
      .take();
}

PublicKey parse_public_key(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "PBK1", "key file");
  const auto kind = r.u8();
  PublicKey pk;
  pk.scheme = r.u16str();
  pk.role = parse_role(r.u16str());
  pk.key = r.u32bytes();
  if (kind == 2) r.u32bytes();
  else if (kind != 1) throw SigningError("key file: unknown kind " + std::to_string(kind));
  r.finish();
  return pk;
}

StageKeypair parse_keypair(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "PBK1", "key file");
  if (r.u8() != 2) throw SigningError("key file holds no secret key");
  StageKeypair kp;
  kp.scheme = r.u16str();
  kp.role = parse_role(r.u16str());
  kp.public_key = r.u32bytes();
  kp.secret_key = r.u32bytes();
  r.finish();
  return kp;
}

Bytes serialize_signature(const StageSignature& s) {
  return Writer("PBS1")
      .u16str(stage_name(s.stage))
      .raw(as_bytes(to_hex(s.manifest_hash)))
      .raw(s.signer_fingerprint)
      .u32bytes(s.signature)
      .take();
}

StageSignature parse_signature(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "PBS1", "signature file");
  StageSignature s;
  try {
    s.stage = parse_stage(r.u16str());
    const Bytes hex = r.raw(64);
    s.manifest_hash = digest_from_hex(std::string_view(reinterpret_cast<const char*>(hex.data()), hex.size()));
  } catch (const SigningError&) {
    throw;
  } catch (const Error& e) {
    throw SigningError(std::string("signature file: ") + e.what());
  }
  const Bytes fp = r.raw(32);
  std::copy(fp.begin(), fp.end(), s.signer_fingerprint.begin());
  s.signature = r.u32bytes();
  r.finish();
  return s;
}

}  // namespace pbench
