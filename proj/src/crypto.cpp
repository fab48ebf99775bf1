#include "fraft/crypto.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <stdexcept>

namespace fraft {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(std::span<const std::uint8_t> data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0xf]);
  }
  return out;
}

std::optional<std::vector<std::uint8_t>> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

void append_be64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(v >> shift));
  }
}

bool Digest::is_zero() const {
  return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; });
}

std::string Digest::hex() const { return to_hex(bytes); }

std::optional<Digest> Digest::from_hex(std::string_view hex) {
  auto raw = fraft::from_hex(hex);
  if (!raw || raw->size() != 32) return std::nullopt;
  Digest d;
  std::copy(raw->begin(), raw->end(), d.bytes.begin());
  return d;
}

std::string Signature::hex() const { return to_hex(bytes); }

std::optional<Signature> Signature::from_hex(NodeId signer, std::string_view hex) {
  auto raw = fraft::from_hex(hex);
  if (!raw || raw->size() != 32) return std::nullopt;
  Signature s;
  s.signer = signer;
  std::copy(raw->begin(), raw->end(), s.bytes.begin());
  return s;
}

Digest sha256(std::span<const std::uint8_t> data) {
  Digest d;
  SHA256(data.data(), data.size(), d.bytes.data());
  return d;
}

Digest sha256(std::string_view data) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

namespace {

class DeterministicScheme final : public SignatureScheme {
 public:
  SecretKey derive_secret(NodeId id) const override {
    std::vector<std::uint8_t> buf(kSecretDomain.begin(), kSecretDomain.end());
    append_be64(buf, id);
    SecretKey sk;
    sk.bytes = sha256(buf).bytes;
    return sk;
  }

  PublicKey derive_public(const SecretKey& secret) const override {
    std::vector<std::uint8_t> buf(kPublicDomain.begin(), kPublicDomain.end());
    buf.insert(buf.end(), secret.bytes.begin(), secret.bytes.end());
    PublicKey pk;
    pk.bytes = sha256(buf).bytes;
    return pk;
  }

  Signature sign(NodeId signer, const SecretKey& secret, const Digest& digest) const override {
    Signature sig;
    sig.signer = signer;
    sig.bytes = tag(derive_public(secret), digest).bytes;
    return sig;
  }

  bool verify(const PublicKey& pub, const Digest& digest, const Signature& sig) const override {
    return tag(pub, digest).bytes == sig.bytes;
  }

 private:
  static Digest tag(const PublicKey& pub, const Digest& digest) {
    std::vector<std::uint8_t> buf(kSigDomain.begin(), kSigDomain.end());
    buf.insert(buf.end(), pub.bytes.begin(), pub.bytes.end());
    buf.insert(buf.end(), digest.bytes.begin(), digest.bytes.end());
    return sha256(buf);
  }

  static constexpr std::string_view kSecretDomain = "forensic-raft/secret/";
  static constexpr std::string_view kPublicDomain = "forensic-raft/public/";
  static constexpr std::string_view kSigDomain = "forensic-raft/sig/";
};

}  // namespace

const SignatureScheme& deterministic_scheme() {
  static const DeterministicScheme scheme;
  return scheme;
}

KeyRegistry KeyRegistry::create(std::uint64_t n, const SignatureScheme& scheme) {
  if (n < 3 || n % 2 == 0) {
    throw std::invalid_argument("node count must be odd and >= 3 (n = 2f+1)");
  }
  KeyRegistry reg(scheme);
  reg.secrets_.reserve(n);
  reg.publics_.reserve(n);
  for (NodeId id = 0; id < n; ++id) {
    SecretKey sk = scheme.derive_secret(id);
    reg.publics_.push_back(scheme.derive_public(sk));
    reg.secrets_.push_back(sk);
  }
  return reg;
}

const PublicKey& KeyRegistry::public_key(NodeId id) const {
  if (!known(id)) throw std::out_of_range("unknown node id");
  return publics_[id];
}

Signature KeyRegistry::sign(NodeId signer, const Digest& digest) const {
  if (!known(signer)) throw std::out_of_range("unknown node id");
  return scheme_->sign(signer, secrets_[signer], digest);
}

bool KeyRegistry::verify(NodeId signer, const Digest& digest, const Signature& sig) const {
  if (!known(signer)) return false;
  return scheme_->verify(publics_[signer], digest, sig);
}

}  // namespace fraft
