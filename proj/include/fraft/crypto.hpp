#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fraft {

using NodeId = std::uint64_t;

// 32-byte hash output. Digests double as the message that gets signed:
// certificates sign a hash pointer or a request digest, never raw bytes.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  bool operator==(const Digest&) const = default;
  auto operator<=>(const Digest&) const = default;
  bool is_zero() const;
  std::string hex() const;
  static Digest zero() { return {}; }
  static std::optional<Digest> from_hex(std::string_view hex);
};

struct Signature {
  NodeId signer = 0;
  std::array<std::uint8_t, 32> bytes{};

  bool operator==(const Signature&) const = default;
  std::string hex() const;
  static std::optional<Signature> from_hex(NodeId signer, std::string_view hex);
};

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);

struct SecretKey {
  std::array<std::uint8_t, 32> bytes{};
};
struct PublicKey {
  std::array<std::uint8_t, 32> bytes{};
  bool operator==(const PublicKey&) const = default;
};

// The signing primitive is pluggable so transcripts stay reproducible under
// whichever scheme is configured. The default is deterministic and keyed by
// SHA-256; it round-trips and rejects wrong keys/digests, which is all the
// protocol relies on (unforgeability is part of the node fault model, not
// something the simulator's adversary attempts to break).
class SignatureScheme {
 public:
  virtual ~SignatureScheme() = default;
  virtual SecretKey derive_secret(NodeId id) const = 0;
  virtual PublicKey derive_public(const SecretKey& secret) const = 0;
  virtual Signature sign(NodeId signer, const SecretKey& secret, const Digest& digest) const = 0;
  virtual bool verify(const PublicKey& pub, const Digest& digest, const Signature& sig) const = 0;
};

const SignatureScheme& deterministic_scheme();

// Static registry standing in for a PKI: every party can resolve any node's
// public key, and tests can re-create the exact same keys from the node count
// alone.
class KeyRegistry {
 public:
  // n must be odd and >= 3 (n = 2f+1).
  static KeyRegistry create(std::uint64_t n, const SignatureScheme& scheme = deterministic_scheme());

  std::uint64_t size() const { return publics_.size(); }
  std::uint64_t f() const { return (size() - 1) / 2; }
  bool known(NodeId id) const { return id < publics_.size(); }
  const PublicKey& public_key(NodeId id) const;

  Signature sign(NodeId signer, const Digest& digest) const;
  bool verify(NodeId signer, const Digest& digest, const Signature& sig) const;

 private:
  KeyRegistry(const SignatureScheme& scheme) : scheme_(&scheme) {}
  const SignatureScheme* scheme_;
  std::vector<SecretKey> secrets_;
  std::vector<PublicKey> publics_;
};

void append_be64(std::vector<std::uint8_t>& out, std::uint64_t v);

std::string to_hex(std::span<const std::uint8_t> data);
std::optional<std::vector<std::uint8_t>> from_hex(std::string_view hex);

}  // namespace fraft
