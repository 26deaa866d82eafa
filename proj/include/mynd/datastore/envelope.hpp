#pragma once

// Hybrid encryption envelope.
//
// A fresh 256-bit key encrypts the payload with an AEAD cipher; the key is
// wrapped for the recipient's X25519 public key with a sealed box. Only the
// holder of the matching private key can unwrap it.
//
// Byte layout (integers little-endian):
//
//   offset  size  field
//   0       4     magic "MYNE"
//   4       2     version (1)
//   6       1     key-wrap algorithm id   (1 = X25519 sealed box)
//   7       1     payload algorithm id    (1 = XChaCha20-Poly1305-IETF)
//   8       16    recipient key id        (BLAKE2b-128 of the public key)
//   24      2     wrapped key length W
//   26      W     wrapped key
//   26+W    1     nonce length N
//   27+W    N     nonce
//   27+W+N  8     ciphertext length C
//   35+W+N  C     ciphertext (payload || 16-byte tag)
//
// Everything before the ciphertext is bound as associated data, so any
// modified byte fails authentication.

#include <array>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <sodium.h>

#include "mynd/bytes.hpp"

namespace mynd::datastore {

inline constexpr std::string_view kEnvelopeMagic = "MYNE";
inline constexpr std::uint16_t kEnvelopeVersion = 1;
inline constexpr std::uint8_t kWrapX25519SealedBox = 1;
inline constexpr std::uint8_t kAeadXChaCha20Poly1305 = 1;
inline constexpr std::size_t kKeyIdBytes = 16;

/// Raised for every decryption failure; deliberately carries no detail
/// about which check failed.
class AuthenticationError : public std::runtime_error {
public:
  AuthenticationError() : std::runtime_error("envelope authentication failed") {}
};

class CryptoUnavailable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw CryptoUnavailable("libsodium initialisation failed");
}

using PublicKey = std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES>;

/// X25519 secret key; wiped on destruction.
class SecretKey {
public:
  SecretKey() = default;
  explicit SecretKey(std::span<const std::uint8_t, crypto_box_SECRETKEYBYTES> bytes) {
    std::copy(bytes.begin(), bytes.end(), key_.begin());
  }
  SecretKey(const SecretKey&) = default;
  SecretKey& operator=(const SecretKey&) = default;
  ~SecretKey() { sodium_memzero(key_.data(), key_.size()); }

  const std::uint8_t* data() const { return key_.data(); }
  std::uint8_t* data() { return key_.data(); }
  static constexpr std::size_t size() { return crypto_box_SECRETKEYBYTES; }

  PublicKey public_key() const {
    PublicKey pk{};
    crypto_scalarmult_base(pk.data(), key_.data());
    return pk;
  }

private:
  std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> key_{};
};

struct KeyPair {
  PublicKey public_key{};
  SecretKey secret_key;

  static KeyPair generate() {
    ensure_sodium();
    KeyPair kp;
    crypto_box_keypair(kp.public_key.data(), kp.secret_key.data());
    return kp;
  }
};

inline std::array<std::uint8_t, kKeyIdBytes> key_id(const PublicKey& pk) {
  std::array<std::uint8_t, kKeyIdBytes> id{};
  crypto_generichash(id.data(), id.size(), pk.data(), pk.size(), nullptr, 0);
  return id;
}

inline Bytes encrypt_envelope(std::span<const std::uint8_t> plain, const PublicKey& recipient) {
  ensure_sodium();
  std::array<std::uint8_t, crypto_aead_xchacha20poly1305_ietf_KEYBYTES> key{};
  crypto_aead_xchacha20poly1305_ietf_keygen(key.data());
  std::array<std::uint8_t, crypto_aead_xchacha20poly1305_ietf_NPUBBYTES> nonce{};
  randombytes_buf(nonce.data(), nonce.size());
  std::array<std::uint8_t, crypto_box_SEALBYTES + key.size()> wrapped{};
  if (crypto_box_seal(wrapped.data(), key.data(), key.size(), recipient.data()) != 0) {
    sodium_memzero(key.data(), key.size());
    throw std::runtime_error("encrypt_envelope: key wrapping failed");
  }

  ByteWriter w;
  w.raw(kEnvelopeMagic);
  w.u16(kEnvelopeVersion);
  w.u8(kWrapX25519SealedBox);
  w.u8(kAeadXChaCha20Poly1305);
  w.raw(key_id(recipient));
  w.u16(static_cast<std::uint16_t>(wrapped.size()));
  w.raw(wrapped);
  w.u8(static_cast<std::uint8_t>(nonce.size()));
  w.raw(nonce);
  const std::uint64_t clen = plain.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES;
  w.u64(clen);

  Bytes out = w.take();
  const std::size_t ad_len = out.size();
  out.resize(ad_len + clen);
  unsigned long long written = 0;
  crypto_aead_xchacha20poly1305_ietf_encrypt(out.data() + ad_len, &written, plain.data(), plain.size(), out.data(),
                                             ad_len, nullptr, nonce.data(), key.data());
  sodium_memzero(key.data(), key.size());
  return out;
}

/// Returns the payload only if every check passes; otherwise throws
/// AuthenticationError and releases nothing.
inline Bytes decrypt_envelope(std::span<const std::uint8_t> env, const SecretKey& sk) {
  ensure_sodium();
  try {
    ByteReader r(env);
    if (r.str(kEnvelopeMagic.size()) != kEnvelopeMagic) throw AuthenticationError();
    if (r.u16() != kEnvelopeVersion) throw AuthenticationError();
    if (r.u8() != kWrapX25519SealedBox) throw AuthenticationError();
    if (r.u8() != kAeadXChaCha20Poly1305) throw AuthenticationError();
    const PublicKey pk = sk.public_key();
    const auto expected_id = key_id(pk);
    const auto id = r.raw(kKeyIdBytes);
    if (sodium_memcmp(id.data(), expected_id.data(), kKeyIdBytes) != 0) throw AuthenticationError();
    const std::uint16_t wlen = r.u16();
    if (wlen != crypto_box_SEALBYTES + crypto_aead_xchacha20poly1305_ietf_KEYBYTES) throw AuthenticationError();
    const auto wrapped = r.raw(wlen);
    if (r.u8() != crypto_aead_xchacha20poly1305_ietf_NPUBBYTES) throw AuthenticationError();
    const auto nonce = r.raw(crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
    const std::uint64_t clen = r.u64();
    const std::size_t ad_len = r.position();
    if (clen < crypto_aead_xchacha20poly1305_ietf_ABYTES || clen != r.remaining()) throw AuthenticationError();
    const auto cipher = r.raw(static_cast<std::size_t>(clen));

    std::array<std::uint8_t, crypto_aead_xchacha20poly1305_ietf_KEYBYTES> key{};
    if (crypto_box_seal_open(key.data(), wrapped.data(), wrapped.size(), pk.data(), sk.data()) != 0)
      throw AuthenticationError();
    Bytes plain(static_cast<std::size_t>(clen) - crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long plen = 0;
    const int rc = crypto_aead_xchacha20poly1305_ietf_decrypt(plain.data(), &plen, nullptr, cipher.data(),
                                                              cipher.size(), env.data(), ad_len, nonce.data(),
                                                              key.data());
    sodium_memzero(key.data(), key.size());
    if (rc != 0) {
      sodium_memzero(plain.data(), plain.size());
      throw AuthenticationError();
    }
    return plain;
  } catch (const TruncatedInput&) {
    throw AuthenticationError();
  }
}

/// 128 random bits from the OS CSPRNG, base64url without padding (22 chars).
inline std::string generate_subject_id() {
  ensure_sodium();
  std::array<std::uint8_t, 16> raw{};
  randombytes_buf(raw.data(), raw.size());
  char buf[sodium_base64_ENCODED_LEN(16, sodium_base64_VARIANT_URLSAFE_NO_PADDING)];
  sodium_bin2base64(buf, sizeof buf, raw.data(), raw.size(), sodium_base64_VARIANT_URLSAFE_NO_PADDING);
  return buf;
}

inline std::string to_hex(std::span<const std::uint8_t> b) {
  std::string out(b.size() * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), b.data(), b.size());
  out.pop_back();
  return out;
}

/// BLAKE2b digest, hex encoded.
inline std::string digest_hex(std::span<const std::uint8_t> data, std::size_t bytes = 16) {
  ensure_sodium();
  std::vector<std::uint8_t> h(bytes);
  crypto_generichash(h.data(), h.size(), data.data(), data.size(), nullptr, 0);
  return to_hex(h);
}

// Key files hold one line: "<tag>:<hex>".
inline constexpr std::string_view kPublicKeyTag = "mynd-x25519-public";
inline constexpr std::string_view kSecretKeyTag = "mynd-x25519-secret";

namespace detail {

inline std::vector<std::uint8_t> read_key_file(const std::string& path, std::string_view tag, std::size_t len) {
  std::ifstream is(path);
  std::string line;
  if (!is || !std::getline(is, line)) throw std::runtime_error("cannot read key file " + path);
  const std::string prefix = std::string(tag) + ":";
  if (line.rfind(prefix, 0) != 0) throw std::runtime_error("key file " + path + " has the wrong type");
  const std::string hex = line.substr(prefix.size());
  std::vector<std::uint8_t> out(len);
  std::size_t got = 0;
  if (sodium_hex2bin(out.data(), out.size(), hex.data(), hex.size(), nullptr, &got, nullptr) != 0 || got != len)
    throw std::runtime_error("key file " + path + " is malformed");
  return out;
}

inline void write_key_file(const std::string& path, std::string_view tag, std::span<const std::uint8_t> key) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write key file " + path);
  os << tag << ':' << to_hex(key) << '\n';
}

} // namespace detail

inline void save_public_key(const std::string& path, const PublicKey& pk) {
  detail::write_key_file(path, kPublicKeyTag, pk);
}

inline void save_secret_key(const std::string& path, const SecretKey& sk) {
  detail::write_key_file(path, kSecretKeyTag, std::span<const std::uint8_t>(sk.data(), sk.size()));
}

inline PublicKey load_public_key(const std::string& path) {
  ensure_sodium();
  const auto b = detail::read_key_file(path, kPublicKeyTag, crypto_box_PUBLICKEYBYTES);
  PublicKey pk{};
  std::copy(b.begin(), b.end(), pk.begin());
  return pk;
}

inline SecretKey load_secret_key(const std::string& path) {
  ensure_sodium();
  auto b = detail::read_key_file(path, kSecretKeyTag, crypto_box_SECRETKEYBYTES);
  SecretKey sk(std::span<const std::uint8_t, crypto_box_SECRETKEYBYTES>(b.data(), crypto_box_SECRETKEYBYTES));
  sodium_memzero(b.data(), b.size());
  return sk;
}

} // namespace mynd::datastore
