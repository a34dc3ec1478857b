//! Signatures, public-key encryption, hashing and an emulated attestation
//! service.
//!
//! Signatures are Ed25519. Encryption is an ECIES construction: an ephemeral
//! X25519 key agreement, HKDF-SHA256 key derivation and ChaCha20-Poly1305, so
//! any tampering with a ciphertext is detected at decryption. Randomness is
//! always supplied by the caller.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, Verifier};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::encoding::{DecodeError, Decoder, Encoder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("decryption failed")]
    DecryptionFailed,
    #[error("malformed encoding: {0}")]
    Decode(#[from] DecodeError),
}

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Deterministic CSPRNG for reproducible runs.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(PublicKey(out))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_hex()[..16])
    }
}

/// Signature bytes as carried on the wire. Verification of a value that is
/// not a well-formed 64-byte Ed25519 signature returns `false`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<u8>);

impl Signature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(&self.0);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let sig = Signature(dec.bytes()?.to_vec());
        dec.finish()?;
        Ok(sig)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Signature({})",
            hex::encode(&self.0[..self.0.len().min(8)])
        )
    }
}

/// Signing half of a key pair. The key material is zeroized on drop.
#[derive(Clone)]
pub struct SigningSecret(ed25519_dalek::SigningKey);

impl SigningSecret {
    pub fn public(&self) -> PublicKey {
        PublicKey(self.0.verifying_key().to_bytes())
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        SigningSecret(ed25519_dalek::SigningKey::from_bytes(bytes))
    }
}

impl fmt::Debug for SigningSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningSecret(<redacted> for {:?})", self.public())
    }
}

#[derive(Clone, Debug)]
pub struct SigningKeyPair {
    pub secret: SigningSecret,
    pub public: PublicKey,
}

impl SigningKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_secret(SigningSecret::from_bytes(&seed))
    }

    pub fn from_secret(secret: SigningSecret) -> Self {
        let public = secret.public();
        Self { secret, public }
    }
}

/// With a seed the key pair is reproducible; without one it is drawn from
/// the operating system's CSPRNG.
pub fn generate_signing_keypair(rng_seed: Option<u64>) -> SigningKeyPair {
    match rng_seed {
        Some(seed) => SigningKeyPair::generate(&mut seeded_rng(seed)),
        None => SigningKeyPair::generate(&mut rand::rngs::OsRng),
    }
}

pub fn sign(key: &SigningSecret, message: &[u8]) -> Signature {
    Signature(key.0.sign(message).to_bytes().to_vec())
}

pub fn verify(key: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&key.0) else {
        return false;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(&sig.0) else {
        return false;
    };
    vk.verify(message, &sig).is_ok()
}

/// X25519 public key that messages are encrypted to.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncryptionPublicKey(pub [u8; 32]);

impl fmt::Debug for EncryptionPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncryptionPublicKey({})", &hex::encode(self.0)[..16])
    }
}

#[derive(Clone)]
pub struct EncryptionSecret(x25519_dalek::StaticSecret);

impl fmt::Debug for EncryptionSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("EncryptionSecret(<redacted>)")
    }
}

#[derive(Clone, Debug)]
pub struct EncryptionKeyPair {
    pub secret: EncryptionSecret,
    pub public: EncryptionPublicKey,
}

impl EncryptionKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let secret = x25519_dalek::StaticSecret::random_from_rng(rng);
        let public = EncryptionPublicKey(x25519_dalek::PublicKey::from(&secret).to_bytes());
        Self {
            secret: EncryptionSecret(secret),
            public,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub ephemeral: [u8; 32],
    pub sealed: Vec<u8>,
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(&self.ephemeral).bytes(&self.sealed);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let ephemeral = dec
            .bytes()?
            .try_into()
            .map_err(|_| DecodeError::Invalid("ephemeral key length"))?;
        let sealed = dec.bytes()?.to_vec();
        dec.finish()?;
        Ok(Self { ephemeral, sealed })
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes)", self.sealed.len())
    }
}

fn message_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let mut info = Vec::with_capacity(64);
    info.extend_from_slice(ephemeral);
    info.extend_from_slice(recipient);
    let mut key = [0u8; 32];
    Hkdf::<Sha256>::new(Some(b"teechan-ecies-v1"), shared)
        .expand(&info, &mut key)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    key
}

// Each message key is used exactly once, so a fixed nonce is sound.
const NONCE: [u8; 12] = [0; 12];

pub fn encrypt<R: RngCore + CryptoRng>(
    key: &EncryptionPublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Ciphertext {
    let eph = x25519_dalek::StaticSecret::random_from_rng(rng);
    let eph_pub = x25519_dalek::PublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&x25519_dalek::PublicKey::from(key.0));
    let k = message_key(shared.as_bytes(), &eph_pub, &key.0);
    let sealed = ChaCha20Poly1305::new(Key::from_slice(&k))
        .encrypt(Nonce::from_slice(&NONCE), plaintext)
        .expect("in-memory encryption cannot fail");
    Ciphertext {
        ephemeral: eph_pub,
        sealed,
    }
}

pub fn decrypt(key: &EncryptionSecret, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    let recipient = x25519_dalek::PublicKey::from(&key.0).to_bytes();
    let shared = key
        .0
        .diffie_hellman(&x25519_dalek::PublicKey::from(ct.ephemeral));
    let k = message_key(shared.as_bytes(), &ct.ephemeral, &recipient);
    ChaCha20Poly1305::new(Key::from_slice(&k))
        .decrypt(Nonce::from_slice(&NONCE), ct.sealed.as_slice())
        .map_err(|_| CryptoError::DecryptionFailed)
}

/// A signed statement from the attestation service that an enclave with code
/// identity `measurement` produced `report_data`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quote {
    pub measurement: Digest,
    pub report_data: Vec<u8>,
    pub authority_signature: Signature,
}

impl Quote {
    fn signed_body(measurement: &Digest, report_data: &[u8]) -> Vec<u8> {
        let mut body = Vec::with_capacity(32 + report_data.len());
        body.extend_from_slice(measurement.as_bytes());
        body.extend_from_slice(report_data);
        body
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(self.measurement.as_bytes())
            .bytes(&self.report_data)
            .bytes(&self.authority_signature.0);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let measurement = Digest(
            dec.bytes()?
                .try_into()
                .map_err(|_| DecodeError::Invalid("measurement length"))?,
        );
        let report_data = dec.bytes()?.to_vec();
        let authority_signature = Signature(dec.bytes()?.to_vec());
        dec.finish()?;
        Ok(Self {
            measurement,
            report_data,
            authority_signature,
        })
    }
}

pub fn quote_create(authority: &SigningSecret, measurement: Digest, report_data: &[u8]) -> Quote {
    Quote {
        measurement,
        report_data: report_data.to_vec(),
        authority_signature: sign(authority, &Quote::signed_body(&measurement, report_data)),
    }
}

pub fn quote_verify(
    authority_pk: &PublicKey,
    quote: &Quote,
    expected_measurement: &Digest,
) -> bool {
    quote.measurement == *expected_measurement
        && verify(
            authority_pk,
            &Quote::signed_body(&quote.measurement, &quote.report_data),
            &quote.authority_signature,
        )
}

/// Code identity of an enclave build.
pub fn measurement_of(build_id: &str) -> Digest {
    hash(build_id.as_bytes())
}

/// Stand-in for the platform attestation service: one signing key whose
/// public half every verifier holds out of band.
#[derive(Clone, Debug)]
pub struct AttestationAuthority {
    key: SigningKeyPair,
}

impl AttestationAuthority {
    pub fn new(key: SigningKeyPair) -> Self {
        Self { key }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(generate_signing_keypair(Some(seed)))
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public
    }

    pub fn quote(&self, measurement: Digest, report_data: &[u8]) -> Quote {
        quote_create(&self.key.secret, measurement, report_data)
    }
}
