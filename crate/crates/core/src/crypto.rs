// SPDX-License-Identifier: Apache-2.0

//! Deterministic mock cryptography.
//!
//! Hashing is SHA-256. Signatures and the VRF are keyed hashes; verification
//! recomputes them through a [`KeyRegistry`] that maps public keys back to
//! their secret keys. The registry is owned by the simulation kernel and handed
//! to nodes read-only, so the protocol only ever sees the `evaluate`/`verify`
//! interface. None of this is meant to be secure.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;

const DOMAIN_PK: &[u8] = b"acp/pk";
const DOMAIN_VRF: &[u8] = b"acp/vrf";
const DOMAIN_VRF_PROOF: &[u8] = b"acp/vrf-proof";
const DOMAIN_SIG: &[u8] = b"acp/sig";

/// A 32-byte hash value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight bytes in hex; used in trace details.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
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

/// Hash of the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PublicKey(pub [u8; DIGEST_LEN]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SecretKey([u8; DIGEST_LEN]);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub public_key: PublicKey,
    pub secret_key: SecretKey,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature(pub [u8; DIGEST_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VrfOutput {
    pub value: Digest,
    pub proof: [u8; DIGEST_LEN],
}

pub fn vrf_keygen(seed: &[u8; 32]) -> KeyPair {
    let secret_key = SecretKey(*seed);
    KeyPair {
        public_key: derive_public(&secret_key),
        secret_key,
    }
}

fn derive_public(sk: &SecretKey) -> PublicKey {
    PublicKey(hash_parts(&[DOMAIN_PK, &sk.0]).0)
}

pub fn vrf_evaluate(keys: &KeyPair, msg: &[u8]) -> VrfOutput {
    let value = hash_parts(&[DOMAIN_VRF, &keys.secret_key.0, msg]);
    let proof = hash_parts(&[DOMAIN_VRF_PROOF, &keys.public_key.0, msg, &value.0]).0;
    VrfOutput { value, proof }
}

pub fn sign(keys: &KeyPair, msg: &[u8]) -> Signature {
    Signature(hash_parts(&[DOMAIN_SIG, &keys.secret_key.0, msg]).0)
}

/// Public-key directory used for verification.
#[derive(Clone, Debug, Default)]
pub struct KeyRegistry {
    keys: BTreeMap<PublicKey, SecretKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, keys: &KeyPair) {
        self.keys.insert(keys.public_key, keys.secret_key);
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn lookup(&self, pk: &PublicKey) -> Option<KeyPair> {
        self.keys.get(pk).map(|sk| KeyPair {
            public_key: *pk,
            secret_key: *sk,
        })
    }

    pub fn vrf_verify(&self, pk: &PublicKey, msg: &[u8], value: &Digest, proof: &[u8]) -> bool {
        match self.lookup(pk) {
            Some(keys) => {
                let expected = vrf_evaluate(&keys, msg);
                expected.value == *value && expected.proof[..] == *proof
            }
            None => false,
        }
    }

    pub fn verify_sig(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        match self.lookup(pk) {
            Some(keys) => sign(&keys, msg) == *sig,
            None => false,
        }
    }
}

/// Interprets a digest as a big-endian 256-bit unsigned integer.
pub fn digest_to_biguint(d: &Digest) -> num_bigint::BigUint {
    num_bigint::BigUint::from_bytes_be(&d.0)
}
