//! Primitives shared by both protocols.
//!
//! The free functions are pure apart from the RNG they are handed. Role
//! state machines go through [`CryptoContext`], which owns the role's RNG and
//! counts every operation so runs can be audited afterwards.

mod ec;
mod ecies;
mod sym;

use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(test)]
pub(crate) use ec::on_curve_oracle;
pub use ec::{
    ecdsa_sign, ecdsa_verify, gen_keypair, hash_to_scalar, scalar_from_bytes, sign_with_nonce, CurvePoint, PrivateKey,
    Signature, POINT_LEN, SCALAR_LEN, SIGNATURE_LEN,
};
pub use ecies::{ecies_decrypt, ecies_encrypt, EciesCiphertext, ECIES_OVERHEAD, ECIES_TAG_LEN};
pub use sym::{
    decryptions_on_this_thread, gen_nonce, kdf, sym_protect, sym_unprotect, Direction, Nonce, ProtectedPayload,
    SymmetricKey, IV_LEN, MAX_PROTECTED_PLAINTEXT, NONCE_LEN, PROTECT_OVERHEAD, TAG_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authentication tag mismatch")]
    AuthenticationFailure,
    #[error("invalid curve point")]
    InvalidPoint,
    #[error("invalid scalar")]
    InvalidScalar,
    #[error("malformed {what}: {len} bytes")]
    Malformed { what: &'static str, len: usize },
    #[error("plaintext of {0} bytes does not fit one frame")]
    Oversize(usize),
}

/// Per-role tally of cryptographic operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub sym_ops: u64,
    pub ecdsa_sign: u64,
    pub ecdsa_verify: u64,
    pub ecies_enc: u64,
    pub ecies_dec: u64,
    pub ecqv_extract: u64,
}

impl OpCounters {
    pub fn asymmetric(&self) -> u64 {
        self.ecdsa_sign + self.ecdsa_verify + self.ecies_enc + self.ecies_dec + self.ecqv_extract
    }

    /// `(ecies_enc, ecies_dec, ecdsa_sign, ecdsa_verify)`
    pub fn client_profile(&self) -> (u64, u64, u64, u64) {
        (self.ecies_enc, self.ecies_dec, self.ecdsa_sign, self.ecdsa_verify)
    }

    pub fn add(&mut self, o: &OpCounters) {
        self.sym_ops += o.sym_ops;
        self.ecdsa_sign += o.ecdsa_sign;
        self.ecdsa_verify += o.ecdsa_verify;
        self.ecies_enc += o.ecies_enc;
        self.ecies_dec += o.ecies_dec;
        self.ecqv_extract += o.ecqv_extract;
    }
}

/// A role's randomness plus its operation counters.
pub struct CryptoContext {
    rng: ChaCha20Rng,
    pub ops: OpCounters,
}

impl CryptoContext {
    pub fn new(rng: ChaCha20Rng) -> Self {
        CryptoContext { rng, ops: OpCounters::default() }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn from_entropy() -> Self {
        Self::new(ChaCha20Rng::from_entropy())
    }

    pub fn rng(&mut self) -> &mut impl CryptoRngCore {
        &mut self.rng
    }

    pub fn nonce(&mut self) -> Nonce {
        gen_nonce(&mut self.rng)
    }

    pub fn fresh_key(&mut self) -> SymmetricKey {
        SymmetricKey::random(&mut self.rng)
    }

    pub fn protect(&mut self, key: &SymmetricKey, pt: &[u8], seq: u8, dir: Direction) -> Result<Vec<u8>, CryptoError> {
        self.ops.sym_ops += 1;
        sym_protect(key, pt, seq, dir, &mut self.rng).map(|p| p.to_bytes())
    }

    pub fn unprotect(
        &mut self,
        key: &SymmetricKey,
        bytes: &[u8],
        seq: u8,
        dir: Direction,
    ) -> Result<Vec<u8>, CryptoError> {
        self.ops.sym_ops += 1;
        sym_unprotect(key, &ProtectedPayload::from_bytes(bytes)?, seq, dir)
    }

    pub fn sign(&mut self, sk: &PrivateKey, msg: &[u8]) -> Signature {
        self.ops.ecdsa_sign += 1;
        ecdsa_sign(sk, msg, &mut self.rng)
    }

    pub fn verify(&mut self, pk: &CurvePoint, msg: &[u8], sig: &Signature) -> bool {
        self.ops.ecdsa_verify += 1;
        ecdsa_verify(pk, msg, sig)
    }

    pub fn ecies_encrypt(&mut self, pk: &CurvePoint, pt: &[u8]) -> Vec<u8> {
        self.ops.ecies_enc += 1;
        ecies_encrypt(pk, pt, &mut self.rng).to_bytes()
    }

    pub fn ecies_decrypt(&mut self, sk: &PrivateKey, bytes: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.ops.ecies_dec += 1;
        ecies_decrypt(sk, &EciesCiphertext::from_bytes(bytes)?)
    }
}
