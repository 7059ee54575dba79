//! AES-128-CTR + truncated HMAC-SHA256 channel, nonces and the KDF.

use std::cell::Cell;
use std::fmt;

use aes::cipher::{KeyIvInit, StreamCipher};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand_core::CryptoRngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;

use super::CryptoError;

type Aes128Ctr = ctr::Ctr128BE<aes::Aes128>;
pub(crate) type HmacSha256 = Hmac<Sha256>;

pub const KEY_HALF: usize = 16;
pub const NONCE_LEN: usize = 16;
pub const IV_LEN: usize = 16;
pub const TAG_LEN: usize = 16;
/// Bytes a protected payload adds to its plaintext.
pub const PROTECT_OVERHEAD: usize = IV_LEN + TAG_LEN;
/// Largest plaintext whose protected form still fits one frame.
pub const MAX_PROTECTED_PLAINTEXT: usize = crate::wire::MAX_PAYLOAD - PROTECT_OVERHEAD;

const KDF_LABEL: &[u8] = b"flat/kdf/v1";

thread_local! {
    static DECRYPTIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of CTR decryptions performed on the calling thread.
///
/// Tamper tests read this before and after a rejected input to show that no
/// ciphertext reached the cipher before its tag was checked.
pub fn decryptions_on_this_thread() -> u64 {
    DECRYPTIONS.with(Cell::get)
}

pub(crate) fn ctr_apply(key: &[u8; KEY_HALF], iv: &[u8; IV_LEN], buf: &mut [u8]) {
    let mut cipher = Aes128Ctr::new(key.into(), iv.into());
    cipher.apply_keystream(buf);
}

pub(crate) fn ctr_decrypt(key: &[u8; KEY_HALF], iv: &[u8; IV_LEN], buf: &mut [u8]) {
    DECRYPTIONS.with(|c| c.set(c.get() + 1));
    ctr_apply(key, iv, buf);
}

/// 32 bytes of key material: first half encrypts, second half authenticates.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SymmetricKey {
    pub enc_key: [u8; KEY_HALF],
    pub mac_key: [u8; KEY_HALF],
}

impl SymmetricKey {
    pub const LEN: usize = 2 * KEY_HALF;

    pub fn from_bytes(b: &[u8; 32]) -> Self {
        let mut enc_key = [0u8; KEY_HALF];
        let mut mac_key = [0u8; KEY_HALF];
        enc_key.copy_from_slice(&b[..KEY_HALF]);
        mac_key.copy_from_slice(&b[KEY_HALF..]);
        SymmetricKey { enc_key, mac_key }
    }

    pub fn from_slice(b: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = b.try_into().map_err(|_| CryptoError::Malformed { what: "symmetric key", len: b.len() })?;
        Ok(Self::from_bytes(&arr))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[..KEY_HALF].copy_from_slice(&self.enc_key);
        out[KEY_HALF..].copy_from_slice(&self.mac_key);
        out
    }

    pub fn random(rng: &mut impl CryptoRngCore) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Self::from_bytes(&b)
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// HKDF-SHA256 (extract then expand) with a fixed label.
pub fn kdf(z: &[u8; 32]) -> SymmetricKey {
    let hk = Hkdf::<Sha256>::new(None, z);
    let mut okm = [0u8; 32];
    hk.expand(KDF_LABEL, &mut okm).expect("32 bytes is a valid HKDF length");
    SymmetricKey::from_bytes(&okm)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Nonce(pub [u8; NONCE_LEN]);

impl Nonce {
    pub fn from_slice(b: &[u8]) -> Result<Self, CryptoError> {
        b.try_into().map(Nonce).map_err(|_| CryptoError::Malformed { what: "nonce", len: b.len() })
    }

    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", hex::encode(self.0))
    }
}

pub fn gen_nonce(rng: &mut impl CryptoRngCore) -> Nonce {
    let mut n = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut n);
    Nonce(n)
}

/// Which way a protected payload travels. Mixed into the tag so that a
/// payload cannot be reflected back to its sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ClientToIdp,
    IdpToClient,
    ClientToSp,
    SpToClient,
}

impl Direction {
    pub fn label(self) -> &'static [u8] {
        match self {
            Direction::ClientToIdp => b"C>I",
            Direction::IdpToClient => b"I>C",
            Direction::ClientToSp => b"C>S",
            Direction::SpToClient => b"S>C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedPayload {
    pub iv: [u8; IV_LEN],
    pub ct: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl ProtectedPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.ct.len() + PROTECT_OVERHEAD);
        out.extend_from_slice(&self.iv);
        out.extend_from_slice(&self.ct);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        if b.len() < PROTECT_OVERHEAD {
            return Err(CryptoError::Malformed { what: "protected payload", len: b.len() });
        }
        let (iv, rest) = b.split_at(IV_LEN);
        let (ct, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(ProtectedPayload { iv: iv.try_into().unwrap(), ct: ct.to_vec(), tag: tag.try_into().unwrap() })
    }
}

fn channel_tag(key: &SymmetricKey, dir: Direction, seq: u8, iv: &[u8], ct: &[u8]) -> [u8; TAG_LEN] {
    let mut mac = HmacSha256::new_from_slice(&key.mac_key).expect("any key length");
    mac.update(dir.label());
    mac.update(&[seq]);
    mac.update(iv);
    mac.update(ct);
    let full = mac.finalize().into_bytes();
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&full[..TAG_LEN]);
    tag
}

pub fn sym_protect(
    key: &SymmetricKey,
    pt: &[u8],
    seq: u8,
    dir: Direction,
    rng: &mut impl CryptoRngCore,
) -> Result<ProtectedPayload, CryptoError> {
    if pt.len() > MAX_PROTECTED_PLAINTEXT {
        return Err(CryptoError::Oversize(pt.len()));
    }
    let mut iv = [0u8; IV_LEN];
    rng.fill_bytes(&mut iv);
    let mut ct = pt.to_vec();
    ctr_apply(&key.enc_key, &iv, &mut ct);
    let tag = channel_tag(key, dir, seq, &iv, &ct);
    Ok(ProtectedPayload { iv, ct, tag })
}

/// Checks the tag in constant time, then decrypts.
pub fn sym_unprotect(
    key: &SymmetricKey,
    p: &ProtectedPayload,
    seq: u8,
    dir: Direction,
) -> Result<Vec<u8>, CryptoError> {
    let expected = channel_tag(key, dir, seq, &p.iv, &p.ct);
    if !bool::from(expected.ct_eq(&p.tag)) {
        return Err(CryptoError::AuthenticationFailure);
    }
    let mut pt = p.ct.clone();
    ctr_decrypt(&key.enc_key, &p.iv, &mut pt);
    Ok(pt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aes::cipher::{BlockEncrypt, KeyInit};
    use rand_chacha::ChaCha20Rng;
    use rand_core::{RngCore, SeedableRng};
    use std::collections::HashSet;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(11)
    }

    #[test]
    fn ctr_matches_sp800_38a_f51() {
        let key: [u8; 16] = hex::decode("2b7e151628aed2a6abf7158809cf4f3c").unwrap().try_into().unwrap();
        let iv: [u8; 16] = hex::decode("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff").unwrap().try_into().unwrap();
        let mut block = hex::decode("6bc1bee22e409f96e93d7e117393172a").unwrap();
        ctr_apply(&key, &iv, &mut block);
        assert_eq!(hex::encode(block), "874d6191b620e3261bef6864990db6ce");
    }

    #[test]
    fn hmac_matches_rfc4231_case2() {
        let mut mac = <HmacSha256 as Mac>::new_from_slice(b"Jefe").unwrap();
        mac.update(b"what do ya want for nothing?");
        assert_eq!(
            hex::encode(mac.finalize().into_bytes()),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        );
    }

    /// CTR keystream built block by block from the raw cipher.
    fn ctr_oracle(key: &[u8; 16], iv: &[u8; 16], data: &[u8]) -> Vec<u8> {
        let cipher = aes::Aes128::new(key.into());
        let mut counter = u128::from_be_bytes(*iv);
        let mut out = Vec::with_capacity(data.len());
        for chunk in data.chunks(16) {
            let mut block = aes::Block::from(counter.to_be_bytes());
            cipher.encrypt_block(&mut block);
            out.extend(chunk.iter().zip(block.iter()).map(|(a, b)| a ^ b));
            counter = counter.wrapping_add(1);
        }
        out
    }

    #[test]
    fn protect_matches_independent_construction() {
        let mut rng = rng();
        let key = SymmetricKey::random(&mut rng);
        let pt: Vec<u8> = (0..77u8).collect();
        let p = sym_protect(&key, &pt, 3, Direction::ClientToSp, &mut rng).unwrap();
        assert_eq!(p.ct, ctr_oracle(&key.enc_key, &p.iv, &pt));
        let mut mac = <HmacSha256 as Mac>::new_from_slice(&key.mac_key).unwrap();
        mac.update(b"C>S");
        mac.update(&[3]);
        mac.update(&p.iv);
        mac.update(&p.ct);
        assert_eq!(&mac.finalize().into_bytes()[..16], &p.tag);
    }

    #[test]
    fn roundtrip_and_sizes() {
        let mut rng = rng();
        for len in [0usize, 1, 15, 16, 17, 100, MAX_PROTECTED_PLAINTEXT] {
            let key = SymmetricKey::random(&mut rng);
            let pt = vec![0x42; len];
            let p = sym_protect(&key, &pt, 0, Direction::IdpToClient, &mut rng).unwrap();
            let bytes = p.to_bytes();
            assert_eq!(bytes.len(), len + 32);
            let back = ProtectedPayload::from_bytes(&bytes).unwrap();
            assert_eq!(sym_unprotect(&key, &back, 0, Direction::IdpToClient).unwrap(), pt);
        }
        let key = SymmetricKey::random(&mut rng);
        assert_eq!(sym_protect(&key, &[0; 249], 0, Direction::ClientToIdp, &mut rng), Err(CryptoError::Oversize(249)));
    }

    #[test]
    fn tag_binds_seq_and_direction() {
        let mut rng = rng();
        let key = SymmetricKey::random(&mut rng);
        let p = sym_protect(&key, b"hello", 4, Direction::ClientToIdp, &mut rng).unwrap();
        assert!(sym_unprotect(&key, &p, 3, Direction::ClientToIdp).is_err());
        assert!(sym_unprotect(&key, &p, 4, Direction::IdpToClient).is_err());
        assert!(sym_unprotect(&key, &p, 4, Direction::ClientToIdp).is_ok());
    }

    #[test]
    fn bit_flips_fail_before_decryption() {
        let mut rng = rng();
        let key = SymmetricKey::random(&mut rng);
        let p = sym_protect(&key, &[7u8; 40], 1, Direction::SpToClient, &mut rng).unwrap();
        let bytes = p.to_bytes();
        let before = decryptions_on_this_thread();
        for bit in 0..bytes.len() * 8 {
            let mut b = bytes.clone();
            b[bit / 8] ^= 1 << (bit % 8);
            let q = ProtectedPayload::from_bytes(&b).unwrap();
            assert_eq!(sym_unprotect(&key, &q, 1, Direction::SpToClient), Err(CryptoError::AuthenticationFailure));
        }
        assert_eq!(decryptions_on_this_thread(), before);
    }

    #[test]
    fn kdf_properties() {
        let z = [9u8; 32];
        assert!(kdf(&z) == kdf(&z));
        assert_eq!(kdf(&z).to_bytes().len(), 32);
        let mut rng = rng();
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let mut z = [0u8; 32];
            rng.fill_bytes(&mut z);
            assert!(seen.insert(kdf(&z).to_bytes()));
        }
    }

    #[test]
    fn nonces_are_distinct_and_spread() {
        let mut rng = ChaCha20Rng::from_entropy();
        let mut seen = HashSet::new();
        let mut per_position = vec![HashSet::new(); NONCE_LEN];
        for _ in 0..10_000 {
            let n = gen_nonce(&mut rng);
            assert_eq!(n.as_bytes().len(), 16);
            for (i, b) in n.0.iter().enumerate() {
                per_position[i].insert(*b);
            }
            assert!(seen.insert(n));
        }
        for (i, values) in per_position.iter().enumerate() {
            assert!(values.len() >= 100, "position {i}: {} values", values.len());
        }
    }
}
