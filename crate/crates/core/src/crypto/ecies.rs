//! ECIES: ephemeral point `R`, CTR ciphertext `EM`, HMAC tag `D`.
//!
//! Serialized as `R(33) || EM || D(32)`. The symmetric key is
//! `kdf(x(k·Q))`, split 16/16 into encryption and MAC halves; CTR runs
//! from an all-zero counter since every key is single-use.

use hmac::Mac;
use p256::ProjectivePoint;
use rand_core::CryptoRngCore;
use subtle::ConstantTimeEq;

use super::ec::{CurvePoint, PrivateKey, POINT_LEN};
use super::sym::{ctr_apply, ctr_decrypt, kdf, HmacSha256, SymmetricKey, IV_LEN};
use super::CryptoError;

pub const ECIES_TAG_LEN: usize = 32;
pub const ECIES_OVERHEAD: usize = POINT_LEN + ECIES_TAG_LEN;

const ZERO_IV: [u8; IV_LEN] = [0u8; IV_LEN];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EciesCiphertext {
    pub r: CurvePoint,
    pub em: Vec<u8>,
    pub d: [u8; ECIES_TAG_LEN],
}

impl EciesCiphertext {
    pub fn len(&self) -> usize {
        ECIES_OVERHEAD + self.em.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.r.to_bytes());
        out.extend_from_slice(&self.em);
        out.extend_from_slice(&self.d);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        if b.len() < ECIES_OVERHEAD {
            return Err(CryptoError::Malformed { what: "ECIES ciphertext", len: b.len() });
        }
        let r = CurvePoint::from_bytes(&b[..POINT_LEN])?;
        let em = b[POINT_LEN..b.len() - ECIES_TAG_LEN].to_vec();
        let d = b[b.len() - ECIES_TAG_LEN..].try_into().unwrap();
        Ok(EciesCiphertext { r, em, d })
    }
}

fn shared_key(secret: &p256::Scalar, public: &CurvePoint) -> Result<SymmetricKey, CryptoError> {
    let shared = CurvePoint::from_projective(public.to_projective() * secret)?;
    Ok(kdf(&shared.x_bytes()))
}

fn tag(key: &SymmetricKey, em: &[u8]) -> [u8; ECIES_TAG_LEN] {
    let mut mac = HmacSha256::new_from_slice(&key.mac_key).expect("any key length");
    mac.update(em);
    mac.finalize().into_bytes().into()
}

pub fn ecies_encrypt(pk: &CurvePoint, pt: &[u8], rng: &mut impl CryptoRngCore) -> EciesCiphertext {
    let k = PrivateKey::random(rng);
    let r =
        CurvePoint::from_projective(ProjectivePoint::GENERATOR * k.scalar()).expect("non-zero scalar times generator");
    let key = shared_key(&k.scalar(), pk).expect("prime-order group: k·Q is never the identity");
    let mut em = pt.to_vec();
    ctr_apply(&key.enc_key, &ZERO_IV, &mut em);
    let d = tag(&key, &em);
    EciesCiphertext { r, em, d }
}

/// Recomputes the key from `R`, checks `D` in constant time and only then
/// decrypts.
pub fn ecies_decrypt(sk: &PrivateKey, c: &EciesCiphertext) -> Result<Vec<u8>, CryptoError> {
    let key = shared_key(&sk.scalar(), &c.r)?;
    if !bool::from(tag(&key, &c.em).ct_eq(&c.d)) {
        return Err(CryptoError::AuthenticationFailure);
    }
    let mut pt = c.em.clone();
    ctr_decrypt(&key.enc_key, &ZERO_IV, &mut pt);
    Ok(pt)
}
