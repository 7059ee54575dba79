//! Curve points, keys and ECDSA over P-256.
//!
//! Points travel SEC1-compressed (33 bytes). Signatures are `r || s || v`
//! where `v` is the parity of the nonce point's y-coordinate, 65 bytes total.

use std::fmt;

use p256::elliptic_curve::group::{Group, GroupEncoding};
use p256::elliptic_curve::ops::Reduce;
use p256::elliptic_curve::point::AffineCoordinates;
use p256::elliptic_curve::{Field, PrimeField};
use p256::{AffinePoint, FieldBytes, NonZeroScalar, ProjectivePoint, Scalar, U256};
use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};

use super::CryptoError;

pub const POINT_LEN: usize = 33;
pub const SCALAR_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 65;

/// A non-identity point on the curve.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct CurvePoint(AffinePoint);

impl CurvePoint {
    pub fn generator() -> Self {
        CurvePoint(AffinePoint::GENERATOR)
    }

    pub fn from_projective(p: ProjectivePoint) -> Result<Self, CryptoError> {
        if bool::from(p.is_identity()) {
            return Err(CryptoError::InvalidPoint);
        }
        Ok(CurvePoint(p.to_affine()))
    }

    pub fn to_projective(self) -> ProjectivePoint {
        ProjectivePoint::from(self.0)
    }

    pub fn affine(&self) -> &AffinePoint {
        &self.0
    }

    pub fn to_bytes(&self) -> [u8; POINT_LEN] {
        let enc = self.0.to_bytes();
        let mut out = [0u8; POINT_LEN];
        out.copy_from_slice(&enc);
        out
    }

    /// Decompresses a 33-byte SEC1 point. Rejects the identity and anything
    /// off the curve.
    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        if b.len() != POINT_LEN || !(b[0] == 0x02 || b[0] == 0x03) {
            return Err(CryptoError::InvalidPoint);
        }
        let arr = p256::CompressedPoint::clone_from_slice(b);
        Option::<AffinePoint>::from(AffinePoint::from_bytes(&arr)).map(CurvePoint).ok_or(CryptoError::InvalidPoint)
    }

    pub fn x_bytes(&self) -> [u8; 32] {
        self.0.x().into()
    }

    pub fn y_is_odd(&self) -> bool {
        self.0.y_is_odd().into()
    }

    /// Lifts an x-coordinate to the point with even y.
    pub fn from_x_even(x: &[u8; 32]) -> Result<Self, CryptoError> {
        let mut b = [0u8; POINT_LEN];
        b[0] = 0x02;
        b[1..].copy_from_slice(x);
        Self::from_bytes(&b)
    }
}

impl fmt::Debug for CurvePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CurvePoint({})", hex::encode(self.to_bytes()))
    }
}

/// A scalar in `[1, n-1]`.
#[derive(Clone, Copy)]
pub struct PrivateKey(NonZeroScalar);

impl PrivateKey {
    pub fn random(rng: &mut impl CryptoRngCore) -> Self {
        PrivateKey(NonZeroScalar::random(rng))
    }

    pub fn from_scalar(s: Scalar) -> Result<Self, CryptoError> {
        Option::<NonZeroScalar>::from(NonZeroScalar::new(s)).map(PrivateKey).ok_or(CryptoError::InvalidScalar)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        Self::from_scalar(scalar_from_bytes(b)?)
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        self.0.to_repr().into()
    }

    pub fn scalar(&self) -> Scalar {
        *self.0
    }

    pub fn public_key(&self) -> CurvePoint {
        CurvePoint((ProjectivePoint::GENERATOR * *self.0).to_affine())
    }

    /// Returns `-d` when `d·G` has odd y so the public key has even y.
    pub fn normalized_even_y(self) -> Self {
        if self.public_key().y_is_odd() {
            PrivateKey(-self.0)
        } else {
            self
        }
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

/// Canonical big-endian decoding; values `>= n` are rejected.
pub fn scalar_from_bytes(b: &[u8]) -> Result<Scalar, CryptoError> {
    if b.len() != SCALAR_LEN {
        return Err(CryptoError::InvalidScalar);
    }
    Option::<Scalar>::from(Scalar::from_repr(*FieldBytes::from_slice(b))).ok_or(CryptoError::InvalidScalar)
}

/// SHA-256 of `data` reduced modulo the group order.
pub fn hash_to_scalar(data: &[u8]) -> Scalar {
    let digest = Sha256::digest(data);
    <Scalar as Reduce<U256>>::reduce_bytes(&digest)
}

fn x_mod_n(p: &AffinePoint) -> (Scalar, bool) {
    let x = p.x();
    match Option::<Scalar>::from(Scalar::from_repr(x)) {
        Some(s) => (s, false),
        None => (<Scalar as Reduce<U256>>::reduce_bytes(&x), true),
    }
}

pub fn gen_keypair(rng: &mut impl CryptoRngCore) -> (PrivateKey, CurvePoint) {
    let sk = PrivateKey::random(rng);
    let pk = sk.public_key();
    (sk, pk)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_slice(b: &[u8]) -> Result<Self, CryptoError> {
        <[u8; SIGNATURE_LEN]>::try_from(b)
            .map(Signature)
            .map_err(|_| CryptoError::Malformed { what: "signature", len: b.len() })
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }

    fn parts(&self) -> Option<(Scalar, Scalar, u8)> {
        let r = scalar_from_bytes(&self.0[..32]).ok()?;
        let s = scalar_from_bytes(&self.0[32..64]).ok()?;
        if bool::from(r.is_zero()) || bool::from(s.is_zero()) {
            return None;
        }
        Some((r, s, self.0[64]))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(self.0))
    }
}

pub fn ecdsa_sign(sk: &PrivateKey, msg: &[u8], rng: &mut impl CryptoRngCore) -> Signature {
    loop {
        let k = NonZeroScalar::random(&mut *rng);
        if let Some(sig) = sign_with_nonce(sk, msg, &k) {
            return sig;
        }
    }
}

/// One signing attempt with a caller-chosen nonce. `None` when the nonce
/// yields `r = 0`, `s = 0` or an x-coordinate above the group order.
pub fn sign_with_nonce(sk: &PrivateKey, msg: &[u8], k: &NonZeroScalar) -> Option<Signature> {
    let e = hash_to_scalar(msg);
    let big_r = (ProjectivePoint::GENERATOR * **k).to_affine();
    let (r, overflow) = x_mod_n(&big_r);
    if overflow || bool::from(r.is_zero()) {
        return None;
    }
    let s = k.invert().unwrap() * (e + r * sk.scalar());
    if bool::from(s.is_zero()) {
        return None;
    }
    let mut out = [0u8; SIGNATURE_LEN];
    out[..32].copy_from_slice(&r.to_repr());
    out[32..64].copy_from_slice(&s.to_repr());
    out[64] = u8::from(bool::from(big_r.y_is_odd()));
    Some(Signature(out))
}

/// Standard ECDSA check plus the parity byte: `v` must equal the parity of
/// the recomputed nonce point. Malformed input yields `false`.
pub fn ecdsa_verify(pk: &CurvePoint, msg: &[u8], sig: &Signature) -> bool {
    let Some((r, s, v)) = sig.parts() else { return false };
    if v > 1 {
        return false;
    }
    let e = hash_to_scalar(msg);
    let s_inv = s.invert().unwrap();
    let u1 = e * s_inv;
    let u2 = r * s_inv;
    let big_r = ProjectivePoint::GENERATOR * u1 + pk.to_projective() * u2;
    if bool::from(big_r.is_identity()) {
        return false;
    }
    let big_r = big_r.to_affine();
    let (x, overflow) = x_mod_n(&big_r);
    !overflow && x == r && u8::from(bool::from(big_r.y_is_odd())) == v
}

/// Checks `y^2 = x^3 - 3x + b (mod p)` in big-integer arithmetic,
/// independent of the curve library.
#[cfg(test)]
pub(crate) fn on_curve_oracle(pt: &CurvePoint) -> bool {
    use num_bigint::BigUint;
    use p256::elliptic_curve::sec1::ToEncodedPoint;
    let enc = pt.0.to_encoded_point(false);
    let p = BigUint::parse_bytes(b"ffffffff00000001000000000000000000000000ffffffffffffffffffffffff", 16).unwrap();
    let b = BigUint::parse_bytes(b"5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b", 16).unwrap();
    let x = BigUint::from_bytes_be(enc.x().unwrap());
    let y = BigUint::from_bytes_be(enc.y().unwrap());
    let lhs = &y * &y % &p;
    let rhs = (&x * &x * &x + &b + &p * 3u32 - &x * 3u32 % &p) % &p;
    x < p && y < p && lhs == rhs
}

/// The smallest x whose right-hand side `x^3 - 3x + b` is a quadratic
/// non-residue mod p, found by Euler's criterion in big-integer arithmetic.
#[cfg(test)]
pub(crate) fn off_curve_x() -> [u8; 32] {
    use num_bigint::BigUint;
    let p = BigUint::parse_bytes(b"ffffffff00000001000000000000000000000000ffffffffffffffffffffffff", 16).unwrap();
    let b = BigUint::parse_bytes(b"5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b", 16).unwrap();
    let half = (&p - 1u32) >> 1;
    for i in 0u32.. {
        let x = BigUint::from(i);
        let rhs = (&x * &x * &x + &b + &p * 3u32 - &x * 3u32) % &p;
        if rhs.modpow(&half, &p) == &p - 1u32 {
            let mut out = [0u8; 32];
            let be = x.to_bytes_be();
            out[32 - be.len()..].copy_from_slice(&be);
            return out;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn unit_private_key_gives_generator() {
        let one = PrivateKey::from_scalar(Scalar::ONE).unwrap();
        assert_eq!(one.public_key(), CurvePoint::generator());
        assert_eq!(
            hex::encode(CurvePoint::generator().to_bytes()),
            "036b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296"
        );
    }

    #[test]
    fn zero_and_out_of_range_scalars_rejected() {
        assert!(PrivateKey::from_bytes(&[0u8; 32]).is_err());
        assert!(PrivateKey::from_bytes(&[0xff; 32]).is_err());
        assert!(PrivateKey::from_bytes(&[1u8; 31]).is_err());
    }

    #[test]
    fn random_keypairs_on_curve() {
        let mut rng = rng();
        for _ in 0..100 {
            let (_, pk) = gen_keypair(&mut rng);
            assert!(on_curve_oracle(&pk));
            let back = CurvePoint::from_bytes(&pk.to_bytes()).unwrap();
            assert_eq!(back, pk);
        }
    }

    #[test]
    fn point_decoding_rejects_garbage() {
        assert!(CurvePoint::from_bytes(&[0u8; 33]).is_err());
        assert!(CurvePoint::from_bytes(&[0x04; 33]).is_err());
        assert!(CurvePoint::from_bytes(&[0x02; 32]).is_err());
        // x >= p is non-canonical
        let mut b = [0xffu8; 33];
        b[0] = 2;
        assert!(CurvePoint::from_bytes(&b).is_err());
        let x = off_curve_x();
        b[1..].copy_from_slice(&x);
        assert!(CurvePoint::from_bytes(&b).is_err());
        b[0] = 3;
        assert!(CurvePoint::from_bytes(&b).is_err());
    }

    #[test]
    fn even_y_normalization() {
        let mut rng = rng();
        for _ in 0..20 {
            let sk = PrivateKey::random(&mut rng).normalized_even_y();
            let pk = sk.public_key();
            assert!(!pk.y_is_odd());
            assert_eq!(CurvePoint::from_x_even(&pk.x_bytes()).unwrap(), pk);
        }
    }

    // RFC 6979 A.2.5, P-256 with SHA-256.
    const RFC_X: &str = "c9afa9d845ba75166b5c215767b1d6934e50c3db36e89b127b8a622b120f6721";
    const RFC_UX: &str = "60fed4ba255a9d31c961eb74c6356d68c049b8923b61fa6ce669622e60f29fb6";
    const RFC_VECTORS: [(&str, &str, &str, &str); 2] = [
        (
            "sample",
            "a6e3c57dd01abe90086538398355dd4c3b17aa873382b0f24d6129493d8aad60",
            "efd48b2aacb6a8fd1140dd9cd45e81d69d2c877b56aaf991c34d0ea84eaf3716",
            "f7cb1c942d657c41d436c7a1b6e29f65f3e900dbb9aff4064dc4ab2f843acda8",
        ),
        (
            "test",
            "d16b6ae827f17175e040871a1c7ec3500192c4c92677336ec2537acaee0008e0",
            "f1abb023518351cd71d881567b1ea663ed3efcf6c5132b354f28d3b0b7d38367",
            "019f4113742a2b14bd25926b49c649155f267e60d3814b4c0cc84250e46f0083",
        ),
    ];

    #[test]
    fn rfc6979_known_answers() {
        let sk = PrivateKey::from_bytes(&hex::decode(RFC_X).unwrap()).unwrap();
        assert_eq!(hex::encode(sk.public_key().x_bytes()), RFC_UX);
        for (msg, k, r, s) in RFC_VECTORS {
            let k = scalar_from_bytes(&hex::decode(k).unwrap()).unwrap();
            let k = Option::<NonZeroScalar>::from(NonZeroScalar::new(k)).unwrap();
            let sig = sign_with_nonce(&sk, msg.as_bytes(), &k).unwrap();
            assert_eq!(hex::encode(&sig.0[..32]), r);
            assert_eq!(hex::encode(&sig.0[32..64]), s);
            assert!(ecdsa_verify(&sk.public_key(), msg.as_bytes(), &sig));
        }
    }

    #[test]
    fn interoperates_with_reference_ecdsa() {
        use p256::ecdsa::signature::{Signer, Verifier};
        use p256::ecdsa::{Signature as RefSig, SigningKey, VerifyingKey};
        let mut rng = rng();
        for i in 0..20u8 {
            let sk = PrivateKey::random(&mut rng);
            let msg = [i; 40];
            let reference = SigningKey::from_bytes(&sk.to_bytes().into()).unwrap();
            let vk = VerifyingKey::from(&reference);

            let ours = ecdsa_sign(&sk, &msg, &mut rng);
            let as_ref = RefSig::from_slice(&ours.0[..64]).unwrap();
            assert!(vk.verify(&msg, &as_ref).is_ok());

            let theirs: RefSig = reference.sign(&msg);
            let mut bytes = [0u8; 65];
            bytes[..64].copy_from_slice(&theirs.to_bytes());
            let ok0 = ecdsa_verify(&sk.public_key(), &msg, &Signature(bytes));
            bytes[64] = 1;
            let ok1 = ecdsa_verify(&sk.public_key(), &msg, &Signature(bytes));
            // exactly one parity byte is right
            assert!(ok0 ^ ok1);
        }
    }

    #[test]
    fn sign_verify_roundtrip_and_wrong_key() {
        let mut rng = rng();
        for i in 0..100usize {
            let (sk, pk) = gen_keypair(&mut rng);
            let msg = vec![i as u8; i % 50];
            let sig = ecdsa_sign(&sk, &msg, &mut rng);
            assert_eq!(sig.as_bytes().len(), SIGNATURE_LEN);
            assert!(ecdsa_verify(&pk, &msg, &sig));
            if i < 10 {
                let (_, other) = gen_keypair(&mut rng);
                assert!(!ecdsa_verify(&other, &msg, &sig));
            }
        }
    }

    #[test]
    fn every_single_bit_flip_is_rejected() {
        let mut rng = rng();
        let (sk, pk) = gen_keypair(&mut rng);
        let msg = [0x5au8; 32];
        let sig = ecdsa_sign(&sk, &msg, &mut rng);
        for bit in 0..msg.len() * 8 {
            let mut m = msg;
            m[bit / 8] ^= 1 << (bit % 8);
            assert!(!ecdsa_verify(&pk, &m, &sig), "msg bit {bit}");
        }
        for bit in 0..SIGNATURE_LEN * 8 {
            let mut s = sig;
            s.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!ecdsa_verify(&pk, &msg, &s), "sig bit {bit}");
        }
    }

    #[test]
    fn degenerate_signatures_rejected() {
        let mut rng = rng();
        let (_, pk) = gen_keypair(&mut rng);
        assert!(!ecdsa_verify(&pk, b"m", &Signature([0u8; 65])));
        assert!(!ecdsa_verify(&pk, b"m", &Signature([0xff; 65])));
    }
}
