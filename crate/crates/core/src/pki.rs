//! Certificate authority and the two credential formats.
//!
//! FLAT parties hold ECQV implicit certificates (70 bytes): the public key is
//! not stored but reconstructed from the certificate and the CA key. The
//! baseline uses explicit certificates (134 bytes) that carry an x-only public
//! key and a CA signature over it.
//!
//! Both formats start with the same 37-byte [`IdentityInfo`]:
//!
//! ```text
//! entity_id(3) | domain_id(3) | role(1) | serial(4) | not_before(8) | not_after(8) | reserved(10)
//! ```

use std::collections::BTreeSet;
use std::fmt;

use p256::elliptic_curve::Field;
use p256::{NonZeroScalar, ProjectivePoint, Scalar};
use rand_core::CryptoRngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    ecdsa_sign, ecdsa_verify, hash_to_scalar, CryptoContext, CryptoError, CurvePoint, PrivateKey, Signature, POINT_LEN,
    SIGNATURE_LEN,
};
use crate::wire::EntityId;

pub const IDENTITY_LEN: usize = 37;
pub const IMPLICIT_CERT_LEN: usize = IDENTITY_LEN + POINT_LEN;
pub const EXPLICIT_CERT_LEN: usize = IDENTITY_LEN + 32 + SIGNATURE_LEN;

const RESERVED_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PkiError {
    #[error("serial {0} was already issued by this CA")]
    SerialReused(u32),
    #[error("malformed {what}: {len} bytes")]
    Malformed { what: &'static str, len: usize },
    #[error("validity window is empty: not_before {not_before} >= not_after {not_after}")]
    EmptyWindow { not_before: u64, not_after: u64 },
    #[error("reserved identity bytes are not zero")]
    ReservedNonZero,
    #[error("unknown role code {0:#04x}")]
    UnknownRole(u8),
    #[error("public key must have even y")]
    OddY,
    #[error("reconstructed key does not match the private key")]
    ValidityCheckFailed,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Sp,
    Idp,
    Ca,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Client => 1,
            Role::Sp => 2,
            Role::Idp => 3,
            Role::Ca => 4,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, PkiError> {
        match c {
            1 => Ok(Role::Client),
            2 => Ok(Role::Sp),
            3 => Ok(Role::Idp),
            4 => Ok(Role::Ca),
            _ => Err(PkiError::UnknownRole(c)),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Client => "Client",
            Role::Sp => "SP",
            Role::Idp => "IdP",
            Role::Ca => "CA",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityInfo {
    pub entity_id: EntityId,
    pub domain_id: [u8; 3],
    pub role: Role,
    pub serial: u32,
    pub not_before: u64,
    pub not_after: u64,
}

impl IdentityInfo {
    pub fn new(
        entity_id: EntityId,
        domain_id: [u8; 3],
        role: Role,
        serial: u32,
        not_before: u64,
        not_after: u64,
    ) -> Result<Self, PkiError> {
        if not_before >= not_after {
            return Err(PkiError::EmptyWindow { not_before, not_after });
        }
        Ok(IdentityInfo { entity_id, domain_id, role, serial, not_before, not_after })
    }

    pub fn is_valid_at(&self, now: u64) -> bool {
        self.not_before <= now && now <= self.not_after
    }

    pub fn to_bytes(&self) -> [u8; IDENTITY_LEN] {
        let mut out = [0u8; IDENTITY_LEN];
        out[0..3].copy_from_slice(&self.entity_id.to_bytes());
        out[3..6].copy_from_slice(&self.domain_id);
        out[6] = self.role.code();
        out[7..11].copy_from_slice(&self.serial.to_be_bytes());
        out[11..19].copy_from_slice(&self.not_before.to_be_bytes());
        out[19..27].copy_from_slice(&self.not_after.to_be_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, PkiError> {
        if b.len() != IDENTITY_LEN {
            return Err(PkiError::Malformed { what: "identity", len: b.len() });
        }
        if b[IDENTITY_LEN - RESERVED_LEN..].iter().any(|&x| x != 0) {
            return Err(PkiError::ReservedNonZero);
        }
        Self::new(
            EntityId::from_bytes(b[0..3].try_into().unwrap()),
            b[3..6].try_into().unwrap(),
            Role::from_code(b[6])?,
            u32::from_be_bytes(b[7..11].try_into().unwrap()),
            u64::from_be_bytes(b[11..19].try_into().unwrap()),
            u64::from_be_bytes(b[19..27].try_into().unwrap()),
        )
    }
}

/// `identity || P_U`, where `P_U` is the public-key reconstruction point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImplicitCertificate {
    pub identity: IdentityInfo,
    pub reconstruction: CurvePoint,
}

impl ImplicitCertificate {
    pub fn to_bytes(&self) -> [u8; IMPLICIT_CERT_LEN] {
        let mut out = [0u8; IMPLICIT_CERT_LEN];
        out[..IDENTITY_LEN].copy_from_slice(&self.identity.to_bytes());
        out[IDENTITY_LEN..].copy_from_slice(&self.reconstruction.to_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, PkiError> {
        if b.len() != IMPLICIT_CERT_LEN {
            return Err(PkiError::Malformed { what: "implicit certificate", len: b.len() });
        }
        Ok(ImplicitCertificate {
            identity: IdentityInfo::from_bytes(&b[..IDENTITY_LEN])?,
            reconstruction: CurvePoint::from_bytes(&b[IDENTITY_LEN..])?,
        })
    }

    fn hash(&self) -> Scalar {
        hash_to_scalar(&self.to_bytes())
    }
}

/// `identity || x(Q) || sig_CA(identity || x(Q))`. The subject key always has
/// even y so its x-coordinate alone identifies it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExplicitCertificate {
    pub identity: IdentityInfo,
    pub public_key_x: [u8; 32],
    pub ca_signature: Signature,
}

impl ExplicitCertificate {
    fn signed_part(identity: &IdentityInfo, x: &[u8; 32]) -> [u8; IDENTITY_LEN + 32] {
        let mut out = [0u8; IDENTITY_LEN + 32];
        out[..IDENTITY_LEN].copy_from_slice(&identity.to_bytes());
        out[IDENTITY_LEN..].copy_from_slice(x);
        out
    }

    pub fn public_key(&self) -> Result<CurvePoint, PkiError> {
        Ok(CurvePoint::from_x_even(&self.public_key_x)?)
    }

    pub fn to_bytes(&self) -> [u8; EXPLICIT_CERT_LEN] {
        let mut out = [0u8; EXPLICIT_CERT_LEN];
        out[..IDENTITY_LEN + 32].copy_from_slice(&Self::signed_part(&self.identity, &self.public_key_x));
        out[IDENTITY_LEN + 32..].copy_from_slice(self.ca_signature.as_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, PkiError> {
        if b.len() != EXPLICIT_CERT_LEN {
            return Err(PkiError::Malformed { what: "explicit certificate", len: b.len() });
        }
        Ok(ExplicitCertificate {
            identity: IdentityInfo::from_bytes(&b[..IDENTITY_LEN])?,
            public_key_x: b[IDENTITY_LEN..IDENTITY_LEN + 32].try_into().unwrap(),
            ca_signature: Signature::from_slice(&b[IDENTITY_LEN + 32..])?,
        })
    }
}

pub struct CertificateAuthority {
    sk: PrivateKey,
    pk: CurvePoint,
    issued: BTreeSet<u32>,
}

impl CertificateAuthority {
    pub fn new(rng: &mut impl CryptoRngCore) -> Self {
        Self::from_key(PrivateKey::random(rng))
    }

    pub fn from_key(sk: PrivateKey) -> Self {
        CertificateAuthority { pk: sk.public_key(), sk, issued: BTreeSet::new() }
    }

    pub fn public_key(&self) -> CurvePoint {
        self.pk
    }

    pub fn private_key(&self) -> &PrivateKey {
        &self.sk
    }

    pub fn issued_serials(&self) -> &BTreeSet<u32> {
        &self.issued
    }

    fn claim_serial(&mut self, serial: u32) -> Result<(), PkiError> {
        if !self.issued.insert(serial) {
            return Err(PkiError::SerialReused(serial));
        }
        Ok(())
    }
}

impl fmt::Debug for CertificateAuthority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CertificateAuthority").field("pk", &self.pk).field("issued", &self.issued.len()).finish()
    }
}

/// The `(U, R_U)` pair a subject sends to the CA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CertRequest {
    pub identity: IdentityInfo,
    pub r_u: CurvePoint,
}

/// Starts an ECQV request. The returned scalar `k_U` stays with the subject.
pub fn ecqv_request(identity: IdentityInfo, rng: &mut impl CryptoRngCore) -> (CertRequest, PrivateKey) {
    let k_u = PrivateKey::random(rng);
    (CertRequest { identity, r_u: k_u.public_key() }, k_u)
}

/// CA side of ECQV with a fresh random `k`.
pub fn ecqv_generate(
    ca: &mut CertificateAuthority,
    req: &CertRequest,
    rng: &mut impl CryptoRngCore,
) -> Result<(ImplicitCertificate, Scalar), PkiError> {
    loop {
        let k = *NonZeroScalar::random(&mut *rng);
        match ecqv_generate_with_k(ca, req, k) {
            // R_U + kG landed on the identity; a different k fixes that.
            Err(PkiError::Crypto(CryptoError::InvalidPoint)) => {
                ca.issued.remove(&req.identity.serial);
            }
            other => return other,
        }
    }
}

/// CA side of ECQV with a caller-chosen `k`: `P_U = R_U + kG`,
/// `e = H(cert)`, `r = e·k + d_CA`.
pub fn ecqv_generate_with_k(
    ca: &mut CertificateAuthority,
    req: &CertRequest,
    k: Scalar,
) -> Result<(ImplicitCertificate, Scalar), PkiError> {
    ca.claim_serial(req.identity.serial)?;
    let p_u = CurvePoint::from_projective(req.r_u.to_projective() + ProjectivePoint::GENERATOR * k)?;
    let cert = ImplicitCertificate { identity: req.identity, reconstruction: p_u };
    let r = cert.hash() * k + ca.sk.scalar();
    Ok((cert, r))
}

/// `Q_U = e·P_U + Q_CA`.
pub fn ecqv_extract(q_ca: &CurvePoint, cert: &ImplicitCertificate) -> Result<CurvePoint, PkiError> {
    let q = cert.reconstruction.to_projective() * cert.hash() + q_ca.to_projective();
    Ok(CurvePoint::from_projective(q)?)
}

/// Subject side: `d_U = r + e·k_U`, accepted only if `d_U·G` matches the
/// key anyone else would extract from the certificate.
pub fn ecqv_receive(
    cert: &ImplicitCertificate,
    r: Scalar,
    k_u: &PrivateKey,
    q_ca: &CurvePoint,
) -> Result<(PrivateKey, CurvePoint), PkiError> {
    let d_u = r + cert.hash() * k_u.scalar();
    if bool::from(d_u.is_zero()) {
        return Err(PkiError::ValidityCheckFailed);
    }
    let d_u = PrivateKey::from_scalar(d_u)?;
    let q_u = ecqv_extract(q_ca, cert)?;
    if d_u.public_key() != q_u {
        return Err(PkiError::ValidityCheckFailed);
    }
    Ok((d_u, q_u))
}

pub fn explicit_issue(
    ca: &mut CertificateAuthority,
    identity: IdentityInfo,
    pk: &CurvePoint,
    rng: &mut impl CryptoRngCore,
) -> Result<ExplicitCertificate, PkiError> {
    if pk.y_is_odd() {
        return Err(PkiError::OddY);
    }
    ca.claim_serial(identity.serial)?;
    let x = pk.x_bytes();
    let ca_signature = ecdsa_sign(&ca.sk, &ExplicitCertificate::signed_part(&identity, &x), rng);
    Ok(ExplicitCertificate { identity, public_key_x: x, ca_signature })
}

/// CA signature valid and `now` (unix seconds) inside the validity window.
pub fn explicit_verify(q_ca: &CurvePoint, cert: &ExplicitCertificate, now: u64) -> bool {
    cert.identity.is_valid_at(now)
        && ecdsa_verify(q_ca, &ExplicitCertificate::signed_part(&cert.identity, &cert.public_key_x), &cert.ca_signature)
}

impl CryptoContext {
    pub fn ecqv_extract(&mut self, q_ca: &CurvePoint, cert: &ImplicitCertificate) -> Result<CurvePoint, PkiError> {
        self.ops.ecqv_extract += 1;
        ecqv_extract(q_ca, cert)
    }

    /// Counted as one signature verification.
    pub fn explicit_verify(&mut self, q_ca: &CurvePoint, cert: &ExplicitCertificate, now: u64) -> bool {
        self.ops.ecdsa_verify += 1;
        explicit_verify(q_ca, cert, now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use p256::elliptic_curve::PrimeField;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;
    use sha2::{Digest, Sha256};

    const N_HEX: &[u8] = b"ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551";

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn identity(serial: u32) -> IdentityInfo {
        IdentityInfo::new(EntityId::new(0x010203).unwrap(), *b"dom", Role::Sp, serial, 1_000, 2_000).unwrap()
    }

    fn big(s: &Scalar) -> BigUint {
        BigUint::from_bytes_be(&s.to_repr())
    }

    /// Public key of a scalar computed by the reference curve implementation.
    fn reference_public(d: &PrivateKey) -> [u8; 33] {
        let sk = p256::SecretKey::from_slice(&d.to_bytes()).unwrap();
        let enc = p256::elliptic_curve::sec1::ToEncodedPoint::to_encoded_point(&sk.public_key(), true);
        enc.as_bytes().try_into().unwrap()
    }

    #[test]
    fn identity_layout() {
        let id = identity(0xdeadbeef);
        let b = id.to_bytes();
        assert_eq!(b.len(), 37);
        assert_eq!(&b[0..3], &[1, 2, 3]);
        assert_eq!(&b[3..6], b"dom");
        assert_eq!(b[6], 2);
        assert_eq!(&b[7..11], &[0xde, 0xad, 0xbe, 0xef]);
        assert_eq!(u64::from_be_bytes(b[11..19].try_into().unwrap()), 1_000);
        assert_eq!(u64::from_be_bytes(b[19..27].try_into().unwrap()), 2_000);
        assert!(b[27..].iter().all(|&x| x == 0));
        assert_eq!(IdentityInfo::from_bytes(&b).unwrap(), id);
    }

    #[test]
    fn identity_rejects_bad_input() {
        let mut b = identity(1).to_bytes();
        b[36] = 1;
        assert_eq!(IdentityInfo::from_bytes(&b), Err(PkiError::ReservedNonZero));
        let mut b = identity(1).to_bytes();
        b[6] = 9;
        assert_eq!(IdentityInfo::from_bytes(&b), Err(PkiError::UnknownRole(9)));
        assert!(matches!(IdentityInfo::from_bytes(&b[..36]), Err(PkiError::Malformed { .. })));
        assert!(matches!(
            IdentityInfo::new(EntityId::new(1).unwrap(), [0; 3], Role::Client, 1, 5, 5),
            Err(PkiError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn ecqv_cycles_match_independent_oracles() {
        let mut rng = rng(1);
        let n = BigUint::parse_bytes(N_HEX, 16).unwrap();
        let mut ca = CertificateAuthority::new(&mut rng);
        for serial in 0..100 {
            let (req, k_u) = ecqv_request(identity(serial), &mut rng);
            let (cert, r) = ecqv_generate(&mut ca, &req, &mut rng).unwrap();
            assert_eq!(cert.to_bytes().len(), 70);
            let (d_u, q_u) = ecqv_receive(&cert, r, &k_u, &ca.public_key()).unwrap();

            // d_U = r + e·k_U mod n, with e recomputed outside the curve library.
            let e = BigUint::from_bytes_be(&Sha256::digest(cert.to_bytes())) % &n;
            let expected_d = (big(&r) + e * big(&k_u.scalar())) % &n;
            assert_eq!(big(&d_u.scalar()), expected_d);

            assert_eq!(reference_public(&d_u), q_u.to_bytes());
            assert_eq!(ecqv_extract(&ca.public_key(), &cert).unwrap(), q_u);
            assert_eq!(ImplicitCertificate::from_bytes(&cert.to_bytes()).unwrap(), cert);
        }
    }

    #[test]
    fn requests_are_fresh_and_on_curve() {
        let mut rng = rng(2);
        let (a, _) = ecqv_request(identity(1), &mut rng);
        let (b, _) = ecqv_request(identity(1), &mut rng);
        assert_ne!(a.r_u, b.r_u);
        assert!(crate::crypto::on_curve_oracle(&a.r_u));
    }

    #[test]
    fn zero_k_gives_p_u_equal_r_u() {
        let mut rng = rng(3);
        let mut ca = CertificateAuthority::new(&mut rng);
        let (req, k_u) = ecqv_request(identity(7), &mut rng);
        let (cert, r) = ecqv_generate_with_k(&mut ca, &req, Scalar::ZERO).unwrap();
        assert_eq!(cert.reconstruction, req.r_u);
        // With k = 0 the contribution is just d_CA, so d_U = d_CA + e·k_U.
        assert_eq!(r, ca.private_key().scalar());
        let (d_u, q_u) = ecqv_receive(&cert, r, &k_u, &ca.public_key()).unwrap();
        assert_eq!(d_u.scalar(), ca.private_key().scalar() + cert.hash() * k_u.scalar());
        assert_eq!(d_u.public_key(), q_u);
    }

    #[test]
    fn perturbed_contribution_fails() {
        let mut rng = rng(4);
        let mut ca = CertificateAuthority::new(&mut rng);
        let (req, k_u) = ecqv_request(identity(1), &mut rng);
        let (cert, r) = ecqv_generate(&mut ca, &req, &mut rng).unwrap();
        assert_eq!(
            ecqv_receive(&cert, r + Scalar::ONE, &k_u, &ca.public_key()).unwrap_err(),
            PkiError::ValidityCheckFailed
        );
    }

    #[test]
    fn serial_reuse_rejected() {
        let mut rng = rng(5);
        let mut ca = CertificateAuthority::new(&mut rng);
        let (req, _) = ecqv_request(identity(9), &mut rng);
        ecqv_generate(&mut ca, &req, &mut rng).unwrap();
        assert_eq!(ecqv_generate(&mut ca, &req, &mut rng).unwrap_err(), PkiError::SerialReused(9));
        let sk = PrivateKey::random(&mut rng).normalized_even_y();
        assert_eq!(
            explicit_issue(&mut ca, identity(9), &sk.public_key(), &mut rng).unwrap_err(),
            PkiError::SerialReused(9)
        );
    }

    #[test]
    fn corrupted_cert_bytes_change_key_and_break_signatures() {
        let mut rng = rng(6);
        let mut ca = CertificateAuthority::new(&mut rng);
        let (req, k_u) = ecqv_request(identity(1), &mut rng);
        let (cert, r) = ecqv_generate(&mut ca, &req, &mut rng).unwrap();
        let (d_u, q_u) = ecqv_receive(&cert, r, &k_u, &ca.public_key()).unwrap();
        let sig = ecdsa_sign(&d_u, b"hello", &mut rng);
        let bytes = cert.to_bytes();
        for i in 0..IMPLICIT_CERT_LEN {
            let mut t = bytes;
            t[i] ^= 0x01;
            let Ok(tc) = ImplicitCertificate::from_bytes(&t) else { continue };
            let q = ecqv_extract(&ca.public_key(), &tc).unwrap();
            assert_ne!(q, q_u, "byte {i}");
            assert!(!ecdsa_verify(&q, b"hello", &sig), "byte {i}");
        }
    }

    #[test]
    fn cross_ca_never_validates() {
        let mut rng = rng(7);
        for i in 0..100 {
            let mut ca1 = CertificateAuthority::new(&mut rng);
            let ca2 = CertificateAuthority::new(&mut rng);
            let (req, k_u) = ecqv_request(identity(i), &mut rng);
            let (cert, r) = ecqv_generate(&mut ca1, &req, &mut rng).unwrap();
            assert_eq!(ecqv_receive(&cert, r, &k_u, &ca2.public_key()).unwrap_err(), PkiError::ValidityCheckFailed);
            let (d_u, _) = ecqv_receive(&cert, r, &k_u, &ca1.public_key()).unwrap();
            let sig = ecdsa_sign(&d_u, b"m", &mut rng);
            assert!(!ecdsa_verify(&ecqv_extract(&ca2.public_key(), &cert).unwrap(), b"m", &sig));

            let sk = PrivateKey::random(&mut rng).normalized_even_y();
            let ec = explicit_issue(&mut ca1, identity(1000 + i), &sk.public_key(), &mut rng).unwrap();
            assert!(explicit_verify(&ca1.public_key(), &ec, 1_500));
            assert!(!explicit_verify(&ca2.public_key(), &ec, 1_500));
        }
    }

    #[test]
    fn explicit_roundtrip_and_size() {
        let mut rng = rng(8);
        let mut ca = CertificateAuthority::new(&mut rng);
        let sk = PrivateKey::random(&mut rng).normalized_even_y();
        let cert = explicit_issue(&mut ca, identity(1), &sk.public_key(), &mut rng).unwrap();
        let bytes = cert.to_bytes();
        assert_eq!(bytes.len(), 134);
        assert_eq!(EXPLICIT_CERT_LEN - IMPLICIT_CERT_LEN, 64);
        let back = ExplicitCertificate::from_bytes(&bytes).unwrap();
        assert_eq!(back, cert);
        assert_eq!(back.public_key().unwrap(), sk.public_key());
        assert!(explicit_verify(&ca.public_key(), &back, 1_000));
        assert!(explicit_verify(&ca.public_key(), &back, 2_000));
    }

    #[test]
    fn explicit_rejects_odd_y() {
        let mut rng = rng(9);
        let mut ca = CertificateAuthority::new(&mut rng);
        let pk = loop {
            let pk = PrivateKey::random(&mut rng).public_key();
            if pk.y_is_odd() {
                break pk;
            }
        };
        assert_eq!(explicit_issue(&mut ca, identity(1), &pk, &mut rng).unwrap_err(), PkiError::OddY);
        assert!(ca.issued_serials().is_empty());
    }

    #[test]
    fn explicit_verify_sweeps() {
        let mut rng = rng(10);
        let mut ca = CertificateAuthority::new(&mut rng);
        let sk = PrivateKey::random(&mut rng).normalized_even_y();
        let cert = explicit_issue(&mut ca, identity(1), &sk.public_key(), &mut rng).unwrap();
        for bit in 0..SIGNATURE_LEN * 8 {
            let mut t = cert;
            t.ca_signature.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!explicit_verify(&ca.public_key(), &t, 1_500), "bit {bit}");
        }
        for bit in 0..32 * 8 {
            let mut t = cert;
            t.public_key_x[bit / 8] ^= 1 << (bit % 8);
            assert!(!explicit_verify(&ca.public_key(), &t, 1_500), "bit {bit}");
        }
        assert!(!explicit_verify(&ca.public_key(), &cert, 999));
        assert!(!explicit_verify(&ca.public_key(), &cert, 2_001));
    }

    #[test]
    fn context_counts_pki_operations() {
        let mut rng = rng(11);
        let mut ca = CertificateAuthority::new(&mut rng);
        let (req, _) = ecqv_request(identity(1), &mut rng);
        let (cert, _) = ecqv_generate(&mut ca, &req, &mut rng).unwrap();
        let sk = PrivateKey::random(&mut rng).normalized_even_y();
        let ec = explicit_issue(&mut ca, identity(2), &sk.public_key(), &mut rng).unwrap();
        let mut ctx = CryptoContext::from_seed(0);
        ctx.ecqv_extract(&ca.public_key(), &cert).unwrap();
        assert!(ctx.explicit_verify(&ca.public_key(), &ec, 1_500));
        assert_eq!(ctx.ops.ecqv_extract, 1);
        assert_eq!(ctx.ops.ecdsa_verify, 1);
    }
}
