//! The FLAT protocol: Client, SP and IdP state machines.
//!
//! The Client only ever uses the symmetric channel. The IdP acts as key
//! distribution center: after an implicit-certificate handshake with the SP
//! it hands the same fresh session key `K_CS` to both sides, then issues the
//! signed assertion the Client presents to the SP.
//!
//! An honest run exchanges ten frames:
//!
//! | # | type | route | payload | wire bytes |
//! |---|------|-------|---------|-----------:|
//! | m1 | key request | C→IdP | `protect(K_CI, sp_id ‖ n_C)` | 61 |
//! | m2 | certificate-challenge | IdP→SP | `Cert_IdP ‖ n_IdP` | 96 |
//! | m3 | certificate-response | SP→IdP | `Cert_SP ‖ n_SP ‖ sig_SP(n_IdP ‖ n_SP ‖ Cert_SP)` | 161 |
//! | m4 | SP key | IdP→SP | `ecies(Q_SP, K_CS ‖ client_id) ‖ sig_IdP(ct ‖ n_SP)` | 175 |
//! | m5 | key acknowledgment | SP→IdP | `ack ‖ sig_SP(ack ‖ n_IdP)` | 91 |
//! | m6 | Client key | IdP→C | `protect(K_CI, K_CS ‖ n_C)` | 90 |
//! | m7 | assertion request | C→IdP | `protect(K_CI, n_C2 ‖ sp_id)` | 61 |
//! | m8 | assertion | IdP→C | `protect(K_CI, assertion ‖ n_C2)` | 153 |
//! | m9 | service request | C→SP | `protect(K_CS, assertion ‖ n_C3)` | 153 |
//! | m10 | service | SP→C | `protect(K_CS, status ‖ n_C3)` | 59 |
//!
//! [`LAYOUT`] holds the same table in code; the harness compares it against
//! measured traffic.

mod client;
mod idp;
mod sp;

use thiserror::Error;

use crate::crypto::ECIES_OVERHEAD;
use crate::crypto::{
    CryptoContext, CurvePoint, Nonce, PrivateKey, Signature, NONCE_LEN, PROTECT_OVERHEAD, SIGNATURE_LEN,
};
use crate::pki::{Role, IMPLICIT_CERT_LEN};
use crate::wire::{EntityId, MessageType, HEADER_LEN};

pub use client::{Client, ClientConfig, ClientState};
pub use idp::{Idp, IdpConfig, IdpPhase};
pub use sp::{Sp, SpConfig, SpState};

pub const ASSERTION_LEN: usize = 3 + 3 + NONCE_LEN + 8 + SIGNATURE_LEN;
const ASSERTION_SIGNED_LEN: usize = ASSERTION_LEN - SIGNATURE_LEN;

pub const STATUS_GRANTED: u8 = 0x01;
pub const STATUS_DENIED: u8 = 0x00;

/// Length of the raw session key as carried inside payloads.
pub const SESSION_KEY_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AssertionError {
    #[error("assertion must be {ASSERTION_LEN} bytes, got {0}")]
    Length(usize),
}

/// The IdP's signed statement that `client_id` may use `sp_id` in the session
/// the SP opened with `n_sp`.
///
/// Layout: `client_id(3) ‖ sp_id(3) ‖ n_sp(16) ‖ expiry(8) ‖ sig(65)`, the
/// signature covering the first 30 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assertion {
    pub client_id: EntityId,
    pub sp_id: EntityId,
    pub n_sp: Nonce,
    /// Unix seconds after which the SP refuses the assertion.
    pub expiry: u64,
    pub idp_signature: Signature,
}

impl Assertion {
    fn signed_bytes(client_id: EntityId, sp_id: EntityId, n_sp: &Nonce, expiry: u64) -> [u8; ASSERTION_SIGNED_LEN] {
        let mut out = [0u8; ASSERTION_SIGNED_LEN];
        out[0..3].copy_from_slice(&client_id.to_bytes());
        out[3..6].copy_from_slice(&sp_id.to_bytes());
        out[6..22].copy_from_slice(n_sp.as_bytes());
        out[22..30].copy_from_slice(&expiry.to_be_bytes());
        out
    }

    pub fn issue(
        ctx: &mut CryptoContext,
        idp_key: &PrivateKey,
        client_id: EntityId,
        sp_id: EntityId,
        n_sp: Nonce,
        expiry: u64,
    ) -> Self {
        let idp_signature = ctx.sign(idp_key, &Self::signed_bytes(client_id, sp_id, &n_sp, expiry));
        Assertion { client_id, sp_id, n_sp, expiry, idp_signature }
    }

    pub fn verify(&self, ctx: &mut CryptoContext, idp_key: &CurvePoint) -> bool {
        let msg = Self::signed_bytes(self.client_id, self.sp_id, &self.n_sp, self.expiry);
        ctx.verify(idp_key, &msg, &self.idp_signature)
    }

    pub fn to_bytes(&self) -> [u8; ASSERTION_LEN] {
        let mut out = [0u8; ASSERTION_LEN];
        out[..ASSERTION_SIGNED_LEN].copy_from_slice(&Self::signed_bytes(
            self.client_id,
            self.sp_id,
            &self.n_sp,
            self.expiry,
        ));
        out[ASSERTION_SIGNED_LEN..].copy_from_slice(self.idp_signature.as_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, AssertionError> {
        if b.len() != ASSERTION_LEN {
            return Err(AssertionError::Length(b.len()));
        }
        Ok(Assertion {
            client_id: EntityId::from_bytes(b[0..3].try_into().unwrap()),
            sp_id: EntityId::from_bytes(b[3..6].try_into().unwrap()),
            n_sp: Nonce(b[6..22].try_into().unwrap()),
            expiry: u64::from_be_bytes(b[22..30].try_into().unwrap()),
            idp_signature: Signature::from_slice(&b[ASSERTION_SIGNED_LEN..]).expect("65-byte slice"),
        })
    }
}

pub fn serialize_assertion(a: &Assertion) -> Vec<u8> {
    a.to_bytes().to_vec()
}

pub fn parse_assertion(b: &[u8]) -> Result<Assertion, AssertionError> {
    Assertion::from_bytes(b)
}

/// One row of the payload layout table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutRow {
    pub msg: MessageType,
    pub from: Role,
    pub to: Role,
    pub payload: usize,
}

impl LayoutRow {
    pub const fn wire_bytes(&self) -> usize {
        HEADER_LEN + self.payload
    }
}

const fn row(msg: MessageType, from: Role, to: Role, payload: usize) -> LayoutRow {
    LayoutRow { msg, from, to, payload }
}

const ECIES_KEY_BLOB: usize = ECIES_OVERHEAD + SESSION_KEY_LEN + 3;

/// Honest-run frames in send order, with payload sizes built from the field
/// widths each message carries.
pub const LAYOUT: [LayoutRow; 10] = [
    row(MessageType::KeyRequest, Role::Client, Role::Idp, PROTECT_OVERHEAD + 3 + NONCE_LEN),
    row(MessageType::CertificateChallenge, Role::Idp, Role::Sp, IMPLICIT_CERT_LEN + NONCE_LEN),
    row(MessageType::CertificateResponse, Role::Sp, Role::Idp, IMPLICIT_CERT_LEN + NONCE_LEN + SIGNATURE_LEN),
    row(MessageType::SpKey, Role::Idp, Role::Sp, ECIES_KEY_BLOB + SIGNATURE_LEN),
    row(MessageType::KeyAcknowledgment, Role::Sp, Role::Idp, NONCE_LEN + SIGNATURE_LEN),
    row(MessageType::ClientKey, Role::Idp, Role::Client, PROTECT_OVERHEAD + SESSION_KEY_LEN + NONCE_LEN),
    row(MessageType::AssertionRequest, Role::Client, Role::Idp, PROTECT_OVERHEAD + NONCE_LEN + 3),
    row(MessageType::Assertion, Role::Idp, Role::Client, PROTECT_OVERHEAD + ASSERTION_LEN + NONCE_LEN),
    row(MessageType::ServiceRequest, Role::Client, Role::Sp, PROTECT_OVERHEAD + ASSERTION_LEN + NONCE_LEN),
    row(MessageType::Service, Role::Sp, Role::Client, PROTECT_OVERHEAD + 1 + NONCE_LEN),
];

/// Bytes a role sends plus bytes it receives in one honest run, per the
/// layout table.
pub fn layout_bytes(role: Role) -> usize {
    LAYOUT.iter().filter(|r| r.from == role || r.to == role).map(LayoutRow::wire_bytes).sum()
}

/// `(sent, received)` frame counts for a role in one honest run.
pub fn layout_messages(role: Role) -> (usize, usize) {
    let sent = LAYOUT.iter().filter(|r| r.from == role).count();
    let received = LAYOUT.iter().filter(|r| r.to == role).count();
    (sent, received)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::gen_nonce;
    use proptest::prelude::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    #[test]
    fn layout_matches_documented_sizes() {
        let expected = [61, 96, 161, 175, 91, 90, 61, 153, 153, 59];
        let got: Vec<usize> = LAYOUT.iter().map(LayoutRow::wire_bytes).collect();
        assert_eq!(got, expected);
        assert!(LAYOUT.iter().all(|r| r.payload <= crate::wire::MAX_PAYLOAD));
    }

    #[test]
    fn layout_role_totals() {
        // Independent sum over the documented per-message sizes.
        assert_eq!(layout_bytes(Role::Client), (61 + 61 + 153) + (90 + 153 + 59));
        assert_eq!(layout_bytes(Role::Client), 577);
        assert_eq!(layout_bytes(Role::Sp), 735);
        assert_eq!(layout_bytes(Role::Idp), 888);
        assert_eq!(LAYOUT.iter().map(LayoutRow::wire_bytes).sum::<usize>(), 1100);
    }

    #[test]
    fn layout_message_complements() {
        assert_eq!(layout_messages(Role::Client), (3, 3));
        assert_eq!(layout_messages(Role::Sp), (3, 3));
        assert_eq!(layout_messages(Role::Idp), (4, 4));
        assert_eq!(LAYOUT.len(), 10);
    }

    #[test]
    fn assertion_length_is_field_sum() {
        assert_eq!(ASSERTION_LEN, 3 + 3 + 16 + 8 + 65);
        assert_eq!(parse_assertion(&[0u8; 94]), Err(AssertionError::Length(94)));
        assert_eq!(parse_assertion(&[0u8; 96]), Err(AssertionError::Length(96)));
    }

    #[test]
    fn assertion_signature_binds_every_field() {
        let mut ctx = CryptoContext::from_seed(1);
        let sk = PrivateKey::random(ctx.rng());
        let n = ctx.nonce();
        let a = Assertion::issue(&mut ctx, &sk, EntityId::new(5).unwrap(), EntityId::new(6).unwrap(), n, 99);
        assert!(a.verify(&mut ctx, &sk.public_key()));
        let bytes = a.to_bytes();
        for i in 0..ASSERTION_SIGNED_LEN {
            let mut t = bytes;
            t[i] ^= 0x80;
            assert!(!parse_assertion(&t).unwrap().verify(&mut ctx, &sk.public_key()), "byte {i}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn assertion_roundtrip(c in 0u32..=0xff_ffff, s in 0u32..=0xff_ffff, seed: u64, expiry: u64, sig in proptest::collection::vec(any::<u8>(), 65)) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let a = Assertion {
                client_id: EntityId::new(c).unwrap(),
                sp_id: EntityId::new(s).unwrap(),
                n_sp: gen_nonce(&mut rng),
                expiry,
                idp_signature: Signature::from_slice(&sig).unwrap(),
            };
            let b = serialize_assertion(&a);
            prop_assert_eq!(b.len(), ASSERTION_LEN);
            prop_assert_eq!(parse_assertion(&b).unwrap(), a);
        }
    }
}
