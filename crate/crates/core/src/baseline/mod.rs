//! A traditional federated identity flow, for comparison with FLAT.
//!
//! Every party holds an explicit certificate (134 bytes, public key plus CA
//! signature) and the Client does public-key work itself. The flow follows
//! the usual redirect pattern: the Client contacts the SP, is sent to the
//! IdP, proves itself with an encrypted and signed credential, and returns to
//! the SP with a signed assertion. Curve, hash, symmetric channel, header and
//! identity encoding are the same as FLAT's.
//!
//! The message payloads are chosen so the Client performs exactly one ECIES
//! encryption, one ECIES decryption, two ECDSA signatures and five ECDSA
//! verifications per run:
//!
//! | # | code | route | payload | Client op | wire bytes |
//! |---|------|-------|---------|-----------|-----------:|
//! | b1 | 0x81 service init | C→SP | `Cert_C ‖ idp_id` | | 147 |
//! | b2 | 0x82 redirect | SP→C | `Cert_SP ‖ n_S` | verify #1 | 160 |
//! | b3 | 0x83 assertion request | C→IdP | `sp_id ‖ n_S ‖ n_C2` | | 45 |
//! | b4 | 0x84 challenge | IdP→C | `Cert_IdP ‖ n_I ‖ sig_IdP(n_I ‖ n_C2 ‖ client_id ‖ sp_id)` | verify #2, #3 | 225 |
//! | b5 | 0x85 credentials | C→IdP | `ecies(Q_IdP, cred ‖ n_I) ‖ sig_C(ct ‖ n_I)` | enc #1, sign #1 | 188 |
//! | b7 | 0x87 key delivery | IdP→SP | `ecies(Q_SP, K_CS ‖ client_id) ‖ sig_IdP(ct ‖ n_S)` | | 175 |
//! | b6 | 0x86 assertion | IdP→C | `assertion ‖ ecies(Q_C, K_CS ‖ n_C2)` | verify #4, dec #1 | 218 |
//! | b8 | 0x88 service request | C→SP | `protect(K_CS, assertion ‖ n_C3) ‖ sig_C(ct)` | sign #2 | 218 |
//! | b9 | 0x89 service grant | SP→C | `protect(K_CS, status ‖ n_C3) ‖ sig_SP(ct)` | verify #5 | 124 |
//!
//! The IdP sends b7 before b6 so the SP holds the session key by the time
//! the Client's request arrives. The Client's certificate travels in b1 and
//! is checked by the SP; the IdP already holds it, together with the 32-byte
//! credential, from registration. Where exactly the Client's two signatures
//! go is not fixed by the flow's outline; the placement above is one
//! consistent choice.
//!
//! Type codes live in `0x81..=0x89`, disjoint from FLAT's, so a baseline
//! frame can never be mistaken for a FLAT message.
//!
//! The baseline has no restart logic: a timeout or failed check ends the
//! run.

mod client;
mod idp;
mod sp;

use crate::crypto::{ECIES_OVERHEAD, NONCE_LEN, PROTECT_OVERHEAD, SIGNATURE_LEN};
use crate::flat::{ASSERTION_LEN, SESSION_KEY_LEN};
use crate::pki::{Role, EXPLICIT_CERT_LEN};
use crate::wire::HEADER_LEN;

pub use client::{BaselineClient, BaselineClientConfig, BaselineClientState};
pub use idp::{BaselineIdp, BaselineIdpConfig, BaselineIdpPhase, RegisteredClient};
pub use sp::{BaselineSp, BaselineSpConfig, BaselineSpState};

/// Length of the opaque credential each Client registers with the IdP.
pub const CREDENTIAL_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineType {
    ServiceInit,
    Redirect,
    AssertionRequest,
    Challenge,
    Credentials,
    AssertionResponse,
    KeyDelivery,
    ServiceRequest,
    ServiceGrant,
}

impl BaselineType {
    pub const ALL: [BaselineType; 9] = [
        BaselineType::ServiceInit,
        BaselineType::Redirect,
        BaselineType::AssertionRequest,
        BaselineType::Challenge,
        BaselineType::Credentials,
        BaselineType::AssertionResponse,
        BaselineType::KeyDelivery,
        BaselineType::ServiceRequest,
        BaselineType::ServiceGrant,
    ];

    pub const fn code(self) -> u8 {
        0x81 + self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }

    pub const fn name(self) -> &'static str {
        match self {
            BaselineType::ServiceInit => "service init",
            BaselineType::Redirect => "redirect",
            BaselineType::AssertionRequest => "assertion request",
            BaselineType::Challenge => "challenge",
            BaselineType::Credentials => "credentials",
            BaselineType::AssertionResponse => "assertion",
            BaselineType::KeyDelivery => "key delivery",
            BaselineType::ServiceRequest => "service request",
            BaselineType::ServiceGrant => "service grant",
        }
    }
}

pub(crate) const CREDENTIAL_CT_LEN: usize = ECIES_OVERHEAD + CREDENTIAL_LEN + NONCE_LEN;
pub(crate) const CLIENT_KEY_CT_LEN: usize = ECIES_OVERHEAD + SESSION_KEY_LEN + NONCE_LEN;
pub(crate) const SP_KEY_CT_LEN: usize = ECIES_OVERHEAD + SESSION_KEY_LEN + 3;
pub(crate) const REQUEST_CT_LEN: usize = PROTECT_OVERHEAD + ASSERTION_LEN + NONCE_LEN;
pub(crate) const GRANT_CT_LEN: usize = PROTECT_OVERHEAD + 1 + NONCE_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineLayoutRow {
    pub msg: BaselineType,
    pub from: Role,
    pub to: Role,
    pub payload: usize,
}

impl BaselineLayoutRow {
    pub const fn wire_bytes(&self) -> usize {
        HEADER_LEN + self.payload
    }
}

const fn row(msg: BaselineType, from: Role, to: Role, payload: usize) -> BaselineLayoutRow {
    BaselineLayoutRow { msg, from, to, payload }
}

/// Honest-run frames in send order.
pub const BASELINE_LAYOUT: [BaselineLayoutRow; 9] = [
    row(BaselineType::ServiceInit, Role::Client, Role::Sp, EXPLICIT_CERT_LEN + 3),
    row(BaselineType::Redirect, Role::Sp, Role::Client, EXPLICIT_CERT_LEN + NONCE_LEN),
    row(BaselineType::AssertionRequest, Role::Client, Role::Idp, 3 + 2 * NONCE_LEN),
    row(BaselineType::Challenge, Role::Idp, Role::Client, EXPLICIT_CERT_LEN + NONCE_LEN + SIGNATURE_LEN),
    row(BaselineType::Credentials, Role::Client, Role::Idp, CREDENTIAL_CT_LEN + SIGNATURE_LEN),
    row(BaselineType::KeyDelivery, Role::Idp, Role::Sp, SP_KEY_CT_LEN + SIGNATURE_LEN),
    row(BaselineType::AssertionResponse, Role::Idp, Role::Client, ASSERTION_LEN + CLIENT_KEY_CT_LEN),
    row(BaselineType::ServiceRequest, Role::Client, Role::Sp, REQUEST_CT_LEN + SIGNATURE_LEN),
    row(BaselineType::ServiceGrant, Role::Sp, Role::Client, GRANT_CT_LEN + SIGNATURE_LEN),
];

pub fn baseline_layout_bytes(role: Role) -> usize {
    BASELINE_LAYOUT.iter().filter(|r| r.from == role || r.to == role).map(BaselineLayoutRow::wire_bytes).sum()
}

pub fn baseline_layout_messages(role: Role) -> (usize, usize) {
    let sent = BASELINE_LAYOUT.iter().filter(|r| r.from == role).count();
    let received = BASELINE_LAYOUT.iter().filter(|r| r.to == role).count();
    (sent, received)
}
