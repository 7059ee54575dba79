//! Federated lightweight authentication for constrained clients.
//!
//! A Client that can only do symmetric cryptography obtains a session key
//! for a Service Provider from its home Identity Provider, which acts as key
//! distribution center after an implicit-certificate (ECQV) handshake with
//! the SP. The crate contains:
//!
//! - [`wire`]: the 10-byte-header datagram format
//! - [`crypto`]: P-256 ECDSA and ECIES, the AES-CTR/HMAC channel, KDF, nonces
//! - [`pki`]: the CA, 70-byte implicit and 134-byte explicit certificates
//! - [`flat`]: the Client, SP and IdP state machines
//! - [`baseline`]: a conventional redirect-based federation flow to compare against
//! - [`transport`]: a deterministic in-memory network and a UDP binding
//! - [`harness`]: key material, scenario runs, attacks and reports

pub mod baseline;
pub mod crypto;
pub mod flat;
pub mod harness;
pub mod node;
pub mod pki;
pub mod transport;
pub mod wire;
