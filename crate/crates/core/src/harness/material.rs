//! Keys and certificates for one federation: a CA, one IdP, one SP and any
//! number of Clients.
//!
//! On disk every secret and certificate is a single line of lowercase hex
//! in its own file, and `manifest.json` ties files to entities.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRngCore, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{BaselineClientConfig, BaselineIdpConfig, BaselineSpConfig, RegisteredClient, CREDENTIAL_LEN};
use crate::crypto::{CurvePoint, PrivateKey, SymmetricKey};
use crate::flat::{ClientConfig, IdpConfig, SpConfig};
use crate::node::Timers;
use crate::pki::{
    ecqv_generate, ecqv_receive, ecqv_request, explicit_issue, CertificateAuthority, ExplicitCertificate, IdentityInfo,
    ImplicitCertificate, PkiError, Role,
};
use crate::wire::EntityId;

/// 2026-01-01T00:00:00Z.
pub const DEFAULT_ISSUED_AT: u64 = 1_767_225_600;
pub const VALIDITY_S: u64 = 10 * 365 * 24 * 3600;
pub const DOMAIN_ID: [u8; 3] = [0x00, 0x00, 0x01];

pub const IDP_ID: EntityId = match EntityId::new(0x00_0001) {
    Ok(id) => id,
    Err(_) => panic!(),
};
pub const SP_ID: EntityId = match EntityId::new(0x00_0100) {
    Ok(id) => id,
    Err(_) => panic!(),
};
const FIRST_CLIENT: u32 = 0x01_0000;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest is not valid JSON: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{path} does not hold valid hex")]
    Hex { path: PathBuf },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("manifest lists entity {0} more than once")]
    DuplicateEntity(EntityId),
    #[error("manifest has no {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Pki(#[from] PkiError),
}

/// An IdP or SP: an ECQV-derived key for FLAT and a separate explicitly
/// certified key for the baseline.
#[derive(Debug, Clone, Copy)]
pub struct ServerMaterial {
    pub id: EntityId,
    pub implicit_key: PrivateKey,
    pub implicit_cert: ImplicitCertificate,
    pub explicit_key: PrivateKey,
    pub explicit_cert: ExplicitCertificate,
}

#[derive(Debug, Clone, Copy)]
pub struct ClientMaterial {
    pub id: EntityId,
    /// FLAT: pre-shared with the IdP.
    pub k_ci: SymmetricKey,
    /// Baseline: the Client's own key pair and certificate.
    pub explicit_key: PrivateKey,
    pub explicit_cert: ExplicitCertificate,
    /// Baseline: the secret registered with the IdP.
    pub credential: [u8; CREDENTIAL_LEN],
}

#[derive(Debug, Clone)]
pub struct Material {
    pub seed: u64,
    pub issued_at: u64,
    pub ca_key: PrivateKey,
    pub idp: ServerMaterial,
    pub sp: ServerMaterial,
    pub clients: Vec<ClientMaterial>,
}

fn identity(id: EntityId, role: Role, serial: u32, issued_at: u64) -> Result<IdentityInfo, PkiError> {
    IdentityInfo::new(id, DOMAIN_ID, role, serial, issued_at, issued_at + VALIDITY_S)
}

fn even_key(rng: &mut impl CryptoRngCore) -> PrivateKey {
    PrivateKey::random(rng).normalized_even_y()
}

fn issue_server(
    ca: &mut CertificateAuthority,
    id: EntityId,
    role: Role,
    serials: &mut u32,
    issued_at: u64,
    rng: &mut impl CryptoRngCore,
) -> Result<ServerMaterial, PkiError> {
    let (req, k_u) = ecqv_request(identity(id, role, *serials, issued_at)?, rng);
    let (implicit_cert, r) = ecqv_generate(ca, &req, rng)?;
    let (implicit_key, _) = ecqv_receive(&implicit_cert, r, &k_u, &ca.public_key())?;
    let explicit_key = even_key(rng);
    let explicit_cert =
        explicit_issue(ca, identity(id, role, *serials + 1, issued_at)?, &explicit_key.public_key(), rng)?;
    *serials += 2;
    Ok(ServerMaterial { id, implicit_key, implicit_cert, explicit_key, explicit_cert })
}

impl Material {
    /// Deterministic in `(seed, clients, issued_at)`.
    pub fn generate(seed: u64, clients: usize, issued_at: u64) -> Result<Self, MaterialError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut ca = CertificateAuthority::new(&mut rng);
        let mut serial = 1;
        let idp = issue_server(&mut ca, IDP_ID, Role::Idp, &mut serial, issued_at, &mut rng)?;
        let sp = issue_server(&mut ca, SP_ID, Role::Sp, &mut serial, issued_at, &mut rng)?;
        let mut out = Vec::with_capacity(clients);
        for i in 0..clients {
            let id = EntityId::new(FIRST_CLIENT + i as u32).map_err(|_| MaterialError::Missing("room for clients"))?;
            let k_ci = SymmetricKey::random(&mut rng);
            let explicit_key = even_key(&mut rng);
            let explicit_cert = explicit_issue(
                &mut ca,
                identity(id, Role::Client, serial, issued_at)?,
                &explicit_key.public_key(),
                &mut rng,
            )?;
            serial += 1;
            let mut credential = [0u8; CREDENTIAL_LEN];
            rng.fill_bytes(&mut credential);
            out.push(ClientMaterial { id, k_ci, explicit_key, explicit_cert, credential });
        }
        Ok(Material { seed, issued_at, ca_key: *ca.private_key(), idp, sp, clients: out })
    }

    pub fn q_ca(&self) -> CurvePoint {
        self.ca_key.public_key()
    }

    /// Unix time runs start at: one day into the validity window.
    pub fn run_epoch(&self) -> u64 {
        self.issued_at + 24 * 3600
    }

    pub fn flat_idp(&self, timers: Timers) -> IdpConfig {
        IdpConfig {
            id: self.idp.id,
            q_ca: self.q_ca(),
            cert: self.idp.implicit_cert,
            sk: self.idp.implicit_key,
            clients: self.clients.iter().map(|c| (c.id, c.k_ci)).collect(),
            timers,
        }
    }

    pub fn flat_sp(&self, timers: Timers) -> SpConfig {
        SpConfig {
            id: self.sp.id,
            idp: self.idp.id,
            q_ca: self.q_ca(),
            cert: self.sp.implicit_cert,
            sk: self.sp.implicit_key,
            timers,
        }
    }

    pub fn flat_client(&self, i: usize, timers: Timers) -> ClientConfig {
        let c = &self.clients[i];
        ClientConfig { id: c.id, idp: self.idp.id, sp: self.sp.id, k_ci: c.k_ci, timers }
    }

    pub fn baseline_idp(&self, timers: Timers) -> BaselineIdpConfig {
        BaselineIdpConfig {
            id: self.idp.id,
            cert: self.idp.explicit_cert,
            sk: self.idp.explicit_key,
            clients: self
                .clients
                .iter()
                .map(|c| (c.id, RegisteredClient { cert: c.explicit_cert, credential: c.credential }))
                .collect::<HashMap<_, _>>(),
            sps: [(self.sp.id, self.sp.explicit_cert)].into_iter().collect(),
            timers,
        }
    }

    pub fn baseline_sp(&self, timers: Timers) -> BaselineSpConfig {
        BaselineSpConfig {
            id: self.sp.id,
            idp: self.idp.id,
            q_ca: self.q_ca(),
            cert: self.sp.explicit_cert,
            sk: self.sp.explicit_key,
            idp_cert: self.idp.explicit_cert,
            timers,
        }
    }

    pub fn baseline_client(&self, i: usize, timers: Timers) -> BaselineClientConfig {
        let c = &self.clients[i];
        BaselineClientConfig {
            id: c.id,
            idp: self.idp.id,
            sp: self.sp.id,
            q_ca: self.q_ca(),
            cert: c.explicit_cert,
            sk: c.explicit_key,
            credential: c.credential,
            timers,
        }
    }
}

/// An SP whose implicit certificate comes from a CA outside the
/// federation, but which claims the real SP's identity.
pub fn rogue_sp(material: &Material, seed: u64) -> Result<ServerMaterial, MaterialError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rogue_ca = CertificateAuthority::new(&mut rng);
    let mut serial = 1;
    Ok(issue_server(&mut rogue_ca, material.sp.id, Role::Sp, &mut serial, material.issued_at, &mut rng)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub issued_at: u64,
    pub not_after: u64,
    pub ca: CaEntry,
    pub entities: Vec<EntityEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaEntry {
    pub private_key: String,
    pub public_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityEntry {
    pub id: EntityId,
    pub role: Role,
    /// File name per item, relative to the manifest.
    pub files: std::collections::BTreeMap<String, String>,
}

fn write_hex(dir: &Path, name: &str, bytes: &[u8]) -> Result<String, MaterialError> {
    let path = dir.join(name);
    fs::write(&path, format!("{}\n", hex::encode(bytes))).map_err(|source| MaterialError::Io { path, source })?;
    Ok(name.to_string())
}

fn read_hex(dir: &Path, name: &str) -> Result<Vec<u8>, MaterialError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|source| MaterialError::Io { path: path.clone(), source })?;
    hex::decode(text.trim()).map_err(|_| MaterialError::Hex { path })
}

/// Writes `material` to `dir` (created if needed) and returns the manifest.
pub fn save_material(material: &Material, dir: &Path) -> Result<Manifest, MaterialError> {
    fs::create_dir_all(dir).map_err(|source| MaterialError::Io { path: dir.to_path_buf(), source })?;
    let ca = CaEntry {
        private_key: write_hex(dir, "ca.key", &material.ca_key.to_bytes())?,
        public_key: write_hex(dir, "ca.pub", &material.q_ca().to_bytes())?,
    };
    let mut entities = Vec::new();
    for (name, role, s) in [("idp", Role::Idp, &material.idp), ("sp", Role::Sp, &material.sp)] {
        let files = [
            ("implicit_key", write_hex(dir, &format!("{name}.implicit.key"), &s.implicit_key.to_bytes())?),
            ("implicit_cert", write_hex(dir, &format!("{name}.implicit.cert"), &s.implicit_cert.to_bytes())?),
            ("explicit_key", write_hex(dir, &format!("{name}.explicit.key"), &s.explicit_key.to_bytes())?),
            ("explicit_cert", write_hex(dir, &format!("{name}.explicit.cert"), &s.explicit_cert.to_bytes())?),
        ];
        entities.push(EntityEntry {
            id: s.id,
            role,
            files: files.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
    }
    for c in &material.clients {
        let name = format!("client-{:06x}", c.id.get());
        let files = [
            ("k_ci", write_hex(dir, &format!("{name}.kci"), &c.k_ci.to_bytes())?),
            ("explicit_key", write_hex(dir, &format!("{name}.explicit.key"), &c.explicit_key.to_bytes())?),
            ("explicit_cert", write_hex(dir, &format!("{name}.explicit.cert"), &c.explicit_cert.to_bytes())?),
            ("credential", write_hex(dir, &format!("{name}.credential"), &c.credential)?),
        ];
        entities.push(EntityEntry {
            id: c.id,
            role: Role::Client,
            files: files.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
    }
    let manifest = Manifest {
        seed: material.seed,
        issued_at: material.issued_at,
        not_after: material.issued_at + VALIDITY_S,
        ca,
        entities,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|source| MaterialError::Io { path, source })?;
    Ok(manifest)
}

/// Generates fresh material with one Client and writes it to `out_dir`.
pub fn setup_material(out_dir: &Path, seed: u64) -> Result<Manifest, MaterialError> {
    save_material(&Material::generate(seed, 1, DEFAULT_ISSUED_AT)?, out_dir)
}

fn file<'a>(e: &'a EntityEntry, key: &str) -> Result<&'a str, MaterialError> {
    e.files.get(key).map(String::as_str).ok_or(MaterialError::Missing("entity file in manifest"))
}

fn invalid(dir: &Path, name: &str, reason: impl ToString) -> MaterialError {
    MaterialError::Invalid { path: dir.join(name), reason: reason.to_string() }
}

fn load_key(dir: &Path, name: &str) -> Result<PrivateKey, MaterialError> {
    PrivateKey::from_bytes(&read_hex(dir, name)?).map_err(|e| invalid(dir, name, e))
}

fn load_server(dir: &Path, e: &EntityEntry, q_ca: &CurvePoint) -> Result<ServerMaterial, MaterialError> {
    let name = file(e, "implicit_cert")?;
    let implicit_cert =
        ImplicitCertificate::from_bytes(&read_hex(dir, name)?).map_err(|err| invalid(dir, name, err))?;
    let implicit_key = load_key(dir, file(e, "implicit_key")?)?;
    if crate::pki::ecqv_extract(q_ca, &implicit_cert)? != implicit_key.public_key() {
        return Err(invalid(dir, name, "key does not match certificate"));
    }
    let name = file(e, "explicit_cert")?;
    let explicit_cert =
        ExplicitCertificate::from_bytes(&read_hex(dir, name)?).map_err(|err| invalid(dir, name, err))?;
    let explicit_key = load_key(dir, file(e, "explicit_key")?)?;
    if explicit_cert.public_key()? != explicit_key.public_key() {
        return Err(invalid(dir, name, "key does not match certificate"));
    }
    if implicit_cert.identity.entity_id != e.id || explicit_cert.identity.entity_id != e.id {
        return Err(invalid(dir, name, "certificate names a different entity"));
    }
    Ok(ServerMaterial { id: e.id, implicit_key, implicit_cert, explicit_key, explicit_cert })
}

/// Reads material written by [`save_material`], checking that every key
/// matches its certificate.
pub fn load_material(dir: &Path) -> Result<Material, MaterialError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|source| MaterialError::Io { path, source })?;
    let m: Manifest = serde_json::from_str(&text)?;
    let mut seen = BTreeSet::new();
    for e in &m.entities {
        if !seen.insert(e.id) {
            return Err(MaterialError::DuplicateEntity(e.id));
        }
    }
    let ca_key = load_key(dir, &m.ca.private_key)?;
    let q_ca = ca_key.public_key();
    let published =
        CurvePoint::from_bytes(&read_hex(dir, &m.ca.public_key)?).map_err(|e| invalid(dir, &m.ca.public_key, e))?;
    if published != q_ca {
        return Err(invalid(dir, &m.ca.public_key, "does not match the CA private key"));
    }
    let server = |role: Role, what: &'static str| -> Result<ServerMaterial, MaterialError> {
        let e = m.entities.iter().find(|e| e.role == role).ok_or(MaterialError::Missing(what))?;
        load_server(dir, e, &q_ca)
    };
    let idp = server(Role::Idp, "IdP")?;
    let sp = server(Role::Sp, "SP")?;
    let mut clients = Vec::new();
    for e in m.entities.iter().filter(|e| e.role == Role::Client) {
        let name = file(e, "k_ci")?;
        let k_ci = SymmetricKey::from_slice(&read_hex(dir, name)?).map_err(|err| invalid(dir, name, err))?;
        let name = file(e, "explicit_cert")?;
        let explicit_cert =
            ExplicitCertificate::from_bytes(&read_hex(dir, name)?).map_err(|err| invalid(dir, name, err))?;
        let explicit_key = load_key(dir, file(e, "explicit_key")?)?;
        if explicit_cert.public_key()? != explicit_key.public_key() || explicit_cert.identity.entity_id != e.id {
            return Err(invalid(dir, name, "certificate does not match key or entity"));
        }
        let name = file(e, "credential")?;
        let credential =
            read_hex(dir, name)?.try_into().map_err(|_| invalid(dir, name, "credential must be 32 bytes"))?;
        clients.push(ClientMaterial { id: e.id, k_ci, explicit_key, explicit_cert, credential });
    }
    if clients.is_empty() {
        return Err(MaterialError::Missing("Client"));
    }
    Ok(Material { seed: m.seed, issued_at: m.issued_at, ca_key, idp, sp, clients })
}
