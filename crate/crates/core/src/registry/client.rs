use std::time::Duration;

use super::service::{ErrorBody, LookupResponse, RegisterRequest, RegisterResponse};
use super::{validate_registration, Directory, RegistryError, RegistryRecord};
use crate::crypto::{AccountId, PublicKey};

/// Blocking HTTP client for a [`RegistryServer`](super::RegistryServer).
#[derive(Debug, Clone)]
pub struct RegistryClient {
    base_url: String,
    agent: ureq::Agent,
}

impl RegistryClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            agent: ureq::Agent::new_with_config(config),
        }
    }

    /// Sends a raw registration and returns the HTTP status plus body; used
    /// by tests that exercise the wire protocol directly.
    pub fn post_raw(&self, body: &str) -> Result<(u16, String), RegistryError> {
        let mut resp = self
            .agent
            .post(format!("{}/v1/accounts", self.base_url))
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| RegistryError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| RegistryError::Protocol(e.to_string()))?;
        Ok((status, text))
    }

    pub fn get_raw(&self, username: &str) -> Result<(u16, String), RegistryError> {
        let mut resp = self
            .agent
            .get(format!("{}/v1/accounts/{}", self.base_url, username))
            .call()
            .map_err(|e| RegistryError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| RegistryError::Protocol(e.to_string()))?;
        Ok((status, text))
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<ErrorBody>(body)
        .map(|e| e.error)
        .unwrap_or_else(|_| body.to_owned())
}

fn decode<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, RegistryError> {
    serde_json::from_str(body).map_err(|e| RegistryError::Protocol(e.to_string()))
}

impl Directory for RegistryClient {
    fn register(&mut self, username: &str, public_key: &PublicKey) -> Result<AccountId, RegistryError> {
        let body = serde_json::to_string(&RegisterRequest {
            username: username.to_owned(),
            public_key: public_key.to_base64(),
        })
        .expect("request serializes");
        let (status, text) = self.post_raw(&body)?;
        match status {
            201 => Ok(decode::<RegisterResponse>(&text)?.account_id),
            409 => Err(RegistryError::DuplicateUsername(username.to_owned())),
            400 => Err(RegistryError::InvalidKey(error_message(&text))),
            other => Err(RegistryError::Protocol(format!(
                "status {other}: {}",
                error_message(&text)
            ))),
        }
    }

    fn lookup(&mut self, username: &str) -> Result<RegistryRecord, RegistryError> {
        let (status, text) = self.get_raw(username)?;
        match status {
            200 => {
                let r: LookupResponse = decode(&text)?;
                // Self-certifying check: never trust an id the key does not hash to.
                let (_, id) = validate_registration(&r.username, &r.public_key)
                    .map_err(|e| RegistryError::Protocol(e.to_string()))?;
                if id != r.account_id || r.username != username {
                    return Err(RegistryError::Protocol("record does not match its key".into()));
                }
                Ok(RegistryRecord {
                    username: r.username,
                    public_key: r.public_key,
                    account_id: r.account_id,
                    registered_at: 0.0,
                })
            }
            404 => Err(RegistryError::NotFound(username.to_owned())),
            other => Err(RegistryError::Protocol(format!(
                "status {other}: {}",
                error_message(&text)
            ))),
        }
    }
}
