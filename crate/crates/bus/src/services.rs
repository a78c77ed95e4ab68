//! Built-in service handlers and the default endpoint table.
//!
//! Every handler takes a JSON document and answers with a JSON document.
//! A caller's token is read from the `token` header, falling back to a
//! `"token"` field of the request body.

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vidbus_core::auth::{AuthError, Authenticator, Session, UserType};
use vidbus_core::registry::{AccessParamDoc, Registry, RegistryError, SearchQuery, SourceDescriptor, SourceSummary, SourceUpdate, SystemType};
use vidbus_core::time::unix_millis;

use crate::address::{Address, EndpointBinding};
use crate::envelope::{Reply, Status};
use crate::router::{Bus, Request};
use crate::BusError;

pub struct Services {
    pub auth: Arc<Authenticator>,
    pub registry: Arc<Registry>,
}

#[derive(Deserialize)]
struct LoginReq {
    username: String,
    password: String,
}

#[derive(Serialize)]
struct LoginReply<'a> {
    status: &'static str,
    usertype: UserType,
    token: &'a str,
    expires_at: u64,
}

#[derive(Deserialize)]
struct SearchReq {
    #[serde(default)]
    region: String,
    #[serde(default)]
    keyword: Option<String>,
    #[serde(default)]
    system_type: Option<SystemType>,
}

#[derive(Serialize)]
struct SearchReply {
    items: Vec<SourceSummary>,
}

#[derive(Deserialize)]
struct IdReq {
    id: String,
}

#[derive(Deserialize)]
struct AddSourceReq {
    source: SourceDescriptor,
    params: AccessParamDoc,
}

#[derive(Deserialize)]
struct UpdateSourceReq {
    id: String,
    update: SourceUpdate,
}

#[derive(Deserialize)]
struct AddUserReq {
    username: String,
    password: String,
    usertype: String,
}

#[derive(Deserialize)]
struct QueryReq {
    username: String,
}

#[derive(Serialize)]
struct UserDoc<'a> {
    status: &'static str,
    username: &'a str,
    usertype: UserType,
}

fn parse<T: DeserializeOwned>(req: &Request) -> Result<T, Reply> {
    serde_json::from_slice(&req.body).map_err(|e| Reply::error(Status::BadRequest, &format!("malformed request: {e}")))
}

pub fn auth_reply(e: &AuthError) -> Reply {
    let status = match e {
        AuthError::AuthFailed | AuthError::TokenInvalid | AuthError::TokenExpired => Status::Unauthorized,
        AuthError::WeakPassword(_) | AuthError::InvalidUsername(_) | AuthError::InvalidUserType(_) => Status::BadRequest,
        AuthError::DuplicateUser(_) => Status::Conflict,
        AuthError::StoreUnavailable(_) => Status::Unavailable,
    };
    Reply::error(status, &e.to_string())
}

pub fn registry_reply(e: &RegistryError) -> Reply {
    let status = match e {
        RegistryError::NoSuchSource(_) => Status::NotFound,
        RegistryError::DuplicateSource(_) => Status::Conflict,
        RegistryError::Forbidden => Status::Forbidden,
        RegistryError::InvalidDescriptor(_) => Status::BadRequest,
        RegistryError::KeyUnavailable | RegistryError::Store(_) => Status::Unavailable,
        RegistryError::CorruptRecord(_) | RegistryError::InvalidKey(_) => Status::Internal,
    };
    Reply::error(status, &e.to_string())
}

impl Services {
    fn session(&self, req: &Request) -> Result<Session, Reply> {
        let token = req.token().ok_or_else(|| Reply::error(Status::Unauthorized, "missing token"))?;
        self.auth.validate(&token).map_err(|e| auth_reply(&e))
    }

    fn admin(&self, req: &Request) -> Result<Session, Reply> {
        let s = self.session(req)?;
        if s.usertype != UserType::Admin {
            return Err(Reply::error(Status::Forbidden, "admin session required"));
        }
        Ok(s)
    }

    pub fn login(&self, req: &Request) -> Reply {
        let r: LoginReq = match parse(req) {
            Ok(r) => r,
            Err(e) => return e,
        };
        match self.auth.login(&r.username, &r.password) {
            Ok(s) => Reply::json(&LoginReply { status: "ok", usertype: s.usertype, token: &s.token, expires_at: s.expires_at }),
            Err(e) => auth_reply(&e),
        }
    }

    pub fn search(&self, req: &Request) -> Reply {
        let run = || -> Result<Reply, Reply> {
            self.session(req)?;
            let r: SearchReq = parse(req)?;
            let query = SearchQuery { region: r.region, keyword: r.keyword, system_type: r.system_type };
            Ok(Reply::json(&SearchReply { items: self.registry.search(&query) }))
        };
        run().unwrap_or_else(|e| e)
    }

    pub fn get_params(&self, req: &Request) -> Reply {
        let run = || -> Result<Reply, Reply> {
            let session = self.session(req)?;
            let r: IdReq = parse(req)?;
            let doc = self.registry.get_access_params(&r.id, &session).map_err(|e| registry_reply(&e))?;
            Ok(Reply::json(&doc))
        };
        run().unwrap_or_else(|e| e)
    }

    pub fn add_source(&self, req: &Request) -> Reply {
        let run = || -> Result<Reply, Reply> {
            self.admin(req)?;
            let r: AddSourceReq = parse(req)?;
            let id = self.registry.register_source(r.source, &r.params, unix_millis()).map_err(|e| registry_reply(&e))?;
            Ok(Reply::json(&serde_json::json!({ "status": "ok", "id": id })))
        };
        run().unwrap_or_else(|e| e)
    }

    pub fn update_source(&self, req: &Request) -> Reply {
        let run = || -> Result<Reply, Reply> {
            self.admin(req)?;
            let r: UpdateSourceReq = parse(req)?;
            let s = self.registry.update_source(&r.id, r.update, unix_millis()).map_err(|e| registry_reply(&e))?;
            Ok(Reply::json(&serde_json::json!({ "status": "ok", "source": SourceSummary::from(&s) })))
        };
        run().unwrap_or_else(|e| e)
    }

    pub fn add_user(&self, req: &Request) -> Reply {
        let run = || -> Result<Reply, Reply> {
            self.admin(req)?;
            let r: AddUserReq = parse(req)?;
            let usertype: UserType = r.usertype.parse().map_err(|e| auth_reply(&e))?;
            self.auth.add_user(&r.username, &r.password, usertype).map_err(|e| auth_reply(&e))?;
            Ok(Reply::json(&UserDoc { status: "ok", username: &r.username, usertype }))
        };
        run().unwrap_or_else(|e| e)
    }

    /// User lookup used by the login flow.
    pub fn query(&self, req: &Request) -> Reply {
        let r: QueryReq = match parse(req) {
            Ok(r) => r,
            Err(e) => return e,
        };
        match self.auth.lookup(&r.username) {
            Some((username, usertype)) => Reply::json(&UserDoc { status: "ok", username: &username, usertype }),
            None => Reply::error(Status::NotFound, "no such user"),
        }
    }

    pub fn health(&self, _req: &Request) -> Reply {
        Reply::json(&serde_json::json!({ "status": "ok" }))
    }
}

/// Handler names paired with their default endpoints.
pub const DEFAULT_ROUTES: &[(&str, &[&str])] = &[
    ("login", &["http:///user_login", "tcp:///login", "vm://login"]),
    ("search", &["http:///resources/search", "tcp:///search", "vm://search"]),
    ("get_params", &["http:///resources/{id}/params", "tcp:///get_params", "vm://get_params"]),
    ("add_source", &["http:///admin/sources", "tcp:///add_source"]),
    ("update_source", &["http:///admin/sources/{id}", "tcp:///update_source"]),
    ("add_user", &["http:///admin/users", "tcp:///add_user"]),
    ("query", &["vm://query"]),
    ("health", &["http:///healthz", "tcp:///health", "vm://health"]),
];

/// Registers the built-in handlers and endpoints, and resolves request
/// priorities from sessions.
pub fn install(bus: &Bus, services: Arc<Services>) -> Result<(), BusError> {
    type Op = fn(&Services, &Request) -> Reply;
    let ops: [(&str, Op); 8] = [
        ("login", Services::login),
        ("search", Services::search),
        ("get_params", Services::get_params),
        ("add_source", Services::add_source),
        ("update_source", Services::update_source),
        ("add_user", Services::add_user),
        ("query", Services::query),
        ("health", Services::health),
    ];
    for (name, op) in ops {
        let s = Arc::clone(&services);
        bus.register_handler(name, Arc::new(move |req: &Request| op(&s, req)));
    }
    for (handler, addresses) in DEFAULT_ROUTES {
        for a in *addresses {
            let address = Address::parse(a)?.to_string();
            bus.register_endpoint(EndpointBinding::new(address, *handler))?;
        }
    }
    let auth = Arc::clone(&services.auth);
    bus.set_priority_resolver(move |token| auth.validate(token).ok().map(|s| s.priority));
    Ok(())
}
