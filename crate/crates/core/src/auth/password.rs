use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use sha2::Sha256;

use super::{AuthError, UserRecord, UserType};

const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;
pub const MIN_PASSWORD_LEN: usize = 8;

/// At least eight characters with at least one letter and one digit.
pub fn check_password_policy(password: &str) -> Result<(), AuthError> {
    if password.chars().count() < MIN_PASSWORD_LEN {
        return Err(AuthError::WeakPassword(format!("must be at least {MIN_PASSWORD_LEN} characters")));
    }
    if !password.chars().any(char::is_alphabetic) || !password.chars().any(|c| c.is_ascii_digit()) {
        return Err(AuthError::WeakPassword("must contain a letter and a digit".into()));
    }
    Ok(())
}

fn derive(password: &str, salt: &[u8], iterations: u32) -> [u8; HASH_LEN] {
    let mut out = [0u8; HASH_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut out);
    out
}

pub fn hash_password(username: &str, password: &str, iterations: u32, usertype: UserType) -> UserRecord {
    let mut salt = vec![0u8; SALT_LEN];
    rand::rng().fill_bytes(&mut salt);
    let password_hash = derive(password, &salt, iterations).to_vec();
    UserRecord { username: username.to_string(), password_hash, salt, iterations, usertype }
}

pub fn verify_password(record: &UserRecord, password: &str) -> bool {
    let candidate = derive(password, &record.salt, record.iterations);
    constant_time_eq(&candidate, &record.password_hash)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_roundtrip() {
        let r = hash_password("u", "Pass1234", 1000, UserType::Viewer);
        assert!(verify_password(&r, "Pass1234"));
        assert!(!verify_password(&r, "Pass1235"));
        let r2 = hash_password("u", "Pass1234", 1000, UserType::Viewer);
        assert_ne!(r.salt, r2.salt);
        assert_ne!(r.password_hash, r2.password_hash);
    }
}
