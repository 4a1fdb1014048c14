//! Helpers for tests that drive the `climadash` binary.
#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_climadash");
pub const AT: &str = "2024-07-01T00:00:00Z";
pub const AT_MS: i64 = 1_719_792_000_000;
pub const DAY_MS: i64 = 86_400_000;

pub fn reference_model() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/air_quality.cbm")
}

/// A `climadash serve` child process on an ephemeral port.
pub struct Server {
    child: Child,
    pub url: String,
}

impl Server {
    pub fn start(model: &Path, data: &Path) -> Self {
        let mut child = Command::new(BIN)
            .args(["serve", "--addr", "127.0.0.1:0", "--data"])
            .arg(data)
            .arg(model)
            .env_remove("CLIMADASH_ADDR")
            .env_remove("CLIMADASH_DATA")
            .env_remove("CLIMADASH_CORPUS")
            .stdout(Stdio::piped())
            .spawn()
            .expect("spawn climadash serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .expect("read listening line");
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .to_string();
        Server { child, url }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct Http {
    agent: ureq::Agent,
    base: String,
}

impl Http {
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        Http {
            agent,
            base: base.to_string(),
        }
    }

    fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, Value) {
        let mut resp = resp.expect("HTTP request");
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        Self::finish(self.agent.get(format!("{}{path}", self.base)).call())
    }

    pub fn post(&self, path: &str, content_type: &str, body: &str) -> (u16, Value) {
        Self::finish(
            self.agent
                .post(format!("{}{path}", self.base))
                .header("content-type", content_type)
                .send(body),
        )
    }

    pub fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        self.post(path, "application/json", &body.to_string())
    }

    pub fn put_json(&self, path: &str, body: &Value) -> (u16, Value) {
        Self::finish(
            self.agent
                .put(format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .send(body.to_string()),
        )
    }

    pub fn patch_json(&self, path: &str, body: &Value) -> (u16, Value) {
        Self::finish(
            self.agent
                .patch(format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .send(body.to_string()),
        )
    }

    pub fn delete(&self, path: &str) -> (u16, Value) {
        Self::finish(self.agent.delete(format!("{}{path}", self.base)).call())
    }
}

pub fn cli(args: &[&str]) -> String {
    let out = Command::new(BIN).args(args).output().expect("run climadash");
    assert!(out.status.success(), "climadash {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}


/// Runs the binary with the given arguments and environment overrides.
pub fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args)
        .env_remove("CLIMADASH_ADDR")
        .env_remove("CLIMADASH_DATA")
        .env_remove("CLIMADASH_CORPUS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run climadash")
}
