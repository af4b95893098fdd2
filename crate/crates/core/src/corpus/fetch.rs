//! Produces a PR export from a GitHub-compatible REST API.

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Deserialize;
use thiserror::Error;

use super::mining::PrRecord;

#[derive(Debug, Clone)]
pub struct FetchConfig {
    /// API root, e.g. `https://api.github.com`.
    pub api: String,
    /// `owner/name`.
    pub repo: String,
    pub token: Option<String>,
    pub per_page: u32,
    pub timeout: Duration,
    /// Longest wait for a rate-limit reset before giving up.
    pub max_wait: Duration,
}

impl FetchConfig {
    pub fn new(repo: &str) -> FetchConfig {
        FetchConfig {
            api: "https://api.github.com".into(),
            repo: repo.into(),
            token: None,
            per_page: 100,
            timeout: Duration::from_secs(60),
            max_wait: Duration::from_secs(3600),
        }
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{url}: HTTP {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("{url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url}: rate limited for {wait_s} s, more than allowed")]
    RateLimited { url: String, wait_s: u64 },
    #[error("{url}: unexpected response: {message}")]
    BadResponse { url: String, message: String },
}

#[derive(Deserialize)]
struct PullSummary {
    number: u64,
    updated_at: DateTime<Utc>,
    merged_at: Option<DateTime<Utc>>,
    merge_commit_sha: Option<String>,
}

#[derive(Deserialize)]
struct PullFile {
    filename: String,
}

pub struct PrFetcher {
    config: FetchConfig,
    agent: ureq::Agent,
}

impl PrFetcher {
    pub fn new(config: FetchConfig) -> PrFetcher {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        PrFetcher { config, agent }
    }

    fn get(&self, path: &str, accept: &str) -> Result<ureq::Response, FetchError> {
        let url = format!("{}/{}", self.config.api.trim_end_matches('/'), path);
        loop {
            let mut req = self.agent.get(&url).set("Accept", accept).set("User-Agent", "obfusbench");
            if let Some(t) = &self.config.token {
                req = req.set("Authorization", &format!("Bearer {t}"));
            }
            match req.call() {
                Ok(r) => return Ok(r),
                Err(ureq::Error::Status(status, r)) if status == 403 || status == 429 => {
                    let Some(wait) = rate_limit_wait(&r) else {
                        return Err(FetchError::Status { url, status, body: r.into_string().unwrap_or_default() });
                    };
                    if wait > self.config.max_wait {
                        return Err(FetchError::RateLimited { url, wait_s: wait.as_secs() });
                    }
                    log::warn!("rate limited; waiting {} s", wait.as_secs());
                    std::thread::sleep(wait);
                }
                Err(ureq::Error::Status(status, r)) => {
                    return Err(FetchError::Status { url, status, body: r.into_string().unwrap_or_default() })
                }
                Err(e) => return Err(FetchError::Transport { url, message: e.to_string() }),
            }
        }
    }

    fn get_json<T: for<'de> Deserialize<'de>>(&self, path: &str) -> Result<T, FetchError> {
        let r = self.get(path, "application/vnd.github+json")?;
        let url = r.get_url().to_string();
        r.into_json().map_err(|e| FetchError::BadResponse { url, message: e.to_string() })
    }

    fn changed_paths(&self, number: u64) -> Result<Vec<String>, FetchError> {
        let mut out = Vec::new();
        for page in 1.. {
            let files: Vec<PullFile> =
                self.get_json(&format!("repos/{}/pulls/{number}/files?per_page={}&page={page}", self.config.repo, self.config.per_page))?;
            let last = files.len() < self.config.per_page as usize;
            out.extend(files.into_iter().map(|f| f.filename));
            if last {
                break;
            }
        }
        Ok(out)
    }

    fn diff(&self, number: u64) -> Result<String, FetchError> {
        let r = self.get(&format!("repos/{}/pulls/{number}", self.config.repo), "application/vnd.github.diff")?;
        let url = r.get_url().to_string();
        r.into_string().map_err(|e| FetchError::BadResponse { url, message: e.to_string() })
    }

    /// Every PR merged strictly after `since`, oldest merge first.
    pub fn fetch(&self, since: DateTime<Utc>) -> Result<Vec<PrRecord>, FetchError> {
        let mut merged = Vec::new();
        'pages: for page in 1.. {
            let pulls: Vec<PullSummary> = self.get_json(&format!(
                "repos/{}/pulls?state=closed&sort=updated&direction=desc&per_page={}&page={page}",
                self.config.repo, self.config.per_page
            ))?;
            let last = pulls.len() < self.config.per_page as usize;
            for p in pulls {
                // A merge after `since` implies an update after it too.
                if p.updated_at <= since {
                    break 'pages;
                }
                if let Some(at) = p.merged_at.filter(|at| *at > since) {
                    merged.push((at, p));
                }
            }
            if last {
                break;
            }
        }
        merged.sort_by_key(|(at, p)| (*at, p.number));
        let mut out = Vec::with_capacity(merged.len());
        for (at, p) in merged {
            log::info!("fetching PR #{}", p.number);
            out.push(PrRecord {
                id: p.number.to_string(),
                merged_at: at,
                changed_paths: self.changed_paths(p.number)?,
                diff: self.diff(p.number)?,
                merge_commit: p.merge_commit_sha,
            });
        }
        Ok(out)
    }
}

fn rate_limit_wait(r: &ureq::Response) -> Option<Duration> {
    if let Some(s) = r.header("retry-after").and_then(|v| v.trim().parse::<u64>().ok()) {
        return Some(Duration::from_secs(s));
    }
    if r.header("x-ratelimit-remaining")?.trim() != "0" {
        return None;
    }
    let reset: i64 = r.header("x-ratelimit-reset")?.trim().parse().ok()?;
    Some(Duration::from_secs((reset - Utc::now().timestamp()).max(0) as u64 + 1))
}
