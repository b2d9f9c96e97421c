//! RIPE Atlas ping client.
//!
//! A fetch config names the vantage points (each tied to the probe that
//! measures from it) and the ping measurements (each targeting one vantage
//! point). Results are reduced to the minimum RTT per unordered pair over
//! the requested window and written in the measurement JSON schema.

use std::collections::BTreeMap;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use delayspace::geo::GeoPoint;
use delayspace::netgraph::{LatencyMatrix, VantagePoint};
use serde::{Deserialize, Serialize};

pub const DEFAULT_BASE_URL: &str = "https://atlas.ripe.net";
pub const API_KEY_ENV: &str = "ATLAS_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchConfig {
    pub vantage_points: Vec<AtlasVantagePoint>,
    pub measurements: Vec<AtlasMeasurement>,
    /// Window bounds as Unix seconds.
    #[serde(default)]
    pub start: Option<i64>,
    #[serde(default)]
    pub stop: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasVantagePoint {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub probe_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasMeasurement {
    pub msm_id: u64,
    /// Vantage point id of the ping target.
    pub target: String,
}

/// The fields of one ping result that the reduction reads.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PingResult {
    pub prb_id: u64,
    /// Per-packet replies; timeouts and errors carry no `rtt`.
    #[serde(default)]
    pub result: Vec<PingReply>,
    /// Summary minimum, `-1` when nothing came back.
    #[serde(default)]
    pub min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PingReply {
    #[serde(default)]
    pub rtt: Option<f64>,
}

impl PingResult {
    fn min_rtt(&self) -> Option<f64> {
        let replies = self.result.iter().filter_map(|r| r.rtt).filter(|r| *r > 0.0);
        replies.chain(self.min.filter(|m| *m > 0.0)).min_by(f64::total_cmp)
    }
}

#[derive(Debug)]
pub struct Reduction {
    pub matrix: LatencyMatrix,
    /// Pairs that had results but no successful ping.
    pub omitted: Vec<(String, String)>,
}

/// Reduces each unordered pair to its minimum RTT. Results from probes not
/// in the config, and pings from a vantage point to itself, are ignored.
pub fn reduce_ping_results(config: &FetchConfig, results: &[(AtlasMeasurement, Vec<PingResult>)]) -> anyhow::Result<Reduction> {
    let points = config
        .vantage_points
        .iter()
        .map(|v| {
            Ok(VantagePoint { id: v.id.clone(), name: v.name.clone(), location: GeoPoint::new(v.lat, v.lon)? })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut matrix = LatencyMatrix::new(points)?;
    let by_probe: BTreeMap<u64, &str> = config.vantage_points.iter().map(|v| (v.probe_id, v.id.as_str())).collect();

    let mut best: BTreeMap<(String, String), Option<f64>> = BTreeMap::new();
    for (msm, pings) in results {
        matrix.index_of(&msm.target).with_context(|| format!("measurement {}", msm.msm_id))?;
        for ping in pings {
            let Some(&src) = by_probe.get(&ping.prb_id) else {
                log::debug!("measurement {}: ignoring unknown probe {}", msm.msm_id, ping.prb_id);
                continue;
            };
            if src == msm.target {
                continue;
            }
            let key = if src < msm.target.as_str() {
                (src.to_string(), msm.target.clone())
            } else {
                (msm.target.clone(), src.to_string())
            };
            let slot = best.entry(key).or_insert(None);
            if let Some(rtt) = ping.min_rtt() {
                *slot = Some(slot.map_or(rtt, |b: f64| b.min(rtt)));
            }
        }
    }
    let mut omitted = Vec::new();
    for ((a, b), rtt) in best {
        match rtt {
            Some(rtt) => matrix.insert(&a, &b, rtt)?,
            None => {
                log::warn!("no successful pings between {a} and {b}; pair omitted");
                omitted.push((a, b));
            }
        }
    }
    Ok(Reduction { matrix, omitted })
}

pub struct AtlasClient {
    http: reqwest::Client,
    base_url: String,
    api_key: Option<String>,
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl AtlasClient {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        AtlasClient {
            http: reqwest::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            max_retries: 5,
            initial_backoff: Duration::from_secs(1),
        }
    }

    /// Reads the API key from [`API_KEY_ENV`] when set.
    pub fn from_env(base_url: impl Into<String>) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn results_url(&self, msm_id: u64, start: Option<i64>, stop: Option<i64>) -> String {
        let mut url = format!("{}/api/v2/measurements/{msm_id}/results/?format=json", self.base_url);
        if let Some(s) = start {
            url.push_str(&format!("&start={s}"));
        }
        if let Some(s) = stop {
            url.push_str(&format!("&stop={s}"));
        }
        url
    }

    /// Fetches one measurement's results, backing off on HTTP 429.
    pub async fn results(&self, msm_id: u64, start: Option<i64>, stop: Option<i64>) -> anyhow::Result<Vec<PingResult>> {
        let url = self.results_url(msm_id, start, stop);
        let mut backoff = self.initial_backoff;
        for attempt in 0..=self.max_retries {
            let mut req = self.http.get(&url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Key {key}"));
            }
            let resp = req.send().await.with_context(|| format!("GET {url}"))?;
            let status = resp.status();
            if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
                let wait = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.parse::<u64>().ok())
                    .map_or(backoff, Duration::from_secs);
                if attempt < self.max_retries {
                    log::warn!("rate limited on measurement {msm_id}; retrying in {wait:?}");
                    tokio::time::sleep(wait).await;
                    backoff *= 2;
                }
                continue;
            }
            if !status.is_success() {
                bail!("GET {url}: HTTP {status}");
            }
            let body = resp.bytes().await?;
            return serde_json::from_slice(&body).with_context(|| format!("measurement {msm_id}: malformed results"));
        }
        Err(anyhow!("measurement {msm_id}: rate-limit backoff exhausted after {} retries", self.max_retries))
    }
}

/// Fetches every configured measurement and reduces the results.
pub async fn fetch_measurements(client: &AtlasClient, config: &FetchConfig) -> anyhow::Result<Reduction> {
    let mut results = Vec::with_capacity(config.measurements.len());
    for msm in &config.measurements {
        let pings = client.results(msm.msm_id, config.start, config.stop).await?;
        log::info!("measurement {}: {} results", msm.msm_id, pings.len());
        results.push((msm.clone(), pings));
    }
    if results.iter().all(|(_, r)| r.is_empty()) {
        bail!("every measurement returned an empty result window");
    }
    reduce_ping_results(config, &results)
}
