//! Request counters and latency distributions: lifetime histograms with
//! log-spaced buckets, plus exact quantiles over a rolling time window.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use super::result::StageTimings;
use crate::classify::ClassificationMethod;

/// Buckets per doubling.
const SUB_BUCKETS: f64 = 8.0;
/// Lower edge of the first bucket, in milliseconds.
const MIN_MS: f64 = 0.01;
const N_BUCKETS: usize = 224;

pub const DEFAULT_WINDOW: Duration = Duration::from_secs(300);
const WINDOW_CAP: usize = 100_000;
const MINUTES_KEPT: usize = 60;

/// Lock-free histogram over `[MIN_MS, MIN_MS * 2^28)` with ~9% wide buckets.
#[derive(Debug)]
pub struct LatencyHistogram {
    buckets: Vec<AtomicU64>,
    count: AtomicU64,
    /// Sum and max in microseconds.
    sum_us: AtomicU64,
    max_us: AtomicU64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self {
            buckets: (0..N_BUCKETS).map(|_| AtomicU64::new(0)).collect(),
            count: AtomicU64::new(0),
            sum_us: AtomicU64::new(0),
            max_us: AtomicU64::new(0),
        }
    }
}

fn bucket_of(ms: f64) -> usize {
    if ms.is_nan() || ms <= MIN_MS {
        return 0;
    }
    (((ms / MIN_MS).log2() * SUB_BUCKETS).floor() as usize).min(N_BUCKETS - 1)
}

fn bucket_upper(i: usize) -> f64 {
    MIN_MS * 2f64.powf((i + 1) as f64 / SUB_BUCKETS)
}

impl LatencyHistogram {
    pub fn record(&self, ms: f64) {
        let ms = if ms.is_finite() { ms.max(0.0) } else { 0.0 };
        self.buckets[bucket_of(ms)].fetch_add(1, Ordering::Relaxed);
        self.count.fetch_add(1, Ordering::Relaxed);
        let us = (ms * 1e3).round() as u64;
        self.sum_us.fetch_add(us, Ordering::Relaxed);
        self.max_us.fetch_max(us, Ordering::Relaxed);
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    /// Upper edge of the bucket holding the `q`-quantile, capped at the
    /// largest observation.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        let counts: Vec<u64> = self.buckets.iter().map(|b| b.load(Ordering::Relaxed)).collect();
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let rank = ((q.clamp(0.0, 1.0) * total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        let max = self.max_us.load(Ordering::Relaxed) as f64 / 1e3;
        for (i, c) in counts.iter().enumerate() {
            seen += c;
            if seen >= rank {
                return Some(bucket_upper(i).min(max));
            }
        }
        Some(max)
    }

    pub fn summary(&self) -> LatencySummary {
        let count = self.count();
        LatencySummary {
            count,
            mean: (count > 0).then(|| self.sum_us.load(Ordering::Relaxed) as f64 / 1e3 / count as f64),
            p50: self.quantile(0.50),
            p90: self.quantile(0.90),
            p99: self.quantile(0.99),
            max: (count > 0).then(|| self.max_us.load(Ordering::Relaxed) as f64 / 1e3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean: Option<f64>,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub p99: Option<f64>,
    pub max: Option<f64>,
}

/// Nearest-rank quantile of an unsorted sample.
pub fn exact_quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize).max(1);
    Some(v[rank - 1])
}

fn exact_summary(values: &[f64]) -> LatencySummary {
    LatencySummary {
        count: values.len() as u64,
        mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        p50: exact_quantile(values, 0.50),
        p90: exact_quantile(values, 0.90),
        p99: exact_quantile(values, 0.99),
        max: values.iter().copied().reduce(f64::max),
    }
}

#[derive(Debug, Default)]
struct Window {
    samples: VecDeque<(Instant, StageTimings)>,
    minutes: VecDeque<(DateTime<Utc>, u64)>,
}

#[derive(Debug)]
pub struct Metrics {
    started: Instant,
    window_len: Duration,
    requests: AtomicU64,
    succeeded: AtomicU64,
    failed: AtomicU64,
    pages: AtomicU64,
    title_rule: AtomicU64,
    ml_fallback: AtomicU64,
    unclassified: AtomicU64,
    stage_errors: [AtomicU64; 4],
    stages: [LatencyHistogram; 6],
    persist: LatencyHistogram,
    window: Mutex<Window>,
}

const ERROR_STAGES: [&str; 4] = ["preprocess", "ocr", "classify", "extract"];

impl Default for Metrics {
    fn default() -> Self {
        Self::with_window(DEFAULT_WINDOW)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestCounts {
    pub total: u64,
    pub succeeded: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub seconds: u64,
    pub requests: u64,
    pub latency_ms: BTreeMap<String, LatencySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteCount {
    pub minute: DateTime<Utc>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub uptime_s: f64,
    pub requests: RequestCounts,
    pub pages: u64,
    pub classification: BTreeMap<String, u64>,
    /// Degraded or failed stage executions, by stage.
    pub errors: BTreeMap<String, u64>,
    pub latency_ms: BTreeMap<String, LatencySummary>,
    pub window: WindowReport,
    pub calls_per_minute: Vec<MinuteCount>,
}

impl Metrics {
    pub fn with_window(window_len: Duration) -> Self {
        Self {
            started: Instant::now(),
            window_len,
            requests: AtomicU64::new(0),
            succeeded: AtomicU64::new(0),
            failed: AtomicU64::new(0),
            pages: AtomicU64::new(0),
            title_rule: AtomicU64::new(0),
            ml_fallback: AtomicU64::new(0),
            unclassified: AtomicU64::new(0),
            stage_errors: Default::default(),
            stages: Default::default(),
            persist: LatencyHistogram::default(),
            window: Mutex::default(),
        }
    }

    fn count_call(&self, now: DateTime<Utc>) {
        let minute = now.duration_trunc(TimeDelta::minutes(1)).unwrap_or(now);
        let mut w = self.window.lock().expect("metrics window poisoned");
        match w.minutes.back_mut() {
            Some((m, c)) if *m == minute => *c += 1,
            _ => w.minutes.push_back((minute, 1)),
        }
        while w.minutes.len() > MINUTES_KEPT {
            w.minutes.pop_front();
        }
    }

    pub fn record_success(&self, timings: &StageTimings, pages: usize, methods: &[Option<ClassificationMethod>]) {
        self.requests.fetch_add(1, Ordering::Relaxed);
        self.succeeded.fetch_add(1, Ordering::Relaxed);
        self.pages.fetch_add(pages as u64, Ordering::Relaxed);
        for m in methods {
            let c = match m {
                Some(ClassificationMethod::TitleRule) => &self.title_rule,
                Some(ClassificationMethod::MlFallback) => &self.ml_fallback,
                None => &self.unclassified,
            };
            c.fetch_add(1, Ordering::Relaxed);
        }
        for (h, stage) in self.stages.iter().zip(StageTimings::STAGES) {
            h.record(timings.get(stage).unwrap_or(0.0));
        }
        self.count_call(Utc::now());
        let now = Instant::now();
        let mut w = self.window.lock().expect("metrics window poisoned");
        w.samples.push_back((now, *timings));
        while w.samples.len() > WINDOW_CAP {
            w.samples.pop_front();
        }
    }

    pub fn record_failure(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
        self.failed.fetch_add(1, Ordering::Relaxed);
        self.stage_errors[0].fetch_add(1, Ordering::Relaxed);
        self.count_call(Utc::now());
    }

    /// A stage ran degraded on one page.
    pub fn record_stage_error(&self, stage: &str) {
        if let Some(i) = ERROR_STAGES.iter().position(|s| *s == stage) {
            self.stage_errors[i].fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn record_persist(&self, ms: f64) {
        self.persist.record(ms);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let mut latency_ms: BTreeMap<String, LatencySummary> = StageTimings::STAGES
            .iter()
            .zip(&self.stages)
            .map(|(s, h)| (s.to_string(), h.summary()))
            .collect();
        latency_ms.insert("persist".into(), self.persist.summary());

        let now = Instant::now();
        let (window, calls_per_minute) = {
            let mut w = self.window.lock().expect("metrics window poisoned");
            while w.samples.front().is_some_and(|(t, _)| now.duration_since(*t) > self.window_len) {
                w.samples.pop_front();
            }
            let window = WindowReport {
                seconds: self.window_len.as_secs(),
                requests: w.samples.len() as u64,
                latency_ms: StageTimings::STAGES
                    .iter()
                    .map(|s| {
                        let v: Vec<f64> = w.samples.iter().map(|(_, t)| t.get(s).unwrap_or(0.0)).collect();
                        (s.to_string(), exact_summary(&v))
                    })
                    .collect(),
            };
            let calls = w.minutes.iter().map(|(m, c)| MinuteCount { minute: *m, count: *c }).collect();
            (window, calls)
        };
        let load = |a: &AtomicU64| a.load(Ordering::Relaxed);
        MetricsSnapshot {
            uptime_s: self.started.elapsed().as_secs_f64(),
            requests: RequestCounts {
                total: load(&self.requests),
                succeeded: load(&self.succeeded),
                failed: load(&self.failed),
            },
            pages: load(&self.pages),
            classification: [
                ("title_rule", load(&self.title_rule)),
                ("ml_fallback", load(&self.ml_fallback)),
                ("unclassified", load(&self.unclassified)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            errors: ERROR_STAGES
                .iter()
                .zip(&self.stage_errors)
                .map(|(s, c)| (s.to_string(), load(c)))
                .collect(),
            latency_ms,
            window,
            calls_per_minute,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_snapshot_is_zero() {
        let s = Metrics::default().snapshot();
        assert_eq!(s.requests, RequestCounts { total: 0, succeeded: 0, failed: 0 });
        assert_eq!(s.latency_ms["total"], LatencySummary::default());
        assert!(s.errors.values().all(|v| *v == 0));
        assert!(s.calls_per_minute.is_empty());
        assert_eq!(s.window.requests, 0);
    }

    #[test]
    fn counts_requests_and_methods() {
        let m = Metrics::default();
        let t = StageTimings { total_ms: 12.0, ocr_ms: 3.0, ..Default::default() };
        for _ in 0..5 {
            m.record_success(&t, 2, &[Some(ClassificationMethod::TitleRule), None]);
        }
        m.record_failure();
        m.record_stage_error("ocr");
        let s = m.snapshot();
        assert_eq!(s.requests, RequestCounts { total: 6, succeeded: 5, failed: 1 });
        assert_eq!((s.pages, s.classification["title_rule"], s.classification["unclassified"]), (10, 5, 5));
        assert_eq!((s.errors["preprocess"], s.errors["ocr"]), (1, 1));
        assert_eq!(s.window.latency_ms["total"].p50, Some(12.0));
        assert_eq!(s.latency_ms["total"].max, Some(12.0));
        assert_eq!(s.calls_per_minute.iter().map(|c| c.count).sum::<u64>(), 6);
    }

    #[test]
    fn window_forgets_old_samples() {
        let m = Metrics::with_window(Duration::from_millis(20));
        m.record_success(&StageTimings::default(), 1, &[]);
        std::thread::sleep(Duration::from_millis(40));
        let s = m.snapshot();
        assert_eq!((s.window.requests, s.requests.total), (0, 1));
    }

    #[test]
    fn exact_quantiles() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(exact_quantile(&v, 0.5), Some(3.0));
        assert_eq!(exact_quantile(&v, 0.9), Some(5.0));
        assert_eq!(exact_quantile(&v, 0.0), Some(1.0));
        assert_eq!(exact_quantile(&[], 0.5), None);
    }

    proptest! {
        #[test]
        fn histogram_quantile_brackets_exact(values in prop::collection::vec(0.02f64..10_000.0, 1..200), q in 0.01f64..1.0) {
            let h = LatencyHistogram::default();
            values.iter().for_each(|v| h.record(*v));
            let approx = h.quantile(q).unwrap();
            let exact = exact_quantile(&values, q).unwrap();
            // same bucket: at most one bucket width above, never below by more than rounding
            prop_assert!(approx >= exact - 1e-3, "{approx} < {exact}");
            prop_assert!(approx <= exact * 2f64.powf(1.0 / SUB_BUCKETS) + 1e-3, "{approx} >> {exact}");
        }
    }
}
