//! Replicated synthetic simulations scored against exact policy values.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::method::{run_method, Method, Trace, SCHEMA_VERSION};
use crate::policy::PolicyRef;
use crate::seed::{derive_seed, derive_seed_tag};
use crate::spec::{Hyperparams, SafetySpec};
use crate::synthetic::{self, oracle_safe, ThresholdPolicy};

use super::config::BenchmarkConfig;

/// Replication seed: `derive_seed(master, r)`.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, r as u64)
}

/// What one method returned in one replication, scored against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub non_baseline: bool,
    pub violation: bool,
    /// `V_g(returned) - V_g(baseline)`; 0 on fallback.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub detection: f64,
    pub detection_se: f64,
    /// `None` when the method never left the baseline.
    pub type1: Option<f64>,
    pub type1_se: Option<f64>,
    pub ei: f64,
    pub ei_se: f64,
    pub reps: usize,
    pub non_baseline: usize,
    pub violations: usize,
}

impl MethodReport {
    pub fn from_outcomes(method: Method, outcomes: &[Outcome]) -> Self {
        let m = outcomes.len();
        let mf = m as f64;
        let hits = outcomes.iter().filter(|o| o.non_baseline).count();
        let violations = outcomes.iter().filter(|o| o.violation).count();
        let detection = hits as f64 / mf;
        let (type1, type1_se) = if hits == 0 {
            (None, None)
        } else {
            let p = violations as f64 / hits as f64;
            (Some(p), Some((p * (1.0 - p) / hits as f64).sqrt()))
        };
        let ei = outcomes.iter().map(|o| o.gain).sum::<f64>() / mf;
        let ei_se = if m > 1 {
            let var = outcomes.iter().map(|o| (o.gain - ei).powi(2)).sum::<f64>() / (mf - 1.0);
            (var / mf).sqrt()
        } else {
            0.0
        };
        Self {
            method,
            detection,
            detection_se: (detection * (1.0 - detection) / mf).sqrt(),
            type1,
            type1_se,
            ei,
            ei_se,
            reps: m,
            non_baseline: hits,
            violations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub config: BenchmarkConfig,
    pub class_size: usize,
    pub methods: Vec<MethodReport>,
    /// Wall time per method in seconds, summed over replications.
    pub wall_seconds: HashMap<String, f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.6}"))
}

impl BenchmarkReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,detection,detection_se,type1,type1_se,ei,ei_se,reps\n");
        for r in &self.methods {
            s.push_str(&format!(
                "{},{:.6},{:.6},{},{},{:.6},{:.6},{}\n",
                r.method,
                r.detection,
                r.detection_se,
                opt(r.type1),
                opt(r.type1_se),
                r.ei,
                r.ei_se,
                r.reps
            ));
        }
        s
    }
}

/// Worker pool sized by `SNPL_THREADS` when set, else the hardware default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SNPL_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("SNPL_THREADS=`{v}` is not a thread count")))?;
        if n > 0 {
            b = b.num_threads(n);
        }
    }
    b.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

struct Prepared {
    spec: SafetySpec,
    class: Vec<ThresholdPolicy>,
    refs: Vec<PolicyRef>,
    baseline: PolicyRef,
    base_values: [f64; 2],
}

fn prepare(config: &BenchmarkConfig) -> Result<Prepared> {
    config.validate()?;
    let spec = config.spec.build()?;
    let class = synthetic::build_class(config.grid_size);
    let refs = synthetic::as_policy_refs(&class);
    let base = synthetic::baseline();
    let (b1, b2) = base.true_values();
    Ok(Prepared {
        spec,
        class,
        refs,
        baseline: Arc::new(base),
        base_values: [b1, b2],
    })
}

fn method_hyper(config: &BenchmarkConfig, rep_seed: u64, m: Method) -> Hyperparams {
    Hyperparams {
        seed: derive_seed_tag(rep_seed, m.tag()),
        ..config.hyper.clone()
    }
}

fn score(p: &Prepared, trace: &Trace) -> Outcome {
    let d = trace.decision();
    match d.class_index {
        None => Outcome {
            non_baseline: false,
            violation: false,
            gain: 0.0,
        },
        Some(i) => {
            let (v1, v2) = p.class[i].true_values();
            let v = [v1, v2];
            let g = p.spec.goal - 1;
            Outcome {
                non_baseline: true,
                violation: !oracle_safe(&v, &p.base_values, &p.spec),
                gain: v[g] - p.base_values[g],
            }
        }
    }
}

type RepResult = Vec<(Outcome, f64, Option<String>)>;

/// `(replication, method, trace json)`.
pub type TraceRecord = (usize, Method, String);

fn run_replication(config: &BenchmarkConfig, p: &Prepared, r: usize) -> Result<RepResult> {
    let rep_seed = replication_seed(config.seed, r);
    let wrap = |e: Error| Error::Replication {
        replication: r,
        seed: rep_seed,
        source: Box::new(e),
    };
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed_tag(rep_seed, "data"));
    let ds = synthetic::generate(config.n, &mut data_rng);
    config
        .methods
        .iter()
        .map(|&m| {
            let t0 = Instant::now();
            let trace = run_method(
                m,
                &ds,
                &p.refs,
                &p.baseline,
                &p.spec,
                config.mode,
                config.in_loop_bound,
                &method_hyper(config, rep_seed, m),
            )
            .map_err(wrap)?;
            let secs = t0.elapsed().as_secs_f64();
            let json = config.write_traces.then(|| trace.to_json());
            Ok((score(p, &trace), secs, json))
        })
        .collect()
}

fn collect(config: &BenchmarkConfig, p: &Prepared, results: Vec<RepResult>) -> BenchmarkReport {
    let mut wall = HashMap::new();
    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let outs: Vec<Outcome> = results.iter().map(|r| r[k].0).collect();
            *wall.entry(m.tag().to_string()).or_insert(0.0) += results.iter().map(|r| r[k].1).sum::<f64>();
            MethodReport::from_outcomes(m, &outs)
        })
        .collect();
    BenchmarkReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        class_size: p.refs.len(),
        methods,
        wall_seconds: wall,
    }
}

/// Runs every replication (in parallel) and aggregates in replication order.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let (report, _) = run_benchmark_with_traces(config)?;
    Ok(report)
}

/// As [`run_benchmark`], also returning `(replication, method, trace json)`
/// for each run when `write_traces` is set.
pub fn run_benchmark_with_traces(config: &BenchmarkConfig) -> Result<(BenchmarkReport, Vec<TraceRecord>)> {
    let p = prepare(config)?;
    let pool = thread_pool()?;
    let results: Vec<RepResult> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| run_replication(config, &p, r))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut traces = Vec::new();
    for (r, rep) in results.iter().enumerate() {
        for (k, (_, _, json)) in rep.iter().enumerate() {
            if let Some(j) = json {
                traces.push((r, config.methods[k], j.clone()));
            }
        }
    }
    Ok((collect(config, &p, results), traces))
}

/// Writes `report.csv`, `report.json`, `truth.csv`, an example dataset from
/// replication 0, and traces if requested.
pub fn write_outputs(config: &BenchmarkConfig, out: &Path) -> Result<BenchmarkReport> {
    std::fs::create_dir_all(out)?;
    let (report, traces) = run_benchmark_with_traces(config)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    let p = prepare(config)?;
    let truth = synthetic::TruthTable::build(&p.class, &synthetic::baseline(), &p.spec);
    std::fs::write(out.join("truth.csv"), truth.to_csv())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_tag(replication_seed(config.seed, 0), "data"));
    let ds = synthetic::generate(config.n, &mut rng);
    super::io::write_dataset_file(&ds, &out.join("data_rep0.csv"), false)?;
    if !traces.is_empty() {
        let dir = out.join("traces");
        std::fs::create_dir_all(&dir)?;
        for (r, m, json) in traces {
            std::fs::write(dir.join(format!("rep{r:04}_{m}.json")), json)?;
        }
    }
    Ok(report)
}
