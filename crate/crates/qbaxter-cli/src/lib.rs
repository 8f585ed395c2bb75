//! Batch runner: loads a JSON run configuration, executes verification suites
//! and spectrum pipelines, and writes a JSON report plus an optional CSV table
//! of eigenvalue samples.

use anyhow::{bail, Context};
use qbaxter::bethe::{
    aba_eigenvalue, aba_state, closed_joint_spectrum, factorize_closed_eigenvalue,
    factorize_q_eigenvalue, joint_spectrum, SpectrumRecord,
};
use qbaxter::chain::{sample_z, transfer_v, ChainParams};
use qbaxter::qoscillator::FockCutoff;
use qbaxter::tensor_core::{vec_norm, C64};
use qbaxter::verify::{self, params_digest, CheckOptions, CheckResult};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::path::Path;

pub const SCHEMA: u32 = 1;

pub const SUITES: [&str; 13] = [
    "ybe",
    "reflection",
    "fusion",
    "row-fusion",
    "split-trace",
    "tq",
    "commutators",
    "crossing",
    "polynomiality",
    "n2-closed-forms",
    "closed-chain",
    "spectrum",
    "bethe",
];

/// Complex number as `[re, im]`.
pub type Pair = [f64; 2];

fn c(p: Pair) -> C64 {
    C64::new(p[0], p[1])
}

fn pair(z: C64) -> Pair {
    [z.re, z.im]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub q: Pair,
    pub xi: Pair,
    pub xitilde: Pair,
    pub t: Vec<Pair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Pair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Pair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_radius: Option<f64>,
}

impl ParamsConfig {
    pub fn from_params(p: &ChainParams) -> Self {
        ParamsConfig {
            q: pair(p.q),
            xi: pair(p.xi),
            xitilde: pair(p.xitilde),
            t: p.t.iter().map(|&t| pair(t)).collect(),
            zeta: Some(pair(p.zeta)),
            r: Some(pair(p.r)),
            cutoff: Some(p.cutoff.j_max),
            tol: Some(p.tol),
            exclusion_radius: Some(p.exclusion_radius),
        }
    }

    pub fn to_params(&self) -> qbaxter::Result<ChainParams> {
        let mut p = ChainParams::new(c(self.q), c(self.xi), c(self.xitilde), self.t.iter().map(|&t| c(t)).collect())?;
        if let Some(z) = self.zeta {
            p.zeta = c(z);
        }
        if let Some(r) = self.r {
            p.r = c(r);
        }
        if let Some(j) = self.cutoff {
            p.cutoff = FockCutoff::new(j)?;
        }
        if let Some(t) = self.tol {
            p.tol = t;
        }
        if let Some(d) = self.exclusion_radius {
            p.exclusion_radius = d;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZSamples {
    Count(usize),
    List(Vec<Pair>),
}

impl Default for ZSamples {
    fn default() -> Self {
        ZSamples::Count(3)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Explicit parameters; when absent, generic parameters are sampled from
    /// `n_sites` and `seed`.
    #[serde(default)]
    pub params: Option<ParamsConfig>,
    #[serde(default)]
    pub n_sites: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub z_samples: ZSamples,
    /// Random samples per check.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default)]
    pub table_path: Option<String>,
}

/// Command-line overrides on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub suites: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub tol: Option<f64>,
    pub cutoff: Option<usize>,
}

pub fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A fully resolved run.
#[derive(Clone, Debug)]
pub struct Plan {
    pub params: ChainParams,
    pub seed: u64,
    pub suites: Vec<String>,
    pub z_samples: Vec<C64>,
    pub options: CheckOptions,
    pub output_path: Option<String>,
    pub table_path: Option<String>,
}

pub fn plan(cfg: &RunConfig, ov: &Overrides) -> anyhow::Result<Plan> {
    let seed = ov.seed.unwrap_or(cfg.seed);
    let mut params = match (&cfg.params, cfg.n_sites) {
        (Some(p), _) => p.to_params()?,
        (None, Some(n)) => ChainParams::sample(n, seed),
        (None, None) => bail!("config needs either params or n_sites"),
    };
    if let Some(j) = ov.cutoff {
        params.cutoff = FockCutoff::new(j)?;
    }
    params.validate()?;
    params.preflight(params.rho_open())?;
    let mut suites = if ov.suites.is_empty() { cfg.suites.clone() } else { ov.suites.clone() };
    if suites.is_empty() {
        bail!("no suites requested");
    }
    if suites.iter().any(|s| s == "all") {
        // the two-site closed forms only exist at N = 2
        suites = SUITES
            .iter()
            .filter(|&&s| s != "n2-closed-forms" || params.n_sites() == 2)
            .map(|s| s.to_string())
            .collect();
    }
    for s in &suites {
        if !SUITES.contains(&s.as_str()) {
            bail!("unknown suite {s:?}; known: {} and all", SUITES.join(", "));
        }
    }
    let z_samples = match &cfg.z_samples {
        ZSamples::Count(k) => sample_z(&params, *k, 0.9, seed),
        ZSamples::List(l) => l.iter().map(|&z| c(z)).collect(),
    };
    Ok(Plan {
        options: CheckOptions { seed, samples: cfg.samples.unwrap_or(5), tol: ov.tol, ..CheckOptions::default() },
        params,
        seed,
        suites,
        z_samples,
        output_path: ov.out.clone().or_else(|| cfg.output_path.clone()),
        table_path: cfg.table_path.clone(),
    })
}

fn ser_residual<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

fn de_residual<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub suite: String,
    pub name: String,
    /// `null` when the check could not be evaluated.
    #[serde(serialize_with = "ser_residual", deserialize_with = "de_residual")]
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub conjecture: bool,
    pub params_digest: String,
    pub notes: String,
}

impl CheckRecord {
    fn from(suite: &str, r: CheckResult) -> Self {
        CheckRecord {
            suite: suite.to_string(),
            name: r.name,
            residual: r.residual,
            tolerance: r.tolerance,
            passed: r.passed,
            conjecture: r.conjecture,
            params_digest: r.params_digest,
            notes: r.notes,
        }
    }

    fn errored(&self) -> bool {
        !self.residual.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub z: Pair,
    pub tv: Pair,
    pub q: Pair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub closed: bool,
    pub sector: usize,
    pub record_index: usize,
    pub samples: Vec<SampleRow>,
    pub q_coefficients: Vec<Pair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetheEntry {
    pub closed: bool,
    pub sector: usize,
    pub record_index: usize,
    /// `y_j^2`
    pub roots_sq: Vec<Pair>,
    pub max_residual: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub checks: usize,
    pub failed: usize,
    pub conjecture_failed: usize,
    pub errors: usize,
    /// Set when only conjectured properties failed.
    pub conjecture_flag: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub timestamp: String,
    pub seed: u64,
    pub params: ParamsConfig,
    pub params_digest: String,
    pub suites: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub spectrum: Vec<SpectrumEntry>,
    pub bethe: Vec<BetheEntry>,
    pub errors: Vec<String>,
    pub summary: Summary,
}

impl Report {
    pub fn empty(p: &ChainParams, seed: u64) -> Self {
        Report {
            schema: SCHEMA,
            timestamp: chrono::Utc::now().to_rfc3339(),
            seed,
            params: ParamsConfig::from_params(p),
            params_digest: params_digest(p, seed),
            suites: vec![],
            checks: vec![],
            spectrum: vec![],
            bethe: vec![],
            errors: vec![],
            summary: Summary { checks: 0, failed: 0, conjecture_failed: 0, errors: 0, conjecture_flag: false },
        }
    }

    fn summarize(&mut self) {
        let theorem_fail = self.checks.iter().filter(|r| !r.passed && !r.conjecture && !r.errored()).count();
        let conj_fail = self.checks.iter().filter(|r| !r.passed && r.conjecture && !r.errored()).count();
        let errors = self.errors.len() + self.checks.iter().filter(|r| r.errored()).count();
        self.summary = Summary {
            checks: self.checks.len(),
            failed: theorem_fail,
            conjecture_failed: conj_fail,
            errors,
            conjecture_flag: conj_fail > 0,
        };
    }

    /// 0 when every theorem check passed, 1 on a theorem failure, 2 when something
    /// could not be evaluated.
    pub fn exit_code(&self) -> i32 {
        if self.summary.errors > 0 {
            2
        } else if self.summary.failed > 0 {
            1
        } else {
            0
        }
    }

    pub fn table_rows(&self) -> usize {
        self.spectrum.iter().map(|s| s.samples.len()).sum()
    }
}

#[derive(Default)]
struct SuiteOutput {
    checks: Vec<CheckRecord>,
    spectrum: Vec<SpectrumEntry>,
    bethe: Vec<BetheEntry>,
    errors: Vec<String>,
}

fn spectrum_entries(recs: &[SpectrumRecord], closed: bool) -> Vec<SpectrumEntry> {
    recs.iter()
        .enumerate()
        .map(|(i, r)| SpectrumEntry {
            closed,
            sector: r.sector.m_down,
            record_index: i,
            samples: r
                .tv_samples
                .iter()
                .map(|&(z, tv)| SampleRow { z: pair(z), tv: pair(tv), q: pair(r.q_poly.eval(z * z)) })
                .collect(),
            q_coefficients: r.q_poly.0.iter().map(|&x| pair(x)).collect(),
        })
        .collect()
}

fn spectrum_suite(plan: &Plan) -> SuiteOutput {
    let p = &plan.params;
    let d = params_digest(p, plan.seed);
    let mut out = SuiteOutput::default();
    match joint_spectrum(p, C64::new(0.71, 0.43), &plan.z_samples) {
        Ok(recs) => {
            let tv = recs.iter().map(|r| r.tv_residual).fold(0.0, f64::max);
            let fit = recs.iter().map(|r| r.q_fit_residual).fold(0.0, f64::max);
            out.checks.push(CheckRecord::from("spectrum", CheckResult::new("spectrum:eigenvector", tv, 1e-8, &d)));
            out.checks.push(CheckRecord::from("spectrum", CheckResult::new("spectrum:q-fit", fit, 1e-8, &d)));
            out.spectrum = spectrum_entries(&recs, false);
        }
        Err(e) => out.errors.push(format!("spectrum: {e}")),
    }
    out
}

fn bethe_suite(plan: &Plan) -> SuiteOutput {
    let p = &plan.params;
    let d = params_digest(p, plan.seed);
    let mut out = SuiteOutput::default();
    let recs = match joint_spectrum(p, C64::new(0.71, 0.43), &plan.z_samples) {
        Ok(r) => r,
        Err(e) => {
            out.errors.push(format!("bethe: {e}"));
            return out;
        }
    };
    let (mut prod, mut res, mut eig, mut state) = (0f64, 0f64, 0f64, 0f64);
    for (i, rec) in recs.iter().enumerate() {
        let roots = match factorize_q_eigenvalue(rec, p) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(format!("bethe: record {i} (M = {}): {e}", rec.sector.m_down));
                continue;
            }
        };
        let worst = roots.residuals.iter().map(|r| r.norm()).fold(0.0, f64::max);
        prod = prod.max(roots.product_residual);
        res = res.max(worst);
        for &(z, l) in &rec.tv_samples {
            match aba_eigenvalue(z, &roots.roots, p) {
                Ok(e) => eig = eig.max((e - l).norm() / l.norm().max(1e-300)),
                Err(e) => out.errors.push(format!("bethe: record {i}: {e}")),
            }
        }
        if let (Some(&(z, l)), true) = (rec.tv_samples.first(), roots.m_roots <= 2) {
            match (aba_state(&roots.roots, p), transfer_v(z, p)) {
                (Ok(st), Ok(tv)) => {
                    let r: Vec<C64> = tv.mul_vec(&st).iter().zip(&st).map(|(a, b)| a - l * b).collect();
                    state = state.max(vec_norm(&r) / vec_norm(&st).max(1e-300));
                }
                (Err(e), _) | (_, Err(e)) => out.errors.push(format!("bethe: record {i}: {e}")),
            }
        }
        out.bethe.push(BetheEntry {
            closed: false,
            sector: rec.sector.m_down,
            record_index: i,
            roots_sq: roots.roots_sq.iter().map(|&y| pair(y)).collect(),
            max_residual: worst,
            degenerate: roots.degenerate,
        });
    }
    for (name, r, tol) in [
        ("bethe:root-product", prod, 1e-8),
        ("bethe:residual", res, 1e-6),
        ("bethe:ansatz-eigenvalue", eig, 1e-6),
        ("bethe:ansatz-state", state, 1e-5),
    ] {
        out.checks.push(CheckRecord::from("bethe", CheckResult::new(name, r, tol, &d)));
    }
    out
}

fn closed_suite(plan: &Plan) -> SuiteOutput {
    let p = &plan.params;
    let d = params_digest(p, plan.seed);
    let mut out = SuiteOutput {
        checks: verify::check_closed_chain(p, &plan.options).into_iter().map(|r| CheckRecord::from("closed-chain", r)).collect(),
        ..SuiteOutput::default()
    };
    match closed_joint_spectrum(p, C64::new(0.63, 0.52), &plan.z_samples) {
        Ok(recs) => {
            let mut worst = 0f64;
            for (i, rec) in recs.iter().enumerate() {
                match factorize_closed_eigenvalue(rec, p) {
                    Ok(roots) => {
                        let w = roots.residuals.iter().map(|r| r.norm()).fold(0.0, f64::max);
                        worst = worst.max(w);
                        out.bethe.push(BetheEntry {
                            closed: true,
                            sector: rec.sector.m_down,
                            record_index: i,
                            roots_sq: roots.roots_sq.iter().map(|&y| pair(y)).collect(),
                            max_residual: w,
                            degenerate: roots.degenerate,
                        });
                    }
                    Err(e) => out.errors.push(format!("closed-chain: record {i}: {e}")),
                }
            }
            out.checks.push(CheckRecord::from("closed-chain", CheckResult::new("closed:bethe", worst, 1e-6, &d)));
            out.spectrum = spectrum_entries(&recs, true);
        }
        Err(e) => out.errors.push(format!("closed-chain: {e}")),
    }
    out
}

fn run_suite(name: &str, plan: &Plan) -> SuiteOutput {
    let (p, o) = (&plan.params, &plan.options);
    let checks = match name {
        "ybe" => verify::check_ybe(p, o),
        "reflection" => verify::check_reflection(p, o),
        "fusion" => verify::check_fusion(p, o),
        "row-fusion" => verify::check_row_fusion_and_monodromy(p, o),
        "split-trace" => verify::check_split_trace(p, o, None),
        "tq" => verify::check_tq(p, o, Some(&plan.z_samples)),
        "commutators" => verify::check_commutators(p, o),
        "crossing" => verify::check_crossing(p, o),
        "polynomiality" => verify::check_polynomiality(p, o),
        "n2-closed-forms" => verify::check_n2_closed_forms(p, o),
        "closed-chain" => return closed_suite(plan),
        "spectrum" => return spectrum_suite(plan),
        "bethe" => return bethe_suite(plan),
        _ => unreachable!("suite names are validated in plan"),
    };
    SuiteOutput { checks: checks.into_iter().map(|r| CheckRecord::from(name, r)).collect(), ..SuiteOutput::default() }
}

/// Runs every planned suite in parallel; results keep the requested order.
pub fn run(plan: &Plan) -> Report {
    let outputs: Vec<SuiteOutput> = plan.suites.par_iter().map(|s| run_suite(s, plan)).collect();
    let mut report = Report::empty(&plan.params, plan.seed);
    report.suites = plan.suites.clone();
    for o in outputs {
        report.checks.extend(o.checks);
        report.spectrum.extend(o.spectrum);
        report.bethe.extend(o.bethe);
        report.errors.extend(o.errors);
    }
    report.summarize();
    report
}

pub fn export_report(report: &Report, path: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub const TABLE_HEADER: [&str; 8] = ["sector", "record_index", "z_re", "z_im", "tv_re", "tv_im", "q_re", "q_im"];

/// One row per (record, z sample); closed-chain records are left out.
pub fn export_table(report: &Report, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(TABLE_HEADER)?;
    for s in report.spectrum.iter().filter(|s| !s.closed) {
        for r in &s.samples {
            w.write_record(&[
                s.sector.to_string(),
                s.record_index.to_string(),
                r.z[0].to_string(),
                r.z[1].to_string(),
                r.tv[0].to_string(),
                r.tv[1].to_string(),
                r.q[0].to_string(),
                r.q[1].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One-line summary for the terminal.
pub fn summary_line(r: &Report) -> String {
    let mut s = format!(
        "{} checks, {} failed, {} conjecture failures, {} errors",
        r.summary.checks, r.summary.failed, r.summary.conjecture_failed, r.summary.errors
    );
    if r.summary.conjecture_flag {
        s.push_str(" [CONJECTURE CHECK FAILED]");
    }
    s
}
