use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sunprobit::gauss::{normal, sample_mvn, TmvnMethod};
use sunprobit::model::{build, class_frequencies};
use sunprobit::oracle::{self, GibbsSettings, OracleReport};
use sunprobit::rng::{seeded, StreamKey};
use sunprobit::serde_util::matrix_rows;
use sunprobit::sun::{self, CDF_CAP, SAMPLER_CAP};
use sunprobit::vb::{self, AugmentedForm, Blocking, MfState, VBState};
use sunprobit::{
    CdfResult, CdfSettings, Dataset, ModelFamily, ModelSpec, Predictors, ProbitLikelihood,
    SunParams,
};

use crate::config::{BlockingSpec, Method, RunConfig};
use crate::error::{config_err, CliError, CliResult};
use crate::ingest::{ingest, Preprocessing, Table};

pub const SCHEMA: u32 = 1;

const SPLIT: u64 = 1;
const DRAWS: u64 = 2;
const EVIDENCE: u64 = 3;
const PREDICT: u64 = 4;
const FOLDS: u64 = 5;

fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut r = seeded(seed);
    r.set_stream(purpose);
    r
}

fn need_seed(seed: Option<u64>, what: &str) -> CliResult<u64> {
    seed.ok_or_else(|| {
        config_err(format!(
            "{what} is stochastic and needs a seed (--seed or \"seed\" in the config)"
        ))
    })
}

/// Everything needed to predict without the training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fitted {
    pub family: ModelFamily,
    pub method: Method,
    pub draws: usize,
    pub sigma: Option<Vec<Vec<f64>>>,
    pub preprocessing: Preprocessing,
    pub posterior: SunParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vb: Option<VBState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mf: Option<MfState>,
}

impl Fitted {
    pub fn spec(&self) -> CliResult<ModelSpec> {
        let l = self.preprocessing.classes();
        let sigma = match &self.sigma {
            Some(rows) => Some(sunprobit::chol_psd(
                &sunprobit::serde_util::matrix_from_rows(rows, l, l, "sigma")?,
            )?),
            None => None,
        };
        Ok(ModelSpec::new(
            self.family,
            l,
            self.preprocessing.predictor_names().len(),
            sigma,
        )?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Quantiles {
    #[serde(rename = "2.5%")]
    pub q025: f64,
    #[serde(rename = "25%")]
    pub q25: f64,
    #[serde(rename = "50%")]
    pub q50: f64,
    #[serde(rename = "75%")]
    pub q75: f64,
    #[serde(rename = "97.5%")]
    pub q975: f64,
}

const PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

impl Quantiles {
    fn from_values(v: [f64; 5]) -> Self {
        Quantiles {
            q025: v[0],
            q25: v[1],
            q50: v[2],
            q75: v[3],
            q975: v[4],
        }
    }

    /// Linear interpolation between order statistics.
    fn empirical(column: &[f64]) -> Self {
        let mut s = column.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        Self::from_values(PROBS.map(|p| {
            let h = p * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            s[lo] + (h - lo as f64) * (s[hi] - s[lo])
        }))
    }

    fn gaussian(mean: f64, sd: f64) -> Self {
        Self::from_values(PROBS.map(|p| mean + sd * normal::quantile(p)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Quantiles>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub warnings: Vec<String>,
    pub jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmvn_method: Option<TmvnMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl Diagnostics {
    fn note_sampler(&mut self, meta: &sun::SamplerMeta) {
        self.jitter = self.jitter.max(meta.jitter);
        if meta.tmvn_method.is_some() {
            self.tmvn_method = meta.tmvn_method;
            self.acceptance = Some(meta.acceptance);
        }
        if meta.tmvn_method == Some(TmvnMethod::Gibbs) {
            self.warnings
                .push("truncated normal draws fell back to Gibbs sampling; draws are not exactly independent".into());
        }
        if meta.jitter > 0.0 {
            self.warnings.push(format!(
                "covariance factorization needed jitter {:e}",
                meta.jitter
            ));
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvidenceReport {
    pub log_evidence: f64,
    pub tolerance_met: bool,
    pub posterior: CdfResult,
    pub prior: CdfResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredRow {
    pub row: usize,
    pub probs: Vec<f64>,
    pub predicted: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance_met: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredTable {
    pub rule: &'static str,
    pub rows: Vec<PredRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub schema: u32,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub family: ModelFamily,
    pub method: Method,
    pub labels: Vec<String>,
    pub n_train: usize,
    pub n_holdout: usize,
    pub dropped_columns: Vec<String>,
    pub coefficients: Vec<Coefficient>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_evidence: Option<EvidenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout: Option<PredTable>,
    pub fitted: Fitted,
}

/// Rows of `dataset` selected by `idx`.
fn subset(data: &Dataset, idx: &[usize]) -> CliResult<Dataset> {
    let y = idx.iter().map(|&i| data.y[i]).collect();
    let x = match &data.x {
        Predictors::PerUnit(x) => Predictors::PerUnit(x.select_rows(idx)),
        Predictors::PerClass(v) => {
            Predictors::PerClass(idx.iter().map(|&i| v[i].clone()).collect())
        }
    };
    Ok(Dataset::new(y, x)?)
}

fn holdout_rows(cfg: &RunConfig, n: usize, seed: Option<u64>) -> CliResult<Vec<usize>> {
    let Some(h) = &cfg.holdout else {
        return Ok(Vec::new());
    };
    if let Some(rows) = &h.rows {
        let mut out = Vec::new();
        for &r in rows {
            if r == 0 || r > n {
                return Err(config_err(format!("holdout row {r} outside 1..={n}")));
            }
            if !out.contains(&(r - 1)) {
                out.push(r - 1);
            }
        }
        out.sort_unstable();
        return Ok(out);
    }
    let k = (h.fraction.unwrap_or(0.0) * n as f64).round() as usize;
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(
        need_seed(seed, "a fractional holdout split")?,
        SPLIT,
    ));
    let mut out = perm[..k].to_vec();
    out.sort_unstable();
    Ok(out)
}

fn cap_error(what: &str, dim: usize, cap: usize) -> CliError {
    CliError::Cap(format!(
        "{what} needs h+m <= {cap} but the data give h+m = {dim}; use method=pfm for large samples"
    ))
}

struct Trained {
    fitted: Fitted,
    spec: ModelSpec,
    lik: ProbitLikelihood,
    coefficients: Vec<Coefficient>,
    diagnostics: Diagnostics,
    draws: Option<DMatrix<f64>>,
}

fn model_spec(
    cfg: &RunConfig,
    prep: &Preprocessing,
    diag: &mut Diagnostics,
) -> CliResult<(ModelSpec, Option<Vec<Vec<f64>>>)> {
    let family = cfg.family();
    let l = prep.classes();
    let (sigma, unnormalized) = match family {
        ModelFamily::Sequential => (None, false),
        _ => cfg.sigma.build(l)?,
    };
    if unnormalized {
        diag.warnings.push(
            "sigma is not correlation-normalized; coefficients are only identified up to scale"
                .into(),
        );
    }
    let stored = sigma.as_ref().map(|s| matrix_rows(s.values()));
    Ok((
        ModelSpec::new(family, l, prep.predictor_names().len(), sigma)?,
        stored,
    ))
}

fn train(
    cfg: &RunConfig,
    data: &Dataset,
    prep: &Preprocessing,
    seed: Option<u64>,
) -> CliResult<Trained> {
    let mut diag = Diagnostics::default();
    let (spec, sigma) = model_spec(cfg, prep, &mut diag)?;
    let prior = cfg.prior.build(spec.q())?;
    let lik = build(&spec, data)?;
    let post = sun::posterior_update(&prior, &lik)?;
    let names = prep.coefficient_names(spec.family);
    let q = spec.q();
    let t = cfg.draws;
    let mut fitted = Fitted {
        family: spec.family,
        method: cfg.method,
        draws: t,
        sigma,
        preprocessing: prep.clone(),
        posterior: post.clone(),
        vb: None,
        mf: None,
    };
    let (mean, sd, draws, gaussian) = match cfg.method {
        Method::Exact => {
            if post.h() > SAMPLER_CAP {
                return Err(cap_error("method=exact", post.h(), SAMPLER_CAP));
            }
            if t < 2 {
                return Err(config_err("method=exact needs draws >= 2"));
            }
            let d = sun::sample_posterior(
                &post,
                t,
                &mut stream(need_seed(seed, "method=exact")?, DRAWS),
            )?;
            diag.note_sampler(&d.meta);
            let cov = d.covariance();
            let sd = DVector::from_fn(q, |i, _| cov[(i, i)].sqrt());
            (d.mean(), sd, Some(d.draws), false)
        }
        Method::Pfm => {
            let aug = vb::augmented_form(&post, &lik)?;
            let blocking = match cfg.vb.blocking {
                BlockingSpec::Unit => vb::default_blocking(&aug),
                BlockingSpec::Singleton => Blocking::singleton(aug.dim()),
            };
            let state = vb::cavi_pfm(&aug, &blocking, cfg.vb.tol, cfg.vb.max_iter)?;
            note_convergence(&mut diag, state.converged, state.iterations);
            let (m, c) = vb::vb_moments(&state, &aug);
            fitted.vb = Some(state);
            (m, DVector::from_fn(q, |i, _| c[(i, i)].sqrt()), None, false)
        }
        Method::Mf => {
            let aug = vb::augmented_form(&post, &lik)?;
            let state = vb::cavi_mf(
                &aug,
                &Blocking::singleton(aug.dim()),
                cfg.vb.tol,
                cfg.vb.max_iter,
            )?;
            note_convergence(&mut diag, state.z.converged, state.z.iterations);
            let (m, c) = state.moments(&aug);
            fitted.mf = Some(state);
            (m, DVector::from_fn(q, |i, _| c[(i, i)].sqrt()), None, true)
        }
    };
    let draws = match draws {
        Some(d) => Some(d),
        None if t > 0 => {
            let (d, meta) = approx_draws(
                &fitted,
                &mut stream(need_seed(seed, "posterior draws")?, DRAWS),
            )?;
            if let Some(meta) = meta {
                diag.note_sampler(&meta);
            }
            Some(d)
        }
        None => None,
    };
    let coefficients = (0..q)
        .map(|j| Coefficient {
            name: names[j].clone(),
            mean: mean[j],
            sd: sd[j],
            quantiles: if gaussian {
                Some(Quantiles::gaussian(mean[j], sd[j]))
            } else {
                draws
                    .as_ref()
                    .map(|d| Quantiles::empirical(d.column(j).as_slice()))
            },
        })
        .collect();
    Ok(Trained {
        fitted,
        spec,
        lik,
        coefficients,
        diagnostics: diag,
        draws,
    })
}

fn note_convergence(diag: &mut Diagnostics, converged: bool, iterations: usize) {
    diag.converged = Some(converged);
    diag.iterations = Some(iterations);
    if !converged {
        diag.warnings.push(format!(
            "variational fit did not converge within {iterations} iterations"
        ));
    }
}

/// Draws from a variational fit, built only from the stored artifact.
fn approx_draws(
    fitted: &Fitted,
    rng: &mut ChaCha8Rng,
) -> CliResult<(DMatrix<f64>, Option<sun::SamplerMeta>)> {
    let aug = AugmentedForm::from_posterior(&fitted.posterior)?;
    let t = fitted.draws;
    match (&fitted.vb, &fitted.mf) {
        (Some(state), _) => {
            let d = vb::sample_vb(state, &aug, t, rng)?;
            Ok((d.draws, Some(d.meta)))
        }
        (None, Some(mf)) => {
            let (m, c) = mf.moments(&aug);
            Ok((sample_mvn(&m, &sunprobit::chol_psd(&c)?, t, rng)?, None))
        }
        _ => Err(config_err("fitted artifact has no variational state")),
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best + 1
}

/// Predictive table for `x`; exact ratios for method=exact, draw frequencies
/// otherwise.
fn predict_rows(
    fitted: &Fitted,
    spec: &ModelSpec,
    x: &Predictors,
    observed: Option<&[usize]>,
    row_ids: &[usize],
    cdf: &CdfSettings,
    seed: u64,
) -> CliResult<PredTable> {
    let prep = &fitted.preprocessing;
    let key = StreamKey::draw(&mut stream(seed, PREDICT));
    let n = x.len();
    let (rule, results): (
        &'static str,
        Vec<CliResult<(Vec<f64>, Option<f64>, Option<bool>)>>,
    ) = match fitted.method {
        Method::Exact => {
            let dim = fitted.posterior.h() + spec.classes - 1;
            if dim > CDF_CAP {
                return Err(cap_error("exact prediction", dim, CDF_CAP));
            }
            let res = (0..n)
                .into_par_iter()
                .map(|i| {
                    let p = sun::predict_from_posterior(
                        &fitted.posterior,
                        spec,
                        &x.unit(i),
                        cdf,
                        &mut key.stream(i as u64),
                    )?;
                    Ok((p.probs, Some(p.raw_sum), Some(p.tolerance_met)))
                })
                .collect();
            ("exact", res)
        }
        _ => {
            if fitted.draws == 0 {
                return Err(config_err(
                    "prediction with a variational fit needs draws > 0",
                ));
            }
            let (draws, _) = approx_draws(fitted, &mut stream(seed, DRAWS))?;
            let res = (0..n)
                .into_par_iter()
                .map(|i| {
                    let f = class_frequencies(&draws, spec, &x.unit(i), &mut key.stream(i as u64))?;
                    Ok((f, None, None))
                })
                .collect();
            ("frequency", res)
        }
    };
    let mut rows = Vec::with_capacity(n);
    let mut hits = 0usize;
    for (i, r) in results.into_iter().enumerate() {
        let (probs, raw_sum, tolerance_met) = r?;
        let predicted = argmax(&probs);
        let obs = observed.map(|o| o[i]);
        if obs == Some(predicted) {
            hits += 1;
        }
        rows.push(PredRow {
            row: row_ids[i] + 1,
            probs,
            predicted: prep.label_name(predicted).to_owned(),
            observed: obs.map(|o| prep.label_name(o).to_owned()),
            raw_sum,
            tolerance_met,
        });
    }
    Ok(PredTable {
        rule,
        accuracy: observed.filter(|_| n > 0).map(|_| hits as f64 / n as f64),
        rows,
    })
}

fn evidence_report(
    prior: &SunParams,
    lik: &ProbitLikelihood,
    cdf: &CdfSettings,
    seed: u64,
) -> CliResult<EvidenceReport> {
    let dim = prior.h() + lik.m;
    if dim > CDF_CAP {
        return Err(cap_error("exact evidence", dim, CDF_CAP));
    }
    let e = sun::log_evidence(prior, lik, cdf, &mut stream(seed, EVIDENCE))?;
    Ok(EvidenceReport {
        log_evidence: e.log_evidence,
        tolerance_met: e.tolerance_met(),
        posterior: e.posterior,
        prior: e.prior,
    })
}

pub struct FitRun {
    pub output: FitOutput,
    pub draws: Option<DMatrix<f64>>,
}

pub fn fit(cfg: &RunConfig, table: &Table, seed: Option<u64>) -> CliResult<FitRun> {
    let (data, prep) = ingest(cfg, table)?;
    let n = data.n();
    let held = holdout_rows(cfg, n, seed)?;
    let kept: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
    let train_data = subset(&data, &kept)?;
    let mut tr = train(cfg, &train_data, &prep, seed)?;
    let log_evidence = if cfg.evidence {
        let prior = cfg.prior.build(tr.spec.q())?;
        let r = evidence_report(&prior, &tr.lik, &cfg.cdf, need_seed(seed, "evidence")?)?;
        if !r.tolerance_met {
            tr.diagnostics
                .warnings
                .push("evidence CDF tolerance not met".into());
        }
        Some(r)
    } else {
        None
    };
    let holdout = if held.is_empty() {
        None
    } else {
        let test = subset(&data, &held)?;
        let table = predict_rows(
            &tr.fitted,
            &tr.spec,
            &test.x,
            Some(&test.y),
            &held,
            &cfg.cdf,
            need_seed(seed, "holdout prediction")?,
        )?;
        note_prediction(&mut tr.diagnostics, &table);
        Some(table)
    };
    Ok(FitRun {
        output: FitOutput {
            schema: SCHEMA,
            command: "fit",
            seed,
            family: tr.spec.family,
            method: cfg.method,
            labels: prep.labels.clone(),
            n_train: kept.len(),
            n_holdout: held.len(),
            dropped_columns: prep.dropped.clone(),
            coefficients: tr.coefficients,
            diagnostics: tr.diagnostics,
            log_evidence,
            holdout,
            fitted: tr.fitted,
        },
        draws: tr.draws,
    })
}

fn note_prediction(diag: &mut Diagnostics, table: &PredTable) {
    let misses = table
        .rows
        .iter()
        .filter(|r| r.tolerance_met == Some(false))
        .count();
    if misses > 0 {
        diag.warnings.push(format!(
            "CDF tolerance not met for {misses} predictive rows"
        ));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvidenceOutput {
    pub schema: u32,
    pub command: &'static str,
    pub seed: u64,
    pub family: ModelFamily,
    pub n: usize,
    #[serde(flatten)]
    pub report: EvidenceReport,
    pub warnings: Vec<String>,
}

pub fn evidence(cfg: &RunConfig, table: &Table, seed: Option<u64>) -> CliResult<EvidenceOutput> {
    let seed = need_seed(seed, "evidence")?;
    let (data, prep) = ingest(cfg, table)?;
    let mut diag = Diagnostics::default();
    let (spec, _) = model_spec(cfg, &prep, &mut diag)?;
    let prior = cfg.prior.build(spec.q())?;
    let lik = build(&spec, &data)?;
    let report = evidence_report(&prior, &lik, &cfg.cdf, seed)?;
    if !report.tolerance_met {
        diag.warnings.push("evidence CDF tolerance not met".into());
    }
    Ok(EvidenceOutput {
        schema: SCHEMA,
        command: "evidence",
        seed,
        family: spec.family,
        n: data.n(),
        report,
        warnings: diag.warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictOutput {
    pub schema: u32,
    pub command: &'static str,
    pub seed: u64,
    pub family: ModelFamily,
    pub method: Method,
    pub labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(flatten)]
    pub table: PredTable,
    pub warnings: Vec<String>,
}

pub enum PredictSource<'a> {
    Fitted(Fitted),
    Data(&'a Table),
}

/// Reads the `fitted` section of a fit output.
pub fn load_fitted(text: &str) -> CliResult<Fitted> {
    #[derive(Deserialize)]
    struct Doc {
        schema: u32,
        fitted: Fitted,
    }
    let doc: Doc =
        serde_json::from_str(text).map_err(|e| config_err(format!("fitted artifact: {e}")))?;
    if doc.schema != SCHEMA {
        return Err(config_err(format!(
            "fitted artifact has schema {}, expected {SCHEMA}",
            doc.schema
        )));
    }
    Ok(doc.fitted)
}

pub fn predict(
    cfg: &RunConfig,
    source: PredictSource,
    newdata: &Table,
    seed: Option<u64>,
) -> CliResult<PredictOutput> {
    let seed = need_seed(seed, "prediction")?;
    let (fitted, mut warnings) = match source {
        PredictSource::Fitted(f) => (f, Vec::new()),
        PredictSource::Data(table) => {
            let (data, prep) = ingest(cfg, table)?;
            let tr = train(cfg, &data, &prep, Some(seed))?;
            (tr.fitted, tr.diagnostics.warnings)
        }
    };
    let spec = fitted.spec()?;
    let (x, observed) = fitted.preprocessing.apply(newdata)?;
    let ids: Vec<usize> = (0..x.len()).collect();
    let table = predict_rows(
        &fitted,
        &spec,
        &x,
        observed.as_deref(),
        &ids,
        &cfg.cdf,
        seed,
    )?;
    let mut diag = Diagnostics::default();
    note_prediction(&mut diag, &table);
    warnings.extend(diag.warnings);
    Ok(PredictOutput {
        schema: SCHEMA,
        command: "predict",
        seed,
        family: fitted.family,
        method: fitted.method,
        labels: fitted.preprocessing.labels.clone(),
        folds: None,
        table,
        warnings,
    })
}

/// K-fold cross-validated predictive probabilities, folds in parallel with
/// per-fold seeds derived from `seed`.
pub fn cross_validate(
    cfg: &RunConfig,
    table: &Table,
    folds: usize,
    seed: Option<u64>,
) -> CliResult<PredictOutput> {
    let seed = need_seed(seed, "cross-validation")?;
    let (data, prep) = ingest(cfg, table)?;
    let n = data.n();
    if folds < 2 || folds > n {
        return Err(config_err(format!("folds must lie in 2..={n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, SPLIT));
    let key = StreamKey::draw(&mut stream(seed, FOLDS));
    let parts: Vec<CliResult<(PredTable, Vec<String>, ModelFamily)>> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let fold_seed: u64 = key.stream(k as u64).random();
            let mut test: Vec<usize> = perm.iter().copied().skip(k).step_by(folds).collect();
            test.sort_unstable();
            let train_idx: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
            let tr = train(cfg, &subset(&data, &train_idx)?, &prep, Some(fold_seed))?;
            let held = subset(&data, &test)?;
            let t = predict_rows(
                &tr.fitted,
                &tr.spec,
                &held.x,
                Some(&held.y),
                &test,
                &cfg.cdf,
                fold_seed,
            )?;
            Ok((t, tr.diagnostics.warnings, tr.spec.family))
        })
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    let mut family = cfg.family();
    let mut rule = "exact";
    for (k, p) in parts.into_iter().enumerate() {
        let (t, w, f) = p?;
        rule = t.rule;
        family = f;
        rows.extend(t.rows);
        warnings.extend(w.into_iter().map(|w| format!("fold {}: {w}", k + 1)));
    }
    rows.sort_by_key(|r| r.row);
    let hits = rows
        .iter()
        .filter(|r| r.observed.as_ref() == Some(&r.predicted))
        .count();
    let mut diag = Diagnostics::default();
    let table = PredTable {
        rule,
        accuracy: Some(hits as f64 / n as f64),
        rows,
    };
    note_prediction(&mut diag, &table);
    warnings.extend(diag.warnings);
    Ok(PredictOutput {
        schema: SCHEMA,
        command: "predict",
        seed,
        family,
        method: cfg.method,
        labels: prep.labels.clone(),
        folds: Some(folds),
        table,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleOutput {
    pub schema: u32,
    pub command: &'static str,
    pub seed: u64,
    pub mvn_cdf: OracleReport,
    pub tmvn_moments: OracleReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<OracleReport>,
}

/// Regenerates the reference values behind the frozen kernel fixtures and,
/// given data, a Gibbs reference for the posterior mean.
pub fn run_oracle(
    cfg: &RunConfig,
    table: Option<&Table>,
    seed: Option<u64>,
    count: usize,
) -> CliResult<OracleOutput> {
    let seed = need_seed(seed, "the oracle")?;
    let (upper, cov) = oracle::fixtures::cdf_case();
    let mvn_cdf = oracle::plain_mc_cdf(&upper, &cov, count, &mut stream(seed, 1))?;
    let (lower, mean, cov) = oracle::fixtures::moment_case();
    let tmvn_moments =
        oracle::rejection_tmvn_moments(&lower, &mean, &cov, count, &mut stream(seed, 2))?;
    let gibbs = match table {
        Some(t) => {
            let (data, prep) = ingest(cfg, t)?;
            let mut diag = Diagnostics::default();
            let (spec, _) = model_spec(cfg, &prep, &mut diag)?;
            let prior = cfg.prior.build(spec.q())?;
            let lik = build(&spec, &data)?;
            let iters = cfg.draws.max(1000) * 10;
            Some(
                oracle::gibbs_sampler(
                    &prior,
                    &lik,
                    &GibbsSettings::new(iters),
                    None,
                    &mut stream(seed, 3),
                )?
                .report,
            )
        }
        None => None,
    };
    Ok(OracleOutput {
        schema: SCHEMA,
        command: "oracle",
        seed,
        mvn_cdf,
        tmvn_moments,
        gibbs,
    })
}
