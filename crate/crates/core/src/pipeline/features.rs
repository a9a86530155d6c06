//! Per-subject preprocessing, embedding tokens and signal biomarkers.

use std::collections::BTreeMap;

use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fractional::memory_index;
use crate::graphdiff::BrainGraph;
use crate::hamiltonian::{latent_energy_entropy, symplectic_integrate, total_energy, EnergyModel, HamiltonianState};
use crate::manifold::{curvature_proxy, frechet_mean, geodesic_distance, SpdMatrix};
use crate::model::{stroke_residual, Extractors, StrokeSurrogate};
use crate::signals::{
    bandpass_filter, default_shrinkage, resample, rr_tachogram, sliding_covariance_rejecting, zscore_normalize,
    LabeledRecord, Modality, TimeSeriesWindow,
};

/// Everything computed for one subject before the cohort-level stages.
#[derive(Debug, Clone)]
pub(crate) struct SubjectFeatures {
    pub subject_id: String,
    pub label: u8,
    /// Raw extractor outputs in [`Modality::ALL`] order.
    pub tokens: Vec<Option<Vec<f64>>>,
    pub latent_energy_entropy: Option<f64>,
    pub geodesic_mean: Option<f64>,
    pub geodesic_max: Option<f64>,
    pub curvature_mean: Option<f64>,
    pub memory_index: BTreeMap<Modality, Option<f64>>,
    pub stroke_residual: f64,
}

/// Modality-specific cleaning. BOLD becomes percent signal change and keeps
/// its amplitude; every other modality is z-scored per channel.
pub fn preprocess(w: &TimeSeriesWindow, cfg: &PipelineConfig) -> Result<TimeSeriesWindow> {
    let p = &cfg.preprocess;
    let z = |w: &TimeSeriesWindow| zscore_normalize(w).map(|z| z.window);
    match w.modality() {
        Modality::Eeg => resample(&z(&bandpass_filter(w, p.eeg_low, p.eeg_high)?)?, p.eeg_rate),
        Modality::Ecg => resample(&z(&bandpass_filter(w, p.ecg_low, p.ecg_high)?)?, p.ecg_rate),
        Modality::Emg => z(&bandpass_filter(w, p.emg_low, p.emg_high)?),
        Modality::Resp | Modality::SpO2 => z(w),
        Modality::FmriBold => percent_signal_change(w),
    }
}

fn percent_signal_change(w: &TimeSeriesWindow) -> Result<TimeSeriesWindow> {
    let mut v = w.values().clone();
    for mut row in v.row_iter_mut() {
        let mean = row.mean();
        if !(mean.abs() > 1e-12) {
            return Err(Error::Degenerate("BOLD channel with zero mean signal".into()));
        }
        row.apply(|x| *x = (*x / mean - 1.0) * 100.0);
    }
    TimeSeriesWindow::new(w.modality(), w.sample_rate(), v)
}

/// Fixed per-cohort context shared by every subject.
pub(crate) struct Context<'a> {
    pub cfg: &'a PipelineConfig,
    pub graph: &'a BrainGraph,
    pub extractors: &'a Extractors,
    pub energy: &'a EnergyModel,
    pub n_cortical: usize,
}

pub(crate) fn subject_features(rec: &LabeledRecord, ctx: &Context) -> Result<SubjectFeatures> {
    let id = rec.subject_id.as_str();
    let mut prepared: BTreeMap<Modality, TimeSeriesWindow> = BTreeMap::new();
    for (m, w) in &rec.windows {
        if let Some(w) = w {
            prepared.insert(*m, preprocess(w, ctx.cfg).map_err(|e| e.in_subject("signals", id))?);
        }
    }

    let tokens = Modality::ALL
        .iter()
        .map(|m| {
            prepared
                .get(m)
                .map(|w| ctx.extractors.embed(*m, w.values()))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_subject("model", id))?;

    let (geodesic_mean, geodesic_max, curvature_mean) = match prepared.get(&Modality::Eeg) {
        Some(w) => geometry(w, ctx.cfg).map_err(|e| e.in_subject("manifold", id))?,
        None => (None, None, None),
    };

    let memory_index = Modality::ALL
        .iter()
        .map(|m| (*m, prepared.get(m).and_then(channel_memory)))
        .collect();

    let latent_energy_entropy = energy_entropy(&prepared, ctx).map_err(|e| e.in_subject("hamiltonian", id))?;

    let n = ctx.graph.n_regions();
    let x0: Vec<f64> = match prepared.get(&Modality::FmriBold) {
        Some(w) => w.values().row_iter().map(|r| r.variance().sqrt()).collect(),
        None => vec![0.0; n],
    };
    let p = ctx.cfg.stroke_params()?;
    let surrogate = StrokeSurrogate::matched(n, &p, ctx.cfg.stroke.steps);
    let stroke_residual = stroke_residual(ctx.graph, &x0, &surrogate, &p).map_err(|e| e.in_subject("graphdiff", id))?;

    Ok(SubjectFeatures {
        subject_id: rec.subject_id.clone(),
        label: rec.label,
        tokens,
        latent_energy_entropy,
        geodesic_mean,
        geodesic_max,
        curvature_mean,
        memory_index,
        stroke_residual,
    })
}

type Geometry = (Option<f64>, Option<f64>, Option<f64>);

/// Geodesic spread of sliding EEG covariances around their Fréchet mean and
/// the mean curvature defect of consecutive triples.
fn geometry(w: &TimeSeriesWindow, cfg: &PipelineConfig) -> Result<Geometry> {
    let p = &cfg.preprocess;
    let win = (p.window * w.sample_rate()).round() as usize;
    let stride = ((p.stride * w.sample_rate()).round() as usize).max(1);
    if win < 2 || win > w.samples() {
        return Ok((None, None, None));
    }
    let shrink = p.shrinkage.unwrap_or_else(|| default_shrinkage(w));
    let covs = sliding_covariance_rejecting(w, win, stride, shrink, p.artifact_z)?;
    if covs.len() < 2 {
        return Ok((None, None, None));
    }
    let mean = match frechet_mean(&covs, 1e-9, 200) {
        Ok(m) => m,
        Err(Error::NoConvergence {
            last: Some(last),
            residual,
            ..
        }) => {
            log::warn!("Fréchet mean stopped at residual {residual:e}");
            *last
        }
        Err(e) => return Err(e),
    };
    let d = covs
        .iter()
        .map(|c| geodesic_distance(&mean, c))
        .collect::<Result<Vec<_>>>()?;
    let d_mean = d.iter().sum::<f64>() / d.len() as f64;
    let d_max = d.iter().copied().fold(0.0, f64::max);
    Ok((Some(d_mean), Some(d_max), curvature_mean(&covs)?))
}

fn curvature_mean(covs: &[SpdMatrix]) -> Result<Option<f64>> {
    let mut vals = Vec::new();
    for t in covs.windows(3) {
        match curvature_proxy(&t[0], &t[1], &t[2]) {
            Ok(v) => vals.push(v),
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
}

/// Mean DFA exponent over channels; `None` when the window is too short or
/// every channel is constant.
fn channel_memory(w: &TimeSeriesWindow) -> Option<f64> {
    let vals: Vec<f64> = (0..w.channels())
        .filter_map(|c| memory_index(&w.channel(c)).ok())
        .map(|m| m.exponent)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if !(var > 0.0) {
        return 0.0;
    }
    x.windows(2).map(|p| (p[0] - mean) * (p[1] - mean)).sum::<f64>() / var
}

/// Entropy of the time-averaged subsystem energy shares of the autonomic
/// network, started from the lag-1 autocorrelations of the mapped signals at
/// rest.
fn energy_entropy(prepared: &BTreeMap<Modality, TimeSeriesWindow>, ctx: &Context) -> Result<Option<f64>> {
    let ac = |m: Modality, c: usize| {
        prepared
            .get(&m)
            .filter(|w| c < w.channels())
            .map_or(0.0, |w| lag1_autocorrelation(&w.channel(c)))
    };
    let mut q: Vec<f64> = (0..ctx.n_cortical).map(|c| ac(Modality::Eeg, c)).collect();
    // RTN, locus coeruleus, raphe, NTS, hypothalamus
    q.extend([
        ac(Modality::Resp, 0),
        ac(Modality::Emg, 0),
        ac(Modality::Resp, 0),
        ac(Modality::Ecg, 0),
        ac(Modality::SpO2, 0),
    ]);
    let rr = match prepared.get(&Modality::Ecg) {
        Some(w) => rr_tachogram(w, 0, ctx.cfg.preprocess.rr_threshold)?,
        None => Vec::new(),
    };
    q.push(lag1_autocorrelation(&rr));

    if q.iter().all(|v| *v == 0.0) {
        return Ok(None);
    }
    let s0 = HamiltonianState::new(q.clone(), vec![0.0; q.len()])?;
    let h = &ctx.cfg.hamiltonian;
    let path = symplectic_integrate(&s0, ctx.energy, h.step, h.steps)?;
    let mut parts = [0.0; 3];
    for s in &path {
        for (acc, v) in parts.iter_mut().zip(total_energy(s, ctx.energy)?.parts()) {
            *acc += v / path.len() as f64;
        }
    }
    match latent_energy_entropy(&parts) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Expected channel count per modality, taken from the first subject that
/// records it; later subjects must agree.
pub(crate) fn channel_layout(records: &[LabeledRecord]) -> Result<BTreeMap<Modality, usize>> {
    let mut layout = BTreeMap::new();
    for rec in records {
        for (m, w) in &rec.windows {
            let Some(w) = w else { continue };
            let expected = *layout.entry(*m).or_insert(w.channels());
            if expected != w.channels() {
                return Err(Error::Shape(format!(
                    "{m} has {} channels, earlier subjects have {expected}",
                    w.channels()
                ))
                .in_subject("signals", &rec.subject_id));
            }
        }
    }
    Ok(layout)
}

/// Rows of one token slot over the subjects that have it.
pub(crate) fn token_matrix(features: &[&SubjectFeatures], slot: usize) -> Vec<Vec<f64>> {
    features.iter().filter_map(|f| f.tokens[slot].clone()).collect()
}
