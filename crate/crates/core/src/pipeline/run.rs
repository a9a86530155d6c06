use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{PipelineConfig, BIOMARKERS};
use super::features::{channel_layout, subject_features, token_matrix, Context, SubjectFeatures};
use super::report::{
    BiomarkerReport, CentralityReport, ClassCounts, HeadReport, Provenance, RunReport, SimulateReport, Split,
    SubjectBiomarkers,
};
use super::{with_pool, write_json, write_text};
use crate::attention::attention_entropy;
use crate::error::{ensure, Error, Result};
use crate::graphdiff::diffusion_centrality;
use crate::hamiltonian::EnergyModel;
use crate::model::{
    composite_risk_index, logistic_baseline_fit, metrics, train_head, BaselineOptions, Extractors, FusionInput,
    SavedModel, Standardizer, TrainConfig, TrainOutcome,
};
use crate::signals::io::{read_cohort, write_cohort};
use crate::signals::{generate_synthetic_cohort, Modality, SyntheticCohortSpec};

const SPLIT_STREAM: u64 = 0x5_0001;
const SUDEP_STREAM: u64 = 0x5_0002;
const STROKE_STREAM: u64 = 0x5_0003;

fn derived_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Generates the synthetic cohort into the directory of the configured
/// manifest (default `<out>/cohort`) and writes `<out>/simulate.json`.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<SimulateReport> {
    let manifest = cfg.cohort_manifest();
    ensure!(
        manifest.file_name().is_some_and(|n| n == "manifest.json"),
        Config,
        "simulate writes manifest.json; paths.cohort must name such a file"
    );
    let dir = manifest.parent().expect("manifest has a parent");
    let spec = SyntheticCohortSpec {
        n_subjects: cfg.simulate.n_subjects,
        positive_fraction: cfg.simulate.positive_fraction,
        effect_size: cfg.simulate.effect_size,
        seed: cfg.seed,
        ..Default::default()
    };
    let cohort = with_pool(cfg.workers, || generate_synthetic_cohort(&spec))??;
    write_cohort(dir, &cohort)?;
    let report = SimulateReport {
        provenance: Provenance::new(cfg.hash(), cfg.seed),
        n_subjects: cohort.len(),
        positives: cohort.iter().filter(|r| r.label == 1).count(),
        effect_size: spec.effect_size,
        manifest: "manifest.json".into(),
    };
    std::fs::create_dir_all(&cfg.paths.out).map_err(|e| Error::io(&cfg.paths.out, e))?;
    write_json(&cfg.paths.out.join("simulate.json"), &report)?;
    Ok(report)
}

/// Stratified assignment: within each class, a seeded shuffle then the first
/// `round(n·test)` subjects go to test and the next `round(n·val)` to
/// validation.
pub fn stratified_split(labels: &[u8], val_fraction: f64, test_fraction: f64, seed: u64) -> Vec<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut out = vec![Split::Train; labels.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_test = ((n * test_fraction).round() as usize).min(idx.len());
        let n_val = ((n * val_fraction).round() as usize).min(idx.len() - n_test);
        for (k, &i) in idx.iter().enumerate() {
            out[i] = if k < n_test {
                Split::Test
            } else if k < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
        }
    }
    out
}

/// Runs the whole pipeline on the configured cohort and writes the reports
/// into the output directory.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<RunReport> {
    let manifest = cfg.cohort_manifest();
    ensure!(
        manifest.is_file(),
        Config,
        "cohort manifest {} does not exist (run `simulate` first or set paths.cohort)",
        manifest.display()
    );
    let mut records = read_cohort(&manifest)?;
    records.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    ensure!(records.len() >= 4, Degenerate, "cohort has only {} subjects", records.len());
    let graph = cfg.graph()?;
    let layout = channel_layout(&records)?;
    let spec = cfg.extractor_spec();
    let extractors = Extractors::new(&spec, &layout, &graph, cfg.seed)?;
    let n_cortical = layout.get(&Modality::Eeg).copied().unwrap_or(1);
    let energy = EnergyModel::autonomic(n_cortical)?;
    let ctx = Context {
        cfg,
        graph: &graph,
        extractors: &extractors,
        energy: &energy,
        n_cortical,
    };
    let features: Vec<SubjectFeatures> = with_pool(cfg.workers, || {
        records
            .par_iter()
            .map(|r| subject_features(r, &ctx))
            .collect::<Result<Vec<_>>>()
    })??;

    let labels: Vec<u8> = features.iter().map(|f| f.label).collect();
    let split = stratified_split(&labels, cfg.model.val_fraction, cfg.model.test_fraction, cfg.seed);
    let in_split = |s: Split| -> Vec<usize> { (0..features.len()).filter(|&i| split[i] == s).collect() };
    let (train_idx, val_idx, test_idx) = (in_split(Split::Train), in_split(Split::Val), in_split(Split::Test));

    let train_feats: Vec<&SubjectFeatures> = train_idx.iter().map(|&i| &features[i]).collect();
    let scalers: Vec<Option<Standardizer>> = (0..Modality::ALL.len())
        .map(|slot| {
            let rows = token_matrix(&train_feats, slot);
            if rows.is_empty() {
                Ok(None)
            } else {
                Standardizer::fit(&rows).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let inputs: Vec<FusionInput> = features
        .iter()
        .map(|f| FusionInput {
            tokens: f
                .tokens
                .iter()
                .zip(&scalers)
                .map(|(t, s)| match (t, s) {
                    (Some(t), Some(s)) => Some(s.apply(t)),
                    _ => None,
                })
                .collect(),
            label: f.label,
            stroke_residual: f.stroke_residual,
        })
        .collect();
    let pick = |idx: &[usize]| -> Vec<FusionInput> { idx.iter().map(|&i| inputs[i].clone()).collect() };
    let (train, val) = (pick(&train_idx), pick(&val_idx));

    let mut heads = BTreeMap::new();
    let mut trained: BTreeMap<&str, TrainOutcome> = BTreeMap::new();
    for (name, with_stroke, stream) in [("stroke", true, STROKE_STREAM), ("sudep", false, SUDEP_STREAM)] {
        let tc = TrainConfig {
            epochs: cfg.model.epochs,
            lr: cfg.model.lr,
            seed: derived_seed(cfg.seed, stream),
            heads: cfg.model.heads,
            d_k: cfg.model.d_k,
            loss: cfg.loss_weights(with_stroke)?,
            patience: cfg.model.patience,
            train_projections: cfg.model.train_projections,
        };
        let outcome = train_head(&train, &val, &tc)?;
        trained.insert(name, outcome);
    }

    let mut probs: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (name, outcome) in &trained {
        let p = inputs
            .iter()
            .zip(&features)
            .map(|(x, f)| outcome.model.predict(x).map_err(|e| e.in_subject("model", &f.subject_id)))
            .collect::<Result<Vec<_>>>()?;
        let score = |idx: &[usize]| {
            let s: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            metrics(&s, &l, cfg.model.threshold)
        };
        heads.insert(
            name.to_string(),
            HeadReport {
                test: score(&test_idx)?,
                val: if val_idx.is_empty() { None } else { Some(score(&val_idx)?) },
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.history.len() - 1,
                plateaued: outcome.plateaued,
                final_train_loss: *outcome.history.last().expect("history starts with the initial loss"),
            },
        );
        probs.insert(name, p);
    }

    let sudep = &trained["sudep"].model;
    let mut attention_entropies = Vec::with_capacity(inputs.len());
    let mut test_weights: Option<DMatrix<f64>> = None;
    for (i, x) in inputs.iter().enumerate() {
        let (_, att) = sudep.forward(x)?;
        attention_entropies.push(attention_entropy(&att));
        if split[i] == Split::Test {
            let w = test_weights.get_or_insert_with(|| DMatrix::zeros(att.weights.nrows(), att.weights.ncols()));
            *w += &att.weights / test_idx.len() as f64;
        }
    }

    // biomarker table, one column per entry of BIOMARKERS
    let table: Vec<Vec<Option<f64>>> = features
        .iter()
        .zip(&attention_entropies)
        .map(|(f, &h)| {
            let mut row = vec![f.latent_energy_entropy, Some(h), f.geodesic_mean, f.geodesic_max, f.curvature_mean];
            row.extend(Modality::ALL.iter().map(|m| f.memory_index[m]));
            row
        })
        .collect();

    let baseline = {
        let train_rows = impute(&table, &train_idx);
        let fit = logistic_baseline_fit(
            &train_idx.iter().map(|&i| train_rows[i].clone()).collect::<Vec<_>>(),
            &train_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
            &BaselineOptions {
                l2: cfg.model.baseline_l2,
                ..Default::default()
            },
        )?;
        let scores = test_idx
            .iter()
            .map(|&i| fit.predict(&train_rows[i]))
            .collect::<Result<Vec<_>>>()?;
        metrics(&scores, &test_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(), cfg.model.threshold)?
    };

    let z = cohort_z(&table);
    let weights = cfg.risk_weight_vector();
    let centrality = diffusion_centrality(&graph, cfg.diffusion.centrality_beta, cfg.diffusion.centrality_horizon)?;
    let subjects = features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let risk = composite_risk_index(&z[i], probs["sudep"][i], &weights).map_err(|e| e.in_subject("model", &f.subject_id))?;
            let missing = BIOMARKERS
                .iter()
                .zip(&table[i])
                .filter(|(_, v)| v.is_none())
                .map(|(n, _)| n.to_string())
                .collect();
            Ok(SubjectBiomarkers {
                subject_id: f.subject_id.clone(),
                label: f.label,
                split: split[i],
                latent_energy_entropy: f.latent_energy_entropy,
                attention_entropy: attention_entropies[i],
                geodesic_mean: f.geodesic_mean,
                geodesic_max: f.geodesic_max,
                curvature_mean: f.curvature_mean,
                memory_index: f.memory_index.iter().map(|(m, v)| (m.name().to_string(), *v)).collect(),
                stroke_residual: f.stroke_residual,
                sudep_probability: probs["sudep"][i],
                stroke_probability: probs["stroke"][i],
                composite_risk_index: risk.value,
                risk_terms_dropped: risk.dropped.iter().map(|&k| BIOMARKERS[k].to_string()).collect(),
                missing,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let provenance = Provenance::new(cfg.hash(), cfg.seed);
    let mut counts: BTreeMap<Split, ClassCounts> =
        [Split::Train, Split::Val, Split::Test].into_iter().map(|s| (s, ClassCounts::default())).collect();
    for (s, &l) in split.iter().zip(&labels) {
        let c = counts.get_mut(s).expect("all splits present");
        if l == 1 {
            c.positive += 1;
        } else {
            c.negative += 1;
        }
    }
    let report = RunReport {
        provenance: provenance.clone(),
        split: counts,
        heads,
        baseline,
        biomarkers: BiomarkerReport {
            provenance,
            subjects,
            diffusion_centrality: CentralityReport {
                labels: graph.labels().to_vec(),
                centrality,
            },
        },
    };

    let out = &cfg.paths.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("biomarkers.json"), &report.biomarkers)?;
    write_json(&out.join("metrics.json"), &report.metrics_file())?;
    write_text(&out.join("biomarkers.csv"), &biomarker_csv(&report.biomarkers))?;
    write_text(&out.join("training.csv"), &training_csv(&trained))?;
    if let Some(w) = &test_weights {
        write_text(&out.join("attention.csv"), &attention_csv(w, cfg.model.heads))?;
    }
    for (name, outcome) in &trained {
        let saved = SavedModel::new(&spec, cfg.seed, scalers.clone(), &outcome.model);
        write_json(&out.join(format!("model_{name}.json")), &saved)?;
    }
    Ok(report)
}

/// Missing entries replaced by the mean over `reference` rows that have the
/// value (0 when none do).
fn impute(table: &[Vec<Option<f64>>], reference: &[usize]) -> Vec<Vec<f64>> {
    let cols = table.first().map_or(0, Vec::len);
    let fill: Vec<f64> = (0..cols)
        .map(|j| {
            let v: Vec<f64> = reference.iter().filter_map(|&i| table[i][j]).collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        })
        .collect();
    table
        .iter()
        .map(|row| row.iter().zip(&fill).map(|(v, f)| v.unwrap_or(*f)).collect())
        .collect()
}

/// Per-column cohort z-scores over the subjects that have the value; `None`
/// for missing values and for columns without spread.
fn cohort_z(table: &[Vec<Option<f64>>]) -> Vec<Vec<Option<f64>>> {
    let cols = table.first().map_or(0, Vec::len);
    let scalers: Vec<Option<Standardizer>> = (0..cols)
        .map(|j| {
            let rows: Vec<Vec<f64>> = table.iter().filter_map(|r| r[j]).map(|v| vec![v]).collect();
            Standardizer::fit(&rows).ok().filter(|s| s.constant.is_empty())
        })
        .collect();
    table
        .iter()
        .map(|row| {
            row.iter()
                .zip(&scalers)
                .map(|(v, s)| match (v, s) {
                    (Some(v), Some(s)) => Some((v - s.mean[0]) / s.sd[0]),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn biomarker_csv(b: &BiomarkerReport) -> String {
    let mut s = String::from("subject_id,label,split");
    for name in BIOMARKERS {
        let _ = write!(s, ",{name}");
    }
    s.push_str(",stroke_residual,sudep_probability,stroke_probability,composite_risk_index\n");
    for r in &b.subjects {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.subject_id,
            r.label,
            r.split.name(),
            opt(r.latent_energy_entropy),
            r.attention_entropy,
            opt(r.geodesic_mean),
            opt(r.geodesic_max),
            opt(r.curvature_mean)
        );
        for m in Modality::ALL {
            let _ = write!(s, ",{}", opt(r.memory_index.get(m.name()).copied().flatten()));
        }
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            r.stroke_residual, r.sudep_probability, r.stroke_probability, r.composite_risk_index
        );
    }
    s
}

fn training_csv(trained: &BTreeMap<&str, TrainOutcome>) -> String {
    let names: Vec<&str> = trained.keys().copied().collect();
    let len = trained.values().map(|o| o.history.len()).max().unwrap_or(0);
    let mut s = String::from("epoch");
    for n in &names {
        let _ = write!(s, ",{n}_loss");
    }
    s.push('\n');
    for e in 0..len {
        let _ = write!(s, "{e}");
        for n in &names {
            let _ = write!(s, ",{}", opt(trained[n].history.get(e).copied()));
        }
        s.push('\n');
    }
    s
}

/// Mean test-set attention: one row per (head, query modality), one column
/// per key modality.
fn attention_csv(w: &DMatrix<f64>, heads: usize) -> String {
    let m = Modality::ALL.len();
    let mut s = String::from("head,query");
    for k in Modality::ALL {
        let _ = write!(s, ",{k}");
    }
    s.push('\n');
    for h in 0..heads {
        for (q, qm) in Modality::ALL.iter().enumerate() {
            let _ = write!(s, "{h},{qm}");
            for k in 0..m {
                let _ = write!(s, ",{}", w[(h * m + q, k)]);
            }
            s.push('\n');
        }
    }
    s
}
