use super::config::PipelineConfig;
use super::report::{CentralityReport, DiffusionReport, Provenance, SnapshotMeans};
use super::{write_json, write_text};
use crate::error::{Error, Result};
use crate::graphdiff::{
    diffusion_centrality, fractional_diffuse, DiffusionTrajectory, RiskState, BRAINSTEM_REGIONS, CORTICAL_REGIONS,
    SUBCORTICAL_REGIONS,
};

/// Seeds unit risk in the configured region, integrates the fractional
/// diffusion and writes `diffusion.csv` (every `snapshot_every`-th state) and
/// `diffusion.json`.
pub fn cmd_diffuse(cfg: &PipelineConfig) -> Result<DiffusionReport> {
    let graph = cfg.graph()?;
    let d = &cfg.diffusion;
    let region = graph
        .region_index(&d.seed_region)
        .ok_or_else(|| Error::Config(format!("seed region '{}' is not in the graph", d.seed_region)))?;
    let params = cfg.diffusion_params()?;
    let x0 = RiskState::seeded(graph.n_regions(), region)?;
    let traj = fractional_diffuse(&graph, &params, &x0, d.horizon, d.step)?;
    let centrality = diffusion_centrality(&graph, d.centrality_beta, d.centrality_horizon)?;

    let report = DiffusionReport {
        provenance: Provenance::new(cfg.hash(), cfg.seed),
        seed_region: d.seed_region.clone(),
        alpha: d.alpha,
        beta: d.beta,
        gamma: d.gamma,
        horizon: d.horizon,
        step: d.step,
        group_means: group_means(&traj, d.snapshot_every),
        centrality: CentralityReport {
            labels: graph.labels().to_vec(),
            centrality,
        },
    };
    let out = &cfg.paths.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("diffusion.csv"), &traj.to_csv(d.snapshot_every))?;
    write_json(&out.join("diffusion.json"), &report)?;
    Ok(report)
}

fn group_means(traj: &DiffusionTrajectory, every: usize) -> Vec<SnapshotMeans> {
    let (c, s, b) = (CORTICAL_REGIONS, SUBCORTICAL_REGIONS, BRAINSTEM_REGIONS);
    if traj.labels.len() != c + s + b {
        return Vec::new();
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let last = traj.states.len().saturating_sub(1);
    traj.states
        .iter()
        .enumerate()
        .filter(|(i, _)| i % every.max(1) == 0 || *i == last)
        .map(|(_, st)| SnapshotMeans {
            t: st.t,
            cortical: mean(&st.x[..c]),
            subcortical: mean(&st.x[c..c + s]),
            brainstem: mean(&st.x[c + s..]),
        })
        .collect()
}
