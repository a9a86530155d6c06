//! Per-modality feature extractors with fixed, seeded random weights. Every
//! extractor maps a preprocessed `channels x time` window to a vector of
//! length `d_model`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layers::{attention_pool, avgpool_forward, bilstm_forward, conv1d_forward, maxpool_forward, BiLstm, Conv1d, LstmWeights};
use crate::error::{ensure, Result};
use crate::graphdiff::{gcn_layer, Activation, BrainGraph};
use crate::signals::Modality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    /// Shared embedding width; must be even (the BiLSTM uses `d_model / 2`
    /// units per direction).
    pub d_model: usize,
    pub eeg_kernels: Vec<usize>,
    /// Average-pooling window applied to EEG conv features before the BiLSTM.
    pub eeg_pool: usize,
    pub lstm_forget_bias: f64,
    /// Kernel width of the ECG, Resp, SpO2 and EMG convolutions.
    pub conv_kernel: usize,
    pub emg_pool: usize,
    pub gcn_depth: usize,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        Self {
            d_model: 8,
            eeg_kernels: vec![3, 5, 7],
            eeg_pool: 8,
            lstm_forget_bias: 1.0,
            conv_kernel: 7,
            emg_pool: 4,
            gcn_depth: 2,
        }
    }
}

impl ExtractorSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.d_model >= 2 && self.d_model.is_multiple_of(2),
            InvalidParameter,
            "d_model must be even and >= 2, got {}",
            self.d_model
        );
        ensure!(
            !self.eeg_kernels.is_empty() && self.eeg_kernels.iter().all(|&k| k > 0),
            InvalidParameter,
            "EEG kernel sizes must be positive"
        );
        ensure!(
            self.eeg_pool > 0 && self.conv_kernel > 0 && self.emg_pool > 0 && self.gcn_depth > 0,
            InvalidParameter,
            "extractor sizes must be positive"
        );
        ensure!(self.lstm_forget_bias.is_finite(), InvalidParameter, "forget bias must be finite");
        Ok(())
    }
}

/// Frozen extractor weights shared by every subject.
#[derive(Debug, Clone)]
pub struct Extractors {
    spec: ExtractorSpec,
    channels: BTreeMap<Modality, usize>,
    eeg_convs: Vec<Conv1d>,
    lstm: BiLstm,
    convs: BTreeMap<Modality, Conv1d>,
    pool_queries: BTreeMap<Modality, Vec<f64>>,
    gcn: Vec<DMatrix<f64>>,
    graph: BrainGraph,
}

impl Extractors {
    /// `channels` gives the expected channel count per modality; the fMRI
    /// channel count must equal the number of graph regions.
    pub fn new(spec: &ExtractorSpec, channels: &BTreeMap<Modality, usize>, graph: &BrainGraph, seed: u64) -> Result<Self> {
        spec.validate()?;
        let d = spec.d_model;
        let ch = |m: Modality| channels.get(&m).copied().unwrap_or(1).max(1);
        ensure!(
            ch(Modality::FmriBold) == graph.n_regions(),
            Shape,
            "fMRI has {} channels but the graph has {} regions",
            ch(Modality::FmriBold),
            graph.n_regions()
        );
        let rng = |m: Modality| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(m.index() as u64 + 1);
            r
        };

        let mut r = rng(Modality::Eeg);
        let eeg_convs = spec
            .eeg_kernels
            .iter()
            .map(|&k| Conv1d::random(ch(Modality::Eeg), d, k, 1, &mut r))
            .collect::<Result<Vec<_>>>()?;
        let lstm_in = d * spec.eeg_kernels.len();
        let lstm = BiLstm {
            forward: LstmWeights::random(lstm_in, d / 2, spec.lstm_forget_bias, &mut r),
            backward: LstmWeights::random(lstm_in, d / 2, spec.lstm_forget_bias, &mut r),
        };

        let mut convs = BTreeMap::new();
        let mut pool_queries = BTreeMap::new();
        for m in [Modality::Ecg, Modality::Resp, Modality::SpO2, Modality::Emg] {
            let mut r = rng(m);
            convs.insert(m, Conv1d::random(ch(m), d, spec.conv_kernel, 1, &mut r)?);
            if m != Modality::Emg {
                let q: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                pool_queries.insert(m, q);
            }
        }

        let mut r = rng(Modality::FmriBold);
        let mut gcn = Vec::with_capacity(spec.gcn_depth);
        for layer in 0..spec.gcn_depth {
            let fan_in = if layer == 0 { 1 } else { d };
            let s = (2.0 / fan_in as f64).sqrt();
            gcn.push(DMatrix::from_fn(fan_in, d, |_, _| s * r.sample::<f64, _>(StandardNormal)));
        }

        Ok(Self {
            spec: spec.clone(),
            channels: channels.clone(),
            eeg_convs,
            lstm,
            convs,
            pool_queries,
            gcn,
            graph: graph.clone(),
        })
    }

    pub fn spec(&self) -> &ExtractorSpec {
        &self.spec
    }

    pub fn d_model(&self) -> usize {
        self.spec.d_model
    }

    pub fn embed(&self, modality: Modality, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if let Some(&c) = self.channels.get(&modality) {
            ensure!(
                x.nrows() == c,
                Shape,
                "{modality} window has {} channels, extractor expects {c}",
                x.nrows()
            );
        }
        match modality {
            Modality::Eeg => self.eeg(x),
            Modality::Ecg | Modality::Resp | Modality::SpO2 => {
                let fmap = conv1d_forward(x, &self.convs[&modality], Activation::Relu)?;
                attention_pool(&fmap, &self.pool_queries[&modality])
            }
            Modality::Emg => {
                let fmap = conv1d_forward(x, &self.convs[&modality], Activation::Relu)?;
                let pooled = maxpool_forward(&fmap, self.spec.emg_pool, self.spec.emg_pool)?;
                Ok(pooled.row_iter().map(|r| r.mean()).collect())
            }
            Modality::FmriBold => self.fmri(x),
        }
    }

    /// Parallel convolutions, cropped to a common length and stacked, then
    /// average pooling and a BiLSTM over time.
    fn eeg(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let maps = self
            .eeg_convs
            .iter()
            .map(|c| conv1d_forward(x, c, Activation::Relu))
            .collect::<Result<Vec<_>>>()?;
        let len = maps.iter().map(|m| m.ncols()).min().expect("at least one kernel");
        let d = self.spec.d_model;
        let mut stacked = DMatrix::zeros(d * maps.len(), len);
        for (i, m) in maps.iter().enumerate() {
            stacked.view_mut((i * d, 0), (d, len)).copy_from(&m.columns(0, len));
        }
        let pooled = avgpool_forward(&stacked, self.spec.eeg_pool.min(len), self.spec.eeg_pool.min(len))?;
        bilstm_forward(&pooled.transpose(), &self.lstm)
    }

    /// Each time point is a one-feature graph signal; GCN layers with relu,
    /// then the mean over time and regions.
    fn fmri(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let (regions, t) = x.shape();
        ensure!(t > 0, Shape, "empty fMRI window");
        let d = self.spec.d_model;
        let mut acc = vec![0.0; d];
        for col in 0..t {
            let mut h = DMatrix::from_column_slice(regions, 1, x.column(col).as_slice());
            for w in &self.gcn {
                h = gcn_layer(&h, &self.graph, w, Activation::Relu)?;
            }
            for (a, c) in acc.iter_mut().zip(h.column_iter()) {
                *a += c.sum();
            }
        }
        let scale = 1.0 / (t * regions) as f64;
        Ok(acc.into_iter().map(|v| v * scale).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> BTreeMap<Modality, usize> {
        BTreeMap::from([
            (Modality::Eeg, 4),
            (Modality::Ecg, 1),
            (Modality::Resp, 1),
            (Modality::SpO2, 1),
            (Modality::Emg, 1),
            (Modality::FmriBold, 16),
        ])
    }

    fn signal(c: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(c, t, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn embeddings_have_model_width() {
        let ex = Extractors::new(&ExtractorSpec::default(), &layout(), &BrainGraph::default_graph(), 3).unwrap();
        let cases = [
            (Modality::Eeg, signal(4, 320, 1)),
            (Modality::Ecg, signal(1, 640, 2)),
            (Modality::Resp, signal(1, 512, 3)),
            (Modality::SpO2, signal(1, 512, 4)),
            (Modality::Emg, signal(1, 1280, 5)),
            (Modality::FmriBold, signal(16, 64, 6)),
        ];
        for (m, x) in &cases {
            let e = ex.embed(*m, x).unwrap();
            assert_eq!(e.len(), 8, "{m}");
            assert!(e.iter().all(|v| v.is_finite()));
        }
        assert!(ex.embed(Modality::Eeg, &signal(3, 320, 1)).is_err());
    }

    #[test]
    fn weights_are_seeded() {
        let g = BrainGraph::default_graph();
        let a = Extractors::new(&ExtractorSpec::default(), &layout(), &g, 3).unwrap();
        let b = Extractors::new(&ExtractorSpec::default(), &layout(), &g, 3).unwrap();
        let c = Extractors::new(&ExtractorSpec::default(), &layout(), &g, 4).unwrap();
        let x = signal(1, 512, 9);
        assert_eq!(a.embed(Modality::Resp, &x).unwrap(), b.embed(Modality::Resp, &x).unwrap());
        assert_ne!(a.embed(Modality::Resp, &x).unwrap(), c.embed(Modality::Resp, &x).unwrap());
    }

    #[test]
    fn fmri_embedding_scales_with_amplitude() {
        // relu GCN layers without bias are positively homogeneous
        let ex = Extractors::new(&ExtractorSpec::default(), &layout(), &BrainGraph::default_graph(), 1).unwrap();
        let x = signal(16, 50, 2);
        let a = ex.embed(Modality::FmriBold, &x).unwrap();
        let b = ex.embed(Modality::FmriBold, &(&x * 3.0)).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((3.0 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        let g = BrainGraph::default_graph();
        let odd = ExtractorSpec {
            d_model: 7,
            ..Default::default()
        };
        assert!(Extractors::new(&odd, &layout(), &g, 0).is_err());
        let mut l = layout();
        l.insert(Modality::FmriBold, 10);
        assert!(Extractors::new(&ExtractorSpec::default(), &l, &g, 0).is_err());
    }
}
