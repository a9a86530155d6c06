//! JSON form of trained parameters: matrices as shape-annotated row-major
//! arrays.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::baseline::Standardizer;
use super::extractors::ExtractorSpec;
use super::fusion::FusionModel;
use super::head::PredictionHead;
use crate::attention::{HeadProjection, ProjectionSet};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
    }
}

impl TryFrom<&MatrixJson> for DMatrix<f64> {
    type Error = Error;

    fn try_from(m: &MatrixJson) -> Result<Self> {
        ensure!(
            m.data.len() == m.rows * m.cols,
            Shape,
            "matrix declared {}x{} but has {} entries",
            m.rows,
            m.cols,
            m.data.len()
        );
        Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionJson {
    pub w_q: MatrixJson,
    pub w_k: MatrixJson,
    pub w_v: MatrixJson,
}

/// Everything needed to score new subjects with one trained head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub extractor: ExtractorSpec,
    pub extractor_seed: u64,
    /// Token standardization, one scaler per modality token.
    pub token_scalers: Vec<Option<Standardizer>>,
    pub projections: Vec<ProjectionJson>,
    pub head: PredictionHead,
}

impl SavedModel {
    pub fn new(
        extractor: &ExtractorSpec,
        extractor_seed: u64,
        token_scalers: Vec<Option<Standardizer>>,
        model: &FusionModel,
    ) -> Self {
        Self {
            extractor: extractor.clone(),
            extractor_seed,
            token_scalers,
            projections: model
                .proj
                .heads
                .iter()
                .map(|h| ProjectionJson {
                    w_q: (&h.w_q).into(),
                    w_k: (&h.w_k).into(),
                    w_v: (&h.w_v).into(),
                })
                .collect(),
            head: model.head.clone(),
        }
    }

    pub fn fusion_model(&self) -> Result<FusionModel> {
        let heads = self
            .projections
            .iter()
            .map(|p| {
                Ok(HeadProjection {
                    w_q: (&p.w_q).try_into()?,
                    w_k: (&p.w_k).try_into()?,
                    w_v: (&p.w_v).try_into()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FusionModel {
            proj: ProjectionSet::new(heads)?,
            head: self.head.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_layout_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let j = MatrixJson::from(&m);
        assert_eq!(j.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(DMatrix::try_from(&j).unwrap(), m);
        let bad = MatrixJson {
            rows: 2,
            cols: 2,
            data: vec![1.0],
        };
        assert!(DMatrix::try_from(&bad).is_err());
    }

    #[test]
    fn saved_model_roundtrip() {
        let model = FusionModel::init(3, 4, 2, 2, 7).unwrap();
        let saved = SavedModel::new(&ExtractorSpec::default(), 11, vec![None; 3], &model);
        let text = serde_json::to_string(&saved).unwrap();
        let back: SavedModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.fusion_model().unwrap(), model);
    }
}
