//! Evaluation: subset accuracies, the loss-threshold membership-inference
//! attack and report assembly.

mod mia;
mod report;

pub use mia::{calibrate_mia, mia_score, MiaAttacker, Orientation};
pub use report::{assemble_report, EvalReport, Report, RunRecord, SeedMetrics, Section, COLUMNS};

use crate::error::{Error, Result};
use crate::nnkit::Model;
use crate::speechgen::TaskData;
use crate::unlearn::accuracy;

/// Percentage of `ids` the model classifies correctly.
pub fn subset_accuracy(model: &Model, data: &TaskData, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::EmptySet("id set"));
    }
    Ok(100.0 * accuracy(model, data, ids)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::{Activation, Dense, Matrix};
    use crate::speechgen::Task;

    fn data() -> TaskData {
        let labels: Vec<usize> = (0..24).map(|i| i % 12).collect();
        let mut features = Matrix::zeros(24, 12);
        for (i, &l) in labels.iter().enumerate() {
            features.row_mut(i)[l] = 1.0;
        }
        TaskData {
            task: Task::Keyword,
            features,
            labels,
            num_classes: 12,
        }
    }

    #[test]
    fn perfect_and_constant_models() {
        let d = data();
        let ids: Vec<usize> = (0..24).collect();
        let perfect = Model::from_layers(vec![Dense {
            weights: Matrix::identity(12),
            bias: vec![0.0; 12],
        }], Activation::Relu, 0)
        .unwrap();
        assert_eq!(subset_accuracy(&perfect, &d, &ids).unwrap(), 100.0);
        let mut bias = vec![0.0; 12];
        bias[3] = 1.0;
        let constant = Model::from_layers(vec![Dense {
            weights: Matrix::zeros(12, 12),
            bias,
        }], Activation::Relu, 0)
        .unwrap();
        let acc = subset_accuracy(&constant, &d, &ids).unwrap();
        assert!((acc - 100.0 / 12.0).abs() < 1e-12);
        assert!(subset_accuracy(&constant, &d, &[]).is_err());
    }
}
