use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Per-epoch training and validation metrics. Accuracies are stored rounded
/// to six decimals so the CSV form round-trips exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub phase: u8,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

impl MetricsRecord {
    pub fn new(phase: u8, epoch: usize, train_loss: f64, train_acc: f64, val_loss: f64, val_acc: f64) -> Self {
        Self {
            phase,
            epoch,
            train_loss,
            train_acc: round6(train_acc),
            val_loss,
            val_acc: round6(val_acc),
        }
    }
}

/// Writes `phase,epoch,train_loss,train_acc,val_loss,val_acc`. Losses use the
/// shortest round-trip representation; accuracies use six decimals.
pub fn write_metrics(history: &[MetricsRecord], path: &Path) -> Result<(), TrainError> {
    let mut out = String::from("phase,epoch,train_loss,train_acc,val_loss,val_acc\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{:.6},{},{:.6}\n",
            r.phase, r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        ));
    }
    std::fs::write(path, out).map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, TrainError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != "phase,epoch,train_loss,train_acc,val_loss,val_acc" {
        return Err(TrainError::Data(format!(
            "{}: unexpected metrics header `{header}`",
            path.display()
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| TrainError::Data(format!("{}: {e}", path.display()))))
        .collect()
}
