use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{smo_train_binary, BinarySvm, FeatureMatrix, KernelKind, KernelSpec, SmoConfig, SvmError};

/// Per-dimension affine map to zero mean and unit variance. Constant
/// dimensions get a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &FeatureMatrix) -> Self {
        let (n, d) = (features.rows().max(1) as f64, features.cols());
        let mut mean = vec![0.0; d];
        for i in 0..features.rows() {
            for (m, &v) in mean.iter_mut().zip(features.row(i)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..features.rows() {
            for ((s, &v), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        if x.len() != self.mean.len() {
            return Err(SvmError::Dimension { expected: self.mean.len(), got: x.len() });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// `1 / (D · var)` with the variance taken over every standardized entry.
pub fn default_gamma(features: &FeatureMatrix) -> f64 {
    let st = Standardizer::fit(features);
    let d = features.cols().max(1) as f64;
    let vals: Vec<f64> = (0..features.rows())
        .flat_map(|i| st.apply(&features.row_f64(i)).expect("same width"))
        .collect();
    if vals.is_empty() {
        return 1.0 / d;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    if var > 1e-12 { 1.0 / (d * var) } else { 1.0 / d }
}

/// One-vs-one ensemble over the classes seen in training.
/// Decision value of one pairwise machine, keyed by its class pair.
pub type PairDecision = ((usize, usize), f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub c: f64,
    pub classes: Vec<usize>,
    pub standardizer: Standardizer,
    pub binaries: Vec<BinarySvm>,
}

pub fn train_multiclass(
    features: &FeatureMatrix,
    kernel: &KernelSpec,
    config: &SmoConfig,
) -> Result<SvmModel, SvmError> {
    kernel.validate()?;
    let classes = features.classes();
    if classes.len() < 2 {
        return Err(SvmError::DegenerateData(format!(
            "need at least 2 classes, found {}",
            classes.len()
        )));
    }
    for missing in (0..crate::dataset::NUM_CLASSES).filter(|c| !classes.contains(c)) {
        log::warn!("class {missing} absent from training features; its pairs are skipped");
    }
    let standardizer = Standardizer::fit(features);
    let rows: Vec<Vec<f64>> = (0..features.rows())
        .map(|i| standardizer.apply(&features.row_f64(i)))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(usize, usize)> = classes
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| classes[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let binaries = pairs
        .par_iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = (0..rows.len())
                .filter(|&i| features.labels()[i] == a || features.labels()[i] == b)
                .collect();
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if features.labels()[i] == a { 1.0 } else { -1.0 })
                .collect();
            smo_train_binary(&x, &y, kernel, config, (a, b))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SvmModel { kernel: *kernel, c: config.c, classes, standardizer, binaries })
}

/// Resolves one-vs-one decisions `((a, b), f)` into a class: each machine
/// votes `a` when `f > 0`, else `b`; most votes wins, then the larger sum of
/// |f| over the machines that voted for the class, then the lower id.
pub fn resolve_votes(decisions: &[((usize, usize), f64)]) -> Option<usize> {
    let mut tally: std::collections::BTreeMap<usize, (usize, f64)> = Default::default();
    for &((a, b), f) in decisions {
        let winner = if f > 0.0 { a } else { b };
        let e = tally.entry(winner).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += f.abs();
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for (&class, &(votes, margin)) in &tally {
        let better = match best {
            None => true,
            Some((_, bv, bm)) => votes > bv || (votes == bv && margin > bm),
        };
        if better {
            best = Some((class, votes, margin));
        }
    }
    best.map(|(c, _, _)| c)
}

impl SvmModel {
    pub fn decisions(&self, x: &[f64]) -> Result<Vec<PairDecision>, SvmError> {
        let z = self.standardizer.apply(x)?;
        Ok(self
            .binaries
            .iter()
            .map(|m| (m.label_pair, m.decision_unchecked(&z)))
            .collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, SvmError> {
        let d = self.decisions(x)?;
        Ok(resolve_votes(&d).unwrap_or(self.classes[0]))
    }

    pub fn predict_all(&self, features: &FeatureMatrix) -> Result<Vec<usize>, SvmError> {
        (0..features.rows())
            .into_par_iter()
            .map(|i| self.predict(&features.row_f64(i)))
            .collect()
    }

    pub fn accuracy(&self, features: &FeatureMatrix) -> Result<f64, SvmError> {
        if features.is_empty() {
            return Err(SvmError::DegenerateData("cannot score an empty feature set".into()));
        }
        let pred = self.predict_all(features)?;
        let hits = pred.iter().zip(features.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / features.rows() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<(), SvmError> {
        let json = serde_json::to_string(self).map_err(|e| SvmError::Format(e.to_string()))?;
        std::fs::write(path, json).map_err(|source| SvmError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, SvmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SvmError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| SvmError::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelScore {
    pub kernel: KernelKind,
    pub accuracy: f64,
}

/// Trains each kernel on `train` with the same C and row order and scores
/// it on `val`. `gamma` defaults to [`default_gamma`] of `train`.
pub fn benchmark_kernels(
    train: &FeatureMatrix,
    val: &FeatureMatrix,
    kernels: &[KernelKind],
    config: &SmoConfig,
    gamma: Option<f64>,
) -> Result<Vec<KernelScore>, SvmError> {
    if train.is_empty() || val.is_empty() {
        return Err(SvmError::DegenerateData("benchmark needs nonempty train and validation features".into()));
    }
    let gamma = gamma.unwrap_or_else(|| default_gamma(train));
    kernels
        .iter()
        .map(|&kind| {
            let spec = KernelSpec { kind, gamma };
            let model = train_multiclass(train, &spec, config)?;
            let accuracy = model.accuracy(val)?;
            log::info!("{kind} kernel: validation accuracy {accuracy:.4}");
            Ok(KernelScore { kernel: kind, accuracy })
        })
        .collect()
}

pub fn benchmark_csv(scores: &[KernelScore]) -> String {
    let mut out = String::from("kernel,accuracy\n");
    for s in scores {
        out.push_str(&format!("{},{:.6}\n", s.kernel, s.accuracy));
    }
    out
}

pub fn parse_benchmark_csv(text: &str) -> Result<Vec<KernelScore>, SvmError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| SvmError::Format(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["kernel", "accuracy"] {
        return Err(SvmError::Format("benchmark header must be `kernel,accuracy`".into()));
    }
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| SvmError::Format(e.to_string()))?;
            let kernel = r[0].parse()?;
            let accuracy = r[1].parse().map_err(|e| SvmError::Format(format!("accuracy `{}`: {e}", &r[1])))?;
            Ok(KernelScore { kernel, accuracy })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_and_tied_votes() {
        let all3 = [((1, 3), -1.0), ((2, 3), -0.5), ((3, 4), 2.0)];
        assert_eq!(resolve_votes(&all3), Some(3));
        // 0 beats 1, 1 beats 2, 2 beats 0: one vote each.
        let tie = [((0, 1), 0.2), ((1, 2), 0.9), ((0, 2), -0.4)];
        assert_eq!(resolve_votes(&tie), Some(1));
        let flat = [((0, 1), 0.5), ((1, 2), 0.5), ((0, 2), -0.5)];
        assert_eq!(resolve_votes(&flat), Some(0));
    }

    #[test]
    fn pair_count() {
        let rows: Vec<Vec<f64>> = (0..33).map(|i| vec![(i % 11) as f64 * 3.0, (i / 11) as f64 * 0.1]).collect();
        let labels = (0..33).map(|i| i % 11).collect();
        let f = FeatureMatrix::from_rows(&rows, labels).unwrap();
        let m = train_multiclass(&f, &KernelSpec::linear(), &SmoConfig::default()).unwrap();
        assert_eq!(m.binaries.len(), 55);
    }

    #[test]
    fn benchmark_csv_round_trip() {
        let s = vec![
            KernelScore { kernel: KernelKind::Linear, accuracy: 0.8125 },
            KernelScore { kernel: KernelKind::Rbf, accuracy: 0.5 },
        ];
        assert_eq!(parse_benchmark_csv(&benchmark_csv(&s)).unwrap(), s);
    }
}
