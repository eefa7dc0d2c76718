use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    None,
    RowPercent,
}

/// Rows are reference labels, columns are hypothesis labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub label_set: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub normalization: Normalization,
}

pub fn confusion_matrix<L: Ord + Display>(
    reference_labels: &[L],
    hypothesis_labels: &[L],
    label_set: &[L],
    normalize: Normalization,
) -> Result<ConfusionMatrix> {
    if reference_labels.len() != hypothesis_labels.len() {
        return Err(Error::LengthMismatch {
            left: reference_labels.len(),
            right: hypothesis_labels.len(),
        });
    }
    let index: BTreeMap<&L, usize> = label_set.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let k = label_set.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (r, h) in reference_labels.iter().zip(hypothesis_labels) {
        let i = *index.get(r).ok_or_else(|| Error::LabelOutsideSet(r.to_string()))?;
        let j = *index.get(h).ok_or_else(|| Error::LabelOutsideSet(h.to_string()))?;
        counts[i][j] += 1;
    }
    Ok(ConfusionMatrix {
        label_set: label_set.iter().map(|l| l.to_string()).collect(),
        counts,
        normalization: normalize,
    })
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Cell values under the matrix's normalization. Empty rows stay zero.
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| match self.normalization {
                        Normalization::None => c as f64,
                        Normalization::RowPercent if sum == 0 => 0.0,
                        Normalization::RowPercent => 100.0 * c as f64 / sum as f64,
                    })
                    .collect()
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        let mut header = vec!["reference\\hypothesis".to_string()];
        header.extend(self.label_set.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (label, row) in self.label_set.iter().zip(self.values()) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| match self.normalization {
                Normalization::None => format!("{v}"),
                Normalization::RowPercent => format!("{v:.2}"),
            }));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv: {e}")))
    }

    /// Renders a grey-scale heatmap, darker cells holding larger row shares.
    pub fn write_heatmap_png(&self, path: &Path, cell_px: u32) -> Result<()> {
        let k = self.label_set.len() as u32;
        if k == 0 || cell_px == 0 {
            return Err(Error::InvalidInput("empty heatmap".into()));
        }
        let shares: Vec<Vec<f64>> = self
            .counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if sum == 0 { 0.0 } else { c as f64 / sum as f64 })
                    .collect()
            })
            .collect();
        let img = image::GrayImage::from_fn(k * cell_px, k * cell_px, |x, y| {
            let share = shares[(y / cell_px) as usize][(x / cell_px) as usize];
            image::Luma([(255.0 * (1.0 - share)).round() as u8])
        });
        img.save(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_example() {
        let m = confusion_matrix(&["A", "A", "B"], &["A", "B", "B"], &["A", "B"], Normalization::None)
            .unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(m.total(), 3);
        let p = ConfusionMatrix {
            normalization: Normalization::RowPercent,
            ..m
        };
        assert_eq!(p.values(), vec![vec![50.0, 50.0], vec![0.0, 100.0]]);
    }

    #[test]
    fn identity_is_diagonal() {
        let m = confusion_matrix(&[1, 2, 3, 2], &[1, 2, 3, 2], &[1, 2, 3], Normalization::None).unwrap();
        for (i, row) in m.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                assert_eq!(*c == 0, i != j);
            }
        }
    }

    #[test]
    fn outside_label_rejected() {
        assert!(confusion_matrix(&["A"], &["C"], &["A", "B"], Normalization::None).is_err());
    }

    #[test]
    fn csv_and_png() {
        let m = confusion_matrix(&["A", "B"], &["A", "A"], &["A", "B"], Normalization::RowPercent)
            .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("B,100.00,0.00"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cm.png");
        m.write_heatmap_png(&path, 4).unwrap();
        assert!(path.metadata().unwrap().len() > 0);
    }
}
