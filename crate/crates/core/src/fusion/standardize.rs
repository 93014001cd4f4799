use serde::{Deserialize, Serialize};

/// Per-dimension standardization `(x - mean) / std`, fit on training rows
/// only. Constant dimensions map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        // Welford, one pass.
        for row in rows {
            assert_eq!(row.len(), dim, "row dimension");
            n += 1;
            for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
                let d = x - *m;
                *m += d / n as f64;
                *s += d * (x - *m);
            }
        }
        let inv_std = m2
            .iter()
            .map(|&s| {
                let var = if n > 0 { s / n as f64 } else { 0.0 };
                if var > 1e-24 {
                    1.0 / var.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Standardizer { mean, inv_std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, &m), &s) in x.iter_mut().zip(&self.mean).zip(&self.inv_std) {
            *v = if s == 0.0 { 0.0 } else { (*v - m) * s };
        }
    }
}
