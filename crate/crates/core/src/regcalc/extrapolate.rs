//! ε → 0 extrapolation of a ladder of regularized estimates.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::stats::linear_fit;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Extrapolation {
    /// Value at the smallest ε.
    Finest,
    /// Least-squares line in ε through the three smallest ε, evaluated at 0.
    Linear3,
    /// Polynomial through the three smallest ε, evaluated at 0 (Neville).
    /// Removes both `O(ε)` and `O(ε²)` terms; for a ratio-2 ladder the
    /// weights are `8/3, -2, 1/3`.
    #[default]
    Richardson3,
}

impl Extrapolation {
    /// Extrapolates `values[i]` observed at `eps[i]` to ε = 0. The inputs may
    /// be in any order; only the three smallest ε are used.
    pub fn apply(self, eps: &[f64], values: &[f64]) -> f64 {
        assert_eq!(eps.len(), values.len());
        assert!(!eps.is_empty(), "empty series");
        let mut idx: Vec<usize> = (0..eps.len()).collect();
        idx.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]));
        let take = idx.len().min(3);
        let xs: Vec<f64> = idx[..take].iter().map(|&i| eps[i]).collect();
        let ys: Vec<f64> = idx[..take].iter().map(|&i| values[i]).collect();
        match (self, take) {
            (Extrapolation::Finest, _) | (_, 1) => ys[0],
            (Extrapolation::Linear3, _) | (Extrapolation::Richardson3, 2) => linear_fit(&xs, &ys).1,
            (Extrapolation::Richardson3, _) => neville_at_zero(&xs, &ys),
        }
    }

    /// Weights `w` with `apply(eps, v) = Σ w_i v_i` (the map is linear).
    pub fn weights(self, eps: &[f64]) -> Vec<f64> {
        (0..eps.len())
            .map(|i| {
                let mut e = vec![0.0; eps.len()];
                e[i] = 1.0;
                self.apply(eps, &e)
            })
            .collect()
    }
}

fn neville_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

impl fmt::Display for Extrapolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Extrapolation::Finest => "finest",
            Extrapolation::Linear3 => "linear3",
            Extrapolation::Richardson3 => "richardson3",
        })
    }
}

impl FromStr for Extrapolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "finest" => Ok(Extrapolation::Finest),
            "linear3" => Ok(Extrapolation::Linear3),
            "richardson3" => Ok(Extrapolation::Richardson3),
            _ => Err(Error::invalid(format!("unknown extrapolation '{s}'"))),
        }
    }
}
