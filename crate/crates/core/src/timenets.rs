//! Rebalancing nets `t_k = T (1 - (1 - k/n)^{1/θ})`, concentrated near
//! maturity for `θ < 1` and equidistant for `θ = 1`.

use std::io::Write;

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::report::{fmt_f64, write_table};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeNet {
    nodes: Vec<f64>,
    theta: f64,
    maturity: f64,
}

impl TimeNet {
    /// The adapted net `τ^{n,θ}` on `[0, T]`.
    pub fn theta_net(n: usize, theta: f64, maturity: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "need at least one interval"));
        }
        ensure_finite("theta", theta)?;
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::invalid("theta", format!("must lie in (0, 1], got {theta}")));
        }
        ensure_finite("T", maturity)?;
        if maturity <= 0.0 {
            return Err(Error::invalid("T", "must be > 0"));
        }
        let nodes = (0..=n)
            .map(|k| {
                if k == n {
                    maturity
                } else if theta == 1.0 {
                    maturity * k as f64 / n as f64
                } else {
                    // (n - k) / n is exact in the numerator; avoids 1 - k/n cancellation
                    let rest = (n - k) as f64 / n as f64;
                    maturity * -(rest.ln() / theta).exp_m1()
                }
            })
            .collect();
        Ok(Self {
            nodes,
            theta,
            maturity,
        })
    }

    pub fn equidistant(n: usize, maturity: f64) -> Result<Self> {
        Self::theta_net(n, 1.0, maturity)
    }

    /// Arbitrary strictly increasing nodes from `0` to `T`.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("nodes", "need at least two nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(Error::invalid("nodes", "first node must be 0"));
        }
        for (i, w) in nodes.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::NonIncreasingGrid { index: i + 1 });
            }
        }
        let maturity = *nodes.last().unwrap();
        Ok(Self {
            nodes,
            theta: f64::NAN,
            maturity,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Concentration parameter; NaN for nets built from explicit nodes.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// `i` with `t_i < s ≤ t_{i+1}`, and `0` for `s = 0`.
    pub fn left_index(&self, s: f64) -> Result<usize> {
        if !(s >= 0.0 && s <= self.maturity) {
            return Err(Error::invalid("s", format!("time {s} outside [0, {}]", self.maturity)));
        }
        if s == 0.0 {
            return Ok(0);
        }
        // first node >= s, minus one
        let j = self.nodes.partition_point(|&t| t < s);
        Ok(j - 1)
    }

    pub fn mesh(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Single-column CSV of the nodes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows: Vec<Vec<String>> = self.nodes.iter().map(|&t| vec![fmt_f64(t)]).collect();
        write_table(out, &[], &["t"], &rows)
    }
}

/// `τ^{n,θ}`.
pub fn make_theta_net(n: usize, theta: f64, maturity: f64) -> Result<TimeNet> {
    TimeNet::theta_net(n, theta, maturity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_nodes() {
        assert_eq!(make_theta_net(4, 1.0, 1.0).unwrap().nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(make_theta_net(2, 0.5, 1.0).unwrap().nodes(), &[0.0, 0.75, 1.0]);
        let net = make_theta_net(4, 0.5, 2.0).unwrap();
        for (a, b) in net.nodes().iter().zip([0.0, 0.875, 1.5, 1.875, 2.0]) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_theta_net(0, 0.5, 1.0).is_err());
        assert!(make_theta_net(4, 0.0, 1.0).is_err());
        assert!(make_theta_net(4, 1.01, 1.0).is_err());
        assert!(make_theta_net(4, 0.5, 0.0).is_err());
        assert!(TimeNet::from_nodes(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn left_index_convention() {
        let net = make_theta_net(4, 1.0, 1.0).unwrap();
        assert_eq!(net.left_index(0.25).unwrap(), 0);
        assert_eq!(net.left_index(0.26).unwrap(), 1);
        assert_eq!(net.left_index(0.0).unwrap(), 0);
        assert_eq!(net.left_index(1.0).unwrap(), 3);
        assert!(net.left_index(1.1).is_err());
        assert!(net.left_index(-0.1).is_err());
    }

    #[test]
    fn csv_is_one_column() {
        let mut buf = Vec::new();
        make_theta_net(2, 1.0, 1.0).unwrap().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert_eq!(s.lines().next(), Some("t"));
    }
}
