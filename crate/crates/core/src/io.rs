//! Structured-text output: JSON records and CSV tables.
//!
//! JSON is emitted with a fixed field order and the platform-independent
//! shortest float representation, so identical inputs produce byte-identical
//! files.

use serde::{Deserialize, Serialize};

use crate::detectability::{DetectabilityCertificate, InequalityReport};
use crate::error::Result;
use crate::propagator::StateTrajectory;
use crate::spectral::SpectralSummary;
use crate::stabilizer::{DecayFit, PeriodicFeedback};

/// Certificate file contents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub n: usize,
    pub delta: f64,
    pub c: f64,
    pub gamma: f64,
    pub steps_per_period: usize,
    pub system_label: String,
}

impl CertificateRecord {
    pub fn new(cert: &DetectabilityCertificate, system_label: &str) -> Self {
        CertificateRecord {
            n: cert.n,
            delta: cert.delta,
            c: cert.c,
            gamma: cert.gamma,
            steps_per_period: cert.steps_per_period,
            system_label: system_label.to_string(),
        }
    }

    pub fn certificate(&self) -> Result<DetectabilityCertificate> {
        DetectabilityCertificate::new(self.n, self.delta, self.c, self.gamma, self.steps_per_period)
    }
}

/// Spectral summary file contents; the projector is stored row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub system_label: String,
    pub dim: usize,
    /// `(re, im)` pairs, modulus-descending.
    pub eigenvalues: Vec<[f64; 2]>,
    pub delta_bar: Option<f64>,
    pub n_unstable_dim: usize,
    pub projector_row_major: Vec<f64>,
    pub borderline: bool,
    pub idempotency_residual: f64,
    pub commutation_residual: f64,
}

impl SpectrumRecord {
    pub fn new(summary: &SpectralSummary, system_label: &str) -> Self {
        let dim = summary.projector.nrows();
        let mut projector_row_major = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                projector_row_major.push(summary.projector[(i, j)]);
            }
        }
        SpectrumRecord {
            system_label: system_label.to_string(),
            dim,
            eigenvalues: summary.eigenvalues.iter().map(|l| [l.re, l.im]).collect(),
            delta_bar: summary.delta_bar,
            n_unstable_dim: summary.n_unstable_dim,
            projector_row_major,
            borderline: summary.borderline,
            idempotency_residual: summary.idempotency_residual,
            commutation_residual: summary.commutation_residual,
        }
    }
}

/// Unique-continuation verdict file contents; `margin` is omitted when the
/// test is vacuous (`n_0 = 0`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UcpRecord {
    pub system_label: String,
    pub detectable: bool,
    pub margin: Option<f64>,
    pub tol: f64,
}

impl UcpRecord {
    pub fn new(system_label: &str, detectable: bool, margin: f64, tol: f64) -> Self {
        UcpRecord {
            system_label: system_label.to_string(),
            detectable,
            margin: margin.is_finite().then_some(margin),
            tol,
        }
    }
}

/// Decay fit file contents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayRecord {
    pub system_label: String,
    pub closed_loop: bool,
    pub fit: DecayFit,
}

/// Serialize a record as pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// CSV export of a trajectory: `time,state_1..state_d[,control_1..control_m]`.
pub fn trajectory_csv(traj: &StateTrajectory) -> String {
    let d = traj.states[0].nrows();
    let m = traj.control_used.as_ref().map_or(0, |u| u.dim());
    let mut out = String::from("time");
    for i in 1..=d {
        out.push_str(&format!(",state_{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",control_{i}"));
    }
    out.push('\n');
    for (t, y) in traj.times.iter().zip(&traj.states) {
        out.push_str(&format!("{t}"));
        for i in 0..d {
            out.push_str(&format!(",{}", y[i]));
        }
        if let Some(u) = &traj.control_used {
            let v = u.eval(*t);
            for i in 0..m {
                out.push_str(&format!(",{}", v[i]));
            }
        }
        out.push('\n');
    }
    out
}

/// CSV export of a gain schedule: `time` followed by row-major gain entries.
pub fn feedback_csv(fb: &PeriodicFeedback) -> String {
    let k0 = &fb.gains()[0];
    let (m, d) = (k0.nrows(), k0.ncols());
    let mut out = String::from("time");
    for i in 1..=m {
        for j in 1..=d {
            out.push_str(&format!(",k_{i}_{j}"));
        }
    }
    out.push('\n');
    for (t, k) in fb.times().iter().zip(fb.gains()) {
        out.push_str(&format!("{t}"));
        for i in 0..m {
            for j in 0..d {
                out.push_str(&format!(",{}", k[(i, j)]));
            }
        }
        out.push('\n');
    }
    out
}

/// CSV export of inequality margins: `sample,margin`.
pub fn margins_csv(report: &InequalityReport) -> String {
    let mut out = String::from("sample,margin\n");
    for (i, margin) in report.margins.iter().enumerate() {
        out.push_str(&format!("{i},{margin}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn certificate_record_round_trip() {
        let cert = DetectabilityCertificate::new(2, 0.3, 4.0, 1e-3, 500).unwrap();
        let rec = CertificateRecord::new(&cert, "demo");
        let json = to_json_pretty(&rec).unwrap();
        let back: CertificateRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.certificate().unwrap(), cert);
        assert!(json.ends_with('\n'));
    }

    #[test]
    fn trajectory_csv_shape() {
        let traj = StateTrajectory {
            times: vec![0.0, 0.5, 1.0],
            states: vec![
                DVector::from_column_slice(&[1.0, 2.0]),
                DVector::from_column_slice(&[3.0, 4.0]),
                DVector::from_column_slice(&[5.0, 6.0]),
            ],
            control_used: None,
        };
        let csv = trajectory_csv(&traj);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "time,state_1,state_2");
        assert_eq!(lines[2], "0.5,3,4");
    }

    #[test]
    fn ucp_record_drops_infinite_margin() {
        let rec = UcpRecord::new("sys", true, f64::INFINITY, 1e-8);
        let json = to_json_pretty(&rec).unwrap();
        assert!(json.contains("\"margin\": null"));
    }
}
