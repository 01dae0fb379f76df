//! File boundary: unit conversion, provenance metadata and CSV export.
//!
//! Files use centimeters and degrees; everything inside the crate is in
//! meters and radians.

use crate::error::{Error, Result};
use crate::model::Pose;
use crate::sim::{ErrorStats, SimLog};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "bikebot";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Euler convention of every orientation written or read.
pub const EULER_CONVENTION: &str = "ZYX [yaw, pitch, roll]";

pub fn m_to_cm(x: f64) -> f64 {
    x * 100.0
}

pub fn cm_to_m(x: f64) -> f64 {
    x / 100.0
}

/// Pose from `[x, y, z]` in cm and `[yaw, pitch, roll]` in degrees.
pub fn pose_from_table(v: &[f64; 6]) -> Pose<f64> {
    Pose::from_vector(&[
        cm_to_m(v[0]),
        cm_to_m(v[1]),
        cm_to_m(v[2]),
        v[3].to_radians(),
        v[4].to_radians(),
        v[5].to_radians(),
    ])
}

pub fn pose_to_table(p: &Pose<f64>) -> [f64; 6] {
    let (x, o) = (p.position, p.orientation);
    [m_to_cm(x[0]), m_to_cm(x[1]), m_to_cm(x[2]), o[0].to_degrees(), o[1].to_degrees(), o[2].to_degrees()]
}

pub fn position_cm(p: &Vector3<f64>) -> [f64; 3] {
    [m_to_cm(p[0]), m_to_cm(p[1]), m_to_cm(p[2])]
}

/// Hex SHA-256 of the configuration bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Provenance attached to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub euler: String,
    pub w2_padded: bool,
}

impl Metadata {
    pub fn new(config: &[u8], seed: u64, w2_padded: bool) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            schema: SCHEMA_VERSION,
            config_hash: config_hash(config),
            seed,
            euler: EULER_CONVENTION.into(),
            w2_padded,
        }
    }

    /// `# key: value` lines placed ahead of a CSV header.
    pub fn preamble(&self) -> String {
        format!(
            "# tool: {} {}\n# schema: {}\n# config_sha256: {}\n# seed: {}\n# euler: {}\n# w2_padded: {}\n",
            self.tool, self.version, self.schema, self.config_hash, self.seed, self.euler, self.w2_padded
        )
    }
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Writes the preamble, a header and numeric rows.
pub fn write_table<W: Write>(
    mut out: W,
    meta: &Metadata,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    out.write_all(meta.preamble().as_bytes()).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(io)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch { expected: header.len(), got: row.len() });
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Column names of the simulation log for `n` joints.
pub fn sim_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t_s",
        "phase",
        "phi_b_deg",
        "phi_b_ref_deg",
        "e_b_deg",
        "e_b_rate_deg_s",
        "delta_deg",
        "delta_cmd_deg",
        "tau_b_nm",
        "tau_b_demand_nm",
        "disturbance_nm",
    ]
    .map(String::from)
    .to_vec();
    for prefix in ["theta", "theta_ref", "theta_rate_cmd"] {
        let unit = if prefix == "theta_rate_cmd" { "deg_s" } else { "deg" };
        h.extend((1..=n).map(|i| format!("{prefix}{i}_{unit}")));
    }
    h.extend(
        [
            "ee_x_cm",
            "ee_y_cm",
            "ee_z_cm",
            "ee_yaw_deg",
            "ee_pitch_deg",
            "ee_roll_deg",
            "pos_err_mm",
            "ori_err_deg",
            "gravity_rate_nm_s",
            "gravity_rate_bound_nm_s",
            "correction_norm_deg_s",
            "steering_saturated",
            "correction_active",
            "balance_lost",
        ]
        .map(String::from),
    );
    h
}

fn phase_label(r: &crate::sim::SimRecord) -> String {
    use crate::planner::PhaseKind;
    match r.phase.map(|p| p.kind) {
        Some(PhaseKind::Hold { pose }) => format!("hold{}", pose + 1),
        Some(PhaseKind::Transition { segment }) => format!("transition{}", segment + 1),
        None => "none".into(),
    }
}

/// One CSV row per control tick.
pub fn write_sim_csv<W: Write>(out: W, log: &SimLog, meta: &Metadata) -> Result<()> {
    let n = log.records.first().map_or(0, |r| r.q.len() - 1);
    let f = |x: f64| x.to_string();
    let b = |x: bool| u8::from(x).to_string();
    let rows = log.records.iter().map(|r| {
        let mut row = vec![
            f(r.t),
            phase_label(r),
            f(r.q[0].to_degrees()),
            f(r.q_ref[0].to_degrees()),
            f((r.q[0] - r.q_ref[0]).to_degrees()),
            f((r.qd[0] - r.qd_ref[0]).to_degrees()),
            f(r.delta.to_degrees()),
            f(r.delta_cmd.to_degrees()),
            f(r.tau_b),
            f(r.tau_b_demand),
            f(r.disturbance),
        ];
        row.extend(r.q.rows(1, n).iter().map(|x| f(x.to_degrees())));
        row.extend(r.q_ref.rows(1, n).iter().map(|x| f(x.to_degrees())));
        row.extend(r.theta_rate_cmd.iter().map(|x| f(x.to_degrees())));
        row.extend(pose_to_table(&r.pose).map(f));
        row.extend([
            f(r.pose_error.0 * 1e3),
            f(r.pose_error.1.to_degrees()),
            f(r.gravity_rate),
            f(r.gravity_rate_bound),
            f(r.correction_norm.to_degrees()),
            b(r.steering_saturated),
            b(r.correction_active),
            b(r.balance_lost),
        ]);
        row
    });
    write_table(out, meta, &sim_header(n), rows)
}

/// Mean and standard deviation in file units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsOut {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub samples: usize,
}

impl StatsOut {
    pub fn scaled(s: &ErrorStats, factor: f64) -> Self {
        Self { mean: s.mean * factor, std: s.std * factor, max: s.max * factor, samples: s.count }
    }
}

/// JSON summary of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub metadata: Metadata,
    pub duration_s: f64,
    pub envelope_deg: f64,
    pub balance_lost_at_s: Option<f64>,
    pub max_abs_roll_error_deg: f64,
    pub position_error_mm: StatsOut,
    pub orientation_error_deg: StatsOut,
    pub steering_saturated_ticks: usize,
    pub correction_active_ticks: usize,
}

impl SimSummary {
    pub fn new(log: &SimLog, meta: &Metadata, position: &ErrorStats, orientation: &ErrorStats) -> Result<Self> {
        let last = log.last()?;
        let first = &log.records[0];
        Ok(Self {
            metadata: meta.clone(),
            duration_s: last.t - first.t,
            envelope_deg: log.envelope.to_degrees(),
            balance_lost_at_s: log.balance_lost_at,
            max_abs_roll_error_deg: log
                .records
                .iter()
                .map(|r| (r.q[0] - r.q_ref[0]).abs())
                .fold(0.0, f64::max)
                .to_degrees(),
            position_error_mm: StatsOut::scaled(position, 1e3),
            orientation_error_deg: StatsOut::scaled(orientation, 180.0 / std::f64::consts::PI),
            steering_saturated_ticks: log.records.iter().filter(|r| r.steering_saturated).count(),
            correction_active_ticks: log.records.iter().filter(|r| r.correction_active).count(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_pose_round_trips() {
        let v = [-13.0, -55.0, 94.0, -61.0, 52.0, 96.0];
        let back = pose_to_table(&pose_from_table(&v));
        for (a, b) in v.iter().zip(back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        assert_eq!(config_hash(b"abc"), config_hash(b"abc"));
        assert_ne!(config_hash(b"abc"), config_hash(b"abd"));
        assert_eq!(config_hash(b"").len(), 64);
    }

    #[test]
    fn table_rejects_ragged_rows() {
        let meta = Metadata::new(b"{}", 0, true);
        let header = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        let r = write_table(&mut buf, &meta, &header, [vec!["1".to_string()]]);
        assert!(r.is_err());
        let mut buf = Vec::new();
        write_table(&mut buf, &meta, &header, [vec!["1".into(), "2".into()]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# tool: bikebot"));
        assert!(text.ends_with("a,b\n1,2\n"));
    }
}
