//! CSV artifacts and the run manifest.
//!
//! All CSVs use '.' as the decimal separator and LF line endings; floats are
//! printed with Rust's shortest round-trip formatting, so reruns with equal
//! manifests produce byte-identical files.

use crate::grid::{GridSpec, StateIndex};
use crate::sim::{FrameLog, Outcome, ScenarioResult};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

pub const TRAJECTORY_HEADER: &str = "time,x,y,z,yaw";
pub const BELIEF_HEADER: &str = "frame,linear_state,probability";
pub const MODES_HEADER: &str =
    "frame,mode_i,mode_j,mode_k,mode_depth_m,mode_belief,closest_raw_depth_m";
pub const COMMANDS_HEADER: &str = "frame,time_s,v_x,v_z,v_psi,nu_x,nu_y,nu_z,f_rep_magnitude";
pub const TIMINGS_HEADER: &str = "frame,compute_ms";

pub fn trajectory_csv(result: &ScenarioResult) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for pose in &result.trajectory {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            pose.time, pose.position.x, pose.position.y, pose.position.z, pose.yaw
        );
    }
    // Outcome footer row, same arity as the data rows.
    let _ = writeln!(out, "outcome,{},,,", result.outcome.as_str());
    out
}

pub fn belief_csv(frames: &[FrameLog]) -> String {
    let mut out = String::from(BELIEF_HEADER);
    out.push('\n');
    for f in frames {
        for &(state, prob) in &f.belief_sparse {
            let _ = writeln!(out, "{},{},{}", f.frame, state, prob);
        }
    }
    out
}

pub fn modes_csv(frames: &[FrameLog], spec: &GridSpec) -> String {
    let mut out = String::from(MODES_HEADER);
    out.push('\n');
    for f in frames {
        let closest = f
            .closest_raw_depth
            .map(|d| d.to_string())
            .unwrap_or_default();
        match StateIndex::from_linear(spec, f.mode_linear) {
            StateIndex::InGrid { i, j, k } => {
                let depth = (k as f64 + 0.5) * spec.k_d;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    f.frame, i, j, k, depth, f.mode_belief, closest
                );
            }
            StateIndex::Boundary => {
                // -1 sentinels: the most probable state is "no obstacle".
                let _ = writeln!(out, "{},-1,-1,-1,-1,{},{}", f.frame, f.mode_belief, closest);
            }
        }
    }
    out
}

pub fn commands_csv(frames: &[FrameLog]) -> String {
    let mut out = String::from(COMMANDS_HEADER);
    out.push('\n');
    for f in frames {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            f.frame,
            f.time,
            f.command.v_x,
            f.command.v_z,
            f.command.v_psi,
            f.nu.x,
            f.nu.y,
            f.nu.z,
            f.f_rep_magnitude
        );
    }
    out
}

pub fn timings_csv(frames: &[FrameLog]) -> String {
    let mut out = String::from(TIMINGS_HEADER);
    out.push('\n');
    for f in frames {
        let _ = writeln!(out, "{},{}", f.frame, f.compute_ms);
    }
    out
}

pub fn summary_text(result: &ScenarioResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "outcome = {}", result.outcome.as_str());
    let _ = writeln!(out, "frames = {}", result.frames.len());
    let sim_time = result.trajectory.last().map(|p| p.time).unwrap_or(0.0);
    let _ = writeln!(out, "sim_time_s = {sim_time}");
    let _ = writeln!(out, "path_length_m = {}", result.path_length);
    let _ = writeln!(out, "min_clearance_m = {}", result.min_clearance);
    if !result.frames.is_empty() {
        let mut times: Vec<f64> = result.frames.iter().map(|f| f.compute_ms).collect();
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        let p90 = times[((times.len() * 9) / 10).min(times.len() - 1)];
        let _ = writeln!(out, "compute_ms_median = {median}");
        let _ = writeln!(out, "compute_ms_p90 = {p90}");
    }
    let collided = matches!(result.outcome, Outcome::Collided);
    let _ = writeln!(out, "collided = {collided}");
    out
}

/// FNV-1a hash of arbitrary text, for manifest entries (scene files etc).
pub fn content_hash(text: &str) -> u64 {
    crate::hash::fnv1a64(text.as_bytes())
}

/// Key/value manifest tying artifacts to the exact inputs that made them.
pub fn manifest_text(entries: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (key, value) in entries {
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

pub fn write_file(path: &Path, content: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)
}

/// Minimal CSV reader for this artifact's own files: splits rows on commas,
/// returns (header, rows). No quoting — none of the writers emit any.
pub fn read_csv(path: &Path) -> io::Result<(String, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().to_string();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    Ok((header, rows))
}
