//! Torus snapshots: a JSON header carrying the reduced coordinates and two CSV
//! files with the physical `η` and `ψ` on the torus.

use super::{Formulation, Layout, SolveReport, SolverError, TorusEmbedding};
use crate::dispersion::WavePhysics;
use crate::fields::{read_torus_csv, write_torus_csv, TorusField, TravelingProfile};
use crate::nonres::SiteSelection;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

pub const SNAPSHOT_FORMAT: &str = "vorwave-torus";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub physics: WavePhysics,
    pub sites: SiteSelection,
    /// Signed sites, redundant with `sites`; kept for readers of the CSV files.
    pub jvec: Vec<i64>,
    pub xi: Vec<f64>,
    pub epsilon: f64,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
    pub n_phi: usize,
    pub n_modes: usize,
    /// Reduced coordinates `(Θ, I, w, ω)` in solver layout order.
    pub coordinates: Vec<f64>,
    /// CSV of `η`, relative to the header.
    pub eta_file: String,
    /// CSV of `ψ`, relative to the header.
    pub psi_file: String,
    pub report: Option<SolveReport>,
}

/// Writes `<stem>.json`, `<stem>.eta.csv` and `<stem>.psi.csv` into `dir`.
pub fn write_snapshot(
    dir: &Path,
    stem: &str,
    emb: &TorusEmbedding,
    report: Option<&SolveReport>,
) -> Result<PathBuf, SolverError> {
    std::fs::create_dir_all(dir)?;
    let layout = emb.layout();
    let (eta, psi) = emb.surface_profiles()?;
    let eta_file = format!("{stem}.eta.csv");
    let psi_file = format!("{stem}.psi.csv");
    write_torus_csv(&eta.embed(), BufWriter::new(File::create(dir.join(&eta_file))?))?;
    write_torus_csv(&psi.embed(), BufWriter::new(File::create(dir.join(&psi_file))?))?;
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.into(),
        version: SNAPSHOT_VERSION,
        physics: emb.physics,
        sites: emb.sites.clone(),
        jvec: emb.sites.jvec(),
        xi: emb.xi.clone(),
        epsilon: emb.epsilon,
        omega: emb.omega.clone(),
        alpha: emb.alpha.clone(),
        n_phi: emb.n_phi(),
        n_modes: emb.n_modes(),
        coordinates: emb.pack(&layout, Formulation::Frequency),
        eta_file,
        psi_file,
        report: report.cloned(),
    };
    let path = dir.join(format!("{stem}.json"));
    let mut f = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut f, &header)?;
    std::io::Write::write_all(&mut f, b"\n")?;
    Ok(path)
}

/// Reads a header and its two torus fields.
pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, TorusField, TorusField), SolverError> {
    let header: SnapshotHeader = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if header.format != SNAPSHOT_FORMAT || header.version != SNAPSHOT_VERSION {
        return Err(SolverError::Snapshot(format!(
            "unsupported snapshot '{}' version {}",
            header.format, header.version
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let eta = read_torus_csv(BufReader::new(File::open(dir.join(&header.eta_file))?))?;
    let psi = read_torus_csv(BufReader::new(File::open(dir.join(&header.psi_file))?))?;
    if eta.nu() != header.jvec.len() || psi.nu() != header.jvec.len() {
        return Err(SolverError::Snapshot("torus dimension does not match the sites".into()));
    }
    Ok((header, eta, psi))
}

/// Rebuilds the embedding from the reduced coordinates of a header.
pub fn embedding_from_header(h: &SnapshotHeader) -> Result<TorusEmbedding, SolverError> {
    h.physics
        .validate()
        .map_err(|e| SolverError::Snapshot(e.to_string()))?;
    if h.sites.jvec() != h.jvec {
        return Err(SolverError::Snapshot("jvec does not match the site selection".into()));
    }
    let nu = h.jvec.len();
    if h.omega.len() != nu || h.alpha.len() != nu {
        return Err(SolverError::Snapshot("frequency vectors have the wrong length".into()));
    }
    let seed = super::linear_seed(&h.physics, &h.sites, &h.xi, h.epsilon, h.n_phi, h.n_modes)?;
    let layout = Layout::new(&h.sites, h.n_phi, h.n_modes);
    if h.coordinates.len() != layout.unknowns() {
        return Err(SolverError::Snapshot(format!(
            "expected {} coordinates, found {}",
            layout.unknowns(),
            h.coordinates.len()
        )));
    }
    let mut emb = seed.unpack(&layout, Formulation::Frequency, &h.coordinates);
    emb.alpha = h.alpha.clone();
    Ok(emb)
}

/// Largest difference between the stored fields and those of the embedding.
pub fn snapshot_consistency(emb: &TorusEmbedding, eta: &TorusField, psi: &TorusField) -> Result<f64, SolverError> {
    let (e, p) = emb.surface_profiles()?;
    let back = |u: &TravelingProfile, v: &TorusField| u.embed().max_diff(v);
    Ok(back(&e, eta).max(back(&p, psi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::Depth;
    use crate::solver::linear_seed;

    #[test]
    fn snapshot_round_trip() {
        let p = WavePhysics::new(1.0, 1.0, 0.5, Depth::Finite(2.0)).unwrap();
        let s = SiteSelection::new(vec![1, 2], vec![1, -1]).unwrap();
        let seed = linear_seed(&p, &s, &[1.0, 0.5], 1e-2, 2, 8).unwrap();
        let layout = seed.layout();
        let x: Vec<f64> = seed
            .pack(&layout, Formulation::Frequency)
            .iter()
            .enumerate()
            .map(|(k, v)| v + 1e-4 * (k as f64).sin())
            .collect();
        let emb = seed.unpack(&layout, Formulation::Frequency, &x);
        let dir = std::env::temp_dir().join(format!("vorwave-snap-{}", std::process::id()));
        let path = write_snapshot(&dir, "t", &emb, None).unwrap();
        let (h, eta, psi) = read_snapshot(&path).unwrap();
        let back = embedding_from_header(&h).unwrap();
        assert_eq!(back.pack(&layout, Formulation::Frequency), x);
        assert!(snapshot_consistency(&back, &eta, &psi).unwrap() == 0.0);
        std::fs::remove_dir_all(dir).ok();
    }
}
