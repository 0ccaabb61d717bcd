//! Run artifacts on disk: CSV series, JSON summaries, and their readers.
//!
//! Every file carries a provenance header (module version, config hash,
//! seed, preset) and uses a fixed float format, so identical configs and
//! seeds reproduce artifacts byte for byte. Counts tables are sorted before
//! writing for the same reason.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use edgeburst::analysis::EscapeProfile;
use serde::Serialize;

use crate::{CliError, Result};

/// Provenance stamped into every artifact.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

impl Provenance {
    pub fn new(config_sha256: String, seed: u64, preset: Option<String>) -> Self {
        Provenance { version: crate::VERSION.to_string(), config_sha256, seed, preset }
    }

    fn header(&self) -> String {
        let mut h = format!(
            "# edgeburst v{}\n# config_sha256 = {}\n# seed = {}\n",
            self.version, self.config_sha256, self.seed
        );
        if let Some(p) = &self.preset {
            h.push_str(&format!("# preset = {p}\n"));
        }
        h
    }
}

/// Fixed-width float formatting shared by all CSV writers.
pub fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

fn write_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    columns: &[String],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut text = prov.header();
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Time-resolved flattened-site occupancies (2N columns).
pub fn write_occupancies_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    time_grid: &[f64],
    occupancies: &[Vec<f64>],
) -> Result<()> {
    let n_sites = occupancies.first().map_or(0, Vec::len);
    let mut columns = vec!["time".to_string()];
    columns.extend((0..n_sites).map(|z| format!("site_{z}")));
    let rows: Vec<Vec<String>> = time_grid
        .iter()
        .zip(occupancies)
        .map(|(t, row)| {
            let mut r = vec![fmt(*t)];
            r.extend(row.iter().map(|&v| fmt(v)));
            r
        })
        .collect();
    write_csv(path, prov, &columns, &rows)
}

/// Escape profile: total and per-cell P_x(t).
pub fn write_escape_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    profile: &EscapeProfile,
) -> Result<()> {
    let n_cells = profile.final_px.len();
    let mut columns = vec!["time".to_string(), "p_total".to_string()];
    columns.extend((1..=n_cells).map(|x| format!("cell_{x}")));
    let rows: Vec<Vec<String>> = profile
        .time_grid
        .iter()
        .zip(profile.p_x_of_t.iter().zip(&profile.p_of_t))
        .map(|(t, (px, p))| {
            let mut r = vec![fmt(*t), fmt(*p)];
            r.extend(px.iter().map(|&v| fmt(v)));
            r
        })
        .collect();
    write_csv(path, prov, &columns, &rows)
}

/// Final per-cell escape probabilities.
pub fn write_final_px_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    final_px: &[f64],
) -> Result<()> {
    let columns = vec!["cell".to_string(), "p_x".to_string()];
    let rows: Vec<Vec<String>> = final_px
        .iter()
        .enumerate()
        .map(|(i, &v)| vec![(i + 1).to_string(), fmt(v)])
        .collect();
    write_csv(path, prov, &columns, &rows)
}

/// Ancilla success probability and the recovered norm series.
pub fn write_success_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    time_grid: &[f64],
    success: &[f64],
    recovered_norm: &[f64],
) -> Result<()> {
    let columns = vec![
        "time".to_string(),
        "success_probability".to_string(),
        "recovered_norm".to_string(),
    ];
    let rows: Vec<Vec<String>> = (0..time_grid.len())
        .map(|j| vec![fmt(time_grid[j]), fmt(success[j]), fmt(recovered_norm[j])])
        .collect();
    write_csv(path, prov, &columns, &rows)
}

/// Raw per-shot tallies of a noise-scaled campaign, one row per observed
/// (ancilla 1-count, system value) pair. Sorted for determinism.
pub fn write_counts_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    lambdas: &[f64],
    counts: &[Vec<Vec<HashMap<(u32, u32), u64>>>],
) -> Result<()> {
    let columns: Vec<String> = ["lambda_index", "lambda", "twirl", "time_index", "anc_ones", "sys_value", "count"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows: Vec<(usize, usize, usize, u32, u32, u64)> = Vec::new();
    for (l, per_twirl) in counts.iter().enumerate() {
        for (k, per_time) in per_twirl.iter().enumerate() {
            for (j, map) in per_time.iter().enumerate() {
                for (&(anc, sys), &cnt) in map {
                    rows.push((l, k, j, anc, sys, cnt));
                }
            }
        }
    }
    rows.sort_unstable();
    let rows: Vec<Vec<String>> = rows
        .into_iter()
        .map(|(l, k, j, anc, sys, cnt)| {
            vec![
                l.to_string(),
                fmt(lambdas[l]),
                k.to_string(),
                j.to_string(),
                anc.to_string(),
                sys.to_string(),
                cnt.to_string(),
            ]
        })
        .collect();
    write_csv(path, prov, &columns, &rows)
}

/// Recorded time grid with the number of completed step layers per index.
pub fn write_times_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    time_grid: &[f64],
    n_layers: &[usize],
) -> Result<()> {
    let columns = vec!["time_index".to_string(), "time".to_string(), "n_layers".to_string()];
    let rows: Vec<Vec<String>> = (0..time_grid.len())
        .map(|j| vec![j.to_string(), fmt(time_grid[j]), n_layers[j].to_string()])
        .collect();
    write_csv(path, prov, &columns, &rows)
}

/// One row per spectral-scan point.
pub fn write_spectral_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    points: &[crate::pipeline::SpectralPoint],
) -> Result<()> {
    let columns: Vec<String> =
        ["ratio", "v1", "dissipative_gap", "oracle_max_im", "oracle_min_im", "engine_max_im", "converged"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                fmt(p.ratio),
                fmt(p.v1),
                fmt(p.dissipative_gap),
                fmt(p.oracle_max_im),
                fmt(p.oracle_min_im),
                fmt(p.engine_max_im),
                p.converged.to_string(),
            ]
        })
        .collect();
    write_csv(path, prov, &columns, &rows)
}

/// Full complex spectra of the scan, one row per eigenvalue.
pub fn write_spectrum_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    spectra: &[(f64, Vec<num_complex::Complex64>)],
) -> Result<()> {
    let columns = vec!["ratio".to_string(), "re".to_string(), "im".to_string()];
    let mut rows = Vec::new();
    for (ratio, eigs) in spectra {
        let mut sorted = eigs.clone();
        sorted.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        for e in sorted {
            rows.push(vec![fmt(*ratio), fmt(e.re), fmt(e.im)]);
        }
    }
    write_csv(path, prov, &columns, &rows)
}

/// Side-by-side final escape probabilities of the mitigation pipelines.
pub fn write_mitigated_csv<P: AsRef<Path>>(
    path: P,
    prov: &Provenance,
    oracle: &[f64],
    raw: &[f64],
    readout_only: &[f64],
    full: &[f64],
) -> Result<()> {
    let columns: Vec<String> = ["cell", "oracle", "raw", "readout_only", "full"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = (0..oracle.len())
        .map(|i| {
            vec![(i + 1).to_string(), fmt(oracle[i]), fmt(raw[i]), fmt(readout_only[i]), fmt(full[i])]
        })
        .collect();
    write_csv(path, prov, &columns, &rows)
}

/// Pretty-printed JSON artifact (summaries, reports).
pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("JSON serialization failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

// ----------------------------------------------------------------------------
// readers
// ----------------------------------------------------------------------------

/// Parses a provenance-stamped CSV: returns (column names, data rows).
pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", path.as_ref().display()))
    })?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{} has no header", path.as_ref().display())))?;
    let columns: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> =
        lines.map(|l| l.split(',').map(|s| s.to_string()).collect()).collect();
    Ok((columns, rows))
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse {what} from {field:?}")))
}

/// Reads a counts table back into per-(lambda, twirl, time) maps.
#[allow(clippy::type_complexity)]
pub fn read_counts_csv<P: AsRef<Path>>(
    path: P,
) -> Result<(Vec<f64>, Vec<Vec<Vec<HashMap<(u32, u32), u64>>>>)> {
    let (_, rows) = read_csv(path)?;
    let mut lambdas: Vec<f64> = Vec::new();
    let mut counts: Vec<Vec<Vec<HashMap<(u32, u32), u64>>>> = Vec::new();
    for row in rows {
        if row.len() != 7 {
            return Err(CliError::Config(format!("counts row has {} fields, need 7", row.len())));
        }
        let l: usize = parse(&row[0], "lambda_index")?;
        let lambda: f64 = parse(&row[1], "lambda")?;
        let k: usize = parse(&row[2], "twirl")?;
        let j: usize = parse(&row[3], "time_index")?;
        let anc: u32 = parse(&row[4], "anc_ones")?;
        let sys: u32 = parse(&row[5], "sys_value")?;
        let cnt: u64 = parse(&row[6], "count")?;
        while lambdas.len() <= l {
            lambdas.push(f64::NAN);
            counts.push(Vec::new());
        }
        lambdas[l] = lambda;
        while counts[l].len() <= k {
            counts[l].push(Vec::new());
        }
        while counts[l][k].len() <= j {
            counts[l][k].push(HashMap::new());
        }
        *counts[l][k][j].entry((anc, sys)).or_insert(0) += cnt;
    }
    if lambdas.iter().any(|l| l.is_nan()) {
        return Err(CliError::Config("counts table is missing a lambda block".into()));
    }
    Ok((lambdas, counts))
}

/// Reads the recorded grid and per-index layer counts.
pub fn read_times_csv<P: AsRef<Path>>(path: P) -> Result<(Vec<f64>, Vec<usize>)> {
    let (_, rows) = read_csv(path)?;
    let mut grid = Vec::with_capacity(rows.len());
    let mut layers = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != 3 {
            return Err(CliError::Config(format!("times row has {} fields, need 3", row.len())));
        }
        grid.push(parse::<f64>(&row[1], "time")?);
        layers.push(parse::<usize>(&row[2], "n_layers")?);
    }
    Ok((grid, layers))
}

// ----------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::new("abc123".into(), 7, Some("edge-burst-N8".into()))
    }

    #[test]
    fn csv_roundtrip_keeps_counts() {
        let dir = std::env::temp_dir().join("edgeburst-outputs-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("counts.csv");
        let mut map = HashMap::new();
        map.insert((0u32, 5u32), 120u64);
        map.insert((2u32, 1u32), 3u64);
        let counts = vec![vec![vec![HashMap::new(), map.clone()]]];
        write_counts_csv(&path, &prov(), &[1.0], &counts).unwrap();
        let (lambdas, back) = read_counts_csv(&path).unwrap();
        assert_eq!(lambdas.len(), 1);
        assert!((lambdas[0] - 1.0).abs() < 1e-12);
        assert_eq!(back[0][0][1], map);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn header_carries_provenance() {
        let dir = std::env::temp_dir().join("edgeburst-outputs-header");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("final_px.csv");
        write_final_px_csv(&path, &prov(), &[0.25, 0.75]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("# config_sha256 = abc123"));
        assert!(text.contains("# seed = 7"));
        assert!(text.contains("# preset = edge-burst-N8"));
        let (cols, rows) = read_csv(&path).unwrap();
        assert_eq!(cols, vec!["cell", "p_x"]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][0], "2");
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn fixed_float_format_roundtrips() {
        for &x in &[0.0, 1.0, 0.2825, 1e-12, -0.4] {
            let back: f64 = fmt(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
