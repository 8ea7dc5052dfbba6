//! Newline-delimited JSON persistence for [`MixtureChain`].
//!
//! Line 1 is a header object `{"n", "G", "d", "H"}` plus an optional
//! `"meta"` object; each of the following `H` lines is one record
//! `{"iter", "z", "mu", "pi"}` with an optional `"phi"` key. `iter` runs
//! sequentially from 1 to `H`, `z` holds `n` 1-based labels, `mu` holds
//! `G` vectors of `d` reals, `pi` holds `G` weights, and `phi`, when
//! present, holds `G` equal-length dispersion blocks on every record.
//!
//! Reals are written in scientific notation with 17 significant digits,
//! which round-trips every finite `f64` bit-exactly, so `load(save(c))`
//! reproduces `c` including metadata.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use crate::chain::{ChainMeta, MixtureChain, PI_SUM_TOL};
use crate::error::{Error, Result};

/// Formats a real so that parsing the text recovers the exact bits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_real_array(buf: &mut String, xs: &[f64]) {
    buf.push('[');
    for (k, x) in xs.iter().enumerate() {
        if k > 0 {
            buf.push(',');
        }
        let _ = write!(buf, "{x:.16e}");
    }
    buf.push(']');
}

#[derive(Debug, serde::Serialize, Deserialize)]
struct Header {
    n: usize,
    #[serde(rename = "G")]
    g: usize,
    d: usize,
    #[serde(rename = "H")]
    h: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ChainMeta>,
}

#[derive(Debug, Deserialize)]
struct Record {
    iter: usize,
    z: Vec<u32>,
    mu: Vec<Vec<f64>>,
    pi: Vec<f64>,
    #[serde(default)]
    phi: Option<Vec<Vec<f64>>>,
}

/// Writes `chain` to `path` in the newline-delimited JSON format.
pub fn save_chain(chain: &MixtureChain, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let header = Header {
        n: chain.n(),
        g: chain.g(),
        d: chain.d(),
        h: chain.h(),
        meta: (!chain.meta().is_empty()).then(|| chain.meta().clone()),
    };
    let header_line =
        serde_json::to_string(&header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writeln!(w, "{header_line}")?;

    let mut line = String::new();
    for h in 0..chain.h() {
        line.clear();
        let _ = write!(line, "{{\"iter\":{},\"z\":[", h + 1);
        for (i, &label) in chain.z_row(h).iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let _ = write!(line, "{label}");
        }
        line.push_str("],\"mu\":[");
        for g in 0..chain.g() {
            if g > 0 {
                line.push(',');
            }
            push_real_array(&mut line, chain.mu_at(h, g));
        }
        line.push_str("],\"pi\":");
        push_real_array(&mut line, chain.pi_row(h));
        if chain.has_dispersion() {
            line.push_str(",\"phi\":[");
            for g in 0..chain.g() {
                if g > 0 {
                    line.push(',');
                }
                push_real_array(&mut line, chain.phi_at(h, g));
            }
            line.push(']');
        }
        line.push('}');
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn file_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::ChainFile {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a chain from `path`, rejecting any schema or invariant breach
/// with an error naming the offending line and field.
pub fn load_chain(path: impl AsRef<Path>) -> Result<MixtureChain> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let header_text = match lines.next() {
        Some(l) => l?,
        None => return Err(file_err(path, 1, "empty file, expected header")),
    };
    let header: Header = serde_json::from_str(&header_text)
        .map_err(|e| file_err(path, 1, format!("malformed header: {e}")))?;
    if header.n == 0 || header.g == 0 || header.d == 0 || header.h == 0 {
        return Err(file_err(path, 1, "header fields n, G, d, H must be positive"));
    }

    let mut builder = MixtureChain::builder(header.g, header.n, header.d);
    if let Some(meta) = header.meta {
        builder = builder.meta(meta);
    }
    let mut phi_width: Option<usize> = None;
    let mut mu_flat = vec![0.0; header.g * header.d];
    let mut phi_flat: Vec<f64> = Vec::new();

    for idx in 0..header.h {
        let line_no = idx + 2;
        let text = match lines.next() {
            Some(l) => l?,
            None => {
                return Err(file_err(
                    path,
                    line_no,
                    format!("file truncated: {} of {} records present", idx, header.h),
                ))
            }
        };
        let rec: Record = serde_json::from_str(&text)
            .map_err(|e| file_err(path, line_no, format!("malformed record: {e}")))?;

        if rec.iter != idx + 1 {
            return Err(file_err(
                path,
                line_no,
                format!("field iter: expected {}, got {}", idx + 1, rec.iter),
            ));
        }
        if rec.z.len() != header.n {
            return Err(file_err(
                path,
                line_no,
                format!("field z: {} labels, expected n = {}", rec.z.len(), header.n),
            ));
        }
        for (i, &label) in rec.z.iter().enumerate() {
            if label < 1 || label as usize > header.g {
                return Err(file_err(
                    path,
                    line_no,
                    format!(
                        "field z: label {} at unit {} out of range 1..={}",
                        label,
                        i + 1,
                        header.g
                    ),
                ));
            }
        }
        if rec.mu.len() != header.g {
            return Err(file_err(
                path,
                line_no,
                format!("field mu: {} vectors, expected G = {}", rec.mu.len(), header.g),
            ));
        }
        for (g, row) in rec.mu.iter().enumerate() {
            if row.len() != header.d {
                return Err(file_err(
                    path,
                    line_no,
                    format!(
                        "field mu: component {} has {} reals, expected d = {}",
                        g + 1,
                        row.len(),
                        header.d
                    ),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(file_err(
                    path,
                    line_no,
                    format!("field mu: component {} has a non-finite value", g + 1),
                ));
            }
            mu_flat[g * header.d..(g + 1) * header.d].copy_from_slice(row);
        }
        if rec.pi.len() != header.g {
            return Err(file_err(
                path,
                line_no,
                format!("field pi: {} weights, expected G = {}", rec.pi.len(), header.g),
            ));
        }
        if rec.pi.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(file_err(
                path,
                line_no,
                "field pi: weights must be finite and non-negative",
            ));
        }
        let sum: f64 = rec.pi.iter().sum();
        if (sum - 1.0).abs() > PI_SUM_TOL {
            return Err(file_err(
                path,
                line_no,
                format!("field pi: weights sum to {sum:.17e}, expected 1"),
            ));
        }

        let phi_slice = match &rec.phi {
            None => {
                if phi_width.map_or(false, |w| w > 0) {
                    return Err(file_err(path, line_no, "field phi: missing on this record"));
                }
                phi_width = Some(0);
                None
            }
            Some(blocks) => {
                if blocks.len() != header.g {
                    return Err(file_err(
                        path,
                        line_no,
                        format!(
                            "field phi: {} blocks, expected G = {}",
                            blocks.len(),
                            header.g
                        ),
                    ));
                }
                let w = blocks[0].len();
                if w == 0 || blocks.iter().any(|b| b.len() != w) {
                    return Err(file_err(
                        path,
                        line_no,
                        "field phi: blocks must be non-empty and equal length",
                    ));
                }
                match phi_width {
                    None => {
                        phi_width = Some(w);
                        builder = builder.phi_width(w);
                    }
                    Some(prev) if prev != w => {
                        return Err(file_err(
                            path,
                            line_no,
                            format!("field phi: block width {w} differs from earlier width {prev}"),
                        ))
                    }
                    Some(0) => {
                        return Err(file_err(
                            path,
                            line_no,
                            "field phi: present here but absent on earlier records",
                        ))
                    }
                    Some(_) => {}
                }
                if blocks.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(file_err(path, line_no, "field phi: non-finite value"));
                }
                phi_flat.clear();
                phi_flat.extend(blocks.iter().flatten());
                Some(&phi_flat[..])
            }
        };

        builder
            .push_iteration(&rec.z, &mu_flat, &rec.pi, phi_slice)
            .map_err(|e| file_err(path, line_no, e.to_string()))?;
    }

    if let Some(extra) = lines.next() {
        let extra = extra?;
        if !extra.trim().is_empty() {
            return Err(file_err(
                path,
                header.h + 2,
                format!("unexpected content after {} records", header.h),
            ));
        }
    }

    builder.finish()
}
