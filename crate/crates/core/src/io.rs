//! File formats: tapes, curves, kernels and frontier grids as CSV with a
//! one-line header, configs and reports as JSON. Floats are written with 17
//! significant digits so every file round-trips bit for bit.
//!
//! Tape CSV: `n,epsilon,volume[,price]`. Row `n` carries trade `n` and the
//! price `p_n` seen just before it; a priced tape ends with the extra row
//! `N,,,p_N`. Seed, generator and volume law go to a `<file>.meta.json`
//! sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{ConditionalResponse, CurveRole, KernelInversion, LagCurve};
use crate::impact::Kernel;
use crate::manipulation::{FrontierCell, Strategy, Trade};
use crate::tape::{GeneratorTag, SignSeries, TradeTape, VolumeSeries, VolumeSpec};

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Format {
        line,
        message: format!("{what} {s:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Format {
            line,
            message: format!("{what} {s:?} is not finite"),
        });
    }
    Ok(v)
}

fn parse_usize(s: &str, line: u64, what: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Format {
        line,
        message: format!("{what} {s:?} is not a nonnegative integer"),
    })
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// SHA-256 of the compact JSON form, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TapeMeta {
    seed: u64,
    generator: GeneratorTag,
    volume_spec: Option<VolumeSpec>,
    dt_tag: String,
}

pub fn tape_to_csv(tape: &TradeTape) -> String {
    let prices = tape.prices();
    let mut out = String::with_capacity(64 * (tape.len() + 2));
    out.push_str(if prices.is_some() {
        "n,epsilon,volume,price\n"
    } else {
        "n,epsilon,volume\n"
    });
    for (n, (&s, &v)) in tape
        .signs
        .as_slice()
        .iter()
        .zip(tape.volumes.as_slice())
        .enumerate()
    {
        out.push_str(&format!("{n},{s},{}", fmt_f64(v)));
        if let Some(p) = prices {
            out.push(',');
            out.push_str(&fmt_f64(p[n]));
        }
        out.push('\n');
    }
    if let Some(p) = prices {
        out.push_str(&format!("{},,,{}\n", tape.len(), fmt_f64(p[tape.len()])));
    }
    out
}

pub fn write_tape(tape: &TradeTape, path: &Path) -> Result<()> {
    write_atomic(path, tape_to_csv(tape).as_bytes())?;
    let meta = TapeMeta {
        seed: tape.signs.seed,
        generator: tape.signs.generator,
        volume_spec: tape.volumes.spec,
        dt_tag: tape.dt_tag.clone(),
    };
    write_json(&sidecar(path), &meta)
}

/// Parses a tape CSV; the sidecar, when present, restores provenance.
pub fn tape_from_csv(text: &str) -> Result<TradeTape> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let priced = match header
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["n", "epsilon", "volume"] => false,
        ["n", "epsilon", "volume", "price"] => true,
        other => {
            return Err(Error::Format {
                line: 1,
                message: format!("unexpected header {other:?}; want n,epsilon,volume[,price]"),
            })
        }
    };
    let mut signs = Vec::new();
    let mut volumes = Vec::new();
    let mut prices = Vec::new();
    let mut closed = false;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if closed {
            return Err(Error::Format {
                line,
                message: "rows after the closing price row".into(),
            });
        }
        let n = parse_usize(&rec[0], line, "n")?;
        if n != signs.len() {
            return Err(Error::Format {
                line,
                message: format!("n = {n}, expected {}", signs.len()),
            });
        }
        if priced && rec[1].trim().is_empty() && rec[2].trim().is_empty() {
            prices.push(parse_f64(&rec[3], line, "price")?);
            closed = true;
            continue;
        }
        let eps = match rec[1].trim() {
            "1" | "+1" => 1,
            "-1" => -1,
            other => {
                return Err(Error::Format {
                    line,
                    message: format!("epsilon {other:?} must be -1 or 1"),
                })
            }
        };
        let v = parse_f64(&rec[2], line, "volume")?;
        if v <= 0.0 {
            return Err(Error::Format {
                line,
                message: format!("volume {v} must be > 0"),
            });
        }
        signs.push(eps);
        volumes.push(v);
        if priced {
            prices.push(parse_f64(&rec[3], line, "price")?);
        }
    }
    if priced && !closed {
        return Err(Error::Format {
            line: signs.len() as u64 + 2,
            message: "priced tape lacks the closing row N,,,p_N".into(),
        });
    }
    let tape = TradeTape::new(
        SignSeries::new(signs, 0, GeneratorTag::External)?,
        VolumeSeries::new(volumes, None)?,
    )?;
    if priced {
        tape.with_prices(prices)
    } else {
        Ok(tape)
    }
}

pub fn read_tape(path: &Path) -> Result<TradeTape> {
    let mut tape = tape_from_csv(&fs::read_to_string(path)?)?;
    let meta_path = sidecar(path);
    if meta_path.exists() {
        let meta: TapeMeta = read_json(&meta_path)?;
        tape.signs.seed = meta.seed;
        tape.signs.generator = meta.generator;
        tape.volumes.spec = meta.volume_spec;
        tape.dt_tag = meta.dt_tag;
    }
    Ok(tape)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveMeta {
    role: CurveRole,
    notes: Vec<String>,
}

pub fn curve_to_csv(curve: &LagCurve) -> String {
    let mut out = String::from("lag,value,count,se\n");
    for i in 0..curve.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            curve.lags[i],
            fmt_f64(curve.values[i]),
            curve.counts[i],
            fmt_f64(curve.se[i])
        ));
    }
    out
}

pub fn write_curve(curve: &LagCurve, path: &Path) -> Result<()> {
    write_atomic(path, curve_to_csv(curve).as_bytes())?;
    write_json(
        &sidecar(path),
        &CurveMeta {
            role: curve.role,
            notes: curve.notes.clone(),
        },
    )
}

fn expect_header(rdr: &mut csv::Reader<&[u8]>, want: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if got != want {
        return Err(Error::Format {
            line: 1,
            message: format!("unexpected header {got:?}; want {}", want.join(",")),
        });
    }
    Ok(())
}

pub fn curve_from_csv(text: &str, role: CurveRole) -> Result<LagCurve> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    expect_header(&mut rdr, &["lag", "value", "count", "se"])?;
    let mut c = LagCurve {
        role,
        lags: Vec::new(),
        values: Vec::new(),
        counts: Vec::new(),
        se: Vec::new(),
        notes: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        c.lags.push(parse_usize(&rec[0], line, "lag")?);
        c.values.push(parse_f64(&rec[1], line, "value")?);
        c.counts.push(parse_usize(&rec[2], line, "count")?);
        c.se.push(parse_f64(&rec[3], line, "se")?);
    }
    c.validate()?;
    Ok(c)
}

/// Reads a curve; the sidecar's role wins over `role_hint`.
pub fn read_curve(path: &Path, role_hint: Option<CurveRole>) -> Result<LagCurve> {
    let text = fs::read_to_string(path)?;
    let meta_path = sidecar(path);
    let meta: Option<CurveMeta> = if meta_path.exists() {
        Some(read_json(&meta_path)?)
    } else {
        None
    };
    let role = meta.as_ref().map(|m| m.role).or(role_hint).ok_or_else(|| {
        Error::input(
            "cli_io",
            format!("{}: curve role unknown (no sidecar)", path.display()),
        )
    })?;
    let mut c = curve_from_csv(&text, role)?;
    if let Some(m) = meta {
        c.notes = m.notes;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConditionalMeta {
    lag: usize,
    mean_volume: Vec<f64>,
}

pub fn conditional_to_csv(c: &ConditionalResponse) -> String {
    let mut out = String::from("v_lo,v_hi,value,count,se\n");
    for i in 0..c.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(c.bins[i].0),
            fmt_f64(c.bins[i].1),
            fmt_f64(c.values[i]),
            c.counts[i],
            fmt_f64(c.se[i])
        ));
    }
    out
}

pub fn write_conditional(c: &ConditionalResponse, path: &Path) -> Result<()> {
    write_atomic(path, conditional_to_csv(c).as_bytes())?;
    write_json(
        &sidecar(path),
        &ConditionalMeta {
            lag: c.lag,
            mean_volume: c.mean_volume.clone(),
        },
    )
}

/// Without a sidecar the lag is taken as 1 and bin volumes as the geometric
/// mean of the edges.
pub fn read_conditional(path: &Path) -> Result<ConditionalResponse> {
    let text = fs::read_to_string(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    expect_header(&mut rdr, &["v_lo", "v_hi", "value", "count", "se"])?;
    let mut c = ConditionalResponse {
        lag: 1,
        bins: Vec::new(),
        mean_volume: Vec::new(),
        values: Vec::new(),
        counts: Vec::new(),
        se: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let lo = parse_f64(&rec[0], line, "v_lo")?;
        let hi = parse_f64(&rec[1], line, "v_hi")?;
        c.bins.push((lo, hi));
        c.mean_volume.push((lo * hi).sqrt());
        c.values.push(parse_f64(&rec[2], line, "value")?);
        c.counts.push(parse_usize(&rec[3], line, "count")?);
        c.se.push(parse_f64(&rec[4], line, "se")?);
    }
    let meta_path = sidecar(path);
    if meta_path.exists() {
        let meta: ConditionalMeta = read_json(&meta_path)?;
        if meta.mean_volume.len() != c.len() {
            return Err(Error::input(
                "cli_io",
                "conditional sidecar does not match the CSV",
            ));
        }
        c.lag = meta.lag;
        c.mean_volume = meta.mean_volume;
    }
    Ok(c)
}

/// `lag,G,se_proxy` for `G(1..=L)`.
pub fn kernel_to_csv(inv: &KernelInversion) -> String {
    let mut out = String::from("lag,G,se_proxy\n");
    for (i, se) in inv.se_proxy.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            fmt_f64(inv.kernel.value(i + 1)),
            fmt_f64(*se)
        ));
    }
    out
}

pub fn read_kernel(path: &Path) -> Result<(Kernel, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    expect_header(&mut rdr, &["lag", "G", "se_proxy"])?;
    let (mut g, mut se) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let lag = parse_usize(&rec[0], line, "lag")?;
        if lag != g.len() + 1 {
            return Err(Error::Format {
                line,
                message: format!("lag {lag}, expected {}", g.len() + 1),
            });
        }
        g.push(parse_f64(&rec[1], line, "G")?);
        se.push(parse_f64(&rec[2], line, "se_proxy")?);
    }
    Ok((Kernel::tabulated(g)?, se))
}

/// `beta,psi,min_cost,argmin_strategy`, strategy as `slot:q` pairs.
pub fn frontier_to_csv(cells: &[FrontierCell]) -> String {
    let mut out = String::from("beta,psi,min_cost,argmin_strategy\n");
    for c in cells {
        let strat = c
            .argmin
            .trades
            .iter()
            .map(|t| format!("{}:{}", t.slot, fmt_f64(t.q)))
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(c.beta),
            fmt_f64(c.psi),
            fmt_f64(c.min_cost),
            strat
        ));
    }
    out
}

/// Parses a frontier grid. Candidate counts are not stored and read back as 0;
/// strategy horizons are taken as the last slot.
pub fn frontier_from_csv(text: &str) -> Result<Vec<FrontierCell>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    expect_header(&mut rdr, &["beta", "psi", "min_cost", "argmin_strategy"])?;
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut trades = Vec::new();
        for tok in rec[3].split_whitespace() {
            let (slot, q) = tok.split_once(':').ok_or_else(|| Error::Format {
                line,
                message: format!("strategy token {tok:?} is not slot:q"),
            })?;
            trades.push(Trade {
                slot: parse_usize(slot, line, "slot")?,
                q: parse_f64(q, line, "q")?,
            });
        }
        let horizon = trades.last().map(|t| t.slot).unwrap_or(0);
        cells.push(FrontierCell {
            beta: parse_f64(&rec[0], line, "beta")?,
            psi: parse_f64(&rec[1], line, "psi")?,
            min_cost: parse_f64(&rec[2], line, "min_cost")?,
            argmin: Strategy::new(trades, horizon)?,
            candidates: 0,
        });
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 100.00000000000001, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn zero_epsilon_rejected_with_line() {
        let text = "n,epsilon,volume\n0,1,1.0\n1,0,1.0\n2,-1,1.0\n";
        match tape_from_csv(text).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gaps_in_n_rejected() {
        let text = "n,epsilon,volume\n0,1,1.0\n2,-1,1.0\n";
        assert!(matches!(
            tape_from_csv(text),
            Err(Error::Format { line: 3, .. })
        ));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(
            tape_from_csv("a,b,c\n"),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn priced_tape_needs_closing_row() {
        let text = "n,epsilon,volume,price\n0,1,1.0,100\n";
        assert!(tape_from_csv(text).is_err());
        let text = "n,epsilon,volume,price\n0,1,1.0,100\n1,,,100.1\n";
        let t = tape_from_csv(text).unwrap();
        assert_eq!(t.prices().unwrap(), &[100.0, 100.1]);
    }

    #[test]
    fn config_hash_is_stable() {
        let a = config_hash(&vec![1.0, 2.0]).unwrap();
        assert_eq!(a, config_hash(&vec![1.0, 2.0]).unwrap());
        assert_ne!(a, config_hash(&vec![1.0, 2.5]).unwrap());
        assert_eq!(a.len(), 64);
    }
}
