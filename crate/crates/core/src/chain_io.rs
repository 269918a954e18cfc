//! Chain persistence: one self-describing text file per chain.
//!
//! Layout: a magic line, a JSON header line (fit context, chain seed,
//! acceptance diagnostics, column names), then one line per stored draw
//! with comma-separated float columns in a fixed order followed by the
//! elite indicators packed as hex (LSB = first season). Floats are
//! written in Rust's shortest round-trip form, so a reloaded chain is
//! bit-identical and identical runs produce byte-identical files.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::sampler::{AcceptStat, ChainStore, Fit, FitContext};

const MAGIC: &str = "#longball-chain v1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    context: FitContext,
    chain_index: usize,
    seed: u64,
    n_draws: usize,
    columns: Vec<String>,
    accept: Vec<AcceptStat>,
    boundary_hits: u64,
    fallback_warnings: u64,
}

fn column_names(ctx: &FitContext) -> Vec<String> {
    let mut cols = Vec::new();
    let g = ctx.group_labels.len();
    for k in 0..g {
        cols.push(format!("alpha0.{}", ctx.group_labels[k]));
    }
    if ctx.variant.has_elite() {
        for k in 0..g {
            cols.push(format!("alpha1.{}", ctx.group_labels[k]));
        }
    }
    for p in &ctx.parks {
        cols.push(format!("beta.{p}"));
    }
    for k in 0..g {
        for l in 0..ctx.hyper.basis().n_basis() {
            cols.push(format!("gamma.{}.{l}", ctx.group_labels[k]));
        }
    }
    if ctx.variant.has_elite() && !ctx.variant.player_transitions() {
        for k in 0..g {
            for cell in ["00", "01", "10", "11"] {
                cols.push(format!("nu.{}.{cell}", ctx.group_labels[k]));
            }
        }
    }
    if ctx.variant.player_transitions() {
        for p in &ctx.players {
            for cell in ["00", "01", "10", "11"] {
                cols.push(format!("pnu.{}.{cell}", p.id));
            }
        }
        for k in 0..g {
            for cell in ["00", "01", "10", "11"] {
                cols.push(format!("omega.{}.{cell}", ctx.group_labels[k]));
            }
        }
    }
    cols
}

fn state_values(ctx: &FitContext, s: &ModelState, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(&s.alpha0);
    if ctx.variant.has_elite() {
        out.extend_from_slice(&s.alpha1);
    }
    out.extend_from_slice(&s.beta);
    for g in &s.gamma {
        out.extend_from_slice(g);
    }
    if ctx.variant.has_elite() && !ctx.variant.player_transitions() {
        for nu in &s.nu {
            out.extend_from_slice(nu);
        }
    }
    if ctx.variant.player_transitions() {
        for nu in s.player_nu.as_ref().expect("player rows present") {
            out.extend_from_slice(nu);
        }
        for om in s.omega.as_ref().expect("omega present") {
            out.extend_from_slice(om);
        }
    }
}

fn elite_hex(elite: &[bool]) -> String {
    let mut out = String::with_capacity(elite.len() / 4 + 2);
    for chunk in elite.chunks(8) {
        let mut byte = 0u8;
        for (i, &e) in chunk.iter().enumerate() {
            if e {
                byte |= 1 << i;
            }
        }
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

fn elite_from_hex(hex: &str, n: usize) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(n);
    let bytes = hex.as_bytes();
    if bytes.len() != n.div_ceil(8) * 2 {
        return Err(Error::Data(format!(
            "elite field length {} does not match {} seasons",
            bytes.len(),
            n
        )));
    }
    for i in 0..n {
        let byte_idx = i / 8;
        let hexpair = std::str::from_utf8(&bytes[byte_idx * 2..byte_idx * 2 + 2])
            .map_err(|_| Error::Data("bad elite hex".into()))?;
        let byte = u8::from_str_radix(hexpair, 16)
            .map_err(|_| Error::Data(format!("bad elite hex `{hexpair}`")))?;
        out.push(byte & (1 << (i % 8)) != 0);
    }
    Ok(out)
}

/// Write one chain to `path`.
pub fn write_chain(ctx: &FitContext, chain: &ChainStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let header = Header {
        context: ctx.clone(),
        chain_index: chain.chain_index,
        seed: chain.seed,
        n_draws: chain.draws.len(),
        columns: column_names(ctx),
        accept: chain.accept.clone(),
        boundary_hits: chain.boundary_hits,
        fallback_warnings: chain.fallback_warnings,
    };
    writeln!(out, "{MAGIC}").map_err(|e| Error::io(path, e))?;
    let header_json =
        serde_json::to_string(&header).map_err(|e| Error::Data(format!("header encode: {e}")))?;
    writeln!(out, "{header_json}").map_err(|e| Error::io(path, e))?;

    let mut values = Vec::new();
    let mut line = String::new();
    for draw in &chain.draws {
        state_values(ctx, draw, &mut values);
        line.clear();
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v}"));
        }
        if ctx.variant.has_elite() {
            line.push(';');
            line.push_str(&elite_hex(&draw.elite));
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read one chain file back into memory.
pub fn read_chain(path: impl AsRef<Path>) -> Result<(FitContext, ChainStore)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let magic = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty chain file", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    if magic.trim() != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a chain file (bad magic line)",
            path.display()
        )));
    }
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: missing header", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| Error::Data(format!("{}: header decode: {e}", path.display())))?;
    let ctx = header.context;

    let g = ctx.group_labels.len();
    let n_basis = ctx.hyper.basis().n_basis();
    let n_parks = ctx.parks.len();
    let n_players = ctx.players.len();

    let mut draws = Vec::with_capacity(header.n_draws);
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (nums, elite_part) = match line.split_once(';') {
            Some((a, b)) => (a, Some(b)),
            None => (line.as_str(), None),
        };
        let mut vals = Vec::with_capacity(header.columns.len());
        for tok in nums.split(',') {
            let v: f64 = tok.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: draw line {}: bad float `{tok}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            vals.push(v);
        }
        if vals.len() != header.columns.len() {
            return Err(Error::Data(format!(
                "{}: draw line {}: {} columns, expected {}",
                path.display(),
                lineno + 1,
                vals.len(),
                header.columns.len()
            )));
        }
        let mut it = vals.into_iter();
        let mut take = |n: usize| -> Vec<f64> { (&mut it).take(n).collect() };
        let alpha0 = take(g);
        let alpha1 = if ctx.variant.has_elite() { take(g) } else { alpha0.clone() };
        let beta = take(n_parks);
        let gamma: Vec<Vec<f64>> = (0..g).map(|_| take(n_basis)).collect();
        let nu: Vec<[f64; 4]> = if ctx.variant.has_elite() && !ctx.variant.player_transitions() {
            (0..g)
                .map(|_| {
                    let v = take(4);
                    [v[0], v[1], v[2], v[3]]
                })
                .collect()
        } else {
            Vec::new()
        };
        let (player_nu, omega) = if ctx.variant.player_transitions() {
            let pn: Vec<[f64; 4]> = (0..n_players)
                .map(|_| {
                    let v = take(4);
                    [v[0], v[1], v[2], v[3]]
                })
                .collect();
            let om: Vec<[f64; 4]> = (0..g)
                .map(|_| {
                    let v = take(4);
                    [v[0], v[1], v[2], v[3]]
                })
                .collect();
            (Some(pn), Some(om))
        } else {
            (None, None)
        };
        let elite = match (ctx.variant.has_elite(), elite_part) {
            (true, Some(hex)) => elite_from_hex(hex, ctx.n_seasons)?,
            (true, None) => {
                return Err(Error::Data(format!(
                    "{}: draw line {}: missing elite field",
                    path.display(),
                    lineno + 1
                )))
            }
            (false, _) => vec![false; ctx.n_seasons],
        };
        draws.push(ModelState {
            alpha0,
            alpha1,
            beta,
            gamma,
            nu,
            elite,
            player_nu,
            omega,
        });
    }
    if draws.len() != header.n_draws {
        return Err(Error::Data(format!(
            "{}: {} draws on disk, header says {}",
            path.display(),
            draws.len(),
            header.n_draws
        )));
    }
    Ok((
        ctx,
        ChainStore {
            chain_index: header.chain_index,
            seed: header.seed,
            draws,
            accept: header.accept,
            boundary_hits: header.boundary_hits,
            fallback_warnings: header.fallback_warnings,
        },
    ))
}

pub fn chain_file_name(index: usize) -> String {
    format!("chain_{index}.txt")
}

/// Write every chain of a fit into `dir`.
pub fn write_fit(fit: &Fit, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for chain in &fit.chains {
        let path = dir.join(chain_file_name(chain.chain_index));
        write_chain(&fit.context, chain, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Load a fit back from chain files, verifying the contexts agree.
pub fn read_fit(paths: &[std::path::PathBuf]) -> Result<Fit> {
    if paths.is_empty() {
        return Err(Error::Argument("no chain files given".into()));
    }
    let mut chains = Vec::new();
    let mut context: Option<FitContext> = None;
    for p in paths {
        let (ctx, chain) = read_chain(p)?;
        match &context {
            None => context = Some(ctx),
            Some(c) => {
                if c.data_fingerprint != ctx.data_fingerprint || c.variant != ctx.variant {
                    return Err(Error::Data(format!(
                        "{}: chain context disagrees with the first chain file",
                        p.display()
                    )));
                }
            }
        }
        chains.push(chain);
    }
    Ok(Fit {
        context: context.unwrap(),
        chains,
    })
}
