//! Joint posterior draws and their text serialization.
//!
//! Conditional draws file (tab separated, one record per retained sweep):
//!
//! ```text
//! #candidates  SPY  IWM  ...
//! #targets     Mkt.RF  SMB  ...
//! sweep  gamma  sigma            beta
//! 2000   0101   0.031,0.022      1:0:0.53;3:1:-0.2
//! ```
//!
//! `gamma` is the inclusion bitstring, `sigma` the per-target residual
//! standard deviations and `beta` the nonzero coefficients as
//! `candidate:target:value` triples (`-` when empty).
//!
//! Marginal draws file: `sweep  mu_x  sigma_x_lower`, with the lower triangle
//! of Σ_x in row-major order. All floats use the shortest representation that
//! parses back to the identical value.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factor::MarginalDraw;
use crate::ssvs::{ChainOutput, ConditionalDraw, ModelIndicator};

/// One joint draw of the conditional and marginal parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub gamma: ModelIndicator,
    /// p×q regression coefficients of targets on candidates.
    pub beta: DMatrix<f64>,
    /// Residual variance per target.
    pub psi_resid: DVector<f64>,
    pub mu_x: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
}

impl PosteriorDraw {
    pub fn p(&self) -> usize {
        self.mu_x.len()
    }

    pub fn q(&self) -> usize {
        self.psi_resid.len()
    }

    /// Implied target mean βᵀμ_x.
    pub fn mu_r(&self) -> DVector<f64> {
        self.beta.tr_mul(&self.mu_x)
    }

    /// Implied target covariance βᵀΣ_xβ + diag(ψ).
    pub fn sigma_r(&self) -> DMatrix<f64> {
        let mut s = self.beta.tr_mul(&(&self.sigma_x * &self.beta));
        for i in 0..self.q() {
            s[(i, i)] += self.psi_resid[i];
        }
        crate::linalg::symmetrize(&mut s);
        s
    }
}

/// Pairs conditional and marginal draws by position.
pub fn pair_draws(conditional: &[ConditionalDraw], marginal: &[MarginalDraw]) -> Result<Vec<PosteriorDraw>> {
    if conditional.len() != marginal.len() {
        return Err(Error::Pairing(format!(
            "{} conditional draws vs {} marginal draws",
            conditional.len(),
            marginal.len()
        )));
    }
    conditional
        .iter()
        .zip(marginal)
        .map(|(c, m)| {
            if c.beta.nrows() != m.mu_x.len() {
                return Err(Error::Pairing(format!(
                    "conditional draw has p = {} but marginal draw has p = {}",
                    c.beta.nrows(),
                    m.mu_x.len()
                )));
            }
            Ok(PosteriorDraw {
                gamma: c.gamma.clone(),
                beta: c.beta.clone(),
                psi_resid: c.psi_resid.clone(),
                mu_x: m.mu_x.clone(),
                sigma_x: m.sigma_x.clone(),
            })
        })
        .collect()
}

fn join<I: IntoIterator<Item = f64>>(values: I) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

fn parse_floats(field: &str, line: usize) -> Result<Vec<f64>> {
    field
        .split(',')
        .map(|v| {
            v.parse::<f64>().map_err(|_| Error::Parse {
                row: line,
                column: None,
                message: format!("bad number {v:?}"),
            })
        })
        .collect()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn header_line(tag: &str, labels: &[String]) -> String {
    let mut s = format!("#{tag}");
    for l in labels {
        s.push('\t');
        s.push_str(l);
    }
    s
}

/// Conditional draws as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub candidates: Vec<String>,
    pub targets: Vec<String>,
    pub sweeps: Vec<usize>,
    pub draws: Vec<ConditionalDraw>,
}

impl From<&ChainOutput> for ChainFile {
    fn from(c: &ChainOutput) -> Self {
        ChainFile {
            candidates: c.candidates.clone(),
            targets: c.targets.clone(),
            sweeps: c.sweeps.clone(),
            draws: c.draws.clone(),
        }
    }
}

pub fn write_chain_draws(path: impl AsRef<Path>, chain: &ChainFile) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    writeln!(out, "{}", header_line("candidates", &chain.candidates)).unwrap();
    writeln!(out, "{}", header_line("targets", &chain.targets)).unwrap();
    out.push_str("sweep\tgamma\tsigma\tbeta\n");
    for (sweep, d) in chain.sweeps.iter().zip(&chain.draws) {
        let mut beta = String::new();
        for j in 0..d.beta.nrows() {
            for i in 0..d.beta.ncols() {
                let v = d.beta[(j, i)];
                if v != 0.0 {
                    if !beta.is_empty() {
                        beta.push(';');
                    }
                    write!(beta, "{j}:{i}:{v}").unwrap();
                }
            }
        }
        if beta.is_empty() {
            beta.push('-');
        }
        writeln!(
            out,
            "{sweep}\t{}\t{}\t{beta}",
            d.gamma.to_bitstring(),
            join(d.sigma.iter().copied())
        )
        .unwrap();
    }
    let mut f = create(path)?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

struct Lines {
    candidates: Vec<String>,
    targets: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_records(path: &Path, columns: usize) -> Result<Lines> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Lines {
        candidates: Vec::new(),
        targets: Vec::new(),
        rows: Vec::new(),
    };
    let mut seen_header = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        match fields[0].as_str() {
            "#candidates" => lines.candidates = fields[1..].to_vec(),
            "#targets" => lines.targets = fields[1..].to_vec(),
            "" => {}
            "sweep" if !seen_header => seen_header = true,
            _ => {
                if fields.len() != columns {
                    return Err(Error::Parse {
                        row: i + 1,
                        column: None,
                        message: format!("expected {columns} fields, got {}", fields.len()),
                    });
                }
                lines.rows.push((i + 1, fields));
            }
        }
    }
    Ok(lines)
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        row: line,
        column: None,
        message: format!("bad integer {s:?}"),
    })
}

pub fn read_chain_draws(path: impl AsRef<Path>) -> Result<ChainFile> {
    let path = path.as_ref();
    let lines = read_records(path, 4)?;
    let (p, q) = (lines.candidates.len(), lines.targets.len());
    let mut sweeps = Vec::new();
    let mut draws = Vec::new();
    for (line, f) in lines.rows {
        sweeps.push(parse_usize(&f[0], line)?);
        let gamma = ModelIndicator::from_bitstring(&f[1])?;
        let sigma = DVector::from_vec(parse_floats(&f[2], line)?);
        if gamma.p() != p || sigma.len() != q {
            return Err(Error::Parse {
                row: line,
                column: None,
                message: "record does not match the header dimensions".into(),
            });
        }
        let mut beta = DMatrix::zeros(p, q);
        if f[3] != "-" {
            for entry in f[3].split(';') {
                let parts: Vec<&str> = entry.split(':').collect();
                let bad = || Error::Parse {
                    row: line,
                    column: Some("beta".into()),
                    message: format!("bad entry {entry:?}"),
                };
                if parts.len() != 3 {
                    return Err(bad());
                }
                let j: usize = parts[0].parse().map_err(|_| bad())?;
                let i: usize = parts[1].parse().map_err(|_| bad())?;
                let v: f64 = parts[2].parse().map_err(|_| bad())?;
                if j >= p || i >= q {
                    return Err(bad());
                }
                beta[(j, i)] = v;
            }
        }
        draws.push(ConditionalDraw::from_sigma(gamma, beta, sigma));
    }
    Ok(ChainFile {
        candidates: lines.candidates,
        targets: lines.targets,
        sweeps,
        draws,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFile {
    pub candidates: Vec<String>,
    pub sweeps: Vec<usize>,
    pub draws: Vec<MarginalDraw>,
}

pub fn write_marginal_draws(path: impl AsRef<Path>, file: &MarginalFile) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    writeln!(out, "{}", header_line("candidates", &file.candidates)).unwrap();
    out.push_str("sweep\tmu_x\tsigma_x_lower\n");
    for (sweep, d) in file.sweeps.iter().zip(&file.draws) {
        let p = d.mu_x.len();
        let lower = (0..p).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|(i, j)| d.sigma_x[(i, j)]);
        writeln!(out, "{sweep}\t{}\t{}", join(d.mu_x.iter().copied()), join(lower)).unwrap();
    }
    let mut f = create(path)?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_marginal_draws(path: impl AsRef<Path>) -> Result<MarginalFile> {
    let path = path.as_ref();
    let lines = read_records(path, 3)?;
    let p = lines.candidates.len();
    let mut sweeps = Vec::new();
    let mut draws = Vec::new();
    for (line, f) in lines.rows {
        sweeps.push(parse_usize(&f[0], line)?);
        let mu = parse_floats(&f[1], line)?;
        let lower = parse_floats(&f[2], line)?;
        if mu.len() != p || lower.len() != p * (p + 1) / 2 {
            return Err(Error::Parse {
                row: line,
                column: None,
                message: "record does not match the header dimensions".into(),
            });
        }
        let mut sigma = DMatrix::zeros(p, p);
        let mut it = lower.into_iter();
        for i in 0..p {
            for j in 0..=i {
                let v = it.next().unwrap();
                sigma[(i, j)] = v;
                sigma[(j, i)] = v;
            }
        }
        draws.push(MarginalDraw {
            mu_x: DVector::from_vec(mu),
            sigma_x: sigma,
        });
    }
    Ok(MarginalFile {
        candidates: lines.candidates,
        sweeps,
        draws,
    })
}

/// Two-column CSV `ticker,probability`.
pub fn write_inclusion_csv(path: impl AsRef<Path>, tickers: &[String], probs: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("ticker,probability\n");
    for (t, p) in tickers.iter().zip(probs) {
        writeln!(out, "{t},{p}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_inclusion_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::io(path, std::io::Error::other(e)))?;
            let p = rec[1].parse::<f64>().map_err(|_| Error::Parse {
                row: i + 2,
                column: Some("probability".into()),
                message: format!("bad number {:?}", &rec[1]),
            })?;
            Ok((rec[0].to_string(), p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond(p: usize, q: usize, seed: f64) -> ConditionalDraw {
        let gamma = ModelIndicator::from_included(p, &[0, p - 1]);
        let beta = DMatrix::from_fn(p, q, |j, i| {
            if gamma.get(j) {
                (seed + j as f64 * 0.37 + i as f64 * 0.11).sin()
            } else {
                0.0
            }
        });
        ConditionalDraw::from_sigma(gamma, beta, DVector::from_fn(q, |i, _| 0.01 + seed * 0.001 * i as f64))
    }

    fn marg(p: usize, seed: f64) -> MarginalDraw {
        let a = DMatrix::from_fn(p, p, |i, j| ((i * p + j) as f64 + seed).cos() * 0.01);
        MarginalDraw {
            mu_x: DVector::from_fn(p, |j, _| 0.001 * (j as f64 + seed)),
            sigma_x: &a * a.transpose() + DMatrix::identity(p, p) * 1e-4,
        }
    }

    #[test]
    fn chain_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ssvs.tsv");
        let file = ChainFile {
            candidates: vec!["A".into(), "B".into(), "C".into()],
            targets: vec!["R1".into(), "R2".into()],
            sweeps: vec![10, 15],
            draws: vec![cond(3, 2, 1.0), cond(3, 2, 2.5)],
        };
        write_chain_draws(&path, &file).unwrap();
        let back = read_chain_draws(&path).unwrap();
        assert_eq!(back.candidates, file.candidates);
        assert_eq!(back.sweeps, file.sweeps);
        for (a, b) in back.draws.iter().zip(&file.draws) {
            assert_eq!(a.beta, b.beta);
            assert_eq!(a.sigma, b.sigma);
            assert_eq!(a.gamma, b.gamma);
        }
    }

    #[test]
    fn marginal_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("factor.tsv");
        let file = MarginalFile {
            candidates: vec!["A".into(), "B".into(), "C".into()],
            sweeps: vec![1, 2],
            draws: vec![marg(3, 0.3), marg(3, 1.7)],
        };
        write_marginal_draws(&path, &file).unwrap();
        let back = read_marginal_draws(&path).unwrap();
        assert_eq!(back.draws[0].mu_x, file.draws[0].mu_x);
        // lower triangle rebuilds a symmetric matrix
        for (a, b) in back.draws.iter().zip(&file.draws) {
            for i in 0..3 {
                for j in 0..=i {
                    assert_eq!(a.sigma_x[(i, j)], b.sigma_x[(i, j)]);
                    assert_eq!(a.sigma_x[(j, i)], b.sigma_x[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn pairing_checks_counts() {
        let c = vec![cond(3, 2, 1.0), cond(3, 2, 2.0)];
        let m = vec![marg(3, 1.0)];
        assert!(matches!(pair_draws(&c, &m), Err(Error::Pairing(_))));
        let m = vec![marg(3, 1.0), marg(3, 2.0)];
        let paired = pair_draws(&c, &m).unwrap();
        assert_eq!(paired.len(), 2);
        assert_eq!(paired[1].mu_r(), c[1].beta.tr_mul(&m[1].mu_x));
    }

    #[test]
    fn inclusion_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inc.csv");
        let t = vec!["SPY".to_string(), "IWM".to_string()];
        write_inclusion_csv(&path, &t, &[1.0, 0.125]).unwrap();
        let back = read_inclusion_csv(&path).unwrap();
        assert_eq!(back, vec![("SPY".to_string(), 1.0), ("IWM".to_string(), 0.125)]);
    }
}
