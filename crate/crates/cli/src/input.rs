//! Parsers for command-line values and input files.

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use joycekit::spectral::parse_coefficients;
use joycekit::wallcrossing::Charge;
use joycekit::{CMat, Complex64, Error, PlebanskiFunction, XPoint};

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Loads a Plebanski function on a base of dimension `n`; parse errors keep
/// their line and column.
pub fn load_w(path: &Path, n: usize) -> Result<PlebanskiFunction> {
    let src = read_file(path)?;
    PlebanskiFunction::parse(&src, n).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn complex_list(s: &str) -> Result<Vec<Complex64>> {
    let v = parse_coefficients(s)?;
    if v.is_empty() {
        bail!("expected at least one complex number in {s:?}");
    }
    Ok(v)
}

/// `z_1,..,z_n;theta_1,..,theta_n`.
pub fn point(s: &str) -> Result<XPoint> {
    let (z, theta) = s
        .split_once(';')
        .ok_or_else(|| anyhow!("point {s:?} must be 'z values;theta values'"))?;
    Ok(XPoint::new(complex_list(z)?, complex_list(theta)?)?)
}

/// Rows separated by `;`, entries by `,`.
pub fn complex_matrix(s: &str) -> Result<CMat> {
    let rows: Vec<Vec<Complex64>> = s.split(';').map(complex_list).collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        bail!("matrix {s:?} is not square");
    }
    Ok(CMat::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn int_matrix(s: &str) -> Result<Vec<Vec<i64>>> {
    let rows: Vec<Vec<i64>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|t| t.trim().parse::<i64>().map_err(|_| anyhow!("bad integer {:?} in matrix", t.trim())))
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        bail!("matrix {s:?} is not square");
    }
    Ok(rows)
}

pub fn int_list(s: &str) -> Result<Vec<i64>> {
    s.split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|_| anyhow!("bad integer {:?}", t.trim())))
        .collect()
}

/// `--tol` value: either a bare number for the command's main tolerance or `name=value`.
#[derive(Debug, Clone, PartialEq)]
pub struct TolSpec {
    pub name: Option<String>,
    pub value: f64,
}

impl FromStr for TolSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, v) = match s.split_once('=') {
            Some((n, v)) if !n.trim().is_empty() => (Some(n.trim().to_string()), v),
            Some(_) => return Err(format!("missing tolerance name in {s:?}")),
            None => (None, s),
        };
        let value: f64 = v.trim().parse().map_err(|_| format!("bad tolerance value {v:?}"))?;
        if !value.is_finite() || value < 0.0 {
            return Err(format!("tolerance must be finite and nonnegative, got {value}"));
        }
        Ok(Self { name, value })
    }
}

/// One wall: `(charge, Omega)` pairs on a line of the rays file.
pub type Wall = Vec<(Charge, i64)>;

/// Walls composed left to right; `rhs` is `None` when the product is compared with the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct WallWord {
    pub lhs: Vec<Wall>,
    pub rhs: Option<Vec<Wall>>,
}

/// One wall per line as whitespace-separated `charge:omega` entries such as
/// `1,0:1`; a line holding only `=` separates the two sides. `#` starts a comment.
pub fn parse_walls(text: &str, rank: usize) -> joycekit::Result<WallWord> {
    let mut sides: Vec<Vec<Wall>> = vec![Vec::new()];
    for (ln, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let err = |column: usize, message: String| Error::Parse {
            line: ln + 1,
            column,
            message,
        };
        if body.trim() == "=" {
            if sides.len() == 2 {
                return Err(err(1 + body.find('=').unwrap_or(0), "second '=' separator".into()));
            }
            sides.push(Vec::new());
            continue;
        }
        let mut wall = Wall::new();
        let mut from = 0;
        for tok in body.split_whitespace() {
            let at = from + body[from..].find(tok).unwrap_or(0);
            from = at + tok.len();
            let col = at + 1;
            let (g, o) = tok
                .split_once(':')
                .ok_or_else(|| err(col, format!("expected charge:omega, got {tok:?}")))?;
            let charge = int_list(g).map_err(|e| err(col, e.to_string()))?;
            if charge.len() != rank {
                return Err(err(col, format!("charge {g:?} has {} entries, lattice rank is {rank}", charge.len())));
            }
            let omega: i64 = o
                .trim()
                .parse()
                .map_err(|_| err(col + g.len() + 1, format!("bad invariant {o:?}")))?;
            wall.push((charge, omega));
        }
        sides.last_mut().expect("non-empty").push(wall);
    }
    let rhs = if sides.len() == 2 { sides.pop() } else { None };
    let lhs = sides.pop().expect("non-empty");
    if lhs.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "no walls before '='".into(),
        });
    }
    Ok(WallWord { lhs, rhs })
}
