//! Coefficient expressions in config files.
//!
//! A scalar expression is a number, a preset name (`"sin"`, `"cos"`,
//! `"gauss"`, `"id"`, `"square"`, `"zero"`, `"one"`, `"const:c"`), a scaled
//! preset `offset + scale * preset(frequency * (z - center))`, or a
//! tabulated CSV `(z, value)` interpolated linearly and clamped at the ends.
//!
//! A field combines scalar expressions into a sum of products over the
//! variables `t`, `x` and `v`. A bare expression is read in the field's
//! primary variable.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fbspde::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(t, x, v) -> value`.
pub type Field3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expr {
    Number(f64),
    Preset(String),
    Scaled(Scaled),
    Table(Table),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaled {
    pub preset: String,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "one")]
    pub frequency: f64,
    #[serde(default)]
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    /// Two columns with a header row; relative paths resolve against the
    /// config file's directory.
    pub csv: PathBuf,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Number(c)
    }
}

impl From<&str> for Expr {
    fn from(s: &str) -> Self {
        Expr::Preset(s.to_string())
    }
}

impl Expr {
    pub fn scaled(preset: &str, scale: f64, offset: f64, frequency: f64, center: f64) -> Self {
        Expr::Scaled(Scaled {
            preset: preset.to_string(),
            scale,
            offset,
            frequency,
            center,
        })
    }

    /// The constant value, when the expression is one.
    pub fn constant(&self) -> Option<f64> {
        match self {
            Expr::Number(c) => Some(*c),
            Expr::Preset(name) => match name.as_str() {
                "zero" => Some(0.0),
                "one" => Some(1.0),
                _ => name.strip_prefix("const:").and_then(|c| c.trim().parse().ok()),
            },
            _ => None,
        }
    }

    pub fn compile(&self, path: &str, base: &Path) -> Result<Scalar> {
        match self {
            Expr::Number(c) => {
                let c = *c;
                finite(path, c)?;
                Ok(Arc::new(move |_| c))
            }
            Expr::Preset(name) => preset(name, path),
            Expr::Scaled(s) => {
                for v in [s.scale, s.offset, s.frequency, s.center] {
                    finite(path, v)?;
                }
                let p = preset(&s.preset, &format!("{path}.preset"))?;
                let Scaled {
                    scale,
                    offset,
                    frequency,
                    center,
                    ..
                } = *s;
                Ok(Arc::new(move |z| offset + scale * p(frequency * (z - center))))
            }
            Expr::Table(t) => {
                let (zs, vs) = read_table(&base.join(&t.csv), &format!("{path}.csv"))?;
                let (scale, offset) = (t.scale, t.offset);
                Ok(Arc::new(move |z| offset + scale * interpolate(&zs, &vs, z)))
            }
        }
    }
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("{v} is not finite")))
    }
}

fn preset(name: &str, path: &str) -> Result<Scalar> {
    let f: Scalar = match name {
        "zero" => Arc::new(|_| 0.0),
        "one" => Arc::new(|_| 1.0),
        "id" => Arc::new(|z| z),
        "square" => Arc::new(|z| z * z),
        "sin" => Arc::new(f64::sin),
        "cos" => Arc::new(f64::cos),
        "gauss" => Arc::new(|z| (-z * z).exp()),
        _ => {
            let Some(c) = name.strip_prefix("const:") else {
                return Err(Error::config(
                    path,
                    format!("unknown preset `{name}`; expected zero, one, id, square, sin, cos, gauss or const:<number>"),
                ));
            };
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|e| Error::config(path, format!("bad constant `{c}`: {e}")))?;
            finite(path, c)?;
            Arc::new(move |_| c)
        }
    };
    Ok(f)
}

fn read_table(file: &Path, path: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(file).map_err(|e| Error::config(path, format!("{}: {e}", file.display())))?;
    let mut zs = Vec::new();
    let mut vs = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::config(path, e.to_string()))?;
        let cell = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::config(format!("{path}[{row}]"), format!("column {i} is not a finite number")))
        };
        zs.push(cell(0)?);
        vs.push(cell(1)?);
    }
    if zs.len() < 2 {
        return Err(Error::config(path, "a table needs at least two rows"));
    }
    if zs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(path, "the first column must increase strictly"));
    }
    Ok((zs, vs))
}

fn interpolate(zs: &[f64], vs: &[f64], z: f64) -> f64 {
    let n = zs.len();
    if z <= zs[0] {
        return vs[0];
    }
    if z >= zs[n - 1] {
        return vs[n - 1];
    }
    let i = zs.partition_point(|&s| s <= z) - 1;
    let w = (z - zs[i]) / (zs[i + 1] - zs[i]);
    vs[i] + w * (vs[i + 1] - vs[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    V,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::V => "v",
        }
    }
}

/// Product of per-variable factors; a missing factor is 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Expr(Expr),
    Term(Term),
    Sum(Vec<Term>),
}

impl From<f64> for Field {
    fn from(c: f64) -> Self {
        Field::Expr(Expr::Number(c))
    }
}

impl From<Expr> for Field {
    fn from(e: Expr) -> Self {
        Field::Expr(e)
    }
}

impl Field {
    fn terms(&self, primary: Var) -> Vec<Term> {
        match self {
            Field::Expr(e) => {
                let mut t = Term::default();
                match primary {
                    Var::T => t.t = Some(e.clone()),
                    Var::X => t.x = Some(e.clone()),
                    Var::V => t.v = Some(e.clone()),
                }
                vec![t]
            }
            Field::Term(t) => vec![t.clone()],
            Field::Sum(ts) => ts.clone(),
        }
    }

    /// Whether any term has a non-constant factor in `var`.
    pub fn depends_on(&self, var: Var, primary: Var) -> bool {
        self.terms(primary).iter().any(|t| {
            let e = match var {
                Var::T => &t.t,
                Var::X => &t.x,
                Var::V => &t.v,
            };
            e.as_ref().is_some_and(|e| e.constant().is_none())
        })
    }

    /// The constant value, when every term is constant.
    pub fn constant(&self, primary: Var) -> Option<f64> {
        let mut total = 0.0;
        for t in self.terms(primary) {
            let mut prod = 1.0;
            for e in [&t.t, &t.x, &t.v].into_iter().flatten() {
                prod *= e.constant()?;
            }
            total += prod;
        }
        Some(total)
    }

    /// Compiles to `(t, x, v) -> value`, rejecting variables outside
    /// `allowed`.
    pub fn compile(&self, path: &str, primary: Var, allowed: &[Var], base: &Path) -> Result<Field3> {
        let terms = self.terms(primary);
        if terms.is_empty() {
            return Err(Error::config(path, "a sum needs at least one term"));
        }
        let mut compiled = Vec::with_capacity(terms.len());
        for (i, term) in terms.iter().enumerate() {
            let at = if matches!(self, Field::Sum(_)) {
                format!("{path}[{i}]")
            } else {
                path.to_string()
            };
            let factor = |var: Var, e: &Option<Expr>| -> Result<Option<Scalar>> {
                let Some(e) = e else { return Ok(None) };
                if !allowed.contains(&var) {
                    return Err(Error::config(
                        format!("{at}.{}", var.name()),
                        format!("this coefficient cannot depend on {}", var.name()),
                    ));
                }
                let sub = if matches!(self, Field::Expr(_)) {
                    at.clone()
                } else {
                    format!("{at}.{}", var.name())
                };
                e.compile(&sub, base).map(Some)
            };
            compiled.push((factor(Var::T, &term.t)?, factor(Var::X, &term.x)?, factor(Var::V, &term.v)?));
        }
        Ok(Arc::new(move |t, x, v| {
            compiled
                .iter()
                .map(|(ft, fx, fv)| {
                    ft.as_ref().map_or(1.0, |f| f(t)) * fx.as_ref().map_or(1.0, |f| f(x)) * fv.as_ref().map_or(1.0, |f| f(v))
                })
                .sum()
        }))
    }

    pub fn time_fn(&self, path: &str, base: &Path) -> Result<Scalar> {
        let f = self.compile(path, Var::T, &[Var::T], base)?;
        Ok(Arc::new(move |t| f(t, 0.0, 0.0)))
    }

    pub fn space_time_fn(&self, path: &str, base: &Path) -> Result<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>> {
        let f = self.compile(path, Var::X, &[Var::T, Var::X], base)?;
        Ok(Arc::new(move |t, x| f(t, x, 0.0)))
    }

    pub fn control_fn(&self, path: &str, base: &Path) -> Result<Field3> {
        self.compile(path, Var::X, &[Var::T, Var::X, Var::V], base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Field {
        serde_json::from_str(s).unwrap()
    }

    impl Field {
        fn space_fn(&self, path: &str, base: &Path) -> Result<Scalar> {
            let f = self.compile(path, Var::X, &[Var::X], base)?;
            Ok(Arc::new(move |x| f(0.0, x, 0.0)))
        }
    }

    #[test]
    fn presets_and_scaling() {
        let here = Path::new(".");
        let f = parse(r#""const:2.5""#).space_fn("f", here).unwrap();
        assert_eq!(f(3.0), 2.5);
        let f = parse(r#"{"preset":"gauss","scale":-1,"offset":1,"center":2}"#).space_fn("f", here).unwrap();
        assert!((f(2.0) - 0.0).abs() < 1e-15);
        assert!((f(3.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(parse("0.5").constant(Var::X), Some(0.5));
    }

    #[test]
    fn products_and_sums() {
        let here = Path::new(".");
        let f = parse(r#"[{"v":{"preset":"square","scale":0.1}},{"x":"sin","t":"id"}]"#)
            .control_fn("k", here)
            .unwrap();
        assert!((f(2.0, 1.0, 3.0) - (0.9 + 2.0 * 1.0f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_key_paths() {
        let here = Path::new(".");
        let e = parse(r#""tanh""#).space_fn("solve_pde.g", here).err().unwrap();
        assert!(e.to_string().contains("solve_pde.g"), "{e}");
        let e = parse(r#"[{"x":"sin"},{"v":"id"}]"#).space_time_fn("b", here).err().unwrap();
        assert!(e.to_string().contains("b[1].v"), "{e}");
        assert!(serde_json::from_str::<Field>(r#"{"y":"sin"}"#).is_err());
    }

    #[test]
    fn tables_interpolate_and_clamp() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "t,a\n0,1\n1,3\n").unwrap();
        let f = parse(r#"{"csv":"a.csv"}"#).time_fn("a", dir.path()).unwrap();
        assert_eq!(f(0.25), 1.5);
        assert_eq!(f(-1.0), 1.0);
        assert_eq!(f(2.0), 3.0);
        std::fs::write(dir.path().join("bad.csv"), "t,a\n1,1\n0,3\n").unwrap();
        assert!(parse(r#"{"csv":"bad.csv"}"#).time_fn("a", dir.path()).is_err());
    }
}
