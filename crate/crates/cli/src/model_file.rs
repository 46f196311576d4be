//! TOML model files.
//!
//! ```toml
//! name = "sphere"
//!
//! [chart]
//! dim = 2
//! box = [[0.4, 2.75], [-0.5, 6.9]]
//!
//! [norm]
//! kind = "riemannian"
//! metric = [["1", "0"], ["0", "sin(x1)^2"]]
//!
//! [measure]
//! psi = "k*x1"
//!
//! [params]
//! k = 0.5
//! ```
//!
//! Norm kinds: `riemannian` (metric), `minkowski` and `raw` (`norm` or
//! `norm_squared`), `randers` (alpha, beta) and `product` (outer, flat_dim,
//! `[[norm.factors]]` each with its own `dim`, `kind` and fields). A product
//! chart box lists the flat coordinates first, then each factor's.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use finslerlab::expr::{parse_with, Expression, ParseContext, Symbol};
use finslerlab::norms::{make_product_norm, slot_names, ChartBox, FinslerModel};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: Option<String>,
    chart: RawChart,
    norm: toml::Table,
    measure: Option<RawMeasure>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChart {
    dim: usize,
    #[serde(rename = "box")]
    intervals: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    psi: Option<String>,
    density: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawNorm {
    Riemannian {
        metric: Vec<Vec<String>>,
    },
    Minkowski {
        norm: Option<String>,
        norm_squared: Option<String>,
    },
    Raw {
        norm: Option<String>,
        norm_squared: Option<String>,
    },
    Randers {
        alpha: Vec<Vec<String>>,
        beta: Vec<String>,
    },
    Product {
        outer: String,
        flat_dim: usize,
        factors: Vec<toml::Table>,
    },
}

/// A model together with the SHA-256 of the file it came from.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: FinslerModel,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<LoadedModel> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read model file {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let model = parse_model(text, &fallback).with_context(|| format!("in {}", path.display()))?;
    Ok(LoadedModel {
        model,
        hash: sha256_hex(&bytes),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn parse_model(text: &str, fallback_name: &str) -> Result<FinslerModel> {
    let raw: RawModel = toml::from_str(text)?;
    let dim = raw.chart.dim;
    if dim == 0 {
        bail!("chart.dim must be positive");
    }
    if raw.chart.intervals.len() != dim {
        bail!(
            "chart.box has {} intervals, expected dim = {dim}",
            raw.chart.intervals.len()
        );
    }
    let chart = ChartBox::new(raw.chart.intervals.iter().map(|[a, b]| (*a, *b)).collect())?;
    let params = Params::new(raw.params)?;
    let norm = RawNorm::deserialize(toml::Value::Table(raw.norm)).context("in [norm]")?;
    let mut model = build(norm, chart, &params, "norm")?;
    if let Some(measure) = raw.measure {
        model = match (measure.psi, measure.density) {
            (Some(psi), None) => model.with_weight(params.parse(&psi, dim, &[], "measure.psi")?)?,
            (None, Some(rho)) => model.with_density(params.parse(&rho, dim, &[], "measure.density")?)?,
            _ => bail!("[measure] needs exactly one of `psi` or `density`"),
        };
    }
    Ok(model.with_name(raw.name.unwrap_or_else(|| fallback_name.to_string())))
}

struct Params(BTreeMap<String, f64>);

impl Params {
    fn new(values: BTreeMap<String, f64>) -> Result<Self> {
        for (name, value) in &values {
            let reserved = name.len() > 1
                && (name.starts_with('x') || name.starts_with('v'))
                && name[1..].chars().all(|c| c.is_ascii_digit());
            if reserved {
                bail!("parameter `{name}` shadows a coordinate symbol");
            }
            if !value.is_finite() {
                bail!("parameter `{name}` = {value} is not finite");
            }
        }
        Ok(Self(values))
    }

    /// Parse with the parameters visible, then replace them by their values.
    fn parse(&self, text: &str, dim: usize, extra: &[String], field: &str) -> Result<Expression> {
        let ctx = ParseContext::new(dim)
            .with_names(self.0.keys().cloned())
            .with_names(extra.iter().cloned());
        let e = parse_with(text, &ctx).map_err(|d| anyhow!("{field}: {d}"))?;
        Ok(e.substitute(&|s| match s {
            Symbol::Named(name) => self.0.get(name.as_ref()).map(|c| Expression::constant(*c)),
            _ => None,
        }))
    }

    fn matrix(&self, rows: &[Vec<String>], dim: usize, field: &str) -> Result<Vec<Vec<Expression>>> {
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            bail!("{field} must be a {dim}x{dim} array");
        }
        rows.iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, t)| self.parse(t, dim, &[], &format!("{field}[{i}][{j}]")))
                    .collect()
            })
            .collect()
    }

    fn one_of(
        &self,
        norm: Option<String>,
        norm_squared: Option<String>,
        dim: usize,
        field: &str,
    ) -> Result<(Expression, bool)> {
        match (norm, norm_squared) {
            (Some(t), None) => Ok((self.parse(&t, dim, &[], &format!("{field}.norm"))?, false)),
            (None, Some(t)) => Ok((self.parse(&t, dim, &[], &format!("{field}.norm_squared"))?, true)),
            _ => bail!("{field} needs exactly one of `norm` or `norm_squared`"),
        }
    }
}

fn build(norm: RawNorm, chart: ChartBox, params: &Params, field: &str) -> Result<FinslerModel> {
    let dim = chart.dim();
    let model = match norm {
        RawNorm::Riemannian { metric } => {
            FinslerModel::riemannian(params.matrix(&metric, dim, &format!("{field}.metric"))?, chart)?
        }
        RawNorm::Minkowski { norm, norm_squared } => match params.one_of(norm, norm_squared, dim, field)? {
            (e, false) => FinslerModel::minkowski(e, chart)?,
            (e, true) => FinslerModel::minkowski_squared(e, chart)?,
        },
        RawNorm::Raw { norm, norm_squared } => match params.one_of(norm, norm_squared, dim, field)? {
            (e, false) => FinslerModel::raw(e, chart)?,
            (e, true) => FinslerModel::raw_squared(e, chart)?,
        },
        RawNorm::Randers { alpha, beta } => {
            let alpha = params.matrix(&alpha, dim, &format!("{field}.alpha"))?;
            if beta.len() != dim {
                bail!("{field}.beta must have {dim} entries");
            }
            let beta = beta
                .iter()
                .enumerate()
                .map(|(i, t)| params.parse(t, dim, &[], &format!("{field}.beta[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            FinslerModel::randers(alpha, beta, chart)?
        }
        RawNorm::Product {
            outer,
            flat_dim,
            factors,
        } => {
            let outer = params.parse(
                &outer,
                0,
                &slot_names(flat_dim, factors.len()),
                &format!("{field}.outer"),
            )?;
            let mut offset = flat_dim;
            let mut models = Vec::with_capacity(factors.len());
            for (j, mut table) in factors.into_iter().enumerate() {
                let here = format!("{field}.factors[{j}]");
                let d = table
                    .remove("dim")
                    .and_then(|v| v.as_integer())
                    .filter(|d| *d > 0)
                    .ok_or_else(|| anyhow!("{here} needs a positive integer `dim`"))? as usize;
                if offset + d > dim {
                    bail!("{here} does not fit in the {dim}-dimensional chart");
                }
                let raw = RawNorm::deserialize(toml::Value::Table(table)).with_context(|| format!("in {here}"))?;
                models.push(build(raw, chart.slice(offset, d), params, &here)?);
                offset += d;
            }
            if offset != dim {
                bail!("flat_dim plus factor dims is {offset}, chart.dim is {dim}");
            }
            make_product_norm(outer, flat_dim, chart.slice(0, flat_dim), models)?
        }
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use finslerlab::gallery;

    const SPHERE: &str = r#"
name = "sphere"
[chart]
dim = 2
box = [[0.4, 2.75], [-0.5, 6.9]]
[norm]
kind = "riemannian"
metric = [["1", "0"], ["0", "sin(x1)^2"]]
"#;

    #[test]
    fn sphere_matches_gallery() {
        let m = parse_model(SPHERE, "x").unwrap();
        let g = gallery::sphere();
        assert_eq!(m.name(), "sphere");
        assert_eq!(m.chart(), g.chart());
        for v in [[1.0, 0.3], [-0.2, 2.0]] {
            let (a, b) = (m.norm_at(&[1.1, 0.2], &v).unwrap(), g.norm_at(&[1.1, 0.2], &v).unwrap());
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn params_are_substituted() {
        let text = r#"
[chart]
dim = 2
box = [[-1, 1], [-1, 1]]
[norm]
kind = "randers"
alpha = [["1", "0"], ["0", "1"]]
beta = ["0", "k*x1"]
[params]
k = 0.1
"#;
        let m = parse_model(text, "fallback").unwrap();
        assert_eq!(m.name(), "fallback");
        let g = gallery::randers();
        let (a, b) = (
            m.norm_at(&[0.5, 0.1], &[0.3, 1.0]).unwrap(),
            g.norm_at(&[0.5, 0.1], &[0.3, 1.0]).unwrap(),
        );
        assert!((a - b).abs() < 1e-15);
        assert!(m
            .norm_expression()
            .symbols()
            .iter()
            .all(|s| !matches!(s, Symbol::Named(_))));
    }

    #[test]
    fn product_with_inline_factor() {
        let text = r#"
[chart]
dim = 3
box = [[-2, 2], [0.4, 2.75], [-0.5, 6.9]]
[norm]
kind = "product"
flat_dim = 1
outer = "sqrt(a1^2 + s1^2 + (a1^4 + s1^4)^(1/2))"
[[norm.factors]]
dim = 2
kind = "riemannian"
metric = [["1", "0"], ["0", "sin(x1)^2"]]
"#;
        let m = parse_model(text, "qp").unwrap();
        let g = gallery::quartic_product();
        let (x, v) = ([0.3, 1.2, 1.0], [0.4, -0.7, 0.2]);
        assert!((m.norm_at(&x, &v).unwrap() - g.norm_at(&x, &v).unwrap()).abs() < 1e-14);
        assert_eq!(m.chart(), g.chart());
    }

    #[test]
    fn measure_density_becomes_weight() {
        let text = format!("{SPHERE}\n[measure]\ndensity = \"exp(2*x1)\"\n");
        let m = parse_model(&text, "x").unwrap();
        let psi = m.weight().unwrap();
        let b = finslerlab::expr::Bindings::new().with_x(&[0.7, 0.0]);
        assert!((psi.evaluate(&b).unwrap() + 1.4).abs() < 1e-14);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = SPHERE.replace("sin(x1)^2", "sin(x3)^2");
        let e = format!("{:#}", parse_model(&bad, "x").unwrap_err());
        assert!(e.contains("norm.metric[1][1]"), "{e}");

        let bad = SPHERE.replace("dim = 2", "dim = 3");
        assert!(parse_model(&bad, "x").is_err());

        let bad = SPHERE.replace("kind = \"riemannian\"", "kind = \"lorentzian\"");
        assert!(parse_model(&bad, "x").is_err());

        let bad = format!("{SPHERE}\n[params]\nx1 = 2.0\n");
        assert!(format!("{:#}", parse_model(&bad, "x").unwrap_err()).contains("shadows"));
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
