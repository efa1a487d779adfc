//! Run configuration: defaults, `key = value` files, and flag overrides.

use std::path::{Path, PathBuf};

use caprigid::geometry::{ChartSpec, QuadParams};
use caprigid::{Derivatives, SymTensorField};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub background: f64,
    pub umbilic: f64,
    pub quadrature: f64,
    pub threshold: f64,
    pub slope_low: f64,
    pub slope_high: f64,
    pub exact_identity: f64,
    pub gauge: f64,
    pub coercivity: f64,
    pub kappa: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            background: 1e-10,
            umbilic: 1e-6,
            quadrature: 1e-8,
            threshold: 1e-12,
            slope_low: 2.7,
            slope_high: 3.3,
            exact_identity: 1e-8,
            gauge: 1e-9,
            coercivity: 1e-10,
            kappa: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub c: f64,
    /// `[radial, angular…]`; `None` selects the default rule for `n`.
    pub nodes: Option<Vec<usize>>,
    /// Finite-difference step for field derivatives; `None` is analytic.
    pub fd_step: Option<f64>,
    pub seed: u64,
    pub amplitude: f64,
    pub degree: usize,
    pub gauge_degree: usize,
    pub eps: Vec<f64>,
    pub which: Option<String>,
    pub samples: usize,
    pub c_fit: f64,
    pub out: PathBuf,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 2,
            c: 0.9,
            nodes: None,
            fd_step: None,
            seed: 1,
            amplitude: 0.1,
            degree: 2,
            gauge_degree: 2,
            eps: vec![0.1, 0.05, 0.025, 0.0125],
            which: None,
            samples: 99,
            c_fit: 10.0,
            out: PathBuf::from("reports"),
            tolerances: Tolerances::default(),
        }
    }
}

/// Values set on the command line or in a config file; `None` keeps the
/// lower-priority value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub c: Option<f64>,
    pub nodes: Option<Vec<usize>>,
    pub fd_step: Option<f64>,
    pub seed: Option<u64>,
    pub amplitude: Option<f64>,
    pub degree: Option<usize>,
    pub gauge_degree: Option<usize>,
    pub eps: Option<Vec<f64>>,
    pub which: Option<String>,
    pub samples: Option<usize>,
    pub c_fit: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &o.$f {
                    self.$f = v.clone();
                }
            )*};
        }
        set!(n, c, seed, amplitude, degree, gauge_degree, eps, samples, c_fit, out);
        if o.nodes.is_some() {
            self.nodes = o.nodes.clone();
        }
        if o.fd_step.is_some() {
            self.fd_step = o.fd_step;
        }
        if o.which.is_some() {
            self.which = o.which.clone();
        }
    }

    pub fn quad(&self) -> Result<QuadParams, CliError> {
        let mut q = QuadParams::default_for(self.n);
        if let Some(nodes) = &self.nodes {
            if nodes.len() != self.n {
                return Err(CliError::Config(format!(
                    "--nodes needs {} entries (radial then {} angular) for n = {}",
                    self.n,
                    self.n - 1,
                    self.n
                )));
            }
            q.radial = nodes[0];
            q.angular = nodes[1..].to_vec();
        }
        if let Some(step) = self.fd_step {
            q.fd_step = step;
        }
        Ok(q)
    }

    pub fn spec(&self) -> Result<ChartSpec, CliError> {
        Ok(ChartSpec::new(self.n, self.c)?.with_quad(self.quad()?)?)
    }

    /// The seeded admissible field of this run.
    pub fn field(&self, spec: &ChartSpec) -> Result<SymTensorField, CliError> {
        let h = caprigid::fields::make_admissible_field(spec, self.seed, self.amplitude, self.degree)?;
        Ok(match self.fd_step {
            Some(step) => h.with_derivatives(Derivatives::FiniteDifference { step }),
            None => h,
        })
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(|s| parse(key, s)).collect()
}

/// Parses a `key = value` file. Keys use the flag spelling with or
/// without the leading dashes; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<(Overrides, Vec<(String, f64)>), CliError> {
    let mut o = Overrides::default();
    let mut tols = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            )));
        };
        let key = k.trim().trim_start_matches('-').replace('_', "-");
        let v = v.trim();
        match key.as_str() {
            "n" => o.n = Some(parse(&key, v)?),
            "c" => o.c = Some(parse(&key, v)?),
            "nodes" => o.nodes = Some(parse_list(&key, v)?),
            "fd-step" => o.fd_step = Some(parse(&key, v)?),
            "seed" => o.seed = Some(parse(&key, v)?),
            "amplitude" => o.amplitude = Some(parse(&key, v)?),
            "degree" => o.degree = Some(parse(&key, v)?),
            "gauge-degree" => o.gauge_degree = Some(parse(&key, v)?),
            "eps" => o.eps = Some(parse_list(&key, v)?),
            "which" => o.which = Some(v.to_string()),
            "samples" => o.samples = Some(parse(&key, v)?),
            "c-fit" => o.c_fit = Some(parse(&key, v)?),
            "out" => o.out = Some(PathBuf::from(v)),
            other => match other.strip_prefix("tol-") {
                Some(name) => tols.push((name.replace('-', "_"), parse(&key, v)?)),
                None => {
                    return Err(CliError::Config(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            },
        }
    }
    Ok((o, tols))
}

fn set_tolerance(t: &mut Tolerances, name: &str, v: f64) -> Result<(), CliError> {
    let slot = match name {
        "background" => &mut t.background,
        "umbilic" => &mut t.umbilic,
        "quadrature" => &mut t.quadrature,
        "threshold" => &mut t.threshold,
        "slope_low" => &mut t.slope_low,
        "slope_high" => &mut t.slope_high,
        "exact_identity" => &mut t.exact_identity,
        "gauge" => &mut t.gauge,
        "coercivity" => &mut t.coercivity,
        "kappa" => &mut t.kappa,
        _ => return Err(CliError::Config(format!("unknown tolerance {name:?}"))),
    };
    *slot = v;
    Ok(())
}

/// Defaults, then the config file, then flags.
pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let (o, tols) = parse_config_file(&text)?;
        cfg.apply(&o);
        for (name, v) in tols {
            set_tolerance(&mut cfg.tolerances, &name, v)?;
        }
    }
    cfg.apply(flags);
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.n < 2 {
        return Err(CliError::Config(format!("n must be at least 2, got {}", cfg.n)));
    }
    if !(cfg.c > 0.0 && cfg.c < 1.0) {
        return Err(CliError::Config(format!("c must lie in (0,1), got {}", cfg.c)));
    }
    if let Some(step) = cfg.fd_step {
        if !(step > 0.0) {
            return Err(CliError::Config(format!("fd-step must be positive, got {step}")));
        }
    }
    if !(cfg.c_fit > 0.0) {
        return Err(CliError::Config("c-fit must be positive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let text = "# run\nn = 3\nc=0.85\n--eps = 0.2, 0.1,0.05\ngauge_degree = 3\ntol-slope-low = 2.8\n";
        let (o, tols) = parse_config_file(text).unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply(&o);
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.eps, vec![0.2, 0.1, 0.05]);
        assert_eq!(cfg.gauge_degree, 3);
        assert_eq!(tols, vec![("slope_low".to_string(), 2.8)]);
        cfg.apply(&Overrides {
            c: Some(0.9),
            ..Default::default()
        });
        assert_eq!(cfg.c, 0.9);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(parse_config_file("colour = red"), Err(CliError::Config(_))));
        assert!(parse_config_file("n 3").is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.nodes = Some(vec![12, 24]);
        cfg.fd_step = Some(1e-4);
        let s = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn nodes_must_match_dimension() {
        let mut cfg = RunConfig::default();
        cfg.nodes = Some(vec![12, 24, 24]);
        assert!(cfg.quad().is_err());
    }
}
