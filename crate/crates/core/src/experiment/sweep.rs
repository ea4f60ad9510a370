//! Grid sweeps over configuration keys.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{is_numeric_key, ConfigError, ScenarioConfig};
use crate::error::{ModelError, Result};
use crate::oracle::rao_blackwell_average;
use crate::performance::{analytic_report, caveats_for, shares_of, Method, PerformanceReport};

/// Analytic report for the configured link pair.
pub fn run_point(cfg: &ScenarioConfig) -> Result<PerformanceReport> {
    let (a, b) = cfg.channels()?;
    analytic_report(&a, &b, &cfg.quad)
}

/// Rao–Blackwell Monte Carlo report, `cfg.mc.draws` draws seeded with `seed`.
pub fn run_point_mc(cfg: &ScenarioConfig, seed: u64) -> Result<PerformanceReport> {
    let (a, b) = cfg.channels()?;
    let rb = rao_blackwell_average(&a, &b, cfg.mc.draws, seed)?;
    let breakdown = crate::performance::average_error_breakdown(&a, &b)?;
    Ok(PerformanceReport {
        key_rate_per_slot: rb.rate_per_slot,
        key_rate_per_second: rb.rate_per_slot / cfg.source.slot,
        qber: rb.qber,
        breakdown,
        shares: shares_of(rb.components),
        method: Method::Mc,
        qber_stderr: Some(rb.qber_stderr),
        rate_stderr: Some(rb.rate_stderr / cfg.source.slot),
        quad_error: None,
        ratio_of_averages: breakdown.qber().ok(),
        caveats: caveats_for(&a, &b, rb.qber),
    })
}

/// One swept key and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub key: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(key: &str, values: Vec<f64>) -> std::result::Result<Self, ConfigError> {
        if !is_numeric_key(key) {
            return Err(ConfigError::Invalid {
                key: key.into(),
                reason: "not a numeric configuration key".into(),
            });
        }
        if values.is_empty() {
            return Err(ConfigError::Invalid { key: key.into(), reason: "axis has no values".into() });
        }
        Ok(Self { key: key.into(), values })
    }

    /// `start..=stop` in `count` evenly spaced steps, or geometrically
    /// spaced when `log` is set.
    pub fn grid(key: &str, start: f64, stop: f64, count: usize, log: bool) -> std::result::Result<Self, ConfigError> {
        let bad = |reason: &str| ConfigError::Invalid { key: key.into(), reason: reason.into() };
        if count == 0 {
            return Err(bad("grid needs at least one point"));
        }
        if log && !(start > 0.0 && stop > 0.0) {
            return Err(bad("log grid needs positive end points"));
        }
        let values = (0..count)
            .map(|i| {
                if count == 1 {
                    return start;
                }
                let t = i as f64 / (count - 1) as f64;
                if i == count - 1 {
                    stop
                } else if log {
                    (start.ln() + t * (stop.ln() - start.ln())).exp()
                } else {
                    start + t * (stop - start)
                }
            })
            .collect();
        Self::new(key, values)
    }

    /// Parses `key=v1,v2,...` or `key=start:stop:count[:log]`.
    pub fn parse(spec: &str) -> std::result::Result<Self, ConfigError> {
        let (key, rest) = spec.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: None,
            message: format!("axis `{spec}` is not of the form key=values"),
        })?;
        let key = key.trim();
        let number = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| ConfigError::Invalid {
                key: key.into(),
                reason: format!("`{}` is not a number", s.trim()),
            })
        };
        if rest.contains(':') {
            let parts: Vec<&str> = rest.split(':').collect();
            let log = match parts.get(3).map(|s| s.trim()) {
                None | Some("lin") => false,
                Some("log") => true,
                Some(other) => {
                    return Err(ConfigError::Invalid { key: key.into(), reason: format!("unknown spacing `{other}`") })
                }
            };
            if !(3..=4).contains(&parts.len()) {
                return Err(ConfigError::Invalid { key: key.into(), reason: "expected start:stop:count[:log]".into() });
            }
            let count = parts[2].trim().parse::<usize>().map_err(|_| ConfigError::Invalid {
                key: key.into(),
                reason: "count must be a positive integer".into(),
            })?;
            Self::grid(key, number(parts[0])?, number(parts[1])?, count, log)
        } else {
            let values = rest.split(',').map(number).collect::<std::result::Result<Vec<_>, _>>()?;
            Self::new(key, values)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Outermost axis first.
    pub axes: Vec<Axis>,
    pub methods: Vec<Method>,
}

impl SweepSpec {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes, methods: vec![Method::Analytic] }
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in lexicographic order, last axis varying fastest.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        let mut out = vec![Vec::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((axis.key.clone(), v));
                        p
                    })
                })
                .collect();
        }
        out
    }
}

/// Parameters recorded with every row. Receiver columns are Alice's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowParams {
    pub z_a_m: f64,
    pub z_b_m: f64,
    pub sigma_track_a_rad: f64,
    pub sigma_track_b_rad: f64,
    pub mu_t: f64,
    pub theta_fov_rad: f64,
    pub sigma_fov_rad: f64,
    pub phi_b_per_s_sr: f64,
}

impl RowParams {
    pub fn of(cfg: &ScenarioConfig) -> Self {
        Self {
            z_a_m: cfg.alice.geometry.distance,
            z_b_m: cfg.bob.geometry.distance,
            sigma_track_a_rad: cfg.alice.geometry.track_jitter_sigma,
            sigma_track_b_rad: cfg.bob.geometry.track_jitter_sigma,
            mu_t: cfg.source.mu_t,
            theta_fov_rad: cfg.alice.receiver.fov_angle,
            sigma_fov_rad: cfg.alice.receiver.fov_jitter_sigma,
            phi_b_per_s_sr: cfg.alice.receiver.background_flux,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub params: RowParams,
    pub method: Method,
    pub report: Option<PerformanceReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub const CSV_COLUMNS: [&str; 16] = [
    "z_a_m",
    "z_b_m",
    "sigma_track_a_rad",
    "sigma_track_b_rad",
    "mu_t",
    "theta_fov_rad",
    "sigma_fov_rad",
    "phi_b_per_s_sr",
    "key_rate_bps",
    "qber",
    "e1_share",
    "e2_share",
    "e3_share",
    "method",
    "qber_stderr",
    "rate_stderr",
];

fn num(x: f64) -> String {
    format!("{x:?}")
}

impl ResultTable {
    pub fn has_errors(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }

    /// True when some row failed with a quadrature tolerance error.
    pub fn has_tolerance_errors(&self) -> bool {
        self.rows.iter().any(|r| r.error.as_deref().is_some_and(|e| e.starts_with("numerical integration")))
    }

    /// CSV text. An `error` column is appended only when a row failed.
    pub fn to_csv(&self) -> String {
        let with_errors = self.has_errors();
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
        if with_errors {
            header.push("error");
        }
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let p = &row.params;
            let mut rec: Vec<String> = [
                p.z_a_m,
                p.z_b_m,
                p.sigma_track_a_rad,
                p.sigma_track_b_rad,
                p.mu_t,
                p.theta_fov_rad,
                p.sigma_fov_rad,
                p.phi_b_per_s_sr,
            ]
            .into_iter()
            .map(num)
            .collect();
            match &row.report {
                Some(r) => {
                    rec.extend([r.key_rate_per_second, r.qber, r.shares[0], r.shares[1], r.shares[2]].map(num));
                    rec.push(row.method.as_str().into());
                    rec.push(r.qber_stderr.map(num).unwrap_or_default());
                    rec.push(r.rate_stderr.map(num).unwrap_or_default());
                }
                None => {
                    rec.extend(std::iter::repeat_n(String::new(), 5));
                    rec.push(row.method.as_str().into());
                    rec.extend([String::new(), String::new()]);
                }
            }
            if with_errors {
                rec.push(row.error.clone().unwrap_or_default());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
    }
}

/// Writes [`ResultTable::to_csv`] to `path`.
pub fn emit_csv(table: &ResultTable, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(table.to_csv().as_bytes())?;
    f.flush()
}

/// Evaluates every grid point with every method. Rows follow the grid
/// order; a failing point records its error and the sweep goes on.
pub fn run_sweep(spec: &SweepSpec, cfg: &ScenarioConfig) -> ResultTable {
    let points = spec.points();
    let jobs: Vec<(usize, &Vec<(String, f64)>, Method)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| spec.methods.iter().map(move |&m| (i, p, m)))
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(index, point, method)| {
            let mut c = *cfg;
            let applied = point.iter().try_for_each(|(k, v)| c.set_number(k, *v)).and_then(|_| c.validate());
            let params = RowParams::of(&c);
            let outcome = match applied {
                Err(e) => Err(e.to_string()),
                Ok(()) => match method {
                    Method::Analytic => run_point(&c),
                    Method::Mc => run_point_mc(&c, cfg.mc.seed.wrapping_add(index as u64)),
                }
                .map_err(|e: ModelError| e.to_string()),
            };
            match outcome {
                Ok(report) => ResultRow { params, method, report: Some(report), error: None },
                Err(e) => ResultRow { params, method, report: None, error: Some(e) },
            }
        })
        .collect();
    ResultTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl std::str::FromStr for Figure {
    type Err = ConfigError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            "fig4" => Ok(Self::Fig4),
            "fig5" => Ok(Self::Fig5),
            "fig6" => Ok(Self::Fig6),
            other => Err(ConfigError::Invalid {
                key: "preset".into(),
                reason: format!("unknown preset `{other}` (expected fig2, fig3, fig4, fig5 or fig6)"),
            }),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Self::Fig2 => 2,
            Self::Fig3 => 3,
            Self::Fig4 => 4,
            Self::Fig5 => 5,
            Self::Fig6 => 6,
        };
        write!(f, "fig{n}")
    }
}

/// Points on every continuous preset axis.
pub const PRESET_POINTS: usize = 25;

/// Sweep grids for the five figures. Distances run over 100–1000 km
/// linearly and field-of-view angles over 0.1–5 mrad logarithmically,
/// with [`PRESET_POINTS`] points each; Bob stays at the configured
/// distance (500 km by default) except in `fig2`.
///
/// | preset | outer axis                         | inner axis(es)            |
/// |--------|------------------------------------|---------------------------|
/// | fig2   | `alice.distance_m`                 | `bob.distance_m`          |
/// | fig3   | `both.sigma_track_rad` {1,3,5,10} µrad | `alice.distance_m`    |
/// | fig4   | `source.mu_t` {0.05,0.1,0.2,0.3}   | `alice.distance_m`        |
/// | fig5   | `both.phi_b_per_s_sr` {1e6..1e9}   | `both.theta_fov_rad`      |
/// | fig6   | `both.sigma_fov_rad` {50,200,1000} µrad | `both.theta_fov_rad` |
pub fn figure_preset(fig: Figure) -> SweepSpec {
    let n = PRESET_POINTS;
    let distance = |key: &str| Axis::grid(key, 1e5, 1e6, n, false).expect("valid grid");
    let fov = || Axis::grid("both.theta_fov_rad", 1e-4, 5e-3, n, true).expect("valid grid");
    let list = |key: &str, v: &[f64]| Axis::new(key, v.to_vec()).expect("valid axis");
    let axes = match fig {
        Figure::Fig2 => vec![distance("alice.distance_m"), distance("bob.distance_m")],
        Figure::Fig3 => vec![list("both.sigma_track_rad", &[1e-6, 3e-6, 5e-6, 1e-5]), distance("alice.distance_m")],
        Figure::Fig4 => vec![list("source.mu_t", &[0.05, 0.1, 0.2, 0.3]), distance("alice.distance_m")],
        Figure::Fig5 => vec![list("both.phi_b_per_s_sr", &[1e6, 1e7, 1e8, 1e9]), fov()],
        Figure::Fig6 => vec![list("both.sigma_fov_rad", &[5e-5, 2e-4, 1e-3]), fov()],
    };
    SweepSpec::new(axes)
}
