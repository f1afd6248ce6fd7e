//! Flat `key = value` experiment files.
//!
//! ```text
//! # AC saddle from cos πx
//! model = gl1d kappa=0.01
//! n = 200
//! init = cos_pi_x
//! scheme = cs
//! dt = 10
//! inner_tolerance = 1e-8
//! ```
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use super::{ExperimentSpec, InitialCondition, InnerMode, Mode, Perturbation};
use crate::energy::{GinzburgLandau1D, LandauBrazovskii2D, Model};
use crate::error::{Error, Result};
use crate::fields::{Boundary, Metric};
use crate::schemes::SchemeKind;

const KEYS: &[&str] = &[
    "name",
    "mode",
    "model",
    "n",
    "extent",
    "bc",
    "metric",
    "init",
    "perturbation",
    "seed",
    "prerelax",
    "scheme",
    "dt",
    "inner_tolerance",
    "inner_iterations",
    "inner_cap",
    "outer_tolerance",
    "max_cycles",
    "spectrum",
    "comparison",
    "out",
];

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let spec = load_config_unchecked(path)?;
    spec.validate()?;
    Ok(spec)
}

/// Parses without the cross-key checks, for callers that patch the result
/// (say with a seed from the command line) and call `validate` afterwards.
pub fn load_config_unchecked(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_unchecked(&text, &path.display().to_string(), path.parent())
}

/// Parses config text. Relative `file(...)` paths resolve against `base`.
pub fn parse_config(text: &str, origin: &str, base: Option<&Path>) -> Result<ExperimentSpec> {
    let spec = parse_unchecked(text, origin, base)?;
    spec.validate()?;
    Ok(spec)
}

fn parse_unchecked(text: &str, origin: &str, base: Option<&Path>) -> Result<ExperimentSpec> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut raw: BTreeMap<&str, (usize, String)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{t}`")))?;
        let k = k.trim();
        let v = v.trim();
        let key = KEYS
            .iter()
            .find(|&&known| known == k)
            .ok_or_else(|| err(line_no, format!("unknown key `{k}`")))?;
        if v.is_empty() {
            return Err(err(line_no, format!("`{k}` has no value")));
        }
        if raw.insert(key, (line_no, v.to_string())).is_some() {
            return Err(err(line_no, format!("duplicate key `{k}`")));
        }
    }

    let mut problems = Vec::new();
    let get = |k: &str| raw.get(k).map(|(l, v)| (*l, v.as_str()));
    macro_rules! parse_or_note {
        ($key:expr, $f:expr) => {
            match get($key) {
                Some((l, v)) => match $f(v) {
                    Ok(x) => Some(x),
                    Err(m) => {
                        problems.push(format!("line {l}: {}: {m}", $key));
                        None
                    }
                },
                None => None,
            }
        };
    }

    let model = parse_or_note!("model", parse_model);
    let cells = parse_or_note!("n", |v: &str| parse_list(v, |s| s
        .parse::<usize>()
        .map_err(|e| e.to_string())));
    let extent = parse_or_note!("extent", |v: &str| parse_list(v, parse_length));
    let bc = parse_or_note!("bc", |v: &str| v.parse::<Boundary>());
    let metric = parse_or_note!("metric", |v: &str| v.parse::<Metric>());
    let init = parse_or_note!("init", |v: &str| parse_init(v, base));
    let amplitude = parse_or_note!("perturbation", parse_f64);
    let seed = parse_or_note!("seed", |v: &str| v
        .parse::<u64>()
        .map_err(|e| e.to_string()));
    let prerelax = parse_or_note!("prerelax", parse_f64);
    let scheme = parse_or_note!("scheme", |v: &str| v.parse::<SchemeKind>());
    let dt = parse_or_note!("dt", parse_f64);
    let inner_tol = parse_or_note!("inner_tolerance", parse_f64);
    let inner_its = parse_or_note!("inner_iterations", |v: &str| v
        .parse::<usize>()
        .map_err(|e| e.to_string()));
    let inner_cap = parse_or_note!("inner_cap", |v: &str| v
        .parse::<usize>()
        .map_err(|e| e.to_string()));
    let outer = parse_or_note!("outer_tolerance", parse_f64);
    let max_cycles = parse_or_note!("max_cycles", |v: &str| v
        .parse::<usize>()
        .map_err(|e| e.to_string()));
    let spectrum = parse_or_note!("spectrum", |v: &str| v
        .parse::<usize>()
        .map_err(|e| e.to_string()));
    let comparison = parse_or_note!("comparison", |v: &str| v
        .parse::<bool>()
        .map_err(|e| e.to_string()));
    let mode = parse_or_note!("mode", |v: &str| v.parse::<Mode>());

    for k in ["model", "n", "init", "scheme", "dt"] {
        if get(k).is_none() {
            problems.push(format!("missing required key `{k}`"));
        }
    }
    if inner_tol.is_some() && inner_its.is_some() {
        problems.push("give inner_tolerance or inner_iterations, not both".into());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }

    let model = model.expect("checked");
    let is_lb = matches!(model, Model::LandauBrazovskii(_));
    let cells = cells.expect("checked");
    let extent = extent.unwrap_or_else(|| {
        if is_lb {
            vec![16.0 * PI / 3f64.sqrt(), 8.0 * PI]
        } else {
            vec![1.0; cells.len()]
        }
    });
    let inner = match (inner_tol, inner_its) {
        (_, Some(n)) => InnerMode::Iterations(n),
        (t, None) => InnerMode::Tolerance(t.unwrap_or(1e-8)),
    };
    let spec = ExperimentSpec {
        name: get("name").map(|(_, v)| v.to_string()).unwrap_or_else(|| {
            Path::new(origin)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into())
        }),
        mode: mode.unwrap_or(Mode::Imf),
        model,
        cells,
        extent,
        bc: bc.unwrap_or(if is_lb {
            Boundary::Periodic
        } else {
            Boundary::Neumann
        }),
        metric: metric.unwrap_or(if is_lb { Metric::HMinus1 } else { Metric::L2 }),
        init: init.expect("checked"),
        perturbation: Perturbation {
            amplitude: amplitude.unwrap_or(0.0),
            seed,
        },
        prerelax,
        scheme: scheme.expect("checked"),
        dt: dt.expect("checked"),
        inner,
        inner_cap: inner_cap.unwrap_or(ExperimentSpec::DEFAULT_INNER_CAP),
        outer_tolerance: outer.unwrap_or(1e-8),
        max_cycles: max_cycles.unwrap_or(500),
        spectrum: spectrum.unwrap_or(3),
        comparison: comparison.unwrap_or(false),
        out: get("out").map(|(_, v)| resolve(base, v)),
    };
    Ok(spec)
}

fn resolve(base: Option<&Path>, v: &str) -> PathBuf {
    let p = PathBuf::from(v);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"))
}

fn parse_list<T>(
    v: &str,
    f: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|s| f(s.trim())).collect()
}

/// A length: a number, optionally followed by `pi` and `/sqrt3`
/// (`8pi`, `16pi/sqrt3`, `0.5`).
pub fn parse_length(v: &str) -> std::result::Result<f64, String> {
    let (body, over_sqrt3) = match v.strip_suffix("/sqrt3") {
        Some(b) => (b, true),
        None => (v, false),
    };
    let (num, times_pi) = match body.strip_suffix("pi") {
        Some(b) => (b, true),
        None => (body, false),
    };
    let mut x = if num.is_empty() && times_pi {
        1.0
    } else {
        num.parse::<f64>()
            .map_err(|e| format!("bad length `{v}`: {e}"))?
    };
    if times_pi {
        x *= PI;
    }
    if over_sqrt3 {
        x /= 3f64.sqrt();
    }
    Ok(x)
}

/// `gl1d kappa=0.01 c=1.0` or `lb2d tau=-0.15 xi=1.0 gamma=0.25 c=22.75`.
pub fn parse_model(v: &str) -> std::result::Result<Model, String> {
    let mut toks = v.split_whitespace();
    let kind = toks.next().ok_or("empty model")?;
    let mut params = BTreeMap::new();
    for t in toks {
        let (k, x) = t
            .split_once('=')
            .ok_or_else(|| format!("bad model parameter `{t}`"))?;
        let x = parse_f64(x)?;
        if params.insert(k.to_string(), x).is_some() {
            return Err(format!("duplicate model parameter `{k}`"));
        }
    }
    let mut take = |k: &str, default: Option<f64>| -> std::result::Result<f64, String> {
        params
            .remove(k)
            .or(default)
            .ok_or_else(|| format!("model {kind} needs `{k}`"))
    };
    let model = match kind {
        "gl1d" => {
            let mut m = GinzburgLandau1D::new(take("kappa", None)?);
            m.c = take("c", Some(m.c))?;
            Model::from(m)
        }
        "lb2d" => {
            let d = LandauBrazovskii2D::default();
            Model::from(LandauBrazovskii2D {
                tau: take("tau", Some(d.tau))?,
                xi: take("xi", Some(d.xi))?,
                gamma: take("gamma", Some(d.gamma))?,
                c: take("c", Some(d.c))?,
            })
        }
        other => return Err(format!("unknown model `{other}` (expected gl1d or lb2d)")),
    };
    if let Some(k) = params.keys().next() {
        return Err(format!("unknown parameter `{k}` for model {kind}"));
    }
    Ok(model)
}

fn parse_init(v: &str, base: Option<&Path>) -> std::result::Result<InitialCondition, String> {
    let (name, args) = match v.split_once('(') {
        Some((n, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| format!("unbalanced parentheses in `{v}`"))?;
            (n.trim(), Some(inner))
        }
        None => (v.trim(), None),
    };
    let nums = |min: usize, max: usize| -> std::result::Result<Vec<f64>, String> {
        let a = args.unwrap_or("");
        let xs: Vec<f64> = if a.trim().is_empty() {
            Vec::new()
        } else {
            parse_list(a, parse_f64)?
        };
        if xs.len() < min || xs.len() > max {
            return Err(format!(
                "`{name}` takes {min}..={max} numbers, got {}",
                xs.len()
            ));
        }
        Ok(xs)
    };
    Ok(match name {
        "cos_pi_x" => {
            nums(0, 0)?;
            InitialCondition::CosPiX
        }
        "cos_2pi_x" => {
            nums(0, 0)?;
            InitialCondition::Cos2PiX
        }
        "sin_2pi_x" => {
            nums(0, 0)?;
            InitialCondition::Sin2PiX
        }
        "constant" => InitialCondition::Constant(nums(1, 1)?[0]),
        "tanh_layer" => {
            let xs = nums(2, 3)?;
            InitialCondition::TanhLayer {
                mass: xs[0],
                width: xs[1],
                depth: xs
                    .get(2)
                    .copied()
                    .unwrap_or(InitialCondition::DEFAULT_DEPTH),
            }
        }
        "lamellar" => InitialCondition::Lamellar(nums(1, 1)?[0]),
        "cylinder_seed" => {
            nums(0, 0)?;
            InitialCondition::CylinderSeed
        }
        "lamellar_cylinder" => InitialCondition::LamellarCylinder(nums(1, 1)?[0]),
        "file" => {
            let p = args
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or("file(path) needs a path")?;
            InitialCondition::File(resolve(base, p))
        }
        other => return Err(format!("unknown initial condition `{other}`")),
    })
}
