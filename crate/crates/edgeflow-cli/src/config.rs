//! Experiment configuration: a dotted key–value document parsed into the
//! library types, with every violation collected instead of stopping at the
//! first.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use edgeflow::geometry::{BaseSpec, EdgeConfig, LinkSpec, PerturbationDecay};
use edgeflow::{Backend, EdgeConfig64, GridParams64, SolverParams64};

/// Which pipeline a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    FeasibilityAudit,
    KernelValidation,
    SchauderRatio,
    FlowSolve,
    EstimateAudit,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::FeasibilityAudit => "feasibility_audit",
            Scenario::KernelValidation => "kernel_validation",
            Scenario::SchauderRatio => "schauder_ratio",
            Scenario::FlowSolve => "flow_solve",
            Scenario::EstimateAudit => "estimate_audit",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "feasibility_audit" => Some(Scenario::FeasibilityAudit),
            "kernel_validation" => Some(Scenario::KernelValidation),
            "schauder_ratio" => Some(Scenario::SchauderRatio),
            "flow_solve" => Some(Scenario::FlowSolve),
            "estimate_audit" => Some(Scenario::EstimateAudit),
            _ => None,
        }
    }
}

/// Initial scalar-curvature profile `(x, link_arc, base_arc) -> scal0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Scal0 {
    Constant { value: f64 },
    RadialBump { amplitude: f64, center: f64, width: f64 },
}

impl Scal0 {
    pub fn sampler(&self) -> Box<dyn FnMut(f64, f64, f64) -> f64> {
        match *self {
            Scal0::Constant { value } => Box::new(move |_, _, _| value),
            Scal0::RadialBump { amplitude, center, width } => Box::new(move |x, _, _| {
                let r = (x - center) / width;
                amplitude * (-r * r).exp()
            }),
        }
    }
}

/// A fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub geometry: EdgeConfig64,
    pub solver: SolverParams64,
    /// Spatial and temporal resolution; `t_final` mirrors `solver.t_final`.
    pub grid: GridParams64,
    pub scenario: Scenario,
    pub scal0: Scal0,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// The normalized document, kept for the run manifest.
    pub raw: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "geometry.f",
    "geometry.b",
    "geometry.link",
    "geometry.link.angle",
    "geometry.link.circumference",
    "geometry.link.radius",
    "geometry.base",
    "geometry.base.lengths",
    "geometry.decay",
    "solver.alpha",
    "solver.mu",
    "solver.k",
    "solver.t_final",
    "solver.tol",
    "solver.max_iters",
    "solver.backend",
    "grid.n_radial",
    "grid.p_grading",
    "grid.n_link_modes",
    "grid.n_base_modes",
    "grid.n_time",
    "scenario",
    "output_dir",
    "seed",
    "scal0.kind",
    "scal0.value",
    "scal0.amplitude",
    "scal0.center",
    "scal0.width",
];

struct Doc {
    map: BTreeMap<String, String>,
    violations: Vec<String>,
}

impl Doc {
    fn get<T: FromStr>(&mut self, key: &str) -> Option<T> {
        let raw = self.map.get(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.violations.push(format!(
                    "{key}: cannot parse {raw:?} as {}",
                    std::any::type_name::<T>()
                ));
                None
            }
        }
    }

    fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> T {
        if self.map.contains_key(key) {
            self.get(key).unwrap_or(default)
        } else {
            default
        }
    }

    fn reject(&mut self, key: &str, reason: &str) {
        if self.map.contains_key(key) {
            self.violations.push(format!("{key}: {reason}"));
        }
    }
}

/// Parses and validates a configuration document. On failure the error
/// carries one message per violation — unknown keys, unparsable values, and
/// invariant breaches are all reported together.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let mut map = BTreeMap::new();
    let mut violations = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            violations.push(format!("line {}: expected 'key = value', got {line:?}", idx + 1));
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            violations.push(format!("unknown key {key}"));
            continue;
        }
        if map.insert(key.clone(), value).is_some() {
            violations.push(format!("duplicate key {key}"));
        }
    }
    let mut doc = Doc { map, violations };

    let scenario = match doc.map.get("scenario").cloned() {
        None => {
            doc.violations.push("missing scenario".into());
            None
        }
        Some(name) => {
            let parsed = Scenario::from_name(&name);
            if parsed.is_none() {
                doc.violations.push(format!(
                    "scenario: unrecognized value {name:?} (expected one of \
                     feasibility_audit, kernel_validation, schauder_ratio, flow_solve, \
                     estimate_audit)"
                ));
            }
            parsed
        }
    };

    let geometry = build_geometry(&mut doc);
    let solver = build_solver(&mut doc);
    let grid = build_grid(&mut doc, solver.as_ref());
    let scal0 = build_scal0(&mut doc);
    let output_dir = PathBuf::from(doc.get_or("output_dir", "out".to_string()));
    let seed = doc.get_or("seed", 0u64);

    if doc.violations.is_empty() {
        Ok(ExperimentConfig {
            geometry: geometry.expect("no violations implies a geometry"),
            solver: solver.expect("no violations implies solver params"),
            grid: grid.expect("no violations implies grid params"),
            scenario: scenario.expect("no violations implies a scenario"),
            scal0: scal0.expect("no violations implies a curvature profile"),
            output_dir,
            seed,
            raw: doc.map,
        })
    } else {
        Err(doc.violations)
    }
}

fn build_geometry(doc: &mut Doc) -> Option<EdgeConfig64> {
    let f: usize = match doc.map.contains_key("geometry.f") {
        true => doc.get("geometry.f")?,
        false => {
            doc.violations.push("missing geometry.f".into());
            return None;
        }
    };
    let link = match doc.map.get("geometry.link").map(String::as_str) {
        None => {
            doc.violations.push("missing geometry.link".into());
            None
        }
        Some("circle") => {
            doc.reject("geometry.link.radius", "does not apply to a circle link");
            let angle: Option<f64> = doc.get("geometry.link.angle");
            let circumference: Option<f64> = doc.get("geometry.link.circumference");
            match (angle, circumference) {
                (Some(theta), None) => match LinkSpec::circle_from_cone_angle(theta) {
                    Ok(l) => Some(l),
                    Err(e) => {
                        doc.violations.push(format!("geometry.link.angle: {e}"));
                        None
                    }
                },
                (None, Some(c)) => Some(LinkSpec::Circle { circumference: c }),
                (Some(_), Some(_)) => {
                    doc.violations.push(
                        "geometry.link.angle and geometry.link.circumference are mutually \
                         exclusive"
                            .into(),
                    );
                    None
                }
                (None, None) => {
                    if !doc.map.contains_key("geometry.link.angle")
                        && !doc.map.contains_key("geometry.link.circumference")
                    {
                        doc.violations.push(
                            "a circle link needs geometry.link.angle or \
                             geometry.link.circumference"
                                .into(),
                        );
                    }
                    None
                }
            }
        }
        Some("round_sphere") => {
            doc.reject("geometry.link.angle", "does not apply to a round-sphere link");
            doc.reject("geometry.link.circumference", "does not apply to a round-sphere link");
            if !doc.map.contains_key("geometry.link.radius") {
                doc.violations.push("a round-sphere link needs geometry.link.radius".into());
            }
            let radius: f64 = doc.get("geometry.link.radius")?;
            Some(LinkSpec::RoundSphere { radius })
        }
        Some(other) => {
            doc.violations.push(format!(
                "geometry.link: unrecognized variant {other:?} (expected circle or \
                 round_sphere)"
            ));
            None
        }
    };
    let base = match doc.map.get("geometry.base").map(String::as_str) {
        None | Some("point") => {
            doc.reject("geometry.base.lengths", "does not apply to a point base");
            Some(BaseSpec::Point)
        }
        Some("flat_torus") => {
            let raw = doc.map.get("geometry.base.lengths").cloned();
            match raw {
                None => {
                    doc.violations.push("a flat-torus base needs geometry.base.lengths".into());
                    None
                }
                Some(list) => {
                    let mut lengths = Vec::new();
                    let mut ok = true;
                    for part in list.split(',') {
                        match part.trim().parse::<f64>() {
                            Ok(v) => lengths.push(v),
                            Err(_) => {
                                doc.violations.push(format!(
                                    "geometry.base.lengths: cannot parse {part:?} as f64"
                                ));
                                ok = false;
                            }
                        }
                    }
                    ok.then_some(BaseSpec::FlatTorus { lengths })
                }
            }
        }
        Some(other) => {
            doc.violations.push(format!(
                "geometry.base: unrecognized variant {other:?} (expected point or flat_torus)"
            ));
            None
        }
    };
    let decay = match doc.map.get("geometry.decay").map(String::as_str) {
        None | Some("quadratic") => Some(PerturbationDecay::QuadraticDecay),
        Some("quartic") => Some(PerturbationDecay::QuarticDecay),
        Some("none") => Some(PerturbationDecay::None),
        Some(other) => {
            doc.violations.push(format!(
                "geometry.decay: unrecognized value {other:?} (expected none, quadratic, or \
                 quartic)"
            ));
            None
        }
    };
    let cfg = match EdgeConfig::new(f, link?, base?, decay?) {
        Ok(cfg) => cfg,
        Err(e) => {
            doc.violations.push(format!("geometry: {e}"));
            return None;
        }
    };
    if let Some(b) = doc.get::<usize>("geometry.b") {
        if b != cfg.b() {
            doc.violations.push(format!(
                "geometry.b = {b} contradicts the configured base (dim B = {})",
                cfg.b()
            ));
        }
    }
    Some(cfg)
}

fn build_solver(doc: &mut Doc) -> Option<SolverParams64> {
    let alpha = doc.get_or("solver.alpha", 0.3);
    let t_final = doc.get_or("solver.t_final", 0.1);
    let mut params = SolverParams64::new(alpha, t_final);
    params.mu = doc.get_or("solver.mu", params.mu);
    params.k = doc.get_or("solver.k", params.k);
    params.tol = doc.get_or("solver.tol", params.tol);
    params.max_iters = doc.get_or("solver.max_iters", params.max_iters);
    params.backend = match doc.map.get("solver.backend").map(String::as_str) {
        None | Some("picard") => Backend::Picard,
        Some("implicit_oracle") => Backend::ImplicitOracle,
        Some(other) => {
            doc.violations.push(format!(
                "solver.backend: unrecognized value {other:?} (expected picard or \
                 implicit_oracle)"
            ));
            Backend::Picard
        }
    };
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        doc.violations.push(format!("solver.alpha out of (0,1): {}", params.alpha));
    }
    if !(params.mu > 0.0 && params.mu < 1.0) {
        doc.violations.push(format!("solver.mu out of (0,1): {}", params.mu));
    }
    if !(params.t_final > 0.0) {
        doc.violations.push(format!("solver.t_final must be positive: {}", params.t_final));
    }
    if params.k == 0 {
        doc.violations.push("solver.k must be >= 1".into());
    }
    if !(params.tol > 0.0) {
        doc.violations.push(format!("solver.tol must be positive: {}", params.tol));
    }
    if params.max_iters == 0 {
        doc.violations.push("solver.max_iters must be >= 1".into());
    }
    Some(params)
}

fn build_grid(doc: &mut Doc, solver: Option<&SolverParams64>) -> Option<GridParams64> {
    let params = GridParams64 {
        n_radial: doc.get_or("grid.n_radial", 32usize),
        grading: doc.get_or("grid.p_grading", 2.0),
        n_link_points: doc.get_or("grid.n_link_modes", 1usize),
        n_base_points: doc.get_or("grid.n_base_modes", 1usize),
        n_time: doc.get_or("grid.n_time", 17usize),
        t_final: solver.map(|s| s.t_final).unwrap_or(0.1),
    };
    if params.n_radial < 3 {
        doc.violations.push(format!("grid.n_radial must be >= 3, got {}", params.n_radial));
    }
    if params.n_time < 3 {
        doc.violations.push(format!("grid.n_time must be >= 3, got {}", params.n_time));
    }
    if !(params.grading >= 1.0) {
        doc.violations.push(format!("grid.p_grading must be >= 1, got {}", params.grading));
    }
    for (key, n) in [
        ("grid.n_link_modes", params.n_link_points),
        ("grid.n_base_modes", params.n_base_points),
    ] {
        // 1 marks an unresolved angular direction; a resolved one needs an
        // odd sample count of at least 3 for the exact mode transforms.
        if n != 1 && (n < 3 || n % 2 == 0) {
            doc.violations.push(format!("{key} must be 1 or an odd count >= 3, got {n}"));
        }
    }
    Some(params)
}

fn build_scal0(doc: &mut Doc) -> Option<Scal0> {
    match doc.map.get("scal0.kind").map(String::as_str) {
        Some("constant") => {
            doc.reject("scal0.amplitude", "does not apply to a constant profile");
            doc.reject("scal0.center", "does not apply to a constant profile");
            doc.reject("scal0.width", "does not apply to a constant profile");
            if !doc.map.contains_key("scal0.value") {
                doc.violations.push("a constant profile needs scal0.value".into());
            }
            let value = doc.get("scal0.value")?;
            Some(Scal0::Constant { value })
        }
        None | Some("radial_bump") => {
            doc.reject("scal0.value", "does not apply to a radial-bump profile");
            let profile = Scal0::RadialBump {
                amplitude: doc.get_or("scal0.amplitude", 0.15),
                center: doc.get_or("scal0.center", 0.5),
                width: doc.get_or("scal0.width", 0.2),
            };
            if let Scal0::RadialBump { width, .. } = profile {
                if !(width > 0.0) {
                    doc.violations.push(format!("scal0.width must be positive: {width}"));
                }
            }
            Some(profile)
        }
        Some(other) => {
            doc.violations.push(format!(
                "scal0.kind: unrecognized value {other:?} (expected constant or radial_bump)"
            ));
            None
        }
    }
}
