//! Flat key-value run configuration.
//!
//! The format is `key = value` lines with `#` comments. Closed-form data
//! (source, target, initial level function, initial control) are named
//! built-ins with numeric parameters; there is no expression language.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fem::mesh::Rect;
use crate::level::Scheme;
use crate::problem::{DirectionRule, GammaRule};

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Structured { nx: usize, ny: usize },
    File(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialLevel {
    /// g = (x - cx)^2 + (y - cy)^2 - r^2
    Circle { cx: f64, cy: f64, r: f64 },
    /// max(outer-disk level, hole level): a disk with a circular hole
    Annulus { cx: f64, cy: f64, r_out: f64, r_in: f64 },
    File(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialControl {
    Zero,
    /// The control reproducing the translated-disk solution, blended to zero
    /// between the two radii.
    DiskControl { cx: f64, cy: f64, r: f64, rho1: f64, rho2: f64 },
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintE {
    None,
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintC {
    None,
    Segment { x0: f64, y0: f64, x1: f64, y1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub rect: Rect,
    pub u_degree: u8,
    pub f_const: f64,
    pub delta_const: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub direction: DirectionRule,
    pub gamma: GammaRule,
    pub max_iterations: usize,
    pub g0: InitialLevel,
    pub u0: InitialControl,
    pub constraint_e: ConstraintE,
    pub constraint_c: ConstraintC,
    pub monitor: Option<[f64; 2]>,
    pub outdir: String,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshSpec::Structured { nx: 80, ny: 80 },
            rect: Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap(),
            u_degree: 1,
            f_const: -4.0,
            delta_const: 1.0,
            epsilon: 1e-4,
            tol: 1e-6,
            dt: 1e-3,
            scheme: Scheme::ForwardEuler,
            direction: DirectionRule::Adjoint,
            gamma: GammaRule::InverseSupNorm,
            max_iterations: 50,
            g0: InitialLevel::Circle { cx: 0.2, cy: 0.2, r: 0.5 },
            u0: InitialControl::Zero,
            constraint_e: ConstraintE::None,
            constraint_c: ConstraintC::None,
            monitor: None,
            outdir: "out".into(),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// The Example 1a defaults (the translated disk).
    pub fn example_1a() -> Self {
        RunConfig::default()
    }

    /// The Example 1b defaults (the disk with a circular hole).
    pub fn example_1b() -> Self {
        RunConfig {
            g0: InitialLevel::Annulus { cx: 0.2, cy: 0.2, r_out: 0.4, r_in: 0.2 },
            ..RunConfig::default()
        }
    }

    /// Defaults for derivative validation: the near-optimal disk state where
    /// the finite-difference comparisons are well conditioned.
    pub fn validation() -> Self {
        RunConfig {
            g0: InitialLevel::Circle { cx: 0.0, cy: 0.0, r: 0.5 },
            u0: InitialControl::DiskControl { cx: 0.0, cy: 0.0, r: 0.5, rho1: 0.78, rho2: 0.95 },
            ..RunConfig::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(lineno, format!("expected `key = value`, got `{line}`")))?;
            cfg.apply(key.trim(), value.trim(), lineno)?;
        }
        cfg.validate(0)?;
        Ok(cfg)
    }

    /// Apply one `key=value` override (the CLI `--set` form).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(0, format!("expected `key=value`, got `{assignment}`")))?;
        self.apply(key.trim(), value.trim(), 0)?;
        self.validate(0)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let toks: Vec<&str> = value.split_whitespace().collect();
        let num = |tok: &str| -> Result<f64> {
            tok.parse()
                .map_err(|_| Error::config(line, format!("`{key}`: bad number `{tok}`")))
        };
        let nums = |toks: &[&str], n: usize| -> Result<Vec<f64>> {
            if toks.len() != n {
                return Err(Error::config(
                    line,
                    format!("`{key}`: expected {n} numeric arguments, got {}", toks.len()),
                ));
            }
            toks.iter().map(|t| num(t)).collect()
        };
        match key {
            "mesh" => match toks.as_slice() {
                ["structured", nx, ny] => {
                    let nx = nx.parse().map_err(|_| Error::config(line, "bad mesh size"))?;
                    let ny = ny.parse().map_err(|_| Error::config(line, "bad mesh size"))?;
                    self.mesh = MeshSpec::Structured { nx, ny };
                }
                ["file", path] => self.mesh = MeshSpec::File(path.to_string()),
                _ => {
                    return Err(Error::config(
                        line,
                        "`mesh`: expected `structured NX NY` or `file PATH`",
                    ))
                }
            },
            "rect" => {
                let v = nums(&toks, 4)?;
                self.rect = Rect::new(v[0], v[1], v[2], v[3])
                    .map_err(|e| Error::config(line, format!("`rect`: {e}")))?;
            }
            "u_degree" => {
                let d: u8 =
                    value.parse().map_err(|_| Error::config(line, "`u_degree`: bad degree"))?;
                if d != 1 && d != 3 {
                    return Err(Error::config(line, "`u_degree` must be 1 or 3"));
                }
                self.u_degree = d;
            }
            "f" => match toks.as_slice() {
                ["const", c] => self.f_const = num(c)?,
                _ => return Err(Error::config(line, "`f`: expected `const VALUE`")),
            },
            "delta" => match toks.as_slice() {
                ["const", c] => self.delta_const = num(c)?,
                _ => return Err(Error::config(line, "`delta`: expected `const VALUE`")),
            },
            "epsilon" => self.epsilon = num(value)?,
            "tol" => self.tol = num(value)?,
            "dt" => self.dt = num(value)?,
            "scheme" => {
                self.scheme = match value {
                    "euler" => Scheme::ForwardEuler,
                    "rk4" => Scheme::RungeKutta4,
                    _ => return Err(Error::config(line, "`scheme` must be euler or rk4")),
                }
            }
            "direction" => {
                self.direction = match value {
                    "adjoint" => DirectionRule::Adjoint,
                    "gradient" => DirectionRule::Gradient,
                    _ => return Err(Error::config(line, "`direction` must be adjoint or gradient")),
                }
            }
            "gamma" => {
                self.gamma = match value {
                    "inv_sup" => GammaRule::InverseSupNorm,
                    "one" => GammaRule::One,
                    _ => return Err(Error::config(line, "`gamma` must be inv_sup or one")),
                }
            }
            "max_iterations" => {
                self.max_iterations =
                    value.parse().map_err(|_| Error::config(line, "bad `max_iterations`"))?;
            }
            "g0" => match toks.as_slice() {
                ["circle", rest @ ..] => {
                    let v = nums(rest, 3)?;
                    self.g0 = InitialLevel::Circle { cx: v[0], cy: v[1], r: v[2] };
                }
                ["annulus", rest @ ..] => {
                    let v = nums(rest, 4)?;
                    self.g0 =
                        InitialLevel::Annulus { cx: v[0], cy: v[1], r_out: v[2], r_in: v[3] };
                }
                ["file", path] => self.g0 = InitialLevel::File(path.to_string()),
                _ => {
                    return Err(Error::config(
                        line,
                        "`g0`: expected `circle CX CY R`, `annulus CX CY ROUT RIN`, or `file PATH`",
                    ))
                }
            },
            "u0" => match toks.as_slice() {
                ["zero"] => self.u0 = InitialControl::Zero,
                ["disk_control", rest @ ..] => {
                    let v = nums(rest, 5)?;
                    self.u0 = InitialControl::DiskControl {
                        cx: v[0],
                        cy: v[1],
                        r: v[2],
                        rho1: v[3],
                        rho2: v[4],
                    };
                }
                ["file", path] => self.u0 = InitialControl::File(path.to_string()),
                _ => {
                    return Err(Error::config(
                        line,
                        "`u0`: expected `zero`, `disk_control CX CY R RHO1 RHO2`, or `file PATH`",
                    ))
                }
            },
            "constraint_e" => match toks.as_slice() {
                ["none"] => self.constraint_e = ConstraintE::None,
                ["rect", rest @ ..] => {
                    let v = nums(rest, 4)?;
                    self.constraint_e = ConstraintE::Rect { x0: v[0], x1: v[1], y0: v[2], y1: v[3] };
                }
                _ => return Err(Error::config(line, "`constraint_e`: expected `none` or `rect X0 X1 Y0 Y1`")),
            },
            "constraint_c" => match toks.as_slice() {
                ["none"] => self.constraint_c = ConstraintC::None,
                ["segment", rest @ ..] => {
                    let v = nums(rest, 4)?;
                    self.constraint_c =
                        ConstraintC::Segment { x0: v[0], y0: v[1], x1: v[2], y1: v[3] };
                }
                _ => {
                    return Err(Error::config(
                        line,
                        "`constraint_c`: expected `none` or `segment X0 Y0 X1 Y1`",
                    ))
                }
            },
            "monitor" => match toks.as_slice() {
                ["none"] => self.monitor = None,
                ["point", rest @ ..] => {
                    let v = nums(rest, 2)?;
                    self.monitor = Some([v[0], v[1]]);
                }
                _ => return Err(Error::config(line, "`monitor`: expected `none` or `point X Y`")),
            },
            "outdir" => self.outdir = value.to_string(),
            "seed" => {
                self.seed = value.parse().map_err(|_| Error::config(line, "bad `seed`"))?;
            }
            other => return Err(Error::config(line, format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    fn validate(&self, line: usize) -> Result<()> {
        for (name, v) in
            [("epsilon", self.epsilon), ("tol", self.tol), ("dt", self.dt)]
        {
            if !(v > 0.0) {
                return Err(Error::config(line, format!("`{name}` must be positive, got {v}")));
            }
        }
        if let MeshSpec::Structured { nx, ny } = self.mesh {
            if nx < 2 || ny < 2 {
                return Err(Error::config(line, "structured mesh needs at least 2x2 cells"));
            }
        }
        Ok(())
    }

    /// Canonical text form; parsing it reproduces the config exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        match &self.mesh {
            MeshSpec::Structured { nx, ny } => writeln!(s, "mesh = structured {nx} {ny}").unwrap(),
            MeshSpec::File(p) => writeln!(s, "mesh = file {p}").unwrap(),
        }
        writeln!(
            s,
            "rect = {} {} {} {}",
            self.rect.xmin, self.rect.xmax, self.rect.ymin, self.rect.ymax
        )
        .unwrap();
        writeln!(s, "u_degree = {}", self.u_degree).unwrap();
        writeln!(s, "f = const {}", self.f_const).unwrap();
        writeln!(s, "delta = const {}", self.delta_const).unwrap();
        writeln!(s, "epsilon = {}", self.epsilon).unwrap();
        writeln!(s, "tol = {}", self.tol).unwrap();
        writeln!(s, "dt = {}", self.dt).unwrap();
        let scheme = match self.scheme {
            Scheme::ForwardEuler => "euler",
            Scheme::RungeKutta4 => "rk4",
        };
        writeln!(s, "scheme = {scheme}").unwrap();
        let direction = match self.direction {
            DirectionRule::Adjoint => "adjoint",
            DirectionRule::Gradient => "gradient",
        };
        writeln!(s, "direction = {direction}").unwrap();
        let gamma = match self.gamma {
            GammaRule::InverseSupNorm => "inv_sup",
            GammaRule::One => "one",
        };
        writeln!(s, "gamma = {gamma}").unwrap();
        writeln!(s, "max_iterations = {}", self.max_iterations).unwrap();
        match &self.g0 {
            InitialLevel::Circle { cx, cy, r } => writeln!(s, "g0 = circle {cx} {cy} {r}").unwrap(),
            InitialLevel::Annulus { cx, cy, r_out, r_in } => {
                writeln!(s, "g0 = annulus {cx} {cy} {r_out} {r_in}").unwrap()
            }
            InitialLevel::File(p) => writeln!(s, "g0 = file {p}").unwrap(),
        }
        match &self.u0 {
            InitialControl::Zero => writeln!(s, "u0 = zero").unwrap(),
            InitialControl::DiskControl { cx, cy, r, rho1, rho2 } => {
                writeln!(s, "u0 = disk_control {cx} {cy} {r} {rho1} {rho2}").unwrap()
            }
            InitialControl::File(p) => writeln!(s, "u0 = file {p}").unwrap(),
        }
        match self.constraint_e {
            ConstraintE::None => writeln!(s, "constraint_e = none").unwrap(),
            ConstraintE::Rect { x0, x1, y0, y1 } => {
                writeln!(s, "constraint_e = rect {x0} {x1} {y0} {y1}").unwrap()
            }
        }
        match self.constraint_c {
            ConstraintC::None => writeln!(s, "constraint_c = none").unwrap(),
            ConstraintC::Segment { x0, y0, x1, y1 } => {
                writeln!(s, "constraint_c = segment {x0} {y0} {x1} {y1}").unwrap()
            }
        }
        match self.monitor {
            None => writeln!(s, "monitor = none").unwrap(),
            Some([x, y]) => writeln!(s, "monitor = point {x} {y}").unwrap(),
        }
        writeln!(s, "outdir = {}", self.outdir).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        s
    }
}
