//! Text export formats: coefficient fields, traced curves, and the iteration
//! history CSV.
//!
//! Floats are printed with the shortest round-trip representation, so
//! re-running a deterministic computation reproduces the files byte for
//! byte.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::fem::field::FeField;
use crate::fem::space::FeSpace;
use crate::level::TracedComponent;
use crate::optimizer::IterationRecord;

/// One coefficient per line, in node order. Zero-trace fields are written
/// extended by their boundary zeros.
pub fn write_field<W: Write>(mut w: W, field: &FeField) -> Result<()> {
    for c in field.full_coeffs() {
        writeln!(w, "{c}")?;
    }
    Ok(())
}

/// Parse a coefficient-per-line field over the given space.
pub fn read_field<R: BufRead>(r: R, space: std::sync::Arc<FeSpace>) -> Result<FeField> {
    let mut coeffs = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            message: format!("bad coefficient `{t}`"),
        })?;
        coeffs.push(v);
    }
    if coeffs.len() != space.num_nodes() {
        return Err(Error::Parse {
            line: coeffs.len(),
            message: format!(
                "expected {} coefficients, found {}",
                space.num_nodes(),
                coeffs.len()
            ),
        });
    }
    Ok(FeField::from_coeffs(space, coeffs))
}

/// Curve export: lines `t x y speed` over the orbit partition. The speed
/// column carries |Z'(t_k)|; the starting row reuses the first step's speed.
pub fn write_curve<W: Write>(mut w: W, comp: &TracedComponent) -> Result<()> {
    let m = comp.steps();
    for k in 0..=m {
        let t = k as f64 * comp.dt();
        let z = comp.point(k);
        let speed = comp.speed(k.max(1));
        writeln!(w, "{t} {} {} {speed}", z[0], z[1])?;
    }
    Ok(())
}

/// History CSV with the column layout `k,t1,t2,J,lambda,components,dJ`.
pub fn write_history<W: Write>(mut w: W, history: &[IterationRecord]) -> Result<()> {
    writeln!(w, "k,t1,t2,J,lambda,components,dJ")?;
    for r in history {
        writeln!(w, "{},{},{},{},{},{},{}", r.k, r.t1, r.t2, r.j, r.lambda, r.components, r.dj)?;
    }
    Ok(())
}

/// Per-iteration diagnostic lines: derivative, direction norms, and the
/// orbit partition of every component.
pub fn write_diagnostics<W: Write>(mut w: W, history: &[IterationRecord]) -> Result<()> {
    for r in history {
        write!(
            w,
            "k={} dJ={} |R|={} |V|={} trials={}",
            r.k, r.dj, r.diag.norm_r, r.diag.norm_v, r.diag.line_search_trials
        )?;
        for (c, (m, t)) in r.diag.per_component.iter().enumerate() {
            write!(w, " comp{c}: m={m} T={t}")?;
        }
        if let Some(q) = r.diag.adjoint_q_part {
            write!(w, " q_part={q}")?;
        }
        if let Some(g) = r.diag.monitor_level {
            write!(w, " |g(x0)|={g}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
