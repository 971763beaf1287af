//! Built-in kernels by name.

use crate::error::{Error, Result};
use crate::kernel::{KernelDesc, TrigSeries};

/// Names accepted by [`lookup`].
pub const NAMES: &[&str] = &["hilbert1", "hilbert2", "hilbert3", "modulated3", "rough(β)"];

fn modulated(p: usize) -> KernelDesc {
    let k = p as f64;
    KernelDesc::Modulated {
        a: TrigSeries {
            constant: 1.0,
            cos: vec![0.3 - 0.1 * k],
            sin: vec![0.1 * (k + 1.0)],
        },
        b: TrigSeries {
            constant: 1.0,
            cos: vec![0.05 * k],
            sin: vec![0.2, -0.1 * k],
        },
    }
}

/// Kernel factors for `name`; `n` is the number of parameters.
///
/// `hilbertK` and `modulated3` fix their own parameter count and reject a
/// different `n`; `rough(β)` uses the same power in every parameter.
pub fn lookup(name: &str, n: usize) -> Result<Vec<KernelDesc>> {
    let name = name.trim();
    let fixed = |k: usize, f: &dyn Fn(usize) -> KernelDesc| {
        if k != n {
            return Err(Error::Kernel(format!("{name} has {k} parameters, space has {n}")));
        }
        Ok((0..k).map(f).collect())
    };
    match name {
        "hilbert1" => fixed(1, &|_| KernelDesc::PeriodicHilbert),
        "hilbert2" => fixed(2, &|_| KernelDesc::PeriodicHilbert),
        "hilbert3" => fixed(3, &|_| KernelDesc::PeriodicHilbert),
        "modulated3" => fixed(3, &modulated),
        _ => {
            let beta = name
                .strip_prefix("rough(")
                .and_then(|s| s.strip_suffix(')'))
                .and_then(|s| parse_ratio(s.trim()))
                .ok_or_else(|| Error::UnknownKernel(name.to_string()))?;
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::Kernel(format!("power {beta} must be positive")));
            }
            Ok(vec![KernelDesc::RoughPower { beta }; n])
        }
    }
}

fn parse_ratio(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.parse().ok(),
    }
}
