//! Time partitions, piecewise-constant-in-time fields, and space-time data.

use std::fmt;
use std::sync::Arc;

use crate::fem::FeContext;
use crate::mesh::SpaceKind;
use crate::{Error, Result};

/// Partition 0 = t_0 < t_1 < … < t_M = T with intervals I_m = (t_{m-1}, t_m].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    breakpoints: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(final_time: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidArgument(
                "time grid needs at least one interval".into(),
            ));
        }
        if !(final_time > 0.0) || !final_time.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        let tau = final_time / intervals as f64;
        let mut breakpoints: Vec<f64> = (0..intervals).map(|m| m as f64 * tau).collect();
        breakpoints.push(final_time);
        Ok(TimeGrid { breakpoints })
    }

    pub fn from_breakpoints(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "breakpoints must start at 0 and contain at least two points".into(),
            ));
        }
        if breakpoints
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::InvalidArgument(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { breakpoints })
    }

    /// Number of intervals M.
    pub fn len(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn final_time(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Endpoints (t_{m-1}, t_m) of interval m, 1-based as in I_1 … I_M.
    pub fn interval(&self, m: usize) -> (f64, f64) {
        (self.breakpoints[m - 1], self.breakpoints[m])
    }

    /// τ_m for 1-based m.
    pub fn tau(&self, m: usize) -> f64 {
        self.breakpoints[m] - self.breakpoints[m - 1]
    }

    /// τ = max τ_m.
    pub fn max_tau(&self) -> f64 {
        (1..=self.len()).map(|m| self.tau(m)).fold(0.0, f64::max)
    }

    /// The time-reversed partition t ↦ T - t.
    pub fn reversed(&self) -> TimeGrid {
        let t_end = self.final_time();
        let mut bp: Vec<f64> = self.breakpoints.iter().rev().map(|t| t_end - t).collect();
        bp[0] = 0.0;
        *bp.last_mut().unwrap() = t_end;
        TimeGrid { breakpoints: bp }
    }
}

type Evaluator = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// A function of (t, x, y) on [0,T]×Ω̄.
#[derive(Clone)]
pub struct TimeFunction {
    f: Arc<Evaluator>,
    time_independent: bool,
    zero: bool,
}

impl TimeFunction {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        TimeFunction {
            f: Arc::new(f),
            time_independent: false,
            zero: false,
        }
    }

    /// A function of (x, y) only.
    pub fn stationary<F>(f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        TimeFunction {
            f: Arc::new(move |_, x, y| f(x, y)),
            time_independent: true,
            zero: false,
        }
    }

    pub fn zero() -> Self {
        TimeFunction {
            f: Arc::new(|_, _, _| 0.0),
            time_independent: true,
            zero: true,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        (self.f)(t, x, y)
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeFunction")
            .field("time_independent", &self.time_independent)
            .field("zero", &self.zero)
            .finish_non_exhaustive()
    }
}

/// Piecewise constant in time, P1 in space: one coefficient vector per interval.
/// `coeffs[m-1]` is the value on I_m.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: TimeGrid,
    pub kind: SpaceKind,
    pub coeffs: Vec<Vec<f64>>,
    /// Value at t = 0 for fields carrying an initial condition.
    pub initial_trace: Option<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &TimeGrid, kind: SpaceKind, dofs: usize) -> Self {
        SpaceTimeField {
            grid: grid.clone(),
            kind,
            coeffs: vec![vec![0.0; dofs]; grid.len()],
            initial_trace: None,
        }
    }

    pub fn from_coeffs(grid: &TimeGrid, kind: SpaceKind, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: coeffs.len(),
            });
        }
        let dofs = coeffs.first().map_or(0, Vec::len);
        if let Some(bad) = coeffs.iter().find(|c| c.len() != dofs) {
            return Err(Error::DimensionMismatch {
                expected: dofs,
                found: bad.len(),
            });
        }
        Ok(SpaceTimeField {
            grid: grid.clone(),
            kind,
            coeffs,
            initial_trace: None,
        })
    }

    pub fn intervals(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dofs(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }

    /// Value on I_m, 1-based.
    pub fn on(&self, m: usize) -> &[f64] {
        &self.coeffs[m - 1]
    }

    /// Coefficients of the value at time t, using (t_{m-1}, t_m] semantics.
    pub fn at_time(&self, t: f64) -> &[f64] {
        let bp = self.grid.breakpoints();
        let m = bp[1..]
            .partition_point(|&tm| tm < t)
            .min(self.intervals() - 1);
        &self.coeffs[m]
    }

    /// Jump [v]_m = v_{m+1} - v_m for 1 ≤ m < M; [v]_0 = v_1 - initial_trace.
    pub fn jump(&self, m: usize) -> Option<Vec<f64>> {
        let right = self.coeffs.get(m)?;
        let left = if m == 0 {
            self.initial_trace.as_ref()?
        } else {
            &self.coeffs[m - 1]
        };
        Some(right.iter().zip(left).map(|(a, b)| a - b).collect())
    }

    pub fn check_compatible(&self, other: &SpaceTimeField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.kind != other.kind || self.dofs() != other.dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.dofs(),
                found: other.dofs(),
            });
        }
        Ok(())
    }

    /// self + a·other
    pub fn add_scaled(&self, a: f64, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(u, v)| u.iter().zip(v).map(|(x, y)| x + a * y).collect())
            .collect();
        Ok(SpaceTimeField {
            coeffs,
            ..self.clone()
        })
    }

    pub fn scaled(&self, a: f64) -> SpaceTimeField {
        let coeffs = self
            .coeffs
            .iter()
            .map(|u| u.iter().map(|x| a * x).collect())
            .collect();
        SpaceTimeField {
            coeffs,
            ..self.clone()
        }
    }

    /// Σ_m τ_m u_mᵀ M v_m, the L²(I×Ω) inner product of two fields.
    pub fn inner(&self, ctx: &FeContext, other: &SpaceTimeField) -> Result<f64> {
        self.check_compatible(other)?;
        let mass = ctx.mass(self.kind);
        if mass.nrows() != self.dofs() {
            return Err(Error::DimensionMismatch {
                expected: mass.nrows(),
                found: self.dofs(),
            });
        }
        Ok((1..=self.intervals())
            .map(|m| self.grid.tau(m) * mass.bilinear(self.on(m), other.on(m)))
            .sum())
    }

    pub fn norm(&self, ctx: &FeContext) -> Result<f64> {
        Ok(self.inner(ctx, self)?.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.tau(3), 0.125);
        assert_eq!(g.interval(1), (0.0, 0.125));
        assert!(((1..=8).map(|m| g.tau(m)).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::uniform(-1.0, 2).is_err());
    }

    #[test]
    fn breakpoints_validated() {
        assert!(TimeGrid::from_breakpoints(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::from_breakpoints(vec![0.1, 1.0]).is_err());
        let g = TimeGrid::from_breakpoints(vec![0.0, 0.1, 0.4, 1.0]).unwrap();
        assert!((g.max_tau() - 0.6).abs() < 1e-15);
        let r = g.reversed();
        assert!((r.tau(1) - 0.6).abs() < 1e-15 && (r.tau(3) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn field_semantics() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let mut f = SpaceTimeField::from_coeffs(
            &g,
            SpaceKind::FreeP1,
            vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
        )
        .unwrap();
        assert_eq!(f.at_time(0.25), &[1.0]);
        assert_eq!(f.at_time(0.26), &[2.0]);
        assert_eq!(f.at_time(1.0), &[4.0]);
        assert_eq!(f.jump(1), Some(vec![1.0]));
        assert_eq!(f.jump(0), None);
        f.initial_trace = Some(vec![0.5]);
        assert_eq!(f.jump(0), Some(vec![0.5]));
        assert_eq!(f.jump(4), None);
    }
}
