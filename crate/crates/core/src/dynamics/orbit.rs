use serde::{Deserialize, Serialize};

use super::{
    check_start, into_trajectory, propagate, relative_residual, CovarianceState, Drive, FullSystem, Model,
    Propagated, ReducedSystem, StepGrid, System, Trajectory,
};
use crate::error::{Error, Result};
use crate::ode::OdeOptions;
use crate::params::EngineParams;
use crate::profiles::TemperatureProfile;
use crate::synthesis::Protocol;

/// How the fixed point of the cycle map is searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitMethod {
    /// Iterate the cycle map, switching to damped updates when the
    /// residual stops decreasing.
    FixedPoint,
    /// Newton steps with a finite-difference Jacobian of the cycle map.
    /// The covariance equations are linear, so the map is affine and one
    /// step lands on the orbit up to integration error.
    #[default]
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitOptions {
    pub ode: OdeOptions,
    /// Relative max-norm tolerance on state(t_f⁺) − state(0⁺).
    pub orbit_tol: f64,
    /// Budget of one-period integrations.
    pub max_cycles: usize,
    pub method: OrbitMethod,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            orbit_tol: 1e-9,
            max_cycles: 10_000,
            method: OrbitMethod::default(),
        }
    }
}

/// Converged periodic steady state.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub state0: CovarianceState,
    pub trajectory: Trajectory,
    /// One-period integrations spent, including the final recorded one.
    pub cycles: usize,
    pub residual: f64,
}

struct Search<'a, const N: usize, S: System<N>> {
    drive: Drive<'a>,
    opts: &'a OrbitOptions,
    grid: StepGrid,
    cycles: usize,
    best: Option<([f64; N], f64)>,
    _system: std::marker::PhantomData<S>,
}

impl<const N: usize, S: System<N>> Search<'_, N, S> {
    fn budget(&self) -> Result<()> {
        if self.cycles >= self.opts.max_cycles {
            let residual = self.best.map_or(f64::INFINITY, |b| b.1);
            return Err(Error::NoConvergence {
                cycles: self.cycles,
                residual,
            });
        }
        Ok(())
    }

    /// One period on the frozen grid.
    fn map(&mut self, x: &[f64; N]) -> Result<[f64; N]> {
        self.budget()?;
        self.cycles += 1;
        Ok(propagate::<N, S>(&self.drive, *x, &self.opts.ode, Some(&self.grid), false)?.y)
    }

    /// One adaptive period from `x`, whose steps become the frozen grid.
    fn regrid(&mut self, x: &[f64; N]) -> Result<Propagated<N>> {
        self.budget()?;
        self.cycles += 1;
        let run = propagate::<N, S>(&self.drive, *x, &self.opts.ode, None, true)?;
        self.grid = run.grid();
        Ok(run)
    }

    fn solve(&mut self, x: [f64; N]) -> Result<[f64; N]> {
        self.best = None;
        match self.opts.method {
            OrbitMethod::FixedPoint => self.fixed_point(x),
            OrbitMethod::Newton => self.newton(x),
        }
    }

    /// Residual of `x`, remembering the best point seen.
    fn residual(&mut self, x: &[f64; N], fx: &[f64; N]) -> f64 {
        let r = relative_residual::<N, S>(x, fx);
        if self.best.is_none_or(|b| r < b.1) {
            self.best = Some((*x, r));
        }
        r
    }

    fn fixed_point(&mut self, mut x: [f64; N]) -> Result<[f64; N]> {
        let mut damping = 1.0;
        let mut previous = f64::INFINITY;
        let mut growth = 0;
        loop {
            let fx = self.map(&x)?;
            let r = self.residual(&x, &fx);
            if r <= self.opts.orbit_tol {
                return Ok(x);
            }
            if r >= previous {
                growth += 1;
                if growth >= 3 {
                    damping *= 0.5;
                    growth = 0;
                }
            } else {
                growth = 0;
            }
            previous = r;
            let next: [f64; N] = std::array::from_fn(|i| x[i] + damping * (fx[i] - x[i]));
            x = if S::admissible(&next) { next } else { fx };
        }
    }

    fn newton(&mut self, mut x: [f64; N]) -> Result<[f64; N]> {
        let mut previous = f64::INFINITY;
        loop {
            let fx = self.map(&x)?;
            let r = self.residual(&x, &fx);
            if r <= self.opts.orbit_tol {
                return Ok(x);
            }
            if r > 0.5 * previous {
                return self.fixed_point(x);
            }
            previous = r;
            // Jacobian columns from perturbations along each coordinate,
            // sized relative to the state so the map stays well resolved.
            let scales = S::scales(&x);
            let mut jac = [[0.0; N]; N];
            for j in 0..N {
                let delta = 1e-3 * scales[j].max(f64::MIN_POSITIVE);
                let mut xp = x;
                xp[j] += delta;
                if !S::admissible(&xp) {
                    xp[j] = x[j] - delta;
                }
                let fp = self.map(&xp)?;
                let step = xp[j] - x[j];
                for i in 0..N {
                    jac[i][j] = (fp[i] - fx[i]) / step;
                }
            }
            // Solve (I − J) d = F(x) − x.
            let mut a = [[0.0; N]; N];
            for i in 0..N {
                for j in 0..N {
                    a[i][j] = if i == j { 1.0 } else { 0.0 } - jac[i][j];
                }
            }
            let rhs: [f64; N] = std::array::from_fn(|i| fx[i] - x[i]);
            let d = match solve_linear(a, rhs) {
                Some(d) => d,
                None => return self.fixed_point(fx),
            };
            let mut lambda = 1.0;
            let mut next: [f64; N] = std::array::from_fn(|i| x[i] + d[i]);
            while !S::admissible(&next) && lambda > 1e-3 {
                lambda *= 0.5;
                next = std::array::from_fn(|i| x[i] + lambda * d[i]);
            }
            x = if S::admissible(&next) { next } else { fx };
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_linear<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= factor * p;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn search<const N: usize, S: System<N>>(drive: Drive, guess: [f64; N], opts: &OrbitOptions) -> Result<PeriodicOrbit> {
    check_start::<N, S>(&drive, &guess, &opts.ode)?;
    if !(opts.orbit_tol > 0.0) {
        return Err(Error::InvalidParams(format!("orbit_tol must be positive, got {}", opts.orbit_tol)));
    }
    let mut s: Search<N, S> = Search {
        drive,
        opts,
        grid: Vec::new(),
        cycles: 0,
        best: None,
        _system: std::marker::PhantomData,
    };
    // The search runs on a frozen step grid so the cycle map is a fixed
    // affine map; a second pass re-derives the grid at the converged state.
    // An adaptive pass that already closes the orbit is accepted as is.
    let mut x = guess;
    for pass in 0..2 {
        let run = s.regrid(&x)?;
        let r = s.residual(&x, &run.y);
        if r <= opts.orbit_tol {
            return Ok(finish::<N, S>(&drive, x, run, s.cycles));
        }
        x = s.solve(x)?;
        if pass == 1 {
            s.budget()?;
            let run = propagate::<N, S>(&drive, x, &opts.ode, Some(&s.grid), true)?;
            return Ok(finish::<N, S>(&drive, x, run, s.cycles + 1));
        }
    }
    unreachable!("the second pass always returns")
}

fn finish<const N: usize, S: System<N>>(drive: &Drive, x: [f64; N], run: Propagated<N>, cycles: usize) -> PeriodicOrbit {
    let trajectory = into_trajectory::<N, S>(drive, x, run);
    PeriodicOrbit {
        state0: trajectory.start(),
        residual: trajectory.periodicity_residual(),
        trajectory,
        cycles,
    }
}

/// Locates the periodic steady state of the chosen model from `guess`
/// (the reduced model reads only `guess.sigma_v`).
pub fn find_periodic_orbit(
    model: Model,
    profile: &TemperatureProfile,
    protocol: &Protocol,
    params: &EngineParams,
    guess: CovarianceState,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    let drive = Drive {
        profile,
        protocol,
        params,
    };
    match model {
        Model::Reduced => search::<1, ReducedSystem>(drive, [guess.sigma_v], opts),
        Model::Full => search::<3, FullSystem>(drive, guess.to_array(), opts),
    }
}
