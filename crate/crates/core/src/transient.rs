//! Transient cavity process of LL(d) started from the empty system.
//!
//! The state is the atom `F(t, 0)` at zero workload plus cell masses `p_k`, where cell `k`
//! holds workload in `(k h, (k + 1) h]`. One step of length `delta = h`
//!
//! 1. lets arrivals join: cell `k` loses `delta lambda (Fbar_k^d - Fbar_{k+1}^d)`, the atom loses
//!    `delta lambda (1 - Fbar_0^d)`, and the joined mass lands `X` further up;
//! 2. shifts every cell down by one, cell 0 draining into the atom.
//!
//! This is the explicit Euler scheme of the cavity equations with the time step tied to the
//! grid. Mass is conserved exactly except for jobs landing beyond the last cell, which are
//! counted separately.

use crate::conv::Convolver;
use crate::curve::{kolmogorov_distance, CcdfCurve};
use crate::error::{Error, Result};
use crate::jobsize::JobSizeLaw;
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct TransientState {
    pub t: f64,
    h: f64,
    /// `F(t, 0)`.
    pub atom: f64,
    cells: Vec<f64>,
    /// Mass that landed beyond the grid.
    pub lost: f64,
    /// `f(t, 0+)`, the density of workload just above zero.
    pub boundary_density: f64,
}

impl TransientState {
    /// All servers idle: `F(0, 0) = 1`, no density above zero.
    pub fn empty(h: f64, smax: f64) -> Result<Self> {
        if !(h > 0.0) || !(smax > h) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < h < smax, got h = {h}, smax = {smax}"
            )));
        }
        let n = (smax / h).round() as usize;
        Ok(Self {
            t: 0.0,
            h,
            atom: 1.0,
            cells: vec![0.0; n],
            lost: 0.0,
            boundary_density: 0.0,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// `F(t, 0) + int f(t, s) ds`.
    pub fn mass(&self) -> f64 {
        self.atom + self.cells.iter().sum::<f64>()
    }

    /// `Fbar(t, k h)` for `k = 0..=n`.
    pub fn ccdf(&self) -> CcdfCurve {
        let n = self.cells.len();
        let mut v = vec![0.0; n + 1];
        let mut acc = 0.0;
        for k in (0..n).rev() {
            acc += self.cells[k];
            v[k] = acc;
        }
        CcdfCurve::new(self.h, v).expect("non-empty grid")
    }
}

enum Landing {
    /// `q_m = alpha E^{m-1} w` for `m >= 2` with `E = exp(A h)`, `w = exp(A h / 2)(I - E) 1`.
    Ph {
        n: usize,
        alpha: Vec<f64>,
        e: Vec<f64>,
        ew: Vec<f64>,
        q1: f64,
    },
    Table(Convolver),
}

/// Explicit stepper with precomputed landing kernels.
pub struct TransientStepper {
    p: ModelParams,
    h: f64,
    len: usize,
    /// `P(X in (i h, (i + 1) h])`, landing from the atom.
    from_atom: Vec<f64>,
    landing: Landing,
    pw: Vec<f64>,
    joins: Vec<f64>,
    inflow: Vec<f64>,
}

fn mat_vec(n: usize, m: &[f64], v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = (0..n).map(|j| m[i * n + j] * v[j]).sum();
    }
}

impl TransientStepper {
    pub fn new(law: &JobSizeLaw, p: ModelParams, h: f64, len: usize) -> Self {
        let from_atom: Vec<f64> = (0..len)
            .map(|i| law.cdf((i + 1) as f64 * h) - law.cdf(i as f64 * h))
            .collect();
        let q1 = law.cdf(1.5 * h);
        let landing = match law.as_ph() {
            Ok(ph) => {
                let n = ph.order();
                let a = ph.generator();
                let e = (a * h).exp();
                let half = (a * (0.5 * h)).exp();
                let ones = nalgebra::DVector::from_element(n, 1.0);
                let w = &half * (&ones - &e * &ones);
                let ew = &e * w;
                Landing::Ph {
                    n,
                    alpha: ph.alpha().iter().copied().collect(),
                    e: e.transpose().iter().copied().collect(),
                    ew: ew.iter().copied().collect(),
                    q1,
                }
            }
            Err(_) => {
                let mut kernel = vec![0.0; len];
                if len > 1 {
                    kernel[1] = q1;
                }
                for (m, slot) in kernel.iter_mut().enumerate().skip(2) {
                    *slot = law.cdf((m as f64 + 0.5) * h) - law.cdf((m as f64 - 0.5) * h);
                }
                Landing::Table(Convolver::new(&kernel, len, len))
            }
        };
        Self {
            p,
            h,
            len,
            from_atom,
            landing,
            pw: vec![0.0; len + 1],
            joins: vec![0.0; len],
            inflow: vec![0.0; len],
        }
    }

    fn inflow(&self, joins: &[f64], out: &mut [f64]) {
        match &self.landing {
            Landing::Table(conv) => out.copy_from_slice(&conv.apply(joins)),
            Landing::Ph { n, alpha, e, ew, q1 } => {
                let n = *n;
                out[0] = 0.0;
                if n == 1 {
                    let (e, ew, a) = (e[0], ew[0], alpha[0]);
                    let mut v = 0.0;
                    for i in 1..self.len {
                        if i >= 2 {
                            v = e * v + joins[i - 2] * ew;
                        }
                        out[i] = joins[i - 1] * q1 + a * v;
                    }
                    return;
                }
                let mut v = vec![0.0; n];
                let mut tmp = vec![0.0; n];
                for i in 1..self.len {
                    if i >= 2 {
                        mat_vec(n, e, &v, &mut tmp);
                        for r in 0..n {
                            v[r] = tmp[r] + joins[i - 2] * ew[r];
                        }
                    }
                    let tail: f64 = alpha.iter().zip(&v).map(|(a, x)| a * x).sum();
                    out[i] = joins[i - 1] * q1 + tail;
                }
            }
        }
    }

    pub fn step(&mut self, state: &mut TransientState) -> Result<()> {
        if state.cells.len() != self.len || (state.h - self.h).abs() > 1e-12 * self.h {
            return Err(Error::GridMismatch("state and stepper grids differ".into()));
        }
        let d = self.p.d as i32;
        let lambda = self.p.lambda;
        let delta = self.h;
        let mut acc = 0.0;
        self.pw[self.len] = 0.0;
        for k in (0..self.len).rev() {
            acc += state.cells[k];
            self.pw[k] = acc.powi(d);
        }
        for k in 0..self.len {
            self.joins[k] = lambda * (self.pw[k] - self.pw[k + 1]);
        }
        let j0 = lambda * (1.0 - self.pw[0]);
        let mut inflow = std::mem::take(&mut self.inflow);
        self.inflow(&self.joins, &mut inflow);
        let landed: f64 = delta * (j0 + self.joins.iter().sum::<f64>());
        let mut kept = 0.0;
        for (k, cell) in state.cells.iter_mut().enumerate().take(self.len) {
            let add = delta * (inflow[k] + j0 * self.from_atom[k]);
            kept += add;
            *cell += add - delta * self.joins[k];
        }
        self.inflow = inflow;
        state.atom -= delta * j0;
        state.lost += (landed - kept).max(0.0);
        state.atom += state.cells[0];
        state.cells.rotate_left(1);
        *state.cells.last_mut().expect("non-empty") = 0.0;
        state.boundary_density = j0;
        state.t += delta;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub curve: CcdfCurve,
    pub boundary_density: f64,
    pub mass: f64,
    /// Kolmogorov distance to the reference curve, when one was given.
    pub distance: Option<f64>,
}

/// Advances `initial` with step `dt` (which must equal the grid step) and records the ccdf
/// at every requested stamp not later than `t_end`.
pub fn evolve_transient(
    initial: &TransientState,
    law: &JobSizeLaw,
    p: &ModelParams,
    dt: f64,
    t_end: f64,
    stamps: &[f64],
    reference: Option<&CcdfCurve>,
) -> Result<Vec<Snapshot>> {
    let h = initial.h;
    if (dt - h).abs() > 1e-12 * h {
        return Err(Error::InvalidParameter(format!(
            "time step {dt} must equal the grid step {h}"
        )));
    }
    if !(t_end >= 0.0) || stamps.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::InvalidParameter("times must be nonnegative".into()));
    }
    let mut stepper = TransientStepper::new(law, *p, h, initial.cells.len());
    let mut state = initial.clone();
    let mut stamps: Vec<f64> = stamps.iter().copied().filter(|&t| t <= t_end).collect();
    stamps.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(stamps.len());
    let snap = |s: &TransientState| -> Result<Snapshot> {
        let curve = s.ccdf();
        let distance = match reference {
            Some(r) => Some(kolmogorov_distance(&curve, r)?),
            None => None,
        };
        Ok(Snapshot {
            t: s.t,
            curve,
            boundary_density: s.boundary_density,
            mass: s.mass(),
            distance,
        })
    };
    let mut step = 0usize;
    for &target in &stamps {
        let steps = (target / h).round() as usize;
        while step < steps {
            stepper.step(&mut state)?;
            step += 1;
        }
        out.push(snap(&state)?);
    }
    Ok(out)
}

/// One step from `state`.
pub fn transient_step(state: &mut TransientState, law: &JobSizeLaw, p: &ModelParams, dt: f64) -> Result<()> {
    if (dt - state.h).abs() > 1e-12 * state.h {
        return Err(Error::InvalidParameter(format!(
            "time step {dt} must equal the grid step {}",
            state.h
        )));
    }
    TransientStepper::new(law, *p, state.h, state.cells.len()).step(state)
}
