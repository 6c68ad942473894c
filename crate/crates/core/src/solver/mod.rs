//! Multilayer convex-NMF unmixing with L2,1 loss, L1/2 sparsity and a
//! total-variation prior on the abundances.
//!
//! The model is `X ≈ Φ·W_1⋯W_L·S` with a candidate pool `Φ`, nonnegative
//! layer weights `W_l` and abundances `S`. The TV prior acts on an
//! auxiliary copy `L` of `S`; the two are coupled by a quadratic penalty
//! with multiplier `Δ` and a geometrically growing weight `μ`.
//!
//! Each outer iteration runs, in order: one multiplicative step per layer
//! weight, one multiplicative step on `S`, a TV prox per abundance row for
//! `L`, the multiplier step `Δ ← Δ + μ(S − L)` and `μ ← min(ρμ, μ_max)`.
//! The loop stops at the first iteration with `‖S − L‖_∞ < ε` or after
//! `t_max` iterations.

mod gram;
mod rules;

pub use rules::{
    cost, endmembers, row_weights, update_l, update_mu, update_multiplier, update_s,
    update_w_layer, SUpdateParams,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::hsi_data::Mat;
use crate::seeds::rng;
use crate::tv_prox::TvDual;
use gram::GramCache;
use rules::weight_product;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub num_layers: usize,
    /// TV weight.
    pub alpha: f64,
    /// L1/2 sparsity weight.
    pub lambda: f64,
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    pub t_max: usize,
    /// Stop when `‖S − L‖_∞` drops below this. `f64::INFINITY` stops after
    /// the first iteration.
    pub eps_stop: f64,
    /// Guard for divisions, the `D`/`H` weights and `S^{-1/2}`.
    pub eps_div: f64,
    /// Weight of the appended sum-to-one row in the `S` step; 0 disables.
    pub asc_delta: f64,
    pub tv_inner_iters: usize,
    pub seed: u64,
    pub init: WeightInit,
}

/// Starting point for the layer weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightInit {
    /// Every entry uniform on `(0, 1]`, scaled by the inverse row count.
    Random,
    /// `W_1` picks the first `M` candidate columns, deeper layers start at
    /// the identity. A small uniform floor keeps every entry positive.
    #[default]
    Candidates,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            alpha: 0.01,
            lambda: 0.01,
            mu0: 0.01,
            rho: 1.1,
            mu_max: 1000.0,
            t_max: 500,
            eps_stop: 1e-3,
            eps_div: 1e-12,
            asc_delta: 20.0,
            tv_inner_iters: 20,
            seed: 0,
            init: WeightInit::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(UnmixError::InvalidParameter(msg));
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return bad(format!("mu0 must be positive, got {}", self.mu0));
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return bad(format!("rho must be >= 1, got {}", self.rho));
        }
        if !(self.mu_max >= self.mu0 && self.mu_max.is_finite()) {
            return bad(format!(
                "mu_max must be finite and >= mu0, got {}",
                self.mu_max
            ));
        }
        if self.t_max == 0 {
            return bad("t_max must be at least 1".into());
        }
        if !(self.eps_stop > 0.0) {
            return bad(format!("eps_stop must be positive, got {}", self.eps_stop));
        }
        if !(self.eps_div > 0.0 && self.eps_div.is_finite()) {
            return bad(format!("eps_div must be positive, got {}", self.eps_div));
        }
        if !(self.asc_delta >= 0.0 && self.asc_delta.is_finite()) {
            return bad(format!("asc_delta must be >= 0, got {}", self.asc_delta));
        }
        if self.tv_inner_iters == 0 {
            return bad("tv_inner_iters must be at least 1".into());
        }
        Ok(())
    }
}

/// Mutable state of the outer loop.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// `W_1` is `K × M`, the rest `M × M`.
    pub w_stack: Vec<Mat>,
    pub s: Mat,
    pub l_aux: Mat,
    pub delta: Mat,
    pub mu: f64,
    /// Completed outer iterations.
    pub iter: usize,
    pub cost_trace: Vec<f64>,
    tv_duals: Vec<TvDual>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iter: usize,
    /// Three-term objective after the iteration.
    pub cost: f64,
    /// `‖S − L‖_∞` after the iteration.
    pub gap: f64,
    /// Penalty weight used during the iteration.
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct UnmixResult {
    /// `B × M`, equal to `endmembers(phi, &w_stack)`.
    pub a: Mat,
    /// `M × P`.
    pub s: Mat,
    pub w_stack: Vec<Mat>,
    pub cost_trace: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    pub iterations_run: usize,
    pub termination: Termination,
    /// Objective at the initial state.
    pub initial_cost: f64,
}

/// Step-by-step driver of the unmixing loop.
pub struct Solver<'a> {
    phi: &'a Mat,
    rows: usize,
    cols: usize,
    cfg: SolverConfig,
    gram: GramCache,
    state: SolverState,
    trace: Vec<IterationRecord>,
    initial_cost: f64,
}

impl<'a> Solver<'a> {
    pub fn new(
        x: &'a Mat,
        phi: &'a Mat,
        endmembers: usize,
        rows: usize,
        cols: usize,
        cfg: SolverConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let m = endmembers;
        if m == 0 {
            return Err(UnmixError::InvalidParameter(
                "need at least one endmember".into(),
            ));
        }
        if phi.nrows() != x.nrows() {
            return Err(UnmixError::Shape(format!(
                "Φ has {} bands, data has {}",
                phi.nrows(),
                x.nrows()
            )));
        }
        if phi.ncols() < m {
            return Err(UnmixError::InvalidParameter(format!(
                "Φ has {} candidates, need at least M = {m}",
                phi.ncols()
            )));
        }
        if x.ncols() != rows * cols {
            return Err(UnmixError::Shape(format!(
                "{} pixels do not fit a {rows}x{cols} grid",
                x.ncols()
            )));
        }
        crate::hsi_data::check_finite(x.as_slice())?;
        crate::hsi_data::check_finite(phi.as_slice())?;

        let state = init_state(phi.ncols(), m, x.ncols(), rows, cols, &cfg);
        let gram = GramCache::new(x, phi, cfg.eps_div);
        let initial_cost = gram.cost(
            &weight_product(&state.w_stack),
            &state.s,
            cfg.alpha,
            cfg.lambda,
            rows,
            cols,
        )?;
        Ok(Self {
            phi,
            rows,
            cols,
            cfg,
            gram,
            state,
            trace: Vec::new(),
            initial_cost,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn initial_cost(&self) -> f64 {
        self.initial_cost
    }

    /// Runs one outer iteration and returns its trace record.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let cfg = &self.cfg;
        let st = &mut self.state;
        let iteration = st.iter + 1;
        let layers = st.w_stack.len();

        for l in 0..layers {
            let prefix = (l > 0).then(|| weight_product(&st.w_stack[..l]));
            let mut v = st.s.clone();
            for w in st.w_stack[l + 1..].iter().rev() {
                v = w * v;
            }
            st.w_stack[l] = self
                .gram
                .update_w_layer(prefix.as_ref(), &st.w_stack[l], &v);
            ensure_finite(&st.w_stack[l], iteration, "W")?;
        }

        let wall = weight_product(&st.w_stack);
        st.s = self.gram.update_s(
            &wall,
            &st.s,
            &st.l_aux,
            &st.delta,
            SUpdateParams {
                mu: st.mu,
                lambda: cfg.lambda,
                eps_div: cfg.eps_div,
                asc_delta: cfg.asc_delta,
            },
        );
        ensure_finite(&st.s, iteration, "S")?;

        st.l_aux = update_l(
            &st.s,
            &st.delta,
            st.mu,
            cfg.alpha,
            self.rows,
            self.cols,
            cfg.tv_inner_iters,
            &mut st.tv_duals,
        )?;
        ensure_finite(&st.l_aux, iteration, "L")?;

        st.delta = update_multiplier(&st.delta, st.mu, &st.s, &st.l_aux)?;
        ensure_finite(&st.delta, iteration, "Delta")?;

        let mu_used = st.mu;
        st.mu = update_mu(st.mu, cfg.rho, cfg.mu_max);
        st.iter = iteration;

        debug_assert!(st.w_stack.iter().all(|w| w.iter().all(|&v| v >= 0.0)));
        debug_assert!(st.s.iter().all(|&v| v >= 0.0));
        debug_assert!(st.l_aux.iter().all(|&v| v >= 0.0));

        let c = self
            .gram
            .cost(&wall, &st.s, cfg.alpha, cfg.lambda, self.rows, self.cols)?;
        if !c.is_finite() {
            return Err(UnmixError::NonFiniteState {
                iteration,
                matrix: "cost",
            });
        }
        st.cost_trace.push(c);
        let gap = (&st.s - &st.l_aux).amax();
        let rec = IterationRecord {
            iter: iteration,
            cost: c,
            gap,
            mu: mu_used,
        };
        self.trace.push(rec);
        Ok(rec)
    }

    /// True once the stopping rule holds for the last completed iteration.
    pub fn converged(&self) -> bool {
        self.trace
            .last()
            .is_some_and(|r| r.gap < self.cfg.eps_stop || self.cfg.eps_stop.is_infinite())
    }

    pub fn run(mut self) -> Result<UnmixResult> {
        let mut termination = Termination::MaxIter;
        while self.state.iter < self.cfg.t_max {
            self.step()?;
            if self.converged() {
                termination = Termination::Converged;
                break;
            }
        }
        Ok(self.finish(termination))
    }

    fn finish(self, termination: Termination) -> UnmixResult {
        let st = self.state;
        let a = endmembers(self.phi, &st.w_stack);
        let mut s = st.s;
        if self.cfg.asc_delta > 0.0 {
            for mut c in s.column_iter_mut() {
                let total = c.sum();
                if total > 0.0 {
                    c /= total;
                }
            }
        }
        UnmixResult {
            a,
            s,
            w_stack: st.w_stack,
            cost_trace: st.cost_trace,
            trace: self.trace,
            iterations_run: st.iter,
            termination,
            initial_cost: self.initial_cost,
        }
    }
}

fn ensure_finite(m: &Mat, iteration: usize, matrix: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(UnmixError::NonFiniteState { iteration, matrix })
    }
}

/// Off-pattern mass in the `Candidates` start.
const INIT_FLOOR: f64 = 0.05;

fn init_state(
    k: usize,
    m: usize,
    p: usize,
    rows: usize,
    cols: usize,
    cfg: &SolverConfig,
) -> SolverState {
    let mut g = rng(cfg.seed);
    // uniform on (0, 1]
    let mut draw = move || 1.0 - g.gen::<f64>();
    let mut w_stack = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let r = if l == 0 { k } else { m };
        w_stack.push(match cfg.init {
            WeightInit::Random => Mat::from_fn(r, m, |_, _| draw() / r as f64),
            WeightInit::Candidates => Mat::from_fn(r, m, |i, j| {
                let floor = INIT_FLOOR * draw() / r as f64;
                if i == j {
                    1.0 + floor
                } else {
                    floor
                }
            }),
        });
    }
    let mut s = Mat::from_fn(m, p, |_, _| draw());
    for mut c in s.column_iter_mut() {
        let total = c.sum();
        c /= total;
    }
    SolverState {
        w_stack,
        l_aux: s.clone(),
        delta: Mat::zeros(m, p),
        s,
        mu: cfg.mu0,
        iter: 0,
        cost_trace: Vec::new(),
        tv_duals: vec![TvDual::zeros(rows, cols); m],
    }
}

/// Runs the full loop.
pub fn solve(
    x: &Mat,
    phi: &Mat,
    endmembers: usize,
    rows: usize,
    cols: usize,
    cfg: &SolverConfig,
) -> Result<UnmixResult> {
    Solver::new(x, phi, endmembers, rows, cols, cfg.clone())?.run()
}
