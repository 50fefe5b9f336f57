//! Adaptive Metropolis-within-Gibbs over coefficients, effect entries,
//! log-precisions and log-dispersion.
//!
//! Besides the scalar updates each sweep performs two kinds of joint moves
//! that leave the target invariant:
//!
//! * a scale move per precision, `τ → τ e^δ` with the effects it governs
//!   rescaled by `e^{−δ/2}` (the prior-ratio and Jacobian terms cancel), and
//! * likelihood-preserving ridge moves that shift a coefficient and
//!   compensate in the effect block indexed like its covariate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::MCMCConfig;
use super::posterior::flatten_into;
use super::problem::Problem;
use crate::error::{Error, Result};
use crate::likelihood::{DispersionCache, ObservationTarget};
use crate::model::{CoefficientPrior, EffectIndex, EffectPrior, Family, ParameterState, PriorSpec};
use crate::stats::logit;

const TARGET_ACCEPTANCE: f64 = 0.44;

#[derive(Debug, Clone)]
struct Adaptive {
    log_scale: f64,
    accepted: u32,
    proposed: u32,
}

impl Adaptive {
    fn new(scale: f64) -> Self {
        Adaptive {
            log_scale: scale.ln(),
            accepted: 0,
            proposed: 0,
        }
    }

    fn step(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.log_scale.exp() * z
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u32::from(accepted);
    }

    fn adapt(&mut self, batch: usize) {
        if self.proposed > 0 {
            let rate = f64::from(self.accepted) / f64::from(self.proposed);
            self.log_scale = (self.log_scale + (rate - TARGET_ACCEPTANCE) / (batch as f64).sqrt())
                .clamp(-20.0, 5.0);
        }
        self.accepted = 0;
        self.proposed = 0;
    }
}

/// Post-burn-in acceptance rates by move type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceRates {
    pub coefficients: f64,
    pub effects: f64,
    pub precisions: f64,
    pub scale_moves: f64,
    pub ridge_moves: f64,
    pub dispersion: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    accepted: u64,
    proposed: u64,
}

impl Tally {
    fn add(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    fn rate(self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Coefficient `coef` of predictor `predictor` moves by `δ`; effect block
/// `block` by `δ · direction`; the intercept by `δ · intercept_shift`.
/// The linear predictor is unchanged.
#[derive(Debug, Clone)]
struct Ridge {
    predictor: usize,
    coef: usize,
    block: usize,
    direction: Vec<f64>,
    intercept_shift: f64,
}

pub(crate) struct ChainOutput {
    pub draws: Vec<f64>,
    pub deviance: Vec<f64>,
    pub acceptance: AcceptanceRates,
}

struct Chain<'a> {
    p: &'a Problem,
    family: Family,
    prior_only: bool,
    has_intercept: bool,
    rng: ChaCha8Rng,
    state: ParameterState,
    eta: Vec<Vec<f64>>,
    ll: Vec<f64>,
    disp: DispersionCache,
    new_ll: Vec<f64>,
    new_eta: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    /// Pairwise-difference neighbours for ICAR / RW1 blocks.
    neighbors: Vec<Option<Vec<Vec<usize>>>>,
    ridges: Vec<Ridge>,
    coef_adapt: Vec<Vec<Adaptive>>,
    effect_adapt: Vec<Vec<Adaptive>>,
    precision_adapt: Vec<Adaptive>,
    scale_adapt: Vec<Adaptive>,
    ridge_adapt: Vec<Adaptive>,
    dispersion_adapt: Adaptive,
    tallies: [Tally; 6],
}

impl<'a> Chain<'a> {
    fn new(p: &'a Problem, state: ParameterState, rng: ChaCha8Rng, prior_only: bool) -> Self {
        let layout = &p.layout;
        let n = p.num_cells();
        let neighbors = layout
            .blocks
            .iter()
            .enumerate()
            .map(|(b, block)| {
                let len = p.block_rows[b].len();
                match block.prior {
                    EffectPrior::Icar => {
                        let g = p.graph.as_ref().expect("validated");
                        Some((0..len).map(|i| g.neighbors(i).to_vec()).collect())
                    }
                    EffectPrior::Rw1 => Some(
                        (0..len)
                            .map(|t| {
                                let mut nb = Vec::with_capacity(2);
                                if t > 0 {
                                    nb.push(t - 1);
                                }
                                if t + 1 < len {
                                    nb.push(t + 1);
                                }
                                nb
                            })
                            .collect(),
                    ),
                    _ => None,
                }
            })
            .collect();
        let ridges = build_ridges(p);
        let mut chain = Chain {
            p,
            family: p.family(),
            prior_only,
            has_intercept: p.design.has_intercept(),
            rng,
            eta: vec![vec![0.0; n]; layout.num_predictors],
            ll: vec![0.0; n],
            disp: DispersionCache::new(state.dispersion),
            new_ll: vec![0.0; n],
            new_eta: vec![vec![0.0; n]; layout.num_predictors],
            scratch: Vec::new(),
            neighbors,
            coef_adapt: vec![
                vec![Adaptive::new(0.1); p.design.num_columns()];
                layout.num_predictors
            ],
            effect_adapt: p
                .block_rows
                .iter()
                .map(|r| vec![Adaptive::new(0.1); r.len()])
                .collect(),
            precision_adapt: vec![Adaptive::new(1.0); layout.precision_names.len()],
            scale_adapt: vec![Adaptive::new(0.3); layout.precision_names.len()],
            ridge_adapt: vec![Adaptive::new(0.1); ridges.len()],
            ridges,
            dispersion_adapt: Adaptive::new(0.3),
            tallies: [Tally::default(); 6],
            state,
        };
        chain.refresh();
        chain
    }

    /// Recomputes the cached linear predictors and cell log-likelihoods.
    fn refresh(&mut self) {
        self.eta = self.p.linear_predictors(&self.state);
        for i in 0..self.ll.len() {
            self.ll[i] = self.eval(i, self.eta[0][i], self.eta_1(i));
        }
    }

    #[inline]
    fn eta_1(&self, i: usize) -> f64 {
        if self.eta.len() > 1 {
            self.eta[1][i]
        } else {
            0.0
        }
    }

    #[inline]
    fn eval(&self, i: usize, eta0: f64, eta1: f64) -> f64 {
        self.p.kernels[i].eval(self.family, eta0, eta1, &self.disp)
    }

    /// Log-likelihood at row `i` with predictor `l` shifted by `d`.
    #[inline]
    fn eval_shifted(&self, l: usize, i: usize, d: f64) -> f64 {
        let (mut e0, mut e1) = (self.eta[0][i], self.eta_1(i));
        if l == 0 {
            e0 += d;
        } else {
            e1 += d;
        }
        self.eval(i, e0, e1)
    }

    fn accept(&mut self, log_ratio: f64) -> bool {
        let u: f64 = self.rng.random();
        u.ln() < log_ratio
    }

    fn coefficient_prior(&self, c: usize) -> CoefficientPrior {
        if c == 0 && self.has_intercept {
            self.p.spec.priors.intercept_prior
        } else {
            self.p.spec.priors.slope_prior()
        }
    }

    fn sweep(&mut self) {
        let layout = &self.p.layout;
        for l in 0..layout.num_predictors {
            for c in 0..self.p.design.num_columns() {
                self.update_coefficient(l, c);
            }
        }
        for b in 0..layout.blocks.len() {
            for pos in 0..self.p.block_rows[b].len() {
                self.update_effect(b, pos);
            }
        }
        for r in 0..self.ridges.len() {
            self.ridge_move(r);
        }
        for k in 0..layout.precision_names.len() {
            self.update_precision(k);
            self.scale_move(k);
        }
        if self.state.dispersion.is_some() {
            self.update_dispersion();
        }
        self.recenter();
        self.refresh();
    }

    fn update_coefficient(&mut self, l: usize, c: usize) {
        let delta = self.coef_adapt[l][c].step(&mut self.rng);
        let old = self.state.coefficients[l][c];
        let prior = self.coefficient_prior(c);
        let mut log_ratio = prior.log_density(old + delta) - prior.log_density(old);
        let design = &self.p.design;
        let mut dll = 0.0;
        for i in 0..self.ll.len() {
            let x = design.value(i, c);
            let v = if x == 0.0 {
                self.ll[i]
            } else {
                self.eval_shifted(l, i, delta * x)
            };
            self.new_ll[i] = v;
            dll += v - self.ll[i];
        }
        if !self.prior_only {
            log_ratio += dll;
        }
        let accepted = self.accept(log_ratio);
        self.coef_adapt[l][c].record(accepted);
        self.tallies[0].add(accepted);
        if accepted {
            self.state.coefficients[l][c] = old + delta;
            for i in 0..self.ll.len() {
                self.eta[l][i] += delta * design.value(i, c);
            }
            std::mem::swap(&mut self.ll, &mut self.new_ll);
        }
    }

    fn latent_delta(&mut self, b: usize, pos: usize, delta: f64, tau: f64) -> f64 {
        let v = &self.state.effects[b];
        let vi = v[pos];
        match (&self.neighbors[b], self.p.layout.blocks[b].prior) {
            (Some(nb), _) => {
                let s: f64 = nb[pos]
                    .iter()
                    .map(|&k| 2.0 * delta * (vi - v[k]) + delta * delta)
                    .sum();
                -0.5 * tau * s
            }
            (None, EffectPrior::Iid) => -0.5 * tau * (2.0 * vi * delta + delta * delta),
            (None, _) => {
                self.scratch.clear();
                self.scratch.extend_from_slice(v);
                self.scratch[pos] += delta;
                self.p.block_log_density(b, &self.scratch, tau)
                    - self.p.block_log_density(b, v, tau)
            }
        }
    }

    fn update_effect(&mut self, b: usize, pos: usize) {
        let block = &self.p.layout.blocks[b];
        let l = block.predictor;
        let tau = self.state.precisions[block.precision];
        let centered = block.prior.is_centered();
        let delta = self.effect_adapt[b][pos].step(&mut self.rng);
        let len = self.p.block_rows[b].len() as f64;
        let mut log_ratio = self.latent_delta(b, pos, delta, tau);
        let rows = &self.p.block_rows[b][pos];
        let mut dll = 0.0;
        // centred blocks with an intercept: v_pos += δ, v −= δ/len, α += δ/len;
        // only rows indexed by `pos` see a change in η
        let global = centered && !self.has_intercept;
        if centered && self.has_intercept {
            let prior = self.coefficient_prior(0);
            let a = self.state.coefficients[l][0];
            log_ratio += prior.log_density(a + delta / len) - prior.log_density(a);
        }
        if global {
            for i in 0..self.ll.len() {
                let v = self.eval_shifted(l, i, -delta / len);
                self.new_ll[i] = v;
            }
            for &i in rows {
                self.new_ll[i] = self.eval_shifted(l, i, delta * (1.0 - 1.0 / len));
            }
            for i in 0..self.ll.len() {
                dll += self.new_ll[i] - self.ll[i];
            }
        } else {
            for &i in rows {
                let v = self.eval_shifted(l, i, delta);
                self.new_ll[i] = v;
                dll += v - self.ll[i];
            }
        }
        if !self.prior_only {
            log_ratio += dll;
        }
        let accepted = self.accept(log_ratio);
        self.effect_adapt[b][pos].record(accepted);
        self.tallies[1].add(accepted);
        if !accepted {
            return;
        }
        let values = &mut self.state.effects[b];
        values[pos] += delta;
        if centered {
            for v in values.iter_mut() {
                *v -= delta / len;
            }
        }
        if global {
            for i in 0..self.ll.len() {
                self.eta[l][i] -= delta / len;
            }
            for &i in rows {
                self.eta[l][i] += delta;
            }
            std::mem::swap(&mut self.ll, &mut self.new_ll);
        } else {
            if centered {
                self.state.coefficients[l][0] += delta / len;
            }
            for &i in rows {
                self.eta[l][i] += delta;
                self.ll[i] = self.new_ll[i];
            }
        }
    }

    fn quadratic_form(&self, b: usize, values: &[f64]) -> f64 {
        match self.p.layout.blocks[b].prior {
            EffectPrior::Icar => crate::latent::icar_quadratic_form(
                values,
                self.p.graph.as_ref().expect("validated"),
            ),
            EffectPrior::Rw1 => crate::latent::rw1_quadratic_form(values),
            EffectPrior::Ar1 { rho } => crate::latent::ar1_quadratic_form(values, rho),
            EffectPrior::Iid => values.iter().map(|v| v * v).sum(),
        }
    }

    fn hyperprior(&self, tau: f64) -> f64 {
        let pr = &self.p.spec.priors;
        PriorSpec::gamma_log_density(pr.precision_shape, pr.precision_rate, tau) + tau.ln()
    }

    /// Random-walk step on `log τ_k` given the effects.
    fn update_precision(&mut self, k: usize) {
        let delta = self.precision_adapt[k].step(&mut self.rng);
        let tau = self.state.precisions[k];
        let new = tau * delta.exp();
        let mut log_ratio = self.hyperprior(new) - self.hyperprior(tau);
        for b in 0..self.p.layout.blocks.len() {
            if self.p.layout.blocks[b].precision == k {
                let q = self.quadratic_form(b, &self.state.effects[b]);
                log_ratio += 0.5 * self.p.effect_rank(b) * delta - 0.5 * (new - tau) * q;
            }
        }
        let accepted = self.accept(log_ratio);
        self.precision_adapt[k].record(accepted);
        self.tallies[2].add(accepted);
        if accepted {
            self.state.precisions[k] = new;
        }
    }

    /// `τ → τ e^δ`, effects `→ e^{−δ/2} ×` effects.
    fn scale_move(&mut self, k: usize) {
        let delta = self.scale_adapt[k].step(&mut self.rng);
        let tau = self.state.precisions[k];
        let new = tau * delta.exp();
        let c = (-0.5 * delta).exp();
        let mut log_ratio = self.hyperprior(new) - self.hyperprior(tau);
        for l in 0..self.eta.len() {
            self.new_eta[l].copy_from_slice(&self.eta[l]);
        }
        for (b, block) in self.p.layout.blocks.iter().enumerate() {
            if block.precision != k {
                continue;
            }
            for (pos, rows) in self.p.block_rows[b].iter().enumerate() {
                let shift = (c - 1.0) * self.state.effects[b][pos];
                for &i in rows {
                    self.new_eta[block.predictor][i] += shift;
                }
            }
        }
        let mut dll = 0.0;
        for i in 0..self.ll.len() {
            let e1 = if self.new_eta.len() > 1 {
                self.new_eta[1][i]
            } else {
                0.0
            };
            let v = self.eval(i, self.new_eta[0][i], e1);
            self.new_ll[i] = v;
            dll += v - self.ll[i];
        }
        if !self.prior_only {
            log_ratio += dll;
        }
        let accepted = self.accept(log_ratio);
        self.scale_adapt[k].record(accepted);
        self.tallies[3].add(accepted);
        if accepted {
            self.state.precisions[k] = new;
            for (b, block) in self.p.layout.blocks.iter().enumerate() {
                if block.precision == k {
                    for v in self.state.effects[b].iter_mut() {
                        *v *= c;
                    }
                }
            }
            std::mem::swap(&mut self.eta, &mut self.new_eta);
            std::mem::swap(&mut self.ll, &mut self.new_ll);
        }
    }

    fn ridge_move(&mut self, r: usize) {
        let delta = self.ridge_adapt[r].step(&mut self.rng);
        let ridge = &self.ridges[r];
        let (l, c, b) = (ridge.predictor, ridge.coef, ridge.block);
        let prior = self.coefficient_prior(c);
        let beta = self.state.coefficients[l][c];
        let mut log_ratio = prior.log_density(beta + delta) - prior.log_density(beta);
        if ridge.intercept_shift != 0.0 {
            let ip = self.coefficient_prior(0);
            let a = self.state.coefficients[l][0];
            log_ratio += ip.log_density(a + delta * ridge.intercept_shift) - ip.log_density(a);
        }
        let tau = self.state.precisions[self.p.layout.blocks[b].precision];
        let v = &self.state.effects[b];
        self.scratch.clear();
        self.scratch
            .extend(v.iter().zip(&ridge.direction).map(|(x, d)| x + delta * d));
        log_ratio +=
            self.p.block_log_density(b, &self.scratch, tau) - self.p.block_log_density(b, v, tau);
        let accepted = self.accept(log_ratio);
        self.ridge_adapt[r].record(accepted);
        self.tallies[4].add(accepted);
        if accepted {
            let shift = self.ridges[r].intercept_shift;
            self.state.coefficients[l][c] += delta;
            if shift != 0.0 {
                self.state.coefficients[l][0] += delta * shift;
            }
            std::mem::swap(&mut self.state.effects[b], &mut self.scratch);
        }
    }

    fn update_dispersion(&mut self) {
        let delta = self.dispersion_adapt.step(&mut self.rng);
        let phi = self.state.dispersion.expect("dispersion present");
        let new = phi * delta.exp();
        let pr = &self.p.spec.priors;
        let mut log_ratio =
            PriorSpec::gamma_log_density(pr.dispersion_shape, pr.dispersion_rate, new) + new.ln()
                - PriorSpec::gamma_log_density(pr.dispersion_shape, pr.dispersion_rate, phi)
                - phi.ln();
        let old_cache = self.disp;
        self.disp = DispersionCache::new(Some(new));
        let mut dll = 0.0;
        for i in 0..self.ll.len() {
            let v = self.eval(i, self.eta[0][i], self.eta_1(i));
            self.new_ll[i] = v;
            dll += v - self.ll[i];
        }
        if !self.prior_only {
            log_ratio += dll;
        }
        let accepted = self.accept(log_ratio);
        self.dispersion_adapt.record(accepted);
        self.tallies[5].add(accepted);
        if accepted {
            self.state.dispersion = Some(new);
            std::mem::swap(&mut self.ll, &mut self.new_ll);
        } else {
            self.disp = old_cache;
        }
    }

    /// Folds any numerical drift of the centred blocks into the intercept.
    fn recenter(&mut self) {
        for (b, block) in self.p.layout.blocks.iter().enumerate() {
            if !block.prior.is_centered() {
                continue;
            }
            let values = &mut self.state.effects[b];
            let m = values.iter().sum::<f64>() / values.len() as f64;
            for v in values.iter_mut() {
                *v -= m;
            }
            if self.has_intercept {
                self.state.coefficients[block.predictor][0] += m;
            }
        }
    }

    fn adapt(&mut self, batch: usize) {
        let all = self
            .coef_adapt
            .iter_mut()
            .flatten()
            .chain(self.effect_adapt.iter_mut().flatten())
            .chain(self.precision_adapt.iter_mut())
            .chain(self.scale_adapt.iter_mut())
            .chain(self.ridge_adapt.iter_mut())
            .chain(std::iter::once(&mut self.dispersion_adapt));
        for a in all {
            a.adapt(batch);
        }
    }

    fn acceptance(&self) -> AcceptanceRates {
        let t = &self.tallies;
        AcceptanceRates {
            coefficients: t[0].rate(),
            effects: t[1].rate(),
            precisions: t[2].rate(),
            scale_moves: t[3].rate(),
            ridge_moves: t[4].rate(),
            dispersion: t[5].rate(),
        }
    }
}

/// Whether design column `c` is constant within each group of rows sharing
/// the given index.
fn column_is_function_of(p: &Problem, c: usize, index: EffectIndex) -> Option<Vec<f64>> {
    let d = &p.design;
    let len = match index {
        EffectIndex::Region => d.num_regions(),
        EffectIndex::Quarter => d.num_quarters(),
        EffectIndex::Cell => d.num_rows(),
    };
    let mut z: Vec<Option<f64>> = vec![None; len];
    for i in 0..d.num_rows() {
        let (j, t) = d.cell(i);
        let pos = match index {
            EffectIndex::Region => j,
            EffectIndex::Quarter => t,
            EffectIndex::Cell => i,
        };
        let x = d.value(i, c);
        match z[pos] {
            None => z[pos] = Some(x),
            Some(prev) if (prev - x).abs() > 1e-12 * prev.abs().max(1.0) => return None,
            _ => {}
        }
    }
    z.into_iter().collect()
}

fn build_ridges(p: &Problem) -> Vec<Ridge> {
    let d = &p.design;
    let has_intercept = d.has_intercept();
    let mut ridges = Vec::new();
    for (b, block) in p.layout.blocks.iter().enumerate() {
        for c in 0..d.num_columns() {
            let is_intercept = c == 0 && has_intercept;
            let z = match column_is_function_of(p, c, block.index) {
                Some(z) => z,
                None => continue,
            };
            // pair each covariate only with the coarsest matching block
            if !is_intercept && block.index == EffectIndex::Cell {
                let coarser = [EffectIndex::Region, EffectIndex::Quarter]
                    .into_iter()
                    .any(|idx| column_is_function_of(p, c, idx).is_some());
                if coarser {
                    continue;
                }
            }
            let (direction, intercept_shift) = if block.prior.is_centered() {
                if is_intercept {
                    continue;
                }
                let mean = z.iter().sum::<f64>() / z.len() as f64;
                if mean.abs() > 1e-12 && !has_intercept {
                    continue;
                }
                let dir: Vec<f64> = z.iter().map(|x| -(x - mean)).collect();
                (dir, if mean.abs() > 1e-12 { -mean } else { 0.0 })
            } else {
                (z.iter().map(|x| -x).collect::<Vec<f64>>(), 0.0)
            };
            if direction.iter().all(|&x| x == 0.0) {
                continue;
            }
            ridges.push(Ridge {
                predictor: block.predictor,
                coef: c,
                block: b,
                direction,
                intercept_shift,
            });
        }
    }
    ridges
}

fn start_dispersion(p: &Problem) -> Option<f64> {
    match p.family() {
        Family::NegativeBinomial => Some(10.0),
        Family::Beta => {
            let rates: Vec<f64> = p
                .targets
                .iter()
                .filter_map(|t| match t {
                    ObservationTarget::Rate(r) => Some(*r),
                    _ => None,
                })
                .collect();
            let m = crate::stats::mean(&rates);
            let v = crate::stats::variance(&rates);
            let phi = if v > 0.0 {
                m * (1.0 - m) / v - 1.0
            } else {
                10.0
            };
            Some(if phi.is_finite() {
                phi.clamp(1.0, 1e4)
            } else {
                10.0
            })
        }
        _ => None,
    }
}

/// Pooled, covariate-free estimate of each predictor's intercept.
fn pooled_intercepts(p: &Problem, dispersion: Option<f64>) -> Vec<f64> {
    let offsets = p.design.offsets();
    let mut sums = [0.0f64; 4];
    let mut count = 0.0f64;
    for t in &p.targets {
        match *t {
            ObservationTarget::Count(y) => sums[0] += y as f64,
            ObservationTarget::Binomial { y, m } => {
                sums[0] += y as f64;
                sums[1] += m as f64;
            }
            ObservationTarget::Rate(r) => sums[0] += r,
            ObservationTarget::Real(y) => sums[0] += y,
            ObservationTarget::Multinomial(y) => {
                for q in 0..3 {
                    sums[q] += y[q] as f64;
                }
            }
            ObservationTarget::Missing => continue,
        }
        count += 1.0;
    }
    let count = count.max(1.0);
    let mean_offset = crate::stats::mean(offsets);
    match p.family() {
        Family::Poisson => {
            let exposure: f64 = offsets.iter().map(|o| o.exp()).sum();
            vec![((sums[0] + 0.5) / exposure.max(1e-300)).ln()]
        }
        Family::NegativeBinomial => {
            let ybar = (sums[0] + 0.5) / count;
            let phi = dispersion.unwrap_or(10.0);
            let max_offset = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![(ybar / (ybar + phi)).ln() - max_offset.max(0.0)]
        }
        Family::Binomial => vec![logit((sums[0] + 0.5) / (sums[1] + 1.0)) - mean_offset],
        Family::Beta => vec![logit((sums[0] / count).clamp(1e-6, 1.0 - 1e-6)) - mean_offset],
        Family::Multinomial => vec![
            ((sums[0] + 0.5) / (sums[2] + 0.5)).ln(),
            ((sums[1] + 0.5) / (sums[2] + 0.5)).ln(),
        ],
        Family::Gaussian { .. } => vec![sums[0] / count - mean_offset],
    }
}

/// Over-dispersed start: intercepts at the pooled estimate plus N(0, 1),
/// slopes N(0, 1), effects 0, precisions 1. The perturbation is halved until
/// the log posterior is finite.
fn initial_state(p: &Problem, rng: &mut ChaCha8Rng, chain: usize) -> Result<ParameterState> {
    let mut state = ParameterState::zeros(&p.layout, &p.design);
    state.dispersion = start_dispersion(p);
    let base = pooled_intercepts(p, state.dispersion);
    let noise: Vec<Vec<f64>> = state
        .coefficients
        .iter()
        .map(|coef| coef.iter().map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let has_intercept = p.design.has_intercept();
    let mut scale = 1.0;
    for _ in 0..=20 {
        for (l, coef) in state.coefficients.iter_mut().enumerate() {
            for (c, v) in coef.iter_mut().enumerate() {
                let centre = if c == 0 && has_intercept {
                    base[l]
                } else {
                    0.0
                };
                *v = centre + scale * noise[l][c];
            }
        }
        if p.log_posterior(&state).is_finite() {
            return Ok(state);
        }
        scale *= 0.5;
    }
    Err(Error::NonFiniteStart { chain })
}

pub(crate) fn run_chain(p: &Problem, config: &MCMCConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed.wrapping_add(chain as u64));
    let state = initial_state(p, &mut rng, chain)?;
    let mut ch = Chain::new(p, state, rng, config.prior_only);
    let kept = config.draws_per_chain();
    let mut draws = Vec::with_capacity(kept * super::posterior::flat_len(p));
    let mut deviance = Vec::with_capacity(kept);
    let mut batch = 0;
    for it in 0..config.iterations {
        ch.sweep();
        if it < config.burn_in && (it + 1) % config.adaptation_window == 0 {
            batch += 1;
            ch.adapt(batch);
        }
        if it + 1 == config.burn_in {
            ch.tallies = [Tally::default(); 6];
        }
        if it >= config.burn_in && (it - config.burn_in).is_multiple_of(config.thin) {
            flatten_into(&ch.state, &mut draws);
            let ll: f64 = ch.ll.iter().sum();
            deviance.push(if ll.is_nan() {
                f64::INFINITY
            } else {
                -2.0 * ll
            });
        }
    }
    Ok(ChainOutput {
        draws,
        deviance,
        acceptance: ch.acceptance(),
    })
}
