//! Seeded parallel trajectory ensembles for the jump and diffusion unravellings.
//!
//! Trajectories are grouped into fixed chunks of [`CHUNK`] indices. Each chunk
//! is reduced sequentially and chunk results are folded in index order, so the
//! output does not depend on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::born::{pdp_advance, qsd_step, OpenSystem};
use crate::error::{Error, Result};
use crate::grid::Grid1d;
use crate::hilbert::{CMatrix, Operator, StateVector, C64};
use crate::stats::MomentAcc;

pub const CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Born,
    Qsd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub scheme: Scheme,
    pub n_traj: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub record_every: usize,
    pub seed: u64,
    pub track_density: bool,
    /// Full per-step records are kept for this many leading trajectories.
    pub keep_trajectories: usize,
    /// Shift free-particle states back to the grid centre after each step.
    pub recenter: bool,
}

impl EnsembleSpec {
    pub fn new(scheme: Scheme, n_traj: usize, dt: f64, n_steps: usize, seed: u64) -> Self {
        Self { scheme, n_traj, dt, n_steps, record_every: 1, seed, track_density: true, keep_trajectories: 0, recenter: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::param("n_traj", "must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        if self.recenter && self.track_density {
            return Err(Error::param("recenter", "cannot be combined with density tracking"));
        }
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        self.n_steps / self.record_every + 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_records()).map(|k| (k * self.record_every) as f64 * self.dt).collect()
    }
}

pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// How (⟨x⟩, ⟨p⟩, Var x, Var p) are read off a state.
#[derive(Clone, Copy)]
pub enum MomentProbe<'a> {
    Grid(&'a Grid1d),
    Operators { x: &'a Operator, p: &'a Operator },
    None,
}

impl MomentProbe<'_> {
    pub fn moments(&self, psi: &StateVector) -> (f64, f64, f64, f64) {
        match self {
            MomentProbe::Grid(g) => g.moments(psi.amps()),
            MomentProbe::Operators { x, p } => {
                let one = |o: &Operator| {
                    let v = o.apply(psi);
                    let m = psi.inner(&v).re;
                    (m, (v.norm_sqr() - m * m).max(0.0))
                };
                let (ex, vx) = one(x);
                let (ep, vp) = one(p);
                (ex, ep, vx, vp)
            }
            MomentProbe::None => (0.0, 0.0, 0.0, 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub t: f64,
    pub jumped: bool,
    pub branch_index: i64,
    pub n_jumps_cum: usize,
    pub ex: f64,
    pub ep: f64,
    pub var_x: f64,
    pub var_p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub rows: Vec<TrajectoryRow>,
}

/// Statistics over trajectories at one output time. `var_*` are the spreads of
/// the conditioned expectations; `mean_var_*` average the in-state variances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub t: f64,
    pub count: usize,
    pub mean_ex: f64,
    pub var_ex: f64,
    pub mean_ep: f64,
    pub var_ep: f64,
    pub mean_var_x: f64,
    pub mean_var_p: f64,
    pub mean_jumps: f64,
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean_rho: Option<Vec<CMatrix>>,
    pub stats: Vec<EnsembleStats>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub max_norm_error: f64,
    pub step_warnings: usize,
}

#[derive(Clone, Copy, Default)]
struct Accs {
    ex: MomentAcc,
    ep: MomentAcc,
    vx: MomentAcc,
    vp: MomentAcc,
    jumps: MomentAcc,
}

impl Accs {
    fn merge(&mut self, o: &Accs) {
        self.ex.merge(&o.ex);
        self.ep.merge(&o.ep);
        self.vx.merge(&o.vx);
        self.vp.merge(&o.vp);
        self.jumps.merge(&o.jumps);
    }
}

/// Element-wise compensated sum of complex matrices.
#[derive(Clone)]
struct MatSum {
    sum: CMatrix,
    comp: CMatrix,
}

fn neumaier(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

impl MatSum {
    fn zeros(d: usize) -> Self {
        Self { sum: CMatrix::zeros(d, d), comp: CMatrix::zeros(d, d) }
    }

    fn add_entry(&mut self, idx: usize, v: C64) {
        let (s, c) = (&mut self.sum.as_mut_slice()[idx], &mut self.comp.as_mut_slice()[idx]);
        neumaier(&mut s.re, &mut c.re, v.re);
        neumaier(&mut s.im, &mut c.im, v.im);
    }

    #[allow(clippy::needless_range_loop)]
    fn add_projector(&mut self, psi: &StateVector) {
        let a = psi.as_slice();
        let d = a.len();
        // column-major storage: entry (i, j) at j·d + i
        for j in 0..d {
            let cj = a[j].conj();
            for i in 0..d {
                self.add_entry(j * d + i, a[i] * cj);
            }
        }
    }

    fn merge(&mut self, o: &MatSum) {
        for idx in 0..o.sum.len() {
            self.add_entry(idx, o.sum.as_slice()[idx]);
            self.add_entry(idx, o.comp.as_slice()[idx]);
        }
    }

    fn value(&self) -> CMatrix {
        &self.sum + &self.comp
    }
}

struct ChunkOut {
    accs: Vec<Accs>,
    rho: Option<Vec<MatSum>>,
    records: Vec<TrajectoryRecord>,
    norm_err: f64,
    warnings: usize,
}

fn run_trajectory<S: OpenSystem + ?Sized>(
    sys: &S,
    psi0: &StateVector,
    spec: &EnsembleSpec,
    probe: &MomentProbe<'_>,
    index: usize,
    out: &mut ChunkOut,
) -> Result<()> {
    let mut rng = trajectory_rng(spec.seed, index as u64);
    let keep = index < spec.keep_trajectories;
    let mut rows = Vec::new();
    let mut psi = psi0.clone();
    let mut offset = 0.0;
    let mut n_jumps = 0usize;
    let mut jumped = false;
    let mut last_branch: i64 = -1;
    let mut record = |step: usize, psi: &StateVector, offset: f64, n_jumps: usize, jumped: bool, branch: i64, out: &mut ChunkOut| {
        let (ex, ep, vx, vp) = probe.moments(psi);
        let ex = ex + offset;
        let k = step / spec.record_every;
        let a = &mut out.accs[k];
        a.ex.push(ex);
        a.ep.push(ep);
        a.vx.push(vx);
        a.vp.push(vp);
        a.jumps.push(n_jumps as f64);
        if let Some(rho) = out.rho.as_mut() {
            rho[k].add_projector(psi);
        }
        if keep {
            rows.push(TrajectoryRow {
                step,
                t: step as f64 * spec.dt,
                jumped,
                branch_index: branch,
                n_jumps_cum: n_jumps,
                ex,
                ep,
                var_x: vx,
                var_p: vp,
            });
        }
    };
    record(0, &psi, offset, 0, false, -1, out);
    for step in 1..=spec.n_steps {
        match spec.scheme {
            Scheme::Born => {
                let (next, jumps) = pdp_advance(sys, &psi, spec.dt, &mut rng)?;
                psi = next;
                if let Some(j) = jumps.last() {
                    jumped = true;
                    last_branch = j.branch as i64;
                }
                n_jumps += jumps.len();
            }
            Scheme::Qsd => {
                let o = qsd_step(sys, &psi, spec.dt, &mut rng)?;
                if o.step_warning {
                    out.warnings += 1;
                }
                psi = o.state;
            }
        }
        out.norm_err = out.norm_err.max((psi.norm() - 1.0).abs());
        if spec.recenter {
            if let Some(d) = sys.recenter(&mut psi) {
                offset += d;
            }
        }
        if step % spec.record_every == 0 {
            record(step, &psi, offset, n_jumps, jumped, last_branch, out);
            jumped = false;
            last_branch = -1;
        }
    }
    if keep {
        out.records.push(TrajectoryRecord { index, rows });
    }
    Ok(())
}

/// Average `n_traj` conditioned trajectories from ψ0.
pub fn ensemble_run<S: OpenSystem + ?Sized>(sys: &S, psi0: &StateVector, spec: &EnsembleSpec, probe: MomentProbe<'_>) -> Result<EnsembleResult> {
    spec.validate()?;
    sys.check_unravellable()?;
    if psi0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: psi0.dim() });
    }
    let psi0 = psi0.clone().normalized()?;
    let nrec = spec.n_records();
    let d = sys.dim();
    let n_chunks = spec.n_traj.div_ceil(CHUNK);
    let wave = (rayon::current_num_threads() * 2).max(1);
    let mut total = ChunkOut {
        accs: vec![Accs::default(); nrec],
        rho: spec.track_density.then(|| vec![MatSum::zeros(d); nrec]),
        records: Vec::new(),
        norm_err: 0.0,
        warnings: 0,
    };
    let mut start = 0;
    while start < n_chunks {
        let end = (start + wave).min(n_chunks);
        let outs: Vec<Result<ChunkOut>> = (start..end)
            .into_par_iter()
            .map(|c| {
                let mut out = ChunkOut {
                    accs: vec![Accs::default(); nrec],
                    rho: spec.track_density.then(|| vec![MatSum::zeros(d); nrec]),
                    records: Vec::new(),
                    norm_err: 0.0,
                    warnings: 0,
                };
                for index in c * CHUNK..((c + 1) * CHUNK).min(spec.n_traj) {
                    run_trajectory(sys, &psi0, spec, &probe, index, &mut out)?;
                }
                Ok(out)
            })
            .collect();
        for out in outs {
            let out = out?;
            for (a, b) in total.accs.iter_mut().zip(&out.accs) {
                a.merge(b);
            }
            if let (Some(t), Some(o)) = (total.rho.as_mut(), out.rho.as_ref()) {
                for (a, b) in t.iter_mut().zip(o) {
                    a.merge(b);
                }
            }
            total.records.extend(out.records);
            total.norm_err = total.norm_err.max(out.norm_err);
            total.warnings += out.warnings;
        }
        start = end;
    }
    let times = spec.times();
    let n = spec.n_traj as f64;
    let mean_rho = total.rho.map(|v| {
        v.iter()
            .map(|s| {
                let m = s.value() / C64::new(n, 0.0);
                (&m + m.adjoint()) * C64::new(0.5, 0.0)
            })
            .collect()
    });
    let stats = times
        .iter()
        .zip(&total.accs)
        .map(|(&t, a)| EnsembleStats {
            t,
            count: a.ex.n,
            mean_ex: a.ex.mean(),
            var_ex: a.ex.var(),
            mean_ep: a.ep.mean(),
            var_ep: a.ep.var(),
            mean_var_x: a.vx.mean(),
            mean_var_p: a.vp.mean(),
            mean_jumps: a.jumps.mean(),
        })
        .collect();
    Ok(EnsembleResult { times, mean_rho, stats, trajectories: total.records, max_norm_error: total.norm_err, step_warnings: total.warnings })
}

/// Worker count from SIM_THREADS, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("SIM_THREADS").ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Run `f` on a local pool of `threads` workers (machine parallelism if None).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::param("threads", e.to_string()))?;
    Ok(pool.install(f))
}
