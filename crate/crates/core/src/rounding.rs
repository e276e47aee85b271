//! Goemans-Williamson style rounding of the semidefinite relaxation.
//!
//! The primal `(b, z, B)` is lifted to a correlation-like matrix
//! `T = P [[1, z^T], [z, Z]] P^T` with `P = [[1, 0], [-e, 2I]]`, factored as
//! `U U^T`, and each sample takes `t = sign(U v)` for a standard normal `v`.
//! Sample `k` draws from ChaCha8 stream `k` of the given seed, so results do not
//! depend on evaluation order.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance::{FitResult, GramCache, Method, ProblemInstance};
use crate::numerics::{psd_factor, SymMatrix};
use crate::scalar::Real;
use crate::sdp::SdpPrimal;

pub const LIFT_PSD_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct CorrelationLift<T: Real> {
    pub z_mat: DMatrix<T>,
    pub t: DMatrix<T>,
    /// `(p + 1) x r` with `U U^T = T` up to the clamped negative part.
    pub u: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct RoundingResult<T: Real> {
    /// Best polished fit; its objective is the minimum over samples.
    pub best: FitResult<T>,
    pub samples: usize,
    /// `None` for samples whose restricted least-squares system was singular.
    pub sample_objectives: Vec<Option<T>>,
    /// Support of each sample as a `0`/`1` string over `1..p`.
    pub sample_supports: Vec<String>,
    /// Index of the first sample attaining the minimum.
    pub best_sample: usize,
    pub distinct_supports: usize,
    pub seed: u64,
}

/// `Z_ij = B_ij b_i b_j / (B_ii B_jj)`, zero where `z_i` or `z_j` is zero, so
/// that `Z_ii = z_i` and `T` has a unit diagonal.
pub fn build_lift<T: Real>(primal: &SdpPrimal<T>) -> Result<CorrelationLift<T>> {
    let p = primal.b.len();
    let (b, bb, z) = (&primal.b, &primal.big_b, &primal.z);
    let z_mat = DMatrix::from_fn(p, p, |i, j| {
        if z[i] > T::zero() && z[j] > T::zero() {
            bb[(i, j)] * b[i] * b[j] / (bb[(i, i)] * bb[(j, j)])
        } else {
            T::zero()
        }
    });
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let t = DMatrix::from_fn(p + 1, p + 1, |i, j| match (i, j) {
        (0, 0) => T::one(),
        (0, j) => two * z[j - 1] - T::one(),
        (i, 0) => two * z[i - 1] - T::one(),
        (i, j) => T::one() - two * z[i - 1] - two * z[j - 1] + four * z_mat[(i - 1, j - 1)],
    });
    let u = psd_factor(&SymMatrix::symmetrize(t.clone()), T::lit(LIFT_PSD_TOL))?;
    Ok(CorrelationLift { z_mat, t, u })
}

/// Support of one sample: `t = sign(U v)` with `sign(0) = +1`, flipped so that
/// `t_0 = +1`, and `z_j = (t_{j+1} + 1) / 2`.
pub fn sample_support<T: Real>(u: &DMatrix<T>, seed: u64, k: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let v = DVector::from_fn(u.ncols(), |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    let uv = u * v;
    let sign = |x: T| x >= T::zero();
    let flip = !sign(uv[0]);
    (1..uv.len()).map(|i| sign(uv[i]) != flip).collect()
}

fn support_string(mask: &[bool]) -> String {
    mask.iter().map(|&m| if m { '1' } else { '0' }).collect()
}

/// Rounds the relaxation with `samples` hyperplane draws and returns the best
/// polished support.
pub fn gw_round<T: Real>(
    instance: &ProblemInstance<T>,
    gram: &GramCache<T>,
    primal: &SdpPrimal<T>,
    samples: usize,
    seed: u64,
) -> Result<RoundingResult<T>> {
    if samples == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    if primal.b.len() != instance.p() {
        return Err(Error::DimensionMismatch("primal and instance disagree on p".into()));
    }
    let lift = build_lift(primal)?;
    let masks: Vec<Vec<bool>> = (0..samples as u64).map(|k| sample_support(&lift.u, seed, k)).collect();

    let mut index: HashMap<&[bool], usize> = HashMap::new();
    let mut unique: Vec<&[bool]> = Vec::new();
    let mut slot = Vec::with_capacity(samples);
    for m in &masks {
        let next = unique.len();
        let id = *index.entry(m.as_slice()).or_insert(next);
        if id == next {
            unique.push(m.as_slice());
        }
        slot.push(id);
    }

    let fits: Vec<Option<FitResult<T>>> = unique
        .par_iter()
        .map(|mask| {
            let support: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(j, _)| j).collect();
            FitResult::polish(instance, gram, &support, Method::Rounding).ok()
        })
        .collect();

    let sample_objectives: Vec<Option<T>> = slot.iter().map(|&id| fits[id].as_ref().map(|f| f.objective)).collect();
    let mut best_sample: Option<(usize, T)> = None;
    for (k, obj) in sample_objectives.iter().enumerate() {
        if let Some(v) = *obj {
            if best_sample.map_or(true, |(_, bv)| v < bv) {
                best_sample = Some((k, v));
            }
        }
    }
    let (best_sample, _) =
        best_sample.ok_or_else(|| Error::NumericalFailure("every rounded support was singular".into()))?;
    Ok(RoundingResult {
        best: fits[slot[best_sample]].clone().expect("best sample has a fit"),
        samples,
        sample_objectives,
        sample_supports: masks.iter().map(|m| support_string(m)).collect::<Vec<String>>(),
        best_sample,
        distinct_supports: unique.len(),
        seed,
    })
}

impl<T: Real> RoundingResult<T> {
    pub fn objective(&self) -> T {
        self.best.objective
    }

    /// `k,support,objective` per sample; singular samples have an empty objective.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "support", "objective"]).map_err(|e| Error::Io(e.to_string()))?;
        for (k, (s, obj)) in self.sample_supports.iter().zip(&self.sample_objectives).enumerate() {
            let obj = obj.map(|v| format!("{:.16e}", v.as_f64())).unwrap_or_default();
            w.write_record([k.to_string(), s.clone(), obj]).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_gram, objective_l0};
    use crate::sdp::{build_sdp, solve_sdp, IpmConfig};

    fn instance(seed: u64, n: usize, p: usize, lambda: f64, mu: f64) -> ProblemInstance<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt());
        let y = DVector::from_fn(n, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
        ProblemInstance::new(x, y, lambda, mu).unwrap()
    }

    fn brute(inst: &ProblemInstance<f64>, gram: &GramCache<f64>) -> f64 {
        let p = inst.p();
        (0..1u32 << p)
            .map(|mask| {
                let s: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
                FitResult::polish(inst, gram, &s, Method::BruteForce).unwrap().objective
            })
            .fold(f64::MAX, f64::min)
    }

    fn primal_of(inst: &ProblemInstance<f64>) -> (GramCache<f64>, SdpPrimal<f64>) {
        let gram = build_gram(inst).unwrap();
        let sol = solve_sdp(&build_sdp(&gram), &IpmConfig::default()).unwrap();
        (gram, sol.primal)
    }

    #[test]
    fn lift_of_rank_one_binary_point() {
        let b = DVector::from_vec(vec![1.5, 0.0, -0.5]);
        let primal = SdpPrimal {
            z: DVector::from_vec(vec![1.0, 0.0, 1.0]),
            big_b: &b * b.transpose(),
            b,
            value: 0.0,
            rank: 1,
        };
        let lift = build_lift(&primal).unwrap();
        let zz = &primal.z * primal.z.transpose();
        assert!((&lift.z_mat - zz).amax() < 1e-15);
        assert_eq!(lift.u.ncols(), 1);
        for i in 0..4 {
            assert!((lift.t[(i, i)] - 1.0f64).abs() < 1e-15);
        }
    }

    #[test]
    fn lift_of_zero_point() {
        let primal = SdpPrimal {
            b: DVector::zeros(3),
            z: DVector::zeros(3),
            big_b: DMatrix::zeros(3, 3),
            value: 0.0,
            rank: 1,
        };
        let lift = build_lift(&primal).unwrap();
        assert_eq!(lift.z_mat, DMatrix::zeros(3, 3));
        // T = [[1, -e^T], [-e, ee^T]]
        let e = DVector::from_vec(vec![1.0, -1.0, -1.0, -1.0]);
        assert!((&lift.t - &e * e.transpose()).amax() < 1e-15);
        assert_eq!(lift.u.ncols(), 1);
    }

    #[test]
    fn lift_diagonal_on_solved_instance() {
        let inst = instance(1, 30, 8, 0.2, 0.1);
        let (_, primal) = primal_of(&inst);
        let lift = build_lift(&primal).unwrap();
        for i in 0..9 {
            assert!((lift.t[(i, i)] - 1.0).abs() <= 1e-7);
        }
        for i in 0..8 {
            assert!((lift.z_mat[(i, i)] - primal.z[i]).abs() <= 1e-7);
        }
    }

    #[test]
    fn single_sample_bounds_relaxation() {
        let inst = instance(2, 25, 6, 0.3, 0.1);
        let gram = build_gram(&inst).unwrap();
        let sol = solve_sdp(&build_sdp(&gram), &IpmConfig::default()).unwrap();
        let r = gw_round(&inst, &gram, &sol.primal, 1, 9).unwrap();
        assert!(r.objective() >= sol.primal.value - 1e-6 * (1.0 + sol.primal.value.abs()));
        assert_eq!(r.best.objective, objective_l0(&inst, &r.best.b).unwrap());
    }

    #[test]
    fn many_samples_find_enumerated_optimum() {
        let inst = instance(3, 10, 3, 0.4, 0.1);
        let (gram, primal) = primal_of(&inst);
        let r = gw_round(&inst, &gram, &primal, 1000, 42).unwrap();
        let best = brute(&inst, &gram);
        assert!((r.objective() - best).abs() <= 1e-10 * (1.0 + best.abs()));
    }

    #[test]
    fn deterministic_and_monotone() {
        let inst = instance(4, 30, 10, 0.1, 0.1);
        let (gram, primal) = primal_of(&inst);
        let a = gw_round(&inst, &gram, &primal, 200, 7).unwrap();
        let b = gw_round(&inst, &gram, &primal, 200, 7).unwrap();
        assert_eq!(a.sample_objectives, b.sample_objectives);
        assert_eq!(a.best, b.best);
        let mut ta = Vec::new();
        let mut tb = Vec::new();
        a.write_trace(&mut ta).unwrap();
        b.write_trace(&mut tb).unwrap();
        assert_eq!(ta, tb);
        let mut last = f64::MAX;
        for n in [1, 5, 20, 100, 200] {
            let r = gw_round(&inst, &gram, &primal, n, 7).unwrap();
            assert!(r.objective() <= last);
            last = r.objective();
        }
        assert_eq!(last, a.objective());
    }

    #[test]
    fn chain_against_full_support() {
        let inst = instance(5, 30, 8, 0.2, 0.1);
        let gram = build_gram(&inst).unwrap();
        let sol = solve_sdp(&build_sdp(&gram), &IpmConfig::default()).unwrap();
        let r = gw_round(&inst, &gram, &sol.primal, 300, 3).unwrap();
        let full: Vec<usize> = (0..8).collect();
        let dense = FitResult::polish(&inst, &gram, &full, Method::RestrictedLs).unwrap();
        assert!(sol.primal.value <= r.objective() + 1e-6 * (1.0 + r.objective().abs()));
        assert!(r.objective() <= dense.objective + 1e-12);
        for (obj, mask) in r.sample_objectives.iter().zip(&r.sample_supports) {
            let s: Vec<usize> = mask.chars().enumerate().filter(|(_, c)| *c == '1').map(|(j, _)| j).collect();
            let fit = FitResult::polish(&inst, &gram, &s, Method::Rounding).unwrap();
            assert_eq!(obj.unwrap(), fit.objective);
        }
    }

    #[test]
    fn zero_samples_rejected() {
        let inst = instance(6, 10, 3, 0.4, 0.1);
        let (gram, primal) = primal_of(&inst);
        assert!(gw_round(&inst, &gram, &primal, 0, 1).is_err());
    }
}
