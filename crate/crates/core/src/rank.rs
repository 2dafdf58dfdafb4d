//! The complex-rank sufficient condition for identifiability of linear
//! delayed systems.
//!
//! For a complex `z` off the closed negative real axis, the delay
//! polynomials `A(z) = A_0 + A_1 z^{tau_1} + ... + A_l z^{tau_l}` and
//! `B(z)` are formed with principal-branch powers, the block matrix
//! `[B(z) | A(z)B(z) | ... | A^{n-1}(z)B(z)]` is assembled, and its
//! numerical rank is compared against `n`. Reaching rank `n` at any sampled
//! `z` certifies identifiability of the coefficient matrices and delays;
//! failing everywhere is inconclusive (the condition is sufficient only).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linearize::{LinearDelayModel, TaggedMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankError {
    #[error("z = {0} lies on the principal-branch cut (closed negative real axis)")]
    BranchDomain(Complex64),
}

/// Principal-branch `z^tau`; exact for tag 0.
fn zpow(z: Complex64, tau: f64) -> Complex64 {
    if tau == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z.powf(tau)
    }
}

fn on_branch_cut(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0
}

/// `sum_i M_i z^{tag_i}` with principal-branch powers.
pub fn delay_poly(mats: &[TaggedMatrix], z: Complex64) -> Result<DMatrix<Complex64>, RankError> {
    assert!(!mats.is_empty());
    if mats.iter().any(|t| t.delay != 0.0) && on_branch_cut(z) {
        return Err(RankError::BranchDomain(z));
    }
    let (rows, cols) = (mats[0].m.nrows(), mats[0].m.ncols());
    let mut acc = DMatrix::<Complex64>::zeros(rows, cols);
    for t in mats {
        let w = zpow(z, t.delay);
        for i in 0..rows {
            for j in 0..cols {
                acc[(i, j)] += w * t.m[(i, j)];
            }
        }
    }
    Ok(acc)
}

/// Horizontal concatenation of `A(z)^q B(z)` for `q = 0..n-1`; n x (n k).
pub fn kalman_block(model: &LinearDelayModel, z: Complex64) -> Result<DMatrix<Complex64>, RankError> {
    let a = delay_poly(&model.a, z)?;
    let b = delay_poly(&model.b, z)?;
    let n = model.n();
    let k = model.k();
    let mut block = DMatrix::<Complex64>::zeros(n, n * k);
    let mut cur = b;
    for q in 0..n {
        block.view_mut((0, q * k), (n, k)).copy_from(&cur);
        if q + 1 < n {
            cur = &a * cur;
        }
    }
    Ok(block)
}

/// Numerical rank by SVD with a relative threshold scaled by dimension and
/// the largest singular value.
pub fn numerical_rank(m: &DMatrix<Complex64>, rel_tol: f64) -> (usize, Vec<f64>, f64) {
    let svd = m.clone().svd(false, false);
    let mut sigma: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = sigma.first().cloned().unwrap_or(0.0);
    let threshold = rel_tol * (m.nrows().max(m.ncols()) as f64) * sigma_max;
    let rank = sigma.iter().filter(|&&s| s > threshold).count();
    (rank, sigma, threshold)
}

/// Same routine for real matrices (used by the coefficient-map test).
pub fn numerical_rank_real(m: &DMatrix<f64>, rel_tol: f64) -> (usize, Vec<f64>, f64) {
    let c = m.map(|v| Complex64::new(v, 0.0));
    numerical_rank(&c, rel_tol)
}

/// Rank result at one sampled `z`.
#[derive(Debug, Clone, Serialize)]
pub struct ZSample {
    pub z_re: f64,
    pub z_im: f64,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankVerdict {
    pub per_z: Vec<ZSample>,
    /// True iff some sampled z reached rank n. False means inconclusive,
    /// never "unidentifiable": the criterion is sufficient only.
    pub identifiable: bool,
    pub z_witness: Option<(f64, f64)>,
    pub rel_tol: f64,
    pub notes: Vec<String>,
}

/// The default sample set: the reference witnesses 2 and 1+i, plus
/// `extra_random` seeded pseudo-random points with |z| in [0.5, 3] and
/// argument bounded away from the branch cut.
pub fn default_z_samples(seed: u64, extra_random: usize, user: &[Complex64]) -> Vec<Complex64> {
    let mut samples = vec![Complex64::new(2.0, 0.0), Complex64::new(1.0, 1.0)];
    samples.extend_from_slice(user);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra_random {
        let radius = rng.gen_range(0.5..=3.0);
        let arg = rng.gen_range((-std::f64::consts::PI + 0.1)..(std::f64::consts::PI - 0.1));
        samples.push(Complex64::from_polar(radius, arg));
    }
    samples
}

/// Evaluate the rank condition at every sample; branch-cut samples are
/// recorded in the notes and skipped.
pub fn sweep_rank(model: &LinearDelayModel, z_samples: &[Complex64], rel_tol: f64) -> RankVerdict {
    assert!(!z_samples.is_empty());
    let n = model.n();
    let mut per_z = Vec::new();
    let mut notes = Vec::new();
    let mut z_witness = None;
    for &z in z_samples {
        match kalman_block(model, z) {
            Ok(block) => {
                let (rank, singular_values, threshold) = numerical_rank(&block, rel_tol);
                if rank == n && z_witness.is_none() {
                    z_witness = Some((z.re, z.im));
                }
                per_z.push(ZSample {
                    z_re: z.re,
                    z_im: z.im,
                    rank,
                    singular_values,
                    threshold,
                });
            }
            Err(e) => notes.push(format!("sample skipped: {e}")),
        }
    }
    RankVerdict {
        identifiable: z_witness.is_some(),
        z_witness,
        per_z,
        rel_tol,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EquilibriumPoint;

    fn tagged(delay: f64, rows: usize, cols: usize, entries: &[f64]) -> TaggedMatrix {
        TaggedMatrix {
            delay,
            m: DMatrix::from_row_slice(rows, cols, entries),
        }
    }

    fn scalar_model(a: Vec<TaggedMatrix>, b: Vec<TaggedMatrix>) -> LinearDelayModel {
        LinearDelayModel {
            a,
            b,
            equilibrium: EquilibriumPoint {
                x_e: vec![0.0],
                residual_norm: 0.0,
                converged: true,
            },
            u_bar: vec![0.0],
        }
    }

    #[test]
    fn tag_zero_is_exact() {
        let m = tagged(0.0, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let out = delay_poly(&[m.clone()], Complex64::new(-5.0, 0.0)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(out[(i, j)], Complex64::new(m.m[(i, j)], 0.0));
            }
        }
    }

    #[test]
    fn identity_tagged_one_at_z_two() {
        let a0 = tagged(0.0, 2, 2, &[0.0; 4]);
        let a1 = tagged(1.0, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let out = delay_poly(&[a0, a1], Complex64::new(2.0, 0.0)).unwrap();
        assert_eq!(out[(0, 0)], Complex64::new(2.0, 0.0));
        assert_eq!(out[(1, 1)], Complex64::new(2.0, 0.0));
        assert_eq!(out[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn branch_cut_is_rejected() {
        let m = tagged(0.5, 1, 1, &[1.0]);
        let err = delay_poly(&[m], Complex64::new(-1.0, 0.0)).unwrap_err();
        assert!(matches!(err, RankError::BranchDomain(_)));
    }

    #[test]
    fn scalar_kalman_block() {
        let model = scalar_model(
            vec![tagged(0.0, 1, 1, &[-3.0])],
            vec![tagged(0.0, 1, 1, &[7.0])],
        );
        let b = kalman_block(&model, Complex64::new(2.0, 0.0)).unwrap();
        assert_eq!(b.nrows(), 1);
        assert_eq!(b.ncols(), 1);
        assert_eq!(b[(0, 0)], Complex64::new(7.0, 0.0));
        let (rank, ..) = numerical_rank(&b, 1e-10);
        assert_eq!(rank, 1);
    }

    #[test]
    fn identity_rank_and_analytic_svd() {
        let id = DMatrix::<Complex64>::identity(3, 3);
        let (rank, sigma, _) = numerical_rank(&id, 1e-10);
        assert_eq!(rank, 3);
        for s in sigma {
            assert!((s - 1.0).abs() < 1e-12);
        }
        let ones = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])
            .map(|v| Complex64::new(v, 0.0));
        let (rank, sigma, _) = numerical_rank(&ones, 1e-10);
        assert_eq!(rank, 1);
        assert!((sigma[0] - 2.0).abs() < 1e-12);
        assert!(sigma[1].abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let z = DMatrix::<Complex64>::zeros(3, 4);
        let (rank, _, threshold) = numerical_rank(&z, 1e-10);
        assert_eq!(rank, 0);
        assert_eq!(threshold, 0.0);
    }

    #[test]
    fn constructed_rank_two_is_detected() {
        // 4x8 built from two outer products; oracle = construction.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let u = DMatrix::<Complex64>::from_fn(4, 2, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let v = DMatrix::<Complex64>::from_fn(2, 8, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let m = u * v;
        let (rank, ..) = numerical_rank(&m, 1e-10);
        assert_eq!(rank, 2);
    }

    #[test]
    fn unexcited_row_caps_the_rank() {
        // n = 2, A(z) = I z^tau, B = (1, 0)^T: second row never excited.
        let model = LinearDelayModel {
            a: vec![
                tagged(0.0, 2, 2, &[0.0; 4]),
                tagged(0.7, 2, 2, &[1.0, 0.0, 0.0, 1.0]),
            ],
            b: vec![tagged(0.0, 2, 1, &[1.0, 0.0])],
            equilibrium: EquilibriumPoint {
                x_e: vec![0.0, 0.0],
                residual_norm: 0.0,
                converged: true,
            },
            u_bar: vec![0.0],
        };
        let samples = default_z_samples(1, 14, &[]);
        let verdict = sweep_rank(&model, &samples, 1e-10);
        assert!(!verdict.identifiable);
        for s in &verdict.per_z {
            assert_eq!(s.rank, 1);
        }
    }

    #[test]
    fn zero_b_is_inconclusive_at_every_sample() {
        let model = scalar_model(
            vec![tagged(0.0, 1, 1, &[-1.0])],
            vec![tagged(0.0, 1, 1, &[0.0])],
        );
        let verdict = sweep_rank(&model, &default_z_samples(3, 14, &[]), 1e-10);
        assert!(!verdict.identifiable);
        assert!(verdict.z_witness.is_none());
    }

    #[test]
    fn no_delay_rank_is_z_independent() {
        // Classical controllability: A, B z-independent when l = r = 0.
        let model = LinearDelayModel {
            a: vec![tagged(0.0, 2, 2, &[0.0, 1.0, -2.0, -3.0])],
            b: vec![tagged(0.0, 2, 1, &[0.0, 1.0])],
            equilibrium: EquilibriumPoint {
                x_e: vec![0.0, 0.0],
                residual_norm: 0.0,
                converged: true,
            },
            u_bar: vec![0.0],
        };
        let verdict = sweep_rank(&model, &default_z_samples(9, 14, &[]), 1e-10);
        assert!(verdict.identifiable);
        for s in &verdict.per_z {
            assert_eq!(s.rank, 2);
        }
    }

    #[test]
    fn rank_invariant_under_column_scaling_of_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a0 = TaggedMatrix {
                delay: 0.0,
                m: DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)),
            };
            let a1 = TaggedMatrix {
                delay: 0.9,
                m: DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)),
            };
            let b0 = TaggedMatrix {
                delay: 0.0,
                m: DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0)),
            };
            let model = LinearDelayModel {
                a: vec![a0.clone(), a1.clone()],
                b: vec![b0.clone()],
                equilibrium: EquilibriumPoint {
                    x_e: vec![0.0; 3],
                    residual_norm: 0.0,
                    converged: true,
                },
                u_bar: vec![0.0; 2],
            };
            let scaled = LinearDelayModel {
                b: vec![TaggedMatrix {
                    delay: 0.0,
                    m: &b0.m * 3.5,
                }],
                ..model.clone()
            };
            let z = Complex64::new(1.3, 0.4);
            let (r1, ..) = numerical_rank(&kalman_block(&model, z).unwrap(), 1e-10);
            let (r2, ..) = numerical_rank(&kalman_block(&scaled, z).unwrap(), 1e-10);
            assert_eq!(r1, r2);

            // column permutation leaves the rank unchanged
            let block = kalman_block(&model, z).unwrap();
            let mut permuted = block.clone();
            let ncols = permuted.ncols();
            permuted.swap_columns(0, ncols - 1);
            let (r3, ..) = numerical_rank(&permuted, 1e-10);
            assert_eq!(r1, r3);
        }
    }

    #[test]
    fn raising_rel_tol_never_raises_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = DMatrix::<Complex64>::from_fn(4, 6, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let mut prev = usize::MAX;
        for tol in [1e-14, 1e-10, 1e-6, 1e-2, 0.5] {
            let (rank, ..) = numerical_rank(&m, tol);
            assert!(rank <= prev);
            prev = rank;
        }
    }
}
