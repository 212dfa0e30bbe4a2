use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use phaseprior::linalg::orthonormal_factor;
use phaseprior::measurements::{
    cyclic_shift, second_moment_blocks, separable_measurement, time_reversal, to_real_fourier,
};
use phaseprior::priors::sample_mixing;
use phaseprior::{rng, BlockStructure, MixingKind, MixingMatrix, Signal};

fn gaussian(seed: u64, n: usize) -> DVector<f64> {
    rng::gaussian_vector(&mut rng::stream(seed, 0), n)
}

fn max_rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-300)
}

/// Block dimensions from a seed: a random composition of `n`.
fn random_blocks(n: usize, seed: u64) -> BlockStructure {
    let mut dims = Vec::new();
    let mut left = n;
    let mut s = seed;
    while left > 0 {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let d = 1 + (s >> 33) as usize % left.min(4);
        dims.push(d);
        left -= d;
    }
    BlockStructure::new(dims).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn separable_equals_moment_of_mixed_signal(n in 2usize..=32, seed in any::<u64>(), so in any::<bool>()) {
        let kind = if so { MixingKind::SpecialOrthogonal } else { MixingKind::GeneralLinear };
        let a = sample_mixing(n, kind, seed).unwrap();
        let x = Signal::new(gaussian(seed ^ 1, n));
        let blocks = BlockStructure::power_spectrum(n).unwrap();
        let p = separable_measurement(&x, &a, &blocks).unwrap();
        let ax = Signal::new(a.entries() * x.coeffs());
        let q = second_moment_blocks(&ax, &blocks).unwrap();
        prop_assert!(max_rel(p.values(), q.values()) < 1e-10);
    }

    #[test]
    fn sign_invariance_is_exact(n in 1usize..=24, seed in any::<u64>()) {
        let x = Signal::new(gaussian(seed, n));
        let neg = Signal::new(-x.coeffs());
        let blocks = random_blocks(n, seed);
        prop_assert_eq!(second_moment_blocks(&x, &blocks).unwrap(), second_moment_blocks(&neg, &blocks).unwrap());
    }

    #[test]
    fn block_orthogonal_invariance(n in 1usize..=24, seed in any::<u64>()) {
        let blocks = random_blocks(n, seed);
        let mut q = DMatrix::zeros(n, n);
        let mut r = rng::stream(seed, 7);
        for range in blocks.ranges() {
            let d = range.len();
            let g = orthonormal_factor(&rng::gaussian_matrix(&mut r, d, d));
            q.view_mut((range.start, range.start), (d, d)).copy_from(&g);
        }
        let x = Signal::new(gaussian(seed, n));
        let qx = Signal::new(&q * x.coeffs());
        let a = second_moment_blocks(&x, &blocks).unwrap();
        let b = second_moment_blocks(&qx, &blocks).unwrap();
        prop_assert!(max_rel(a.values(), b.values()) < 1e-10);
    }

    #[test]
    fn shift_and_reversal_invariance(n in 1usize..=32, s in 0usize..64, seed in any::<u64>()) {
        let v = gaussian(seed, n);
        let blocks = BlockStructure::power_spectrum(n).unwrap();
        let base = second_moment_blocks(&to_real_fourier(&v).unwrap(), &blocks).unwrap();
        let shifted = second_moment_blocks(&to_real_fourier(&cyclic_shift(&v, s % n)).unwrap(), &blocks).unwrap();
        let reversed = second_moment_blocks(&to_real_fourier(&time_reversal(&v)).unwrap(), &blocks).unwrap();
        prop_assert!(max_rel(base.values(), shifted.values()) < 1e-10);
        prop_assert!(max_rel(base.values(), reversed.values()) < 1e-10);
    }

    #[test]
    fn parseval_and_total_energy(n in 1usize..=32, seed in any::<u64>()) {
        let v = gaussian(seed, n);
        let x = to_real_fourier(&v).unwrap();
        prop_assert!((x.norm() - v.norm()).abs() < 1e-12 * v.norm().max(1.0));
        let blocks = BlockStructure::power_spectrum(n).unwrap();
        let total: f64 = second_moment_blocks(&x, &blocks).unwrap().values().sum();
        prop_assert!((total - x.norm().powi(2)).abs() < 1e-10 * total.max(1.0));
    }

    #[test]
    fn measurement_is_homogeneous_of_degree_two(n in 1usize..=16, c in -10.0f64..10.0, seed in any::<u64>()) {
        let a = sample_mixing(n, MixingKind::GeneralLinear, seed).unwrap();
        let x = Signal::new(gaussian(seed, n));
        let cx = Signal::new(x.coeffs() * c);
        let blocks = BlockStructure::power_spectrum(n).unwrap();
        let p = separable_measurement(&x, &a, &blocks).unwrap().values() * (c * c);
        let q = separable_measurement(&cx, &a, &blocks).unwrap();
        prop_assert!((&p - q.values()).amax() <= 1e-10 * p.amax().max(1e-300));
    }
}

/// Block energies against `|DFT_k|^2 / N` summed over conjugate frequencies,
/// with the DFT evaluated as a direct sum.
#[test]
fn block_energies_equal_direct_dft_sums() {
    for trial in 0..200u64 {
        let n = 1 + (trial as usize * 7) % 32;
        let v = gaussian(trial + 1000, n);
        let p = second_moment_blocks(
            &to_real_fourier(&v).unwrap(),
            &BlockStructure::power_spectrum(n).unwrap(),
        )
        .unwrap();
        let dft2 = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, vt) in v.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += vt * ph.cos();
                im += vt * ph.sin();
            }
            (re * re + im * im) / n as f64
        };
        let mut expect = vec![dft2(0)];
        if n.is_multiple_of(2) {
            expect.push(dft2(n / 2));
        }
        for k in 1..n.div_ceil(2) {
            expect.push(dft2(k) + dft2(n - k));
        }
        let expect = DVector::from_vec(expect);
        assert!(
            (p.values() - &expect).amax() < 1e-10 * expect.amax().max(1.0),
            "n = {n}"
        );
    }
}

#[test]
fn so_samples_satisfy_the_mixing_contract() {
    for seed in 0..1000u64 {
        let n = 2 + (seed as usize % 7);
        let a = sample_mixing(n, MixingKind::SpecialOrthogonal, seed).unwrap();
        let m = a.entries();
        assert!((m.transpose() * m - DMatrix::identity(n, n)).amax() < 1e-10);
        assert!((m.determinant() - 1.0).abs() < 1e-10);
        // the constructor re-checks the invariants
        assert!(MixingMatrix::new(m.clone(), MixingKind::SpecialOrthogonal).is_ok());
    }
}
