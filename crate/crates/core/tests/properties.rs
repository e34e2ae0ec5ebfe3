use choifit::hermitian::eigenvalues;
use choifit::instance_io::{ginibre, random_density, random_hermitian, random_psd, random_unitary};
use choifit::{
    apply_channel, assemble_operator, choi_from_kraus, cos_angle, generate_from_seed, map_solve, project_psd,
    project_psd_rank, smat, svec, validate_tp_choi, GeneratorSpec, HermitianMatrix, KrausSet, SolverConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rank_above(h: &HermitianMatrix, noise: f64) -> usize {
    eigenvalues(h).unwrap().iter().filter(|l| l.abs() > noise).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svec_is_an_isometry(seed: u64, dim in 1usize..7) {
        let mut g = rng(seed);
        let (a, b) = (random_hermitian(dim, &mut g), random_hermitian(dim, &mut g));
        let (va, vb) = (svec(&a), svec(&b));
        prop_assert_eq!(va.len(), dim * dim);
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        prop_assert!((dot - a.inner(&b)).abs() <= 1e-13 * (1.0 + a.inner(&b).abs()));
        prop_assert!(smat(&va).unwrap().distance(&a) <= 1e-14);
    }

    #[test]
    fn psd_projection_is_moreau(seed: u64, dim in 1usize..8) {
        let h = random_hermitian(dim, &mut rng(seed));
        let plus = project_psd(&h).unwrap();
        let minus = project_psd(&(-&h)).unwrap();
        // H = P(H) - P(-H) with orthogonal parts.
        prop_assert!((&plus - &minus).distance(&h) <= 1e-12);
        prop_assert!(plus.inner(&minus).abs() <= 1e-12);
        prop_assert!(*eigenvalues(&plus).unwrap().last().unwrap() >= -1e-13);
        prop_assert!(project_psd(&plus).unwrap().distance(&plus) <= 1e-12);
    }

    #[test]
    fn psd_projection_beats_any_psd_candidate(seed: u64, dim in 1usize..7, rank in 1usize..7) {
        let mut g = rng(seed);
        let h = random_hermitian(dim, &mut g);
        let cand = random_psd(dim, rank.min(dim), &mut g);
        let p = project_psd(&h).unwrap();
        prop_assert!(h.distance(&p) <= h.distance(&cand) + 1e-12);
    }

    #[test]
    fn rank_projection_respects_bound(seed: u64, dim in 2usize..8, bound in 1usize..8) {
        let bound = bound.min(dim);
        let h = random_hermitian(dim, &mut rng(seed));
        let p = project_psd_rank(&h, bound).unwrap();
        // Discarded directions come back as V diag V* rounding, O(eps * |H|).
        let noise = 1e-13 * (1.0 + h.frobenius_norm());
        prop_assert!(rank_above(&p, noise) <= bound);
        prop_assert!(eigenvalues(&p).unwrap().iter().all(|&l| l >= -noise));
    }

    #[test]
    fn affine_projection_is_orthogonal(seed: u64, n in 2usize..4, k in 1usize..4, r in 1usize..5) {
        let (inst, _) = generate_from_seed(&GeneratorSpec::square(n, k, r).with_seed(seed)).unwrap();
        let op = assemble_operator(&inst).unwrap();
        let mut g = rng(seed ^ 0x5eed);
        let x = random_hermitian(n * n, &mut g);
        let y = op.project_affine(&x).unwrap();
        let f = op.project_affine(&random_hermitian(n * n, &mut g)).unwrap();
        prop_assert!(op.residual_norm(&y).unwrap() <= 1e-12);
        prop_assert!(op.project_affine(&y).unwrap().distance(&y) <= 1e-12);
        // x - Px is normal to the affine set.
        let normal = (&x - &y).inner(&(&f - &y));
        prop_assert!(normal.abs() <= 1e-11 * (1.0 + x.frobenius_norm() * f.frobenius_norm()));
    }

    #[test]
    fn random_mixtures_are_channels(seed: u64, n in 1usize..5, q in 1usize..5) {
        let mut g = rng(seed);
        let ops: Vec<_> = (0..q).map(|_| random_unitary(n, &mut g)).collect();
        let w: Vec<f64> = (1..=q).map(|i| i as f64 / (q * (q + 1) / 2) as f64).collect();
        let choi = choi_from_kraus(&KrausSet::new(ops).unwrap(), Some(&w)).unwrap();
        prop_assert!(validate_tp_choi(&choi, true).unwrap().passes(1e-12));
        prop_assert!(rank_above(choi.matrix(), 1e-12) <= q.min(n * n));
        let rho = random_density(n, &mut g);
        let out = apply_channel(&choi, rho.as_mat()).unwrap();
        let t: f64 = (0..n).map(|s| out[(s, s)].re).sum();
        prop_assert!((t - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn channel_action_is_linear(seed: u64, n in 1usize..4, m in 1usize..4) {
        let mut g = rng(seed);
        // n blocks of m rows: tall enough for an isometry whatever m is.
        let v = ginibre(n * m, n, &mut g).qr().compute_thin_Q();
        let kraus = KrausSet::new((0..n).map(|i| v.as_ref().subrows(i * m, m).to_owned()).collect()).unwrap();
        let choi = choi_from_kraus(&kraus, None).unwrap();
        let (a, b) = (random_hermitian(n, &mut g), random_hermitian(n, &mut g));
        let sum = &(2.0 * &a) + &b;
        let lhs = apply_channel(&choi, sum.as_mat()).unwrap();
        let rhs = 2.0 * apply_channel(&choi, a.as_mat()).unwrap() + apply_channel(&choi, b.as_mat()).unwrap();
        prop_assert!((lhs - rhs).norm_l2() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Every MAP iterate is at least as close to any feasible point as the
    /// previous one. Iterates are read off by raising the iteration limit.
    #[test]
    fn map_iterates_are_fejer_monotone(seed: u64, n in 2usize..4, k in 1usize..3) {
        let (inst, p_true) = generate_from_seed(&GeneratorSpec::square(n, k, 2).with_seed(seed)).unwrap();
        let op = assemble_operator(&inst).unwrap();
        let dim = n * n;
        let start = HermitianMatrix::scaled_identity(dim, -(dim as f64));
        let mut last = f64::INFINITY;
        for limit in 1..=12 {
            let cfg = SolverConfig::default().with_iterlimit(limit).with_toler(1e-300);
            let trace = map_solve(&op, &start, &cfg).unwrap();
            let d = trace.final_p.distance(p_true.matrix());
            prop_assert!(d <= last + 1e-12, "limit {}: {} after {}", limit, d, last);
            last = d;
        }
    }

    #[test]
    fn cosines_are_bounded(seed: u64, dim in 1usize..6) {
        let mut g = rng(seed);
        let (a, b, c) = (random_hermitian(dim, &mut g), random_hermitian(dim, &mut g), random_hermitian(dim, &mut g));
        let cos = cos_angle(&a, &b, &c);
        prop_assert!((-1.0..=1.0).contains(&cos));
        prop_assert!((cos_angle(&a, &b, &a) - 1.0).abs() <= 1e-12);
    }
}
