//! Property tests for the module invariants, over seeded random models.

use heisen_core::dyson::compute_kernels;
use heisen_core::hilbert::HermitianEigen;
use heisen_core::image::{compose_images, contract_with_bath, from_image_family, to_image_family};
use heisen_core::markov::{
    bohr_decomposition, decompose_interaction, lindblad_rhs, spectral_coefficients_at_horizon, BohrDecomposition,
    LindbladForm, SpectralOptions,
};
use heisen_core::npoint::{assemble_partition_term, enumerate_even_partitions};
use heisen_core::oracle::{heisenberg_evolve_exact, image_extract_exact, npoint_reduced_exact};
use heisen_core::presets::{random_full, random_hermitian_system, random_model};
use heisen_core::superop::{one_point_operator, SeriesTruncation};
use heisen_core::{CMatrix, Dims, ImageFamily, Operator, SpaceKind, TimeGrid};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3, 1usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn image_roundtrip_and_homomorphism(seed in 0u64..10_000, (ds, db) in dims()) {
        let d = Dims::new(ds, db).unwrap();
        let x = random_full(seed, d);
        let y = random_full(seed + 1, d);
        let fx = to_image_family(&x).unwrap();
        let back = from_image_family(&fx).unwrap();
        prop_assert_eq!(back.matrix(), x.matrix());
        let fy = to_image_family(&y).unwrap();
        let prod = from_image_family(&compose_images(&fx, &fy).unwrap()).unwrap();
        let want = x.matrix() * y.matrix();
        prop_assert!((prod.matrix() - &want).norm() <= 1e-13 * (1.0 + want.norm()));
    }

    #[test]
    fn exact_evolution_is_unitary_and_hermitian(seed in 0u64..10_000, (ds, db) in dims(), t in 0.0f64..4.0) {
        let m = random_model(seed, ds, db, 0.3).unwrap();
        let o = random_hermitian_system(seed + 7, m.dims());
        let full = heisenberg_evolve_exact(&m, &o, t).unwrap();
        prop_assert!(full.is_hermitian(1e-10));
        let id_b = Operator::identity(SpaceKind::Bath, m.dims());
        let lifted = heisen_core::hilbert::tensor_product(&o, &id_b).unwrap();
        let a = HermitianEigen::new(lifted.matrix()).unwrap().values;
        let b = HermitianEigen::new(full.matrix()).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-8);
        }
        let os = npoint_reduced_exact(&m, &[(o.clone(), t)]).unwrap();
        prop_assert!(os.is_hermitian(1e-10));
        // Σ T_α X_{αβ} T_β† = X.
        let d = m.dims();
        let mut rebuilt = CMatrix::zeros(d.full(), d.full());
        for al in 0..d.bath {
            for be in 0..d.bath {
                let blk = image_extract_exact(&full, al, be).unwrap();
                for i in 0..d.system {
                    for j in 0..d.system {
                        rebuilt[(d.flat(i, al), d.flat(j, be))] = blk.matrix()[(i, j)];
                    }
                }
            }
        }
        prop_assert_eq!(&rebuilt, full.matrix());
    }

    #[test]
    fn one_point_operator_is_hermitian(seed in 0u64..10_000, db in 1usize..=3, order in 0usize..=3, lam in 0.0f64..0.3) {
        let m = random_model(seed, 2, db, lam).unwrap();
        let grid = TimeGrid::uniform(1.5, 3).unwrap();
        let ks = compute_kernels(&m, order, &grid).unwrap();
        let o = random_hermitian_system(seed + 3, m.dims());
        let traj = one_point_operator(&o, SeriesTruncation::new(order, lam).unwrap(), &ks, m.rho_b(), &grid).unwrap();
        for v in &traj.values {
            prop_assert!((v.matrix() - v.matrix().adjoint()).norm() <= 1e-12 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn interaction_frame_roundtrip(seed in 0u64..10_000, (ds, db) in dims(), t in 0.0f64..3.0) {
        let m = random_model(seed, ds, db, 0.1).unwrap();
        let ks = compute_kernels(&m, 1, &TimeGrid::new(vec![0.0, 1.0]).unwrap()).unwrap();
        let d = m.dims();
        let blocks: Vec<CMatrix> = (0..d.bath * d.bath)
            .map(|k| random_hermitian_system(seed + 11 + k as u64, d).into_matrix())
            .collect();
        let f = ImageFamily::from_blocks(d, t, blocks).unwrap();
        let back = ks.frame().to_heisenberg(&ks.frame().to_interaction(&f, t), t);
        prop_assert!(back.distance(&f) <= 1e-12 * (1.0 + f.norm()));
    }

    #[test]
    fn partner_partitions_cancel(seed in 0u64..10_000, db in 1usize..=3, n in 1usize..=3) {
        let m = random_model(seed, 2, db, 0.2).unwrap();
        let t = 0.7;
        let ks = compute_kernels(&m, n, &TimeGrid::new(vec![0.0, t]).unwrap()).unwrap();
        let o = random_hermitian_system(seed + 5, m.dims());
        for p in enumerate_even_partitions(n, n + 1) {
            let Some(partner) = p.zero_prefixed() else { continue };
            let a = assemble_partition_term(&p, &o, &ks, m.rho_b(), t, m.lambda()).unwrap();
            let b = assemble_partition_term(&partner, &o, &ks, m.rho_b(), t, m.lambda()).unwrap();
            let sum = contract_with_bath(&a, m.rho_b()).unwrap().into_matrix() + contract_with_bath(&b, m.rho_b()).unwrap().into_matrix();
            prop_assert!(sum.norm() <= 1e-12 * (1.0 + a.norm()), "{}", p);
        }
    }

    #[test]
    fn interaction_decomposition_reconstructs(seed in 0u64..10_000, (ds, db) in dims()) {
        let m = random_model(seed, ds, db, 0.1).unwrap();
        let dec = decompose_interaction(m.hi()).unwrap();
        let err = (dec.reconstruct(m.dims()) - m.hi().matrix()).norm();
        prop_assert!(err <= 1e-10 * m.hi().norm());
        prop_assert!(dec.len() <= (ds * ds).min(db * db));
    }

    #[test]
    fn bohr_components_reconstruct(seed in 0u64..10_000, ds in 1usize..=4, hbar in 0.5f64..2.0) {
        let m = random_model(seed, ds, 1, 0.1).unwrap();
        let r = random_hermitian_system(seed + 2, m.dims());
        let b = bohr_decomposition(&r, m.h0(), hbar).unwrap();
        let eig = HermitianEigen::new(m.h0().matrix()).unwrap();
        let w_min = b.frequencies.iter().map(|w| w.abs()).filter(|w| *w > 1e-9).fold(1.0, f64::min);
        let span = std::f64::consts::TAU / w_min;
        for k in 0..10 {
            let t = span * k as f64 / 9.0;
            let u = eig.propagator(t, hbar);
            let want = &u * r.matrix() * u.adjoint();
            prop_assert!((b.reconstruct(t) - &want).norm() <= 1e-10 * (1.0 + r.norm()));
        }
    }

    #[test]
    fn lindblad_fixes_identity_and_hermiticity(seed in 0u64..10_000, db in 1usize..=3, horizon in 0.5f64..6.0) {
        let m = random_model(seed, 2, db, 0.2).unwrap();
        let dec = decompose_interaction(m.hi()).unwrap();
        let bohr = BohrDecomposition::new(&dec, m.h0(), m.hbar()).unwrap();
        let sc = spectral_coefficients_at_horizon(&m, &dec, &bohr.frequencies(), SpectralOptions::new(horizon, 1.0)).unwrap();
        let id = Operator::identity(SpaceKind::System, m.dims());
        let l = lindblad_rhs(&id, &bohr, &sc, m.h0(), m.constants(), LindbladForm::Derived).unwrap();
        prop_assert!(l.norm() <= 1e-12);
        let o = random_hermitian_system(seed + 9, m.dims());
        let r = lindblad_rhs(&o, &bohr, &sc, m.h0(), m.constants(), LindbladForm::Derived).unwrap();
        prop_assert!((r.matrix() - r.matrix().adjoint()).norm() <= 1e-10 * (1.0 + r.norm()));
    }
}
