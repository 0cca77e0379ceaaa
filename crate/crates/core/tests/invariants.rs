//! Property tests over randomized inputs.

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drumkit::congruence::{decide_congruence, CongruenceOptions, Region};
use drumkit::eigen::solve_eigs;
use drumkit::fem::{build_laplacian, BcKind, NodalSpace};
use drumkit::geometry::{build_propeller_pair, reflect_across_edge, fit_isometry, Isometry, Point2, Triangle};
use drumkit::mesh::{mesh_layout, mesh_rectangle, mesh_triangle, refine, Mesh};
use drumkit::opanalysis::{
    decompose_components, extend_components, factor_operator, modulus_operator, test_disjointness,
    verify_local_isometry, Verdict,
};
use drumkit::sparse::CsrMatrix;
use drumkit::transplant::{
    find_transplantation_matrix, lift_transplantation, multi_copy_operator, spectral_intertwiner, OperatorMatrix, Storage,
};
use drumkit::DrumError;

fn fig1() -> Triangle {
    Triangle::new(Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), Point2::new(1.8, 2.4)).unwrap()
}

fn random_isometry(rng: &mut ChaCha8Rng) -> Isometry {
    let c = Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    random_linear(rng).compose(&Isometry::translation(c))
}

/// Rotation about the origin, possibly followed by a reflection through it.
fn random_linear(rng: &mut ChaCha8Rng) -> Isometry {
    let g = Isometry::rotation(rng.gen_range(-PI..PI), Point2::new(0.0, 0.0));
    if rng.gen_bool(0.5) {
        g.compose(&Isometry::reflection(Point2::new(0.0, 0.0), Point2::new(1.0, 0.3)).unwrap())
    } else {
        g
    }
}

#[test]
fn long_isometry_chains_stay_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Isometry::identity();
    for _ in 0..1000 {
        g = random_isometry(&mut rng).compose(&g);
        if rng.gen_bool(0.3) {
            g = g.inverse();
        }
    }
    assert!(g.orthogonality_error() < 1e-12, "{}", g.orthogonality_error());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edge_reflection_is_an_involution(
        ax in -3.0..3.0f64, ay in -3.0..3.0f64, bx in -3.0..3.0f64, by in -3.0..3.0f64, cx in -3.0..3.0f64, cy in -3.0..3.0f64, e in 0usize..3,
    ) {
        let Ok(t) = Triangle::new(Point2::new(ax, ay), Point2::new(bx, by), Point2::new(cx, cy)) else { return Ok(()) };
        prop_assume!(t.area() > 0.05);
        let r = reflect_across_edge(&t, e).unwrap();
        prop_assert!((r.area() - t.area()).abs() < 1e-12 * t.area().max(1.0));
        prop_assert_eq!(r.orientation(), -t.orientation());
        let back = reflect_across_edge(&r, e).unwrap();
        for (p, q) in back.vertices().iter().zip(t.vertices()) {
            prop_assert!(p.dist(q) < 1e-10);
        }
    }

    #[test]
    fn propeller_layouts_tile_seven_copies(bx in 0.3..0.9f64, by in 0.2..0.8f64) {
        let t = Triangle::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(bx, by)).unwrap();
        prop_assume!(t.is_scalene());
        if let Ok((l1, l2)) = build_propeller_pair(&t) {
            for l in [&l1, &l2] {
                prop_assert_eq!(l.n_copies(), 7);
                prop_assert!((l.area() - 7.0 * t.area()).abs() < 1e-10);
                // copies do not overlap, so the union has the full area
                prop_assert!((l.union_polygon().unwrap().area() - 7.0 * t.area()).abs() < 1e-9);
            }
        }
    }

    /// Supplying spectra only adds ways to confirm a single rigid match.
    #[test]
    fn spectra_never_undo_congruence(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m1 = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap();
        let g = random_isometry(&mut rng);
        let m2 = m1.transformed(&g).unwrap();
        let u = multi_copy_operator(&[g.inverse()], &[1.0], &m1, &m2, BcKind::Dirichlet).unwrap();
        let mut dec = decompose_components(&factor_operator(&u, &m1, &m2).unwrap(), &m2).unwrap();
        extend_components(&mut dec, &u, &m1, &m2).unwrap();
        let (r1, r2) = (Region::from_mesh(&m1).unwrap(), Region::from_mesh(&m2).unwrap());
        let opts = CongruenceOptions { kind: BcKind::Dirichlet, ..Default::default() };
        let bare = decide_congruence(&dec, &r1, &r2, None, None, &u, &opts).unwrap();
        let s1 = solve_eigs(&build_laplacian(Arc::new(m1.clone()), BcKind::Dirichlet, None).unwrap(), 1, 1e-10).unwrap();
        let s2 = solve_eigs(&build_laplacian(Arc::new(m2.clone()), BcKind::Dirichlet, None).unwrap(), 1, 1e-10).unwrap();
        let with = decide_congruence(&dec, &r1, &r2, Some(&s1), Some(&s2), &u, &opts).unwrap();
        prop_assert!(bare.congruent);
        prop_assert!(with.congruent);
    }

    #[test]
    fn fit_ignores_point_order(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_isometry(&mut rng);
        let src: Vec<Point2> = (0..8).map(|_| Point2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect();
        let dst: Vec<Point2> = src.iter().map(|&p| g.apply(p)).collect();
        let (a, rms) = fit_isometry(&src, &dst).unwrap();
        let mut idx: Vec<usize> = (0..8).collect();
        idx.reverse();
        idx.swap(1, 5);
        let (b, _) = fit_isometry(&idx.iter().map(|&i| src[i]).collect::<Vec<_>>(), &idx.iter().map(|&i| dst[i]).collect::<Vec<_>>()).unwrap();
        prop_assert!(rms < 1e-9);
        prop_assert!(a.distance(&g) < 1e-9);
        prop_assert!(a.distance(&b) < 1e-9);
    }

    #[test]
    fn refinement_halves_mesh_size_and_stays_conforming(
        ax in -3.0..3.0f64, ay in -3.0..3.0f64, bx in -3.0..3.0f64, by in -3.0..3.0f64, cx in -3.0..3.0f64, cy in -3.0..3.0f64,
    ) {
        let Ok(t) = Triangle::new(Point2::new(ax, ay), Point2::new(bx, by), Point2::new(cx, cy)) else { return Ok(()) };
        prop_assume!(t.area() > 0.05);
        let m = mesh_triangle(&t, 1).unwrap();
        let r = refine(&m).unwrap();
        r.audit().unwrap();
        prop_assert!((r.mesh_size() - 0.5 * m.mesh_size()).abs() < 1e-12 * m.mesh_size());
    }

    /// U = Σ cᵢ f∘τᵢ on random rigid copies: factorization recovers τᵢ and cᵢ.
    #[test]
    fn multi_copy_round_trip(seed in 0u64..10_000, n in 1usize..4, dirichlet in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m1 = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap();
        let mut parts = Vec::new();
        let mut taus = Vec::new();
        let mut cs = Vec::new();
        for i in 0..n {
            let g = Isometry::translation(Point2::new(3.0 * i as f64, 0.0)).compose(&random_linear(&mut rng));
            parts.push(m1.transformed(&g).unwrap());
            taus.push(g.inverse());
            cs.push(rng.gen_range(0.25..4.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        }
        let (m2, _) = Mesh::merge(&parts).unwrap();
        let kind = if dirichlet { BcKind::Dirichlet } else { BcKind::Neumann };
        let u = multi_copy_operator(&taus, &cs, &m1, &m2, kind).unwrap();
        let f = factor_operator(&u, &m1, &m2).unwrap();
        let dec = decompose_components(&f, &m2).unwrap();
        prop_assert_eq!(dec.components.len(), n);
        for c in &dec.components {
            let i = (0..n).min_by(|&a, &b| taus[a].distance(&c.isometry).total_cmp(&taus[b].distance(&c.isometry))).unwrap();
            prop_assert!(c.fit_rms <= 1e-9);
            prop_assert!(taus[i].distance(&c.isometry) <= 1e-9);
            prop_assert!((c.constant - cs[i]).abs() <= 1e-12);
        }
        // the modulus of a preserving operator has one source per row
        let abs_u = modulus_operator(&u);
        let fpos: Vec<f64> = (0..u.ncols()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (a, b) = (abs_u.apply(&fpos), u.apply(&fpos));
        prop_assert!(a.iter().zip(&b).all(|(x, y)| *x >= 0.0 && (x - y.abs()).abs() == 0.0));
    }

    /// A signed permutation between isometric meshes is always preserving,
    /// a row mixing two far-apart columns never is.
    #[test]
    fn structural_rows_decide_disjointness(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap();
        let s = NodalSpace::new(&m, drumkit::fem::SpaceKind::Full);
        let n = s.dim();
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, if rng.gen_bool(0.5) { 1.0 } else { -2.0 })).collect();
        let ok = OperatorMatrix::new(Storage::Sparse(CsrMatrix::from_triplets(n, n, t.clone())), s.clone(), s.clone(), "diag").unwrap();
        prop_assert_eq!(test_disjointness(&ok, &m, &m, 16, seed).unwrap().verdict, Verdict::Preserving);
        // vertex 0 is the corner (0,0); the opposite corner is far away
        let far = m.vertices().iter().position(|p| (p.x - 1.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12).unwrap();
        let row = rng.gen_range(0..n);
        t.push((row, far, 0.5));
        t.push((row, 0, 0.5));
        let bad = OperatorMatrix::new(Storage::Sparse(CsrMatrix::from_triplets(n, n, t)), s.clone(), s, "mixed").unwrap();
        let r = test_disjointness(&bad, &m, &m, 16, seed).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Violating);
        prop_assert!(r.witness.is_some() && r.structural_violations >= 1);
    }

    /// Equal areas with several components never pass silently.
    #[test]
    fn equal_area_split_is_inconsistent(n in 2usize..4, flips in proptest::collection::vec(any::<bool>(), 3)) {
        let unit = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 2).unwrap();
        // a half turn and the reflection in y = x both keep the mesh diagonal
        let half = Isometry::rotation(PI, Point2::new(1.0, 1.0));
        let diag = Isometry::reflection(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap();
        let strip: Vec<Mesh> = (0..n).map(|i| unit.transformed(&Isometry::translation(Point2::new(i as f64, 0.0))).unwrap()).collect();
        let (m1, _) = Mesh::merge(&strip).unwrap();
        let mut parts = Vec::new();
        let mut taus = Vec::new();
        for i in 0..n {
            let local = if flips[i] { half } else { diag };
            let g = Isometry::translation(Point2::new(3.0 * i as f64, 5.0)).compose(&local);
            parts.push(unit.transformed(&g).unwrap());
            // copy i lands on square i of the strip
            taus.push(Isometry::translation(Point2::new(i as f64, 0.0)).compose(&g.inverse()));
        }
        let (m2, _) = Mesh::merge(&parts).unwrap();
        let u = multi_copy_operator(&taus, &vec![1.0; n], &m1, &m2, BcKind::Neumann).unwrap();
        let mut dec = decompose_components(&factor_operator(&u, &m1, &m2).unwrap(), &m2).unwrap();
        extend_components(&mut dec, &u, &m1, &m2).unwrap();
        let r = decide_congruence(&dec, &Region::Interval(0.0, n as f64), &Region::Interval(0.0, n as f64), None, None, &u,
            &CongruenceOptions { kind: BcKind::Neumann, ..Default::default() });
        prop_assert!(matches!(r, Err(DrumError::InternalInconsistency(_))));
    }
}

#[test]
fn lifted_transplantation_is_mass_isometric() {
    let (l1, l2) = build_propeller_pair(&fig1()).unwrap();
    let t = find_transplantation_matrix(&l1, &l2).unwrap();
    let (m1, nc1) = mesh_layout(&l1, 2).unwrap();
    let (m2, nc2) = mesh_layout(&l2, 2).unwrap();
    let u = lift_transplantation(&t, &nc1, &m1, &nc2, &m2).unwrap();
    let a1 = build_laplacian(Arc::new(m1), BcKind::Dirichlet, None).unwrap();
    let a2 = build_laplacian(Arc::new(m2), BcKind::Dirichlet, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let f: Vec<f64> = (0..u.ncols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let uf = u.apply(&f);
        let (n1, n2) = (a1.mass.quad_form(&f), a2.mass.quad_form(&uf));
        assert!((n1 - n2).abs() <= 1e-10 * n1);
    }
}

#[test]
fn spectral_intertwiner_is_unitary_on_its_subspace() {
    let (l1, l2) = build_propeller_pair(&fig1()).unwrap();
    let (m1, _) = mesh_layout(&l1, 2).unwrap();
    let (m2, _) = mesh_layout(&l2, 2).unwrap();
    let a1 = build_laplacian(Arc::new(m1), BcKind::Dirichlet, None).unwrap();
    let a2 = build_laplacian(Arc::new(m2), BcKind::Dirichlet, None).unwrap();
    let s1 = solve_eigs(&a1, 10, 1e-10).unwrap();
    let s2 = solve_eigs(&a2, 10, 1e-10).unwrap();
    let u = spectral_intertwiner(&s1, &s2, &a1.mass, &a2.mass).unwrap();
    let phi = s1.eigenvectors.columns(0, 10).into_owned();
    let uphi = u.to_csr().mul_dense(&phi);
    let g = uphi.transpose() * a2.mass.to_csr().mul_dense(&uphi);
    let want = phi.transpose() * a1.mass.to_csr().mul_dense(&phi);
    assert!((g - want).amax() <= 1e-7);
}

/// Barycentric interpolation through an exact isometry onto a mesh that does
/// not match: rows mix the three vertices of one cell, the operator stays
/// disjointness-preserving and τ is recovered exactly because P1
/// interpolation reproduces coordinates.
#[test]
fn interpolation_operator_is_locally_isometric() {
    let m1 = mesh_rectangle(-1.0, -1.0, 2.0, 2.0, 4).unwrap();
    let m2 = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap();
    let g = Isometry::rotation(0.3, Point2::new(0.2, -0.1));
    let s1 = NodalSpace::new(&m1, drumkit::fem::SpaceKind::Full);
    let s2 = NodalSpace::new(&m2, drumkit::fem::SpaceKind::Full);
    let vs = m1.vertices();
    let mut t = Vec::new();
    for (r, &y) in m2.vertices().iter().enumerate() {
        let p = g.apply(y);
        let cell = (0..m1.n_cells())
            .find_map(|k| {
                let c = m1.cell(k);
                let (a, b, d) = (vs[c[0]], vs[c[1]], vs[c[2]]);
                let area = drumkit::geometry::orient2d(a, b, d);
                let l = [drumkit::geometry::orient2d(b, d, p) / area, drumkit::geometry::orient2d(d, a, p) / area, drumkit::geometry::orient2d(a, b, p) / area];
                l.iter().all(|&x| x >= -1e-12).then(|| (c.to_vec(), l))
            })
            .unwrap();
        for (v, w) in cell.0.iter().zip(cell.1) {
            if w.abs() > 1e-14 {
                t.push((r, *v, w));
            }
        }
    }
    let u = OperatorMatrix::new(Storage::Sparse(CsrMatrix::from_triplets(s2.dim(), s1.dim(), t)), s1, s2, "interpolation").unwrap();
    let f = factor_operator(&u, &m1, &m2).unwrap();
    let li = verify_local_isometry(&f, &m2).unwrap();
    assert!(li.gram_deviation < 1e-9 && li.grad_h < 1e-9, "{li:?}");
    let dec = decompose_components(&f, &m2).unwrap();
    assert_eq!(dec.components.len(), 1);
    assert!(dec.components[0].isometry.distance(&g) < 1e-9);
}
