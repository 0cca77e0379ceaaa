//! Numerical results checked against independent closed forms.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drumkit::congruence::nested_rigidity_probe;
use drumkit::eigen::{counting_function, heat_semigroup_dense, solve_eigs, solve_eigs_dense};
use drumkit::fem::{assemble_mass, assemble_stiffness, build_laplacian, BcKind, BoundaryFunction, DiscreteLaplacian};
use drumkit::geometry::{Point2, Polygon, Triangle};
use drumkit::mesh::{mesh_interval, mesh_rectangle, mesh_triangle, refine, Mesh};

fn lap(m: &Mesh, kind: BcKind) -> DiscreteLaplacian {
    build_laplacian(Arc::new(m.clone()), kind, None).unwrap()
}

/// Element matrices of one triangle against a quadrature that is exact for
/// quadratics (edge midpoints) and gradients from the inverse Jacobian.
#[test]
fn element_matrices_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let p: Vec<Point2> = (0..3).map(|_| Point2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let Ok(t) = Triangle::new(p[0], p[1], p[2]) else { continue };
        if t.area() < 0.05 {
            continue;
        }
        let m = mesh_triangle(&t, 0).unwrap();
        let vs = m.vertices().to_vec();
        let mass = assemble_mass(&m).to_dense();
        let stiff = assemble_stiffness(&m).to_dense();

        // barycentric coordinates λ = B⁻¹ [x, y, 1]
        let b = Matrix3::new(vs[0].x, vs[1].x, vs[2].x, vs[0].y, vs[1].y, vs[2].y, 1.0, 1.0, 1.0);
        let binv = b.try_inverse().unwrap();
        let bary = |q: Point2| binv * nalgebra::Vector3::new(q.x, q.y, 1.0);
        let mids = [vs[0].midpoint(vs[1]), vs[1].midpoint(vs[2]), vs[2].midpoint(vs[0])];
        let area = t.area();
        for i in 0..3 {
            for j in 0..3 {
                let q: f64 = mids.iter().map(|&x| bary(x)[i] * bary(x)[j]).sum::<f64>() * area / 3.0;
                assert!((mass[(i, j)] - q).abs() < 1e-12 * area.max(1.0));
                let g = binv[(i, 0)] * binv[(j, 0)] + binv[(i, 1)] * binv[(j, 1)];
                assert!((stiff[(i, j)] - g * area).abs() < 1e-10 * (1.0 + g.abs() * area));
            }
        }
    }
}

/// P1 with consistent mass on a uniform grid of (0, π) has the closed-form
/// spectrum `λₖ = 6 (1 − cos kh) / (h² (2 + cos kh))`.
#[test]
fn interval_matches_discrete_closed_form() {
    let n = 400;
    let h = PI / n as f64;
    let s = solve_eigs(&lap(&mesh_interval(0.0, PI, n).unwrap(), BcKind::Dirichlet), 20, 1e-10).unwrap();
    for k in 1..=20 {
        let c = (k as f64 * h).cos();
        let exact = 6.0 * (1.0 - c) / (h * h * (2.0 + c));
        assert!((s.eigenvalues[k - 1] - exact).abs() < 1e-9 * exact, "k = {k}");
    }
}

#[test]
fn lanczos_agrees_with_dense_solver() {
    let m = mesh_rectangle(0.0, 0.0, 1.3, 1.0, 3).unwrap();
    for kind in [BcKind::Dirichlet, BcKind::Neumann] {
        let l = lap(&m, kind);
        let a = solve_eigs(&l, 12, 1e-11).unwrap();
        let b = solve_eigs_dense(&l, 12).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() < 1e-8 * y.abs().max(1.0), "{kind:?}: {x} vs {y}");
        }
    }
}

/// N(λ) of the discrete square spectrum against the lattice count at
/// midpoints between distinct exact eigenvalues, where the discretization
/// error is far smaller than the spacing.
#[test]
fn counting_function_matches_lattice_count() {
    let s = solve_eigs(&lap(&mesh_rectangle(0.0, 0.0, 1.0, 1.0, 5).unwrap(), BcKind::Dirichlet), 12, 1e-10).unwrap();
    let mut exact: Vec<u32> = (1..8).flat_map(|a| (1..8).map(move |b| a * a + b * b)).collect();
    exact.sort_unstable();
    exact.dedup();
    for w in exact.windows(2).take(5) {
        let mid = 0.5 * (w[0] + w[1]) as f64 * PI * PI;
        let lattice = (1..20u32)
            .flat_map(|a| (1..20u32).map(move |b| a * a + b * b))
            .filter(|&q| (q as f64) * PI * PI <= mid)
            .count();
        assert_eq!(counting_function(&s, mid).unwrap(), lattice, "λ = {mid}");
    }
    assert!(counting_function(&s, 1e6).is_err());
}

/// The dense heat semigroup against the eigen-expansion `Φ e^{−tΛ} Φᵀ M`.
#[test]
fn heat_semigroup_matches_eigen_expansion() {
    let m = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap();
    let l = lap(&m, BcKind::Dirichlet);
    let n = l.n_dof();
    let s = solve_eigs_dense(&l, n).unwrap();
    let mass = l.mass.to_dense();
    for t in [0.001, 0.05, 0.5] {
        let e = heat_semigroup_dense(&l, t).unwrap();
        let d = DMatrix::from_diagonal(&s.eigenvalues.iter().map(|x| (-t * x).exp()).collect::<Vec<_>>().into());
        let want = &s.eigenvectors * d * s.eigenvectors.transpose() * &mass;
        assert!((e - &want).amax() < 1e-9 * want.amax().max(1.0), "t = {t}");
    }
}

/// max Rayleigh quotient over any 5-dimensional subspace is at least λ₅.
#[test]
fn courant_fischer_lower_bound() {
    let l = lap(&mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap(), BcKind::Dirichlet);
    let l5 = solve_eigs(&l, 5, 1e-11).unwrap().eigenvalues[4];
    let (a, m) = (l.stiffness.to_dense(), l.mass.to_dense());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let x = DMatrix::from_fn(l.n_dof(), 5, |_, _| rng.gen_range(-1.0..1.0));
        let (ax, mx) = (x.transpose() * &a * &x, x.transpose() * &m * &x);
        // top generalized eigenvalue of the 5×5 pencil
        let c = mx.cholesky().unwrap();
        let linv = c.l().try_inverse().unwrap();
        let top = (&linv * ax * linv.transpose()).symmetric_eigen().eigenvalues.max();
        assert!(top >= l5 - 1e-10, "{top} < {l5}");
    }
}

#[test]
fn refinement_never_raises_dirichlet_eigenvalues() {
    let mut m = mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap();
    let mut prev: Option<Vec<f64>> = None;
    for _ in 0..3 {
        let s = solve_eigs(&lap(&m, BcKind::Dirichlet), 10, 1e-11).unwrap();
        if let Some(p) = &prev {
            for (a, b) in s.eigenvalues.iter().zip(p) {
                assert!(*a <= b + 1e-9 * b);
            }
        }
        prev = Some(s.eigenvalues);
        m = refine(&m).unwrap();
    }
}

#[test]
fn square_converges_at_second_order() {
    let exact = 2.0 * PI * PI;
    let errs: Vec<f64> = (2..=5)
        .map(|lv| {
            let s = solve_eigs(&lap(&mesh_rectangle(0.0, 0.0, 1.0, 1.0, lv).unwrap(), BcKind::Dirichlet), 1, 1e-12).unwrap();
            s.eigenvalues[0] - exact
        })
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "observed order {order} from {errs:?}");
    }
}

#[test]
fn robin_with_zero_beta_is_neumann() {
    let m = Arc::new(mesh_rectangle(0.0, 0.0, 2.0, 1.0, 3).unwrap());
    let n = build_laplacian(m.clone(), BcKind::Neumann, None).unwrap();
    let r = build_laplacian(m, BcKind::Robin, Some(BoundaryFunction::Constant(0.0))).unwrap();
    let sorted = |l: &DiscreteLaplacian| {
        let mut e = l.stiffness.entries().to_vec();
        e.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        e.into_iter().map(|(i, j, v)| (i, j, v.to_bits())).collect::<Vec<_>>()
    };
    assert_eq!(sorted(&n), sorted(&r));
}

#[test]
fn dirichlet_dofs_are_interior_vertices() {
    for m in [mesh_rectangle(0.0, 0.0, 1.0, 1.0, 3).unwrap(), mesh_interval(0.0, 1.0, 17).unwrap()] {
        assert_eq!(lap(&m, BcKind::Dirichlet).n_dof(), m.n_vertices() - m.boundary_vertex_ids().len());
    }
}

/// λ₁(sΩ) = λ₁(Ω)/s² gives the square-in-square gap; each refinement keeps
/// the gap within half of the previous one.
#[test]
fn nested_gap_is_stable_under_refinement() {
    let inner = Polygon::rectangle(0.1, 0.1, 1.1, 1.1).unwrap();
    let outer = Polygon::rectangle(0.0, 0.0, 1.2, 1.2).unwrap();
    let p = nested_rigidity_probe(&inner, &outer, 3, &[2, 3, 4]).unwrap();
    for k in 0..3 {
        for l in 0..2 {
            let (a, b) = (p.gaps[l][k], p.gaps[l + 1][k]);
            assert!(b > 0.0 && (b - a).abs() <= 0.5 * a, "k = {k}: {a} → {b}");
        }
    }
    let want = 5.0 * PI * PI * (1.0 - 1.0 / 1.44);
    assert!((p.gaps[2][1] - want).abs() < 0.05 * want);
}
