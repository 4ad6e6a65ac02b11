use std::f64::consts::PI;

use hjb_vem::analysis::miranda_talenti_norms;
use hjb_vem::assembly::{
    assemble_linearized, b_norm, element_system, nonlinear_residual, select_argmax_controls, Discretization,
    FrozenPoint,
};
use hjb_vem::basis::{cell_rule, exact_cell_moments, MonomialBasis};
use hjb_vem::element::{build_projectors, dofs_of_polynomial, Family, LocalElement};
use hjb_vem::linalg::sparse_solve;
use hjb_vem::mesh::{generate_structured, MeshKind, PolygonalMesh, Rectangle};
use hjb_vem::newton::{solve_hjb, NewtonConfig};
use hjb_vem::problem::{cordes_check, cordes_samples, make_builtin, BuiltinOptions, Coefficients, HJBProblem};
use nalgebra::{DMatrix, DVector, Matrix2, Point2, RowDVector, Vector2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAMILIES: [Family; 2] = [Family::Conforming, Family::Nonconforming];
const KINDS: [MeshKind; 4] = [MeshKind::Triangle, MeshKind::Square, MeshKind::Hexagon, MeshKind::DistortedQuad];
const BUILTINS: [&str; 3] = ["example1", "example2", "example3"];

/// Affine image of points on the unit circle: convex, counter-clockwise,
/// of arbitrary size, aspect ratio and position.
fn convex_polygon() -> impl Strategy<Value = Vec<Point2<f64>>> {
    (3usize..=8)
        .prop_flat_map(|m| {
            (
                prop::collection::vec(0.3f64..1.0, m),
                0.0..2.0 * PI,
                (0.5f64..2.0, 0.5f64..2.0, -0.5f64..0.5),
                (-5.0f64..5.0, -5.0f64..5.0),
                -2.0f64..1.0,
            )
        })
        .prop_map(|(gaps, rot, (sx, sy, sh), (tx, ty), log_scale)| {
            let total: f64 = gaps.iter().sum();
            let scale = 10f64.powf(log_scale);
            let mut angle = rot;
            gaps.iter()
                .map(|g| {
                    let (s, c) = angle.sin_cos();
                    angle += 2.0 * PI * g / total;
                    Point2::new(tx + scale * (sx * c + sh * s), ty + scale * sy * s)
                })
                .collect()
        })
}

fn single_cell(pts: Vec<Point2<f64>>) -> PolygonalMesh {
    let m = pts.len();
    PolygonalMesh::new(pts, vec![(0..m).collect()]).unwrap()
}

fn monomial_index(a: usize, b: usize) -> usize {
    let j = a + b;
    j * (j + 1) / 2 + b
}

fn hessian_of(basis: &MonomialBasis, coeffs: &[f64], p: &Point2<f64>) -> Matrix2<f64> {
    basis.hessians(p).iter().zip(coeffs).map(|(h, c)| h * *c).sum()
}

fn check_reproduction(pts: Vec<Point2<f64>>, coeffs: &[f64]) -> Result<(), TestCaseError> {
    let mesh = single_cell(pts);
    let rule = cell_rule(&mesh.cell_points(0), 4).unwrap();
    let cnorm = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    for family in FAMILIES {
        let el = build_projectors(&mesh, 0, family, 2, 1.0).unwrap();
        let h = el.diameter;
        let dofs = dofs_of_polynomial(&mesh, 0, family, coeffs);

        let ph = &el.p_h * &dofs;
        for b in 0..6 {
            prop_assert!((ph[b] - coeffs[b]).abs() <= 1e-10 * (1.0 + cnorm), "{family} P_H row {b}");
        }
        let st = &el.stab * &dofs;
        prop_assert!(st.amax() <= 1e-10 * el.s_k * (1.0 + dofs.amax()), "{family} stabilization kernel");

        let mean_v = rule.integrate(|p| el.basis.eval_poly(coeffs, p)) / el.area;
        prop_assert!((el.mean_value(&dofs) - mean_v).abs() <= 1e-10 * (1.0 + cnorm));
        let gx = rule.integrate(|p| el.basis.eval_poly_gradient(coeffs, p).x) / el.area;
        let gy = rule.integrate(|p| el.basis.eval_poly_gradient(coeffs, p).y) / el.area;
        let g = el.mean_gradient(&dofs);
        prop_assert!((g - Vector2::new(gx, gy)).amax() <= 1e-10 * (1.0 + cnorm) / h);
        let hess = hessian_of(&el.basis, coeffs, &el.basis.center());
        prop_assert!((el.mean_hessian(&dofs) - hess).amax() <= 1e-10 * (1.0 + cnorm) / (h * h));

        let p1 = &el.p1_grad * &dofs;
        for p in mesh.cell_points(0).iter().chain([&el.basis.center()]) {
            let m = el.basis.values(p);
            let approx = Vector2::new(
                p1[0] * m[0] + p1[1] * m[1] + p1[2] * m[2],
                p1[3] * m[0] + p1[4] * m[1] + p1[5] * m[2],
            );
            let exact = el.basis.eval_poly_gradient(coeffs, p);
            prop_assert!((approx - exact).amax() <= 1e-10 * (1.0 + cnorm) / h, "{family} P1 gradient");
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn projectors_reproduce_quadratics(
        pts in convex_polygon(),
        coeffs in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        check_reproduction(pts, &coeffs)?;
    }

    #[test]
    fn exact_moments_match_fan_quadrature(pts in convex_polygon()) {
        let mesh = single_cell(pts.clone());
        let c = mesh.cell(0);
        let basis = MonomialBasis::new(c.centroid, c.diameter, 4);
        let exact = exact_cell_moments(&pts, &basis, 4);
        let rule = cell_rule(&pts, 4).unwrap();
        for b in 0..basis.dim() {
            let q = rule.integrate(|p| basis.values(p)[b]);
            prop_assert!((exact[b] - q).abs() <= 1e-12 * c.area, "monomial {b}: {} vs {q}", exact[b]);
        }
    }

    #[test]
    fn miranda_talenti_on_polynomial_bubbles(c in prop::array::uniform6(-1.0f64..1.0)) {
        let (hess, lap) = miranda_talenti_norms(&c);
        prop_assert!(hess <= lap + 1e-12 * lap.max(1.0), "{hess} > {lap}");
    }
}

#[test]
fn hessian_projection_of_each_monomial() {
    let mesh = single_cell(vec![
        Point2::new(0.0, 0.0),
        Point2::new(2.0, 0.1),
        Point2::new(2.5, 1.5),
        Point2::new(0.7, 2.0),
        Point2::new(-0.4, 1.0),
    ]);
    for family in FAMILIES {
        let el = build_projectors(&mesh, 0, family, 2, 1.0).unwrap();
        let h = el.diameter;
        let image = &el.p0_hess * &el.d;
        // H11, H12, H22 of 1, X, Y, X^2, XY, Y^2 with X = (x - xc)/h
        let expected = [
            [0.0, 0.0, 0.0, 2.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 2.0],
        ];
        for r in 0..3 {
            for b in 0..6 {
                assert!((image[(r, b)] - expected[r][b] / (h * h)).abs() < 1e-12 / (h * h), "{family} ({r},{b})");
            }
        }
    }
}

#[test]
fn gram_matrices_are_spd() {
    for kind in KINDS {
        for n in [2, 4, 8] {
            let mesh = generate_structured(kind, n, Rectangle::UNIT, 7).unwrap();
            for k in 0..mesh.num_cells() {
                let el = build_projectors(&mesh, k, Family::Conforming, 2, 1.0).unwrap();
                let exps = el.basis.exponents();
                let g = DMatrix::from_fn(6, 6, |i, j| {
                    el.moments[monomial_index(exps[i].0 + exps[j].0, exps[i].1 + exps[j].1)]
                });
                assert_eq!(g, g.transpose());
                assert!(g.clone().cholesky().is_some(), "{kind} n={n} cell {k}");
                assert!(g.symmetric_eigenvalues().min() > 1e-6 * el.area, "{kind} n={n} cell {k}");
            }
        }
    }
}

#[test]
fn stabilization_spectrum_is_bounded() {
    for family in FAMILIES {
        for kind in KINDS {
            let mut per_level = Vec::new();
            for n in [2, 4, 8, 16] {
                let mesh = generate_structured(kind, n, Rectangle::UNIT, 3).unwrap();
                let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                for k in 0..mesh.num_cells() {
                    let el = build_projectors(&mesh, k, family, 2, 1.0).unwrap();
                    assert_eq!(el.stab, el.stab.transpose(), "{family} {kind} n={n}");
                    let eig = (&el.stab / el.s_k).symmetric_eigenvalues();
                    let top = eig.max();
                    let mut sorted: Vec<f64> = eig.iter().copied().collect();
                    sorted.sort_by(f64::total_cmp);
                    assert!(sorted[0] > -1e-10 * top);
                    // the kernel is the 6-dimensional image of P2
                    assert!(sorted[5] < 1e-9 * top, "{family} {kind} n={n}: {sorted:?}");
                    lo = lo.min(sorted[6]);
                    hi = hi.max(top);
                }
                per_level.push((lo, hi));
            }
            for &(lo, hi) in &per_level {
                assert!(lo > 1e-3 && hi < 1e3, "{family} {kind}: {per_level:?}");
            }
            let (lo0, hi0) = per_level[0];
            for &(lo, hi) in &per_level[1..] {
                assert!(lo > 0.2 * lo0 && hi < 5.0 * hi0, "{family} {kind}: {per_level:?}");
            }
        }
    }
}

fn sup_objective(problem: &HJBProblem, coeffs: &[Coefficients], h: &Matrix2<f64>, g: &Vector2<f64>, s: f64) -> f64 {
    coeffs
        .iter()
        .map(|c| problem.gamma_of(c) * (c.apply(h, g, s) - c.f))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn random_state(rng: &mut ChaCha8Rng) -> (Matrix2<f64>, Vector2<f64>, f64) {
    let (a, b, c) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    (
        Matrix2::new(a, b, b, c),
        Vector2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
        rng.gen_range(-5.0..5.0),
    )
}

#[test]
fn pointwise_cordes_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in BUILTINS {
        let p = make_builtin(name, &BuiltinOptions::default()).unwrap();
        let eps = cordes_check(&p, &cordes_samples(&p.domain, 64)).implied_epsilon;
        assert!(eps > 0.0);
        let lam = p.lambda;
        let mut buf = vec![Coefficients::default(); p.num_controls()];
        let d = p.domain;
        for _ in 0..1000 {
            let x = Point2::new(rng.gen_range(d.x0..d.x1), rng.gen_range(d.y0..d.y1));
            p.coefficients_all(&x, &mut buf);
            let (h1, g1, s1) = random_state(&mut rng);
            let (h2, g2, s2) = random_state(&mut rng);
            let (dh, dg, ds) = (h1 - h2, g1 - g2, s1 - s2);
            let lhs = sup_objective(&p, &buf, &h1, &g1, s1) - sup_objective(&p, &buf, &h2, &g2, s2)
                - (dh.trace() - lam * ds);
            let norm = (dh.component_mul(&dh).sum() + 2.0 * lam * dg.norm_squared() + lam * lam * ds * ds).sqrt();
            let bound = (1.0 - eps).sqrt() * norm;
            assert!(lhs.abs() <= bound * (1.0 + 1e-12) + 1e-12, "{name} at {x}: {} > {bound}", lhs.abs());
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Smallest monotonicity ratio and largest Lipschitz ratio over random
/// pairs.
fn monotonicity_constants(problem: &HJBProblem, family: Family, n: usize, pairs: usize) -> (f64, f64) {
    let mesh = generate_structured(MeshKind::Triangle, n, problem.domain, 0).unwrap();
    let disc = Discretization::new(mesh, family, problem.lambda, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let (mut alpha, mut beta) = (f64::INFINITY, 0.0f64);
    for _ in 0..pairs {
        let u = random_vec(&mut rng, disc.num_free());
        let v = random_vec(&mut rng, disc.num_free());
        let w = random_vec(&mut rng, disc.num_free());
        let ru = nonlinear_residual(&disc, problem, &u, 0.5).unwrap();
        let rv = nonlinear_residual(&disc, problem, &v, 0.5).unwrap();
        let diff = sub(&u, &v);
        let dr = sub(&ru, &rv);
        let mono = dot(&dr, &diff);
        let nd = b_norm(&disc, &diff);
        assert!(mono > 0.0, "{} {family}: a(u;u-v) - a(v;u-v) = {mono}", problem.name);
        alpha = alpha.min(mono / (nd * nd));
        beta = beta.max(dot(&dr, &w).abs() / (nd * b_norm(&disc, &w)));
    }
    (alpha, beta)
}

#[test]
fn monotonicity_and_lipschitz_are_mesh_stable() {
    for name in ["example1", "example2"] {
        let p = make_builtin(name, &BuiltinOptions::default()).unwrap();
        for family in FAMILIES {
            let (a4, b4) = monotonicity_constants(&p, family, 4, 100);
            let (a8, b8) = monotonicity_constants(&p, family, 8, 100);
            assert!(a4 > 0.0 && a8 > 0.5 * a4, "{name} {family}: alpha {a4} -> {a8}");
            assert!(b8 < 2.0 * b4, "{name} {family}: beta {b4} -> {b8}");
        }
    }
}

#[test]
fn normal_jumps_vanish_on_interior_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in KINDS {
        let mesh = generate_structured(kind, 4, Rectangle::UNIT, 1).unwrap();
        for family in FAMILIES {
            let disc = Discretization::new(mesh.clone(), family, 1.0, 4).unwrap();
            let u = random_vec(&mut rng, disc.num_free());
            // int_e dv/dn from one side, with that side's outward normal
            let outward = |k: usize, e: usize| -> f64 {
                let c = mesh.cell(k);
                let i = c.edges.iter().position(|&x| x == e).unwrap();
                let ul = disc.local(k, &u);
                let m = c.vertices.len();
                match family {
                    Family::Nonconforming => ul[m + 2 * i + 1],
                    Family::Conforming => {
                        let n = mesh.edge(e).normal * c.edge_signs[i];
                        let (a, b) = (c.vertices[i], c.vertices[(i + 1) % m]);
                        let (ia, ib) = (i, (i + 1) % m);
                        let ga = Vector2::new(ul[3 * ia + 1], ul[3 * ia + 2]) / mesh.vertex_h(a);
                        let gb = Vector2::new(ul[3 * ib + 1], ul[3 * ib + 2]) / mesh.vertex_h(b);
                        0.5 * mesh.edge(e).length * (ga + gb).dot(&n)
                    }
                }
            };
            for (e, edge) in mesh.edges().iter().enumerate() {
                let Some(r) = edge.right else { continue };
                let jump = outward(edge.left, e) + outward(r, e);
                assert!(jump.abs() < 1e-13, "{kind} {family} edge {e}: {jump}");
            }
        }
    }
}

#[test]
fn theta_blend_identity_on_one_cell() {
    let p = make_builtin("example1", &BuiltinOptions::default()).unwrap();
    let mesh = generate_structured(MeshKind::Hexagon, 3, Rectangle::UNIT, 0).unwrap();
    for family in FAMILIES {
        let el: LocalElement = build_projectors(&mesh, 4, family, 2, p.lambda).unwrap();
        let rule = cell_rule(&mesh.cell_points(4), 6).unwrap();
        let frozen: Vec<FrozenPoint> = rule
            .points
            .iter()
            .map(|x| {
                let coeffs = p.coefficients(x, 0);
                FrozenPoint {
                    control: 0,
                    gamma: p.gamma_of(&coeffs),
                    coeffs,
                    objective: 0.0,
                }
            })
            .collect();
        let (m1, f1) = element_system(&el, &rule, &frozen, 1.0);
        let (m0, f0) = element_system(&el, &rule, &frozen, 0.0);
        assert_eq!(f1, f0);

        let row = |m: &DMatrix<f64>, r: usize| -> RowDVector<f64> { m.row(r).into_owned() };
        let (h11, h12, h22) = (row(&el.p0_hess, 0), row(&el.p0_hess, 1), row(&el.p0_hess, 2));
        let (gx, gy) = (row(&el.p0_grad, 0), row(&el.p0_grad, 1));
        let s = el.p0_val.clone();
        let lam = p.lambda;
        let l = &h11 + &h22 - &s * lam;
        let outer = |r: &RowDVector<f64>| r.transpose() * r;
        let bstar = (outer(&h11) + outer(&h12) * 2.0 + outer(&h22)
            + (outer(&gx) + outer(&gy)) * (2.0 * lam)
            + outer(&s) * (lam * lam))
            * el.area;
        let expected = bstar - outer(&l) * el.area;
        let diff = (m1 - m0) - &expected;
        assert!(diff.amax() <= 1e-12 * expected.amax(), "{family}: {}", diff.amax());
    }
}

#[test]
fn linear_newton_reaches_fixed_point_at_second_iteration() {
    let p = make_builtin("example1", &BuiltinOptions::default()).unwrap();
    for kind in KINDS {
        let mesh = generate_structured(kind, 4, Rectangle::UNIT, 2).unwrap();
        for family in FAMILIES {
            let disc = Discretization::new(mesh.clone(), family, p.lambda, 6).unwrap();
            let r = solve_hjb(&disc, &p, &NewtonConfig::default()).unwrap();
            assert!(r.trace.converged);
            assert_eq!(r.trace.iterations(), 2, "{kind} {family}");
            assert_eq!(r.trace.steps[1].err, 0.0, "{kind} {family}");
        }
    }
}

#[test]
fn converged_solution_satisfies_nonlinear_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for name in BUILTINS {
        let p = make_builtin(name, &BuiltinOptions::default()).unwrap();
        let mesh = generate_structured(MeshKind::Triangle, 8, p.domain, 0).unwrap();
        for family in FAMILIES {
            let disc = Discretization::new(mesh.clone(), family, p.lambda, 6).unwrap();
            let r = solve_hjb(&disc, &p, &NewtonConfig::default()).unwrap();
            assert!(r.trace.converged, "{name} {family}");
            let steps = &r.trace.steps;
            for i in 2..steps.len() {
                assert!(steps[i].err < steps[i - 1].err, "{name} {family}: {steps:?}");
            }
            let res = nonlinear_residual(&disc, &p, &r.solution, 0.5).unwrap();
            for _ in 0..20 {
                let v = random_vec(&mut rng, disc.num_free());
                let a = dot(&res, &v);
                assert!(a.abs() <= 1e-6 * b_norm(&disc, &v), "{name} {family}: {a}");
            }
        }
    }
}

#[test]
fn sparse_solve_recovers_vem_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for name in BUILTINS {
        let p = make_builtin(name, &BuiltinOptions::default()).unwrap();
        for kind in KINDS {
            let mesh = generate_structured(kind, 6, p.domain, 4).unwrap();
            for family in FAMILIES {
                let disc = Discretization::new(mesh.clone(), family, p.lambda, 4).unwrap();
                let u0 = random_vec(&mut rng, disc.num_free());
                let frozen = select_argmax_controls(&disc, &p, &u0).unwrap();
                let a = assemble_linearized(&disc, &frozen, 0.5).unwrap().matrix;
                let x = random_vec(&mut rng, disc.num_free());
                let y = sparse_solve(&a, &a.mul_vec(&x)).unwrap();
                let err = DVector::from_vec(sub(&y, &x)).norm() / DVector::from_vec(x).norm();
                assert!(err < 1e-9, "{name} {kind} {family}: {err}");
            }
        }
    }
}
