use std::f64::consts::PI;

use eigenwave::helmholtz::{
    angular, assemble, assemble_with, point_source_rhs, sample_receivers, Acquisition, BoundaryConditions,
    EdgeCondition, ReceiverSampler, Source,
};
use eigenwave::{ComplexField, Grid2D, Model, ScalarField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn homogeneous(g: Grid2D, c: f64) -> Model {
    Model::new(ScalarField::constant(g, 1.0 / (c * c)), 1000.0, 6000.0).unwrap()
}

fn point_solve(model: &Model, freq: f64, x: f64, z: f64, bc: BoundaryConditions) -> ComplexField {
    let solver = assemble_with(model.field(), angular(freq), bc).unwrap().factorize().unwrap();
    let rhs = point_source_rhs(model.grid(), x, z, Complex64::new(1.0, 0.0)).unwrap();
    solver.solve(&[solver.operator().apply_boundary_rhs(rhs)]).unwrap().remove(0)
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let (lx, lz) = (1000.0, 600.0);
    let c = 2000.0;
    let omega = angular(1.0);
    let k2 = omega * omega / (c * c);
    let exact = |x: f64, z: f64| (PI * x / lx).sin() * (PI * z / lz).sin();
    let mut errors = Vec::new();
    for level in 0..4 {
        let nx = 10 * (1 << level) + 1;
        let nz = 6 * (1 << level) + 1;
        let g = Grid2D::new(nx, nz, lx / (nx - 1) as f64, lz / (nz - 1) as f64).unwrap();
        let m = ScalarField::constant(g, 1.0 / (c * c));
        let op = assemble_with(&m, omega, BoundaryConditions::all(EdgeCondition::Dirichlet)).unwrap();
        let forcing = PI * PI / (lx * lx) + PI * PI / (lz * lz) - k2;
        let rhs: Vec<Complex64> = (0..g.len())
            .map(|k| {
                let (ix, iz) = g.unflatten(k);
                Complex64::new(forcing * exact(g.x(ix), g.z(iz)), 0.0)
            })
            .collect();
        let rhs = op.apply_boundary_rhs(rhs);
        let u = op.factorize().unwrap().solve(&[rhs]).unwrap().remove(0);
        let err = (0..g.len())
            .map(|k| {
                let (ix, iz) = g.unflatten(k);
                (u.values()[k] - exact(g.x(ix), g.z(iz))).norm()
            })
            .fold(0.0, f64::max);
        errors.push(err);
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        println!("max error {:e} -> {:e}, order {order:.3}", w[0], w[1]);
        assert!(order >= 1.8, "observed order {order}");
    }
}

#[test]
fn reciprocity_in_homogeneous_medium() {
    let g = Grid2D::new(61, 61, 10.0, 10.0).unwrap();
    let model = homogeneous(g, 2000.0);
    let (a, b) = ((200.0, 250.0), (400.0, 350.0));
    let ua = point_solve(&model, 8.0, a.0, a.1, BoundaryConditions::seismic());
    let ub = point_solve(&model, 8.0, b.0, b.1, BoundaryConditions::seismic());
    let ab = ua.get(40, 35);
    let ba = ub.get(20, 25);
    let rel = (ab - ba).norm() / ab.norm();
    println!("G(a->b) {ab:e}, G(b->a) {ba:e}, rel {rel:e}");
    assert!(rel < 0.01);
}

/// Phase of the point-source response along the horizontal line through the source,
/// `r` from 10 to 30 cells of the coarse grid, absorbing edges all round.
fn phase_profile(n: usize, h: f64, freq: f64, c: f64) -> Vec<(f64, f64)> {
    let g = Grid2D::new(n, n, h, h).unwrap();
    let centre = 0.5 * (n - 1) as f64 * h;
    let u = point_solve(&homogeneous(g, c), freq, centre, centre, BoundaryConditions::all(EdgeCondition::Absorbing));
    let ic = (n - 1) / 2;
    let stride = (n - 1) / 80;
    (10..=30)
        .map(|j| {
            let v = u.get(ic + j * stride, ic);
            (j as f64 * stride as f64 * h, v.arg())
        })
        .collect()
}

fn unwrap(p: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(p.len());
    for &(r, a) in p {
        let a = match out.last() {
            Some(&(_, prev)) => prev + (a - prev + PI).rem_euclid(2.0 * PI) - PI,
            None => a,
        };
        out.push((r, a));
    }
    out
}

#[test]
fn green_function_phase_matches_fine_grid() {
    let (freq, c) = (10.0, 2000.0);
    let k = angular(freq) / c;
    let coarse = unwrap(&phase_profile(81, 10.0, freq, c));
    let fine = unwrap(&phase_profile(161, 5.0, freq, c));
    let mut worst: f64 = 0.0;
    for (a, b) in coarse.iter().zip(&fine) {
        assert_eq!(a.0, b.0);
        let d = (a.1 - b.1 + PI).rem_euclid(2.0 * PI) - PI;
        worst = worst.max(d.abs());
    }
    // numerical dispersion of the 5-point stencil at 20 points per wavelength
    // accumulates to about (kh)^2/24 * k r over 300 m
    let bound = 3.0 * (k * 10.0).powi(2) / 24.0 * k * 300.0;
    println!("max phase difference {worst:.4} rad, bound {bound:.4}");
    assert!(worst < bound);

    // outgoing wave: phase grows with distance at the wavenumber
    let n = fine.len() as f64;
    let (sr, sp) = fine.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1));
    let (mr, mp) = (sr / n, sp / n);
    let slope = fine.iter().map(|p| (p.0 - mr) * (p.1 - mp)).sum::<f64>()
        / fine.iter().map(|p| (p.0 - mr).powi(2)).sum::<f64>();
    println!("phase slope {slope:e}, wavenumber {k:e}");
    assert!((slope - k).abs() < 0.03 * k);
}

#[test]
fn assembly_matches_dense_reference() {
    let g = Grid2D::new(11, 11, 12.0, 9.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = ScalarField::new(g, (0..g.len()).map(|_| rng.random_range(3e-8..4e-7)).collect()).unwrap();
    let omega = angular(7.0);
    let op = assemble(&Model::new(m.clone(), 1000.0, 6000.0).unwrap(), omega).unwrap();
    let got = op.matrix().to_dense();

    let n = g.len();
    let idx = |ix: usize, iz: usize| iz * 11 + ix;
    let mut want = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let (hx, hz) = (12.0, 9.0);
    for iz in 0..11 {
        for ix in 0..11 {
            let r = idx(ix, iz);
            let mr = m.values()[r];
            let abc = |want: &mut Vec<Vec<Complex64>>, inward: usize, h: f64| {
                want[r][r] = Complex64::new(1.0 / (h * h), -omega * mr.sqrt() / h);
                want[r][inward] = Complex64::new(-1.0 / (h * h), 0.0);
            };
            if iz == 0 {
                want[r][r] = Complex64::new(1.0, 0.0);
            } else if ix == 0 {
                abc(&mut want, idx(1, iz), hx);
            } else if ix == 10 {
                abc(&mut want, idx(9, iz), hx);
            } else if iz == 10 {
                abc(&mut want, idx(ix, 9), hz);
            } else {
                want[r][r] = Complex64::new(2.0 / (hx * hx) + 2.0 / (hz * hz) - omega * omega * mr, 0.0);
                want[r][idx(ix - 1, iz)] = Complex64::new(-1.0 / (hx * hx), 0.0);
                want[r][idx(ix + 1, iz)] = Complex64::new(-1.0 / (hx * hx), 0.0);
                want[r][idx(ix, iz - 1)] = Complex64::new(-1.0 / (hz * hz), 0.0);
                want[r][idx(ix, iz + 1)] = Complex64::new(-1.0 / (hz * hz), 0.0);
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            let d = (got[r][c] - want[r][c]).norm();
            assert!(d <= 1e-15 * want[r][c].norm().max(1e-6), "entry ({r}, {c}): {} vs {}", got[r][c], want[r][c]);
        }
    }
}

#[test]
fn constructed_solution_is_recovered() {
    let g = Grid2D::new(31, 17, 20.0, 20.0).unwrap();
    let (w, d) = g.extent();
    let model = eigenwave::synthetics::make_salt_model(&eigenwave::synthetics::SaltModelSpec::single_dome(w, d), g).unwrap();
    let op = assemble(&model, angular(5.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let truth: Vec<Complex64> = (0..g.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let f = op.matrix().mul_vec(&truth);
    let solver = op.factorize().unwrap();
    let u = solver.solve(std::slice::from_ref(&f)).unwrap().remove(0);
    let resid: f64 = solver
        .operator()
        .matrix()
        .mul_vec(u.values())
        .iter()
        .zip(&f)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let fnorm = f.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    assert!(resid <= 1e-10 * fnorm.max(1.0));
    let err = u.values().iter().zip(&truth).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-8, "max error {err:e}");
}

#[test]
fn receiver_interpolation_matches_corner_weights() {
    let g = Grid2D::new(17, 13, 7.0, 5.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vals: Vec<Complex64> = (0..g.len())
        .map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
        .collect();
    let u = ComplexField::new(g, vals).unwrap();
    let (w, d) = g.extent();
    let positions: Vec<(f64, f64)> = (0..200).map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..d))).collect();
    let got = ReceiverSampler::from_positions(&g, &positions).unwrap().sample(u.values());
    for (&(x, z), s) in positions.iter().zip(&got) {
        let (fx, fz) = (x / 7.0, z / 5.0);
        let (i, j) = ((fx.floor() as usize).min(15), (fz.floor() as usize).min(11));
        let (tx, tz) = (fx - i as f64, fz - j as f64);
        let want = u.get(i, j) * ((1.0 - tx) * (1.0 - tz))
            + u.get(i + 1, j) * (tx * (1.0 - tz))
            + u.get(i, j + 1) * ((1.0 - tx) * tz)
            + u.get(i + 1, j + 1) * (tx * tz);
        assert!((s - want).norm() < 1e-12, "at ({x}, {z}): {s} vs {want}");
    }

    // a single-depth line through the public acquisition path
    let z = 0.37 * d;
    let acq = Acquisition::new(
        &g,
        vec![Source {
            x: 7.0,
            z: 5.0,
            amplitude: Complex64::new(1.0, 0.0),
        }],
        positions.iter().map(|p| (p.0, z)).collect(),
    )
    .unwrap();
    let line = sample_receivers(&u, &acq).unwrap();
    let direct = ReceiverSampler::from_positions(&g, acq.receivers()).unwrap().sample(u.values());
    assert_eq!(line, direct);
}
