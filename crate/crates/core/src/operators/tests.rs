use super::*;
use crate::model::{CoilMaps, DisplacementField, Image, KSpaceData, SamplingMask};
use crate::simulator::make_coil_maps;
use nalgebra::{DMatrix, SymmetricEigen};

fn rc(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn random_image(nx: usize, ny: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(nx, ny, |_, _| rc(rng)).unwrap()
}

fn random_mask(nx: usize, rng: &mut ChaCha8Rng) -> SamplingMask {
    let mut lines: Vec<bool> = (0..nx).map(|_| rng.random_bool(0.4)).collect();
    lines[nx / 2] = true;
    SamplingMask::from_bools(lines).unwrap()
}

fn random_field(nx: usize, ny: usize, amp: f64, rng: &mut ChaCha8Rng) -> DisplacementField {
    let ux = (0..nx * ny).map(|_| rng.random_range(-amp..amp)).collect();
    let uy = (0..nx * ny).map(|_| rng.random_range(-amp..amp)).collect();
    DisplacementField::new(nx, ny, ux, uy).unwrap()
}

fn random_kspace(op: &EncodingOperator, rng: &mut ChaCha8Rng) -> KSpaceData {
    let mut ks = op.zero_kspace();
    ks.samples_mut().iter_mut().for_each(|v| *v = rc(rng));
    ks
}

fn rel_diff(a: &Image, b: &Image) -> f64 {
    let d: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    d.sqrt() / b.norm().max(1e-300)
}

#[test]
fn unit_coil_full_mask_is_plain_fft() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (nx, ny) = (12, 10);
    let op = EncodingOperator::without_motion(
        CoilMaps::unit(nx, ny).unwrap(),
        vec![SamplingMask::full(nx)],
    )
    .unwrap();
    let x = random_image(nx, ny, &mut rng);
    let ks = op.encode(&x).unwrap();
    let k = fft2c(&x);
    assert_eq!(ks.samples(), k.data());
    let back = op.encode_adjoint(&ks).unwrap();
    assert!(rel_diff(&back, &ifft2c(&k)) < 1e-15);
}

#[test]
fn normalized_coils_give_identity_normal_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (nx, ny) = (16, 20);
    let coils = make_coil_maps(4, nx, ny).unwrap();
    let op = EncodingOperator::without_motion(coils, vec![SamplingMask::full(nx)]).unwrap();
    let x = random_image(nx, ny, &mut rng);
    let back = op.encode_adjoint(&op.encode(&x).unwrap()).unwrap();
    assert!(rel_diff(&back, &x) < 1e-9);
    assert!(rel_diff(&op.normal(&x).unwrap(), &x) < 1e-9);
    let est = estimate_norm(&op, 20, 7).unwrap();
    assert!((est - 1.0).abs() < 1e-3);
}

#[test]
fn dot_product_test_three_bins_four_coils() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20u64 {
        let nx = 8 + (seed as usize * 7) % 40;
        let ny = 8 + (seed as usize * 13) % 40;
        let coils =
            CoilMaps::new(4, nx, ny, (0..4 * nx * ny).map(|_| rc(&mut rng)).collect()).unwrap();
        let bins = (0..3)
            .map(|b| EncodingBin {
                field: Some(random_field(nx, ny, 3.0, &mut rng)),
                masks: (0..=b).map(|_| random_mask(nx, &mut rng)).collect(),
            })
            .collect();
        let op = EncodingOperator::new(coils, bins).unwrap();
        assert!(op.motion_enabled());
        let x = random_image(nx, ny, &mut rng);
        let y = random_kspace(&op, &mut rng);
        let ex = op.encode(&x).unwrap();
        let ehy = op.encode_adjoint(&y).unwrap();
        let lhs = inner(&ex, &y);
        let rhs = cdot(x.data(), ehy.data());
        let rel = (lhs - rhs).norm() / (ex.norm() * y.norm() + 1e-300);
        assert!(rel < 1e-9, "seed {seed}: {rel}");
        // the fused normal operator agrees with E^H(E x)
        let n1 = op.normal(&x).unwrap();
        let n2 = op.encode_adjoint(&ex).unwrap();
        assert!(rel_diff(&n1, &n2) < 1e-12);
    }
}

fn inner(a: &KSpaceData, b: &KSpaceData) -> C64 {
    crate::model::inner_product(a, b).unwrap()
}

#[test]
fn encode_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (nx, ny) = (12, 12);
    let coils = make_coil_maps(3, nx, ny).unwrap();
    let op = EncodingOperator::new(
        coils,
        vec![EncodingBin {
            field: Some(random_field(nx, ny, 2.0, &mut rng)),
            masks: vec![random_mask(nx, &mut rng)],
        }],
    )
    .unwrap();
    let a = random_image(nx, ny, &mut rng);
    let b = random_image(nx, ny, &mut rng);
    let mut sum = a.clone();
    crate::model::axpy(sum.data_mut(), 2.0, b.data());
    let lhs = op.encode(&sum).unwrap();
    let ea = op.encode(&a).unwrap();
    let eb = op.encode(&b).unwrap();
    let err = lhs
        .samples()
        .iter()
        .zip(ea.samples().iter().zip(eb.samples()))
        .map(|(l, (p, q))| (l - p - q * 2.0).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-12);
}

#[test]
fn layout_mismatch_is_rejected() {
    let (nx, ny) = (8, 8);
    let op = EncodingOperator::without_motion(
        CoilMaps::unit(nx, ny).unwrap(),
        vec![SamplingMask::full(nx)],
    )
    .unwrap();
    let wrong = KSpaceData::zeros(nx, ny, 1, vec![vec![0, 1]]).unwrap();
    assert!(op.encode_adjoint(&wrong).is_err());
    assert!(op.encode(&Image::zeros(8, 9).unwrap()).is_err());
    assert!(estimate_norm(&op, 4, 0).is_err());
}

#[test]
fn identity_chain_norm() {
    let (nx, ny) = (16, 16);
    let op = EncodingOperator::without_motion(
        CoilMaps::unit(nx, ny).unwrap(),
        vec![SamplingMask::full(nx)],
    )
    .unwrap();
    let h = estimate_norm_history(&op, 20, 3).unwrap();
    assert!((h.last().unwrap() - 1.0).abs() < 1e-3);
}

/// Explicit encoding matrix from the centered DFT definition.
fn dense_encoding(coils: &CoilMaps, masks: &[SamplingMask]) -> DMatrix<C64> {
    let (nx, ny) = (coils.nx(), coils.ny());
    let n = nx * ny;
    let (cx, cy) = ((nx / 2) as f64, (ny / 2) as f64);
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for m in masks {
        for c in 0..coils.n_coils() {
            let map = coils.map(c);
            for k in m.indices() {
                for l in 0..ny {
                    let row = (0..n)
                        .map(|p| {
                            let (i, j) = ((p / ny) as f64, (p % ny) as f64);
                            let ph = -2.0
                                * std::f64::consts::PI
                                * ((k as f64 - cx) * (i - cx) / nx as f64
                                    + (l as f64 - cy) * (j - cy) / ny as f64);
                            map[p] * C64::from_polar(1.0 / (n as f64).sqrt(), ph)
                        })
                        .collect();
                    rows.push(row);
                }
            }
        }
    }
    DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c])
}

#[test]
fn norm_estimate_matches_dense_eigenvalue() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (nx, ny) = (12, 12);
    let coils = CoilMaps::new(2, nx, ny, (0..2 * nx * ny).map(|_| rc(&mut rng)).collect()).unwrap();
    let masks = vec![random_mask(nx, &mut rng), random_mask(nx, &mut rng)];
    let e = dense_encoding(&coils, &masks);
    let ehe = e.adjoint() * &e;
    let top = SymmetricEigen::new(ehe)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max);
    let op = EncodingOperator::without_motion(coils, masks).unwrap();

    // dense matrix also checks the matrix-free forward operator
    let x = random_image(nx, ny, &mut rng);
    let xv = nalgebra::DVector::from_column_slice(x.data());
    let ex = &e * xv;
    let ks = op.encode(&x).unwrap();
    let err: f64 = ex
        .iter()
        .zip(ks.samples())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    assert!(err.sqrt() / ks.norm() < 1e-12);

    let h = estimate_norm_history(&op, 400, 9).unwrap();
    assert!(h.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
    let est = *h.last().unwrap();
    assert!((est - top).abs() < 1e-3 * top.max(1.0), "{est} vs {top}");
}
