use mtsfm::mimo::*;
use mtsfm::optimizer::{objective, objective_gradient};
use mtsfm::waveform::ModulationIndexSet;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn index_set(m: usize, k: usize, bound: f64) -> impl Strategy<Value = ModulationIndexSet> {
    prop::collection::vec(-bound..bound, m * k)
        .prop_map(move |a| ModulationIndexSet::new(a, m, k, 1.0).unwrap())
}

fn sized_index_set(max_m: usize, max_k: usize, bound: f64) -> impl Strategy<Value = ModulationIndexSet> {
    (1..=max_m, 1..=max_k).prop_flat_map(move |(m, k)| index_set(m, k, bound))
}

/// `Σ_{m,m'} R_{mm'} e^{-jπmu} e^{jπm'u}` summed term by term.
fn direct_pattern(r: &CorrelationMatrix, u: f64) -> f64 {
    let m = r.size();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..m {
        for b in 0..m {
            acc += r.get(a, b) * Complex64::from_polar(1.0, PI * (b as f64 - a as f64) * u);
        }
    }
    acc.re
}

#[test]
fn orthogonal_set_is_omnidirectional() {
    let grid = AngleGrid::uniform(401).unwrap();
    let p = beampattern(&CorrelationMatrix::orthogonal(7), &grid).unwrap();
    assert!(p.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn coherent_set_is_the_uniform_array_pattern() {
    let grid = AngleGrid::uniform(1001).unwrap();
    let p = beampattern(&CorrelationMatrix::coherent(10), &grid).unwrap();
    for (u, v) in grid.values().iter().zip(&p) {
        let s: Complex64 = (0..10).map(|m| Complex64::from_polar(1.0, PI * m as f64 * u)).sum();
        assert!((v - s.norm_sqr() / 10.0).abs() < 1e-10);
    }
    assert!((p[500] - 10.0).abs() < 1e-12);
    assert!(p[600].abs() < 1e-12, "first null at u = 0.2");
}

#[test]
fn uniform_array_pslr_with_mainlobe_passband() {
    let grid = AngleGrid::uniform(1001).unwrap();
    let template = BeampatternTemplate::from_values(grid.clone(), vec![0.0; 1001], vec![(-0.2, 0.2)]).unwrap();
    let p = beampattern(&CorrelationMatrix::coherent(10), &grid).unwrap();
    // first sidelobe of a 10-element array, sampled on the same grid
    assert!((pslr(&p, &template, 0.0).unwrap() + 12.967159287156472).abs() < 1e-9);
}

#[test]
fn coherent_objective_matches_direct_summation() {
    let idx = ModulationIndexSet::new(vec![0.7; 10 * 3], 10, 3, 1.0).unwrap();
    let grid = AngleGrid::uniform(1001).unwrap();
    let template = desired_beampattern(0.3, 10, &grid).unwrap();
    let f = objective(&idx, &template).unwrap();
    // trapezoid of (P_d − P_ULA)² evaluated independently
    let want = 118.17844118075658;
    assert!((f - want).abs() / want < 1e-10, "{f}");
}

#[test]
fn identical_rows_have_balanced_gradient() {
    let row = [1.3, -0.4, 0.9];
    let mut a = Vec::new();
    for m in 0..4 {
        a.extend(row.iter().map(|v| v + 0.05 * m as f64));
    }
    let idx = ModulationIndexSet::new(a, 4, 3, 1.0).unwrap();
    let template = desired_beampattern(0.3, 4, &AngleGrid::uniform(201).unwrap()).unwrap();
    let g = objective_gradient(&idx, &template).unwrap();
    for k in 0..3 {
        let s: f64 = (0..4).map(|m| g[m * 3 + k]).sum();
        assert!(s.abs() < 1e-9, "harmonic {k}: {s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gbf_matrix_matches_numeric_inner_products(idx in sized_index_set(6, 8, 5.0)) {
        let r = correlation_matrix_gbf(&idx).unwrap();
        let n = correlation_matrix_numeric(&idx, 8192).unwrap();
        let m = r.size();
        for a in 0..m {
            prop_assert_eq!(r.get(a, a), 1.0 / m as f64);
            for b in 0..m {
                prop_assert_eq!(r.get(a, b), r.get(b, a));
                prop_assert!((r.get(a, b) - n.get(a, b)).abs() < 1e-8);
            }
        }
        prop_assert!(r.min_eigenvalue() >= -1e-10);
    }

    #[test]
    fn patterns_are_even_and_carry_unit_trace_power(idx in sized_index_set(8, 6, 4.0)) {
        let grid = AngleGrid::uniform(2001).unwrap();
        let r = correlation_matrix_gbf(&idx).unwrap();
        let p = beampattern(&r, &grid).unwrap();
        let n = p.len();
        for i in 0..n {
            prop_assert!((p[i] - p[n - 1 - i]).abs() < 1e-10);
            prop_assert!(p[i] >= 0.0);
            prop_assert!((p[i] - direct_pattern(&r, grid.values()[i])).abs() < 1e-10);
        }
        prop_assert!((grid.integrate(&p) - 2.0).abs() < 1e-6);
        let cosine = beampattern_real(&r, &grid).unwrap();
        for (a, b) in p.iter().zip(&cosine) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn objective_gradient_matches_central_differences(idx in sized_index_set(4, 6, 3.0)) {
        let template = desired_beampattern(0.3, idx.waveforms(), &AngleGrid::uniform(301).unwrap()).unwrap();
        let g = objective_gradient(&idx, &template).unwrap();
        let h = 1e-6;
        let mut fd = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let shift = |d: f64| {
                let mut a = idx.as_slice().to_vec();
                a[i] += d;
                let moved = ModulationIndexSet::new(a, idx.waveforms(), idx.harmonics(), 1.0).unwrap();
                objective(&moved, &template).unwrap()
            };
            fd.push((shift(h) - shift(-h)) / (2.0 * h));
        }
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
        prop_assert!(err / scale < 1e-5, "relative error {}", err / scale);
    }

    #[test]
    fn perfect_fit_has_zero_objective(idx in sized_index_set(5, 4, 3.0)) {
        let grid = AngleGrid::uniform(401).unwrap();
        let p = beampattern(&correlation_matrix_gbf(&idx).unwrap(), &grid).unwrap();
        let template = BeampatternTemplate::from_values(grid, p, vec![(-0.3, 0.3)]).unwrap();
        prop_assert!(objective(&idx, &template).unwrap() < 1e-20);
    }
}
