//! Values on two fixed states, computed independently with a general conic
//! solver (nuclear-norm smoothing ball, explicit block-diagonal free set)
//! and frozen here.
use coherence_lab::measures::{self, SmoothParams};
use coherence_lab::qmat::{c, CMat, DensityMatrix, DephasingPattern};

const TOL: f64 = 1e-6;

fn state(re: &[f64], im: &[f64], rows: usize, dims: Vec<usize>) -> DensityMatrix {
    let entries: Vec<_> = re.iter().zip(im).map(|(&a, &b)| c(a, b)).collect();
    let g = CMat::from_row_slice(rows, re.len() / rows, &entries);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_matrix(dims, m.unscale(tr)).unwrap()
}

/// Rank-2 state on 2⊗2.
fn rank_two() -> DensityMatrix {
    state(
        &[0.3, -1.2, 0.7, 0.5, 1.1, 0.4, -0.6, 0.9],
        &[0.8, 0.1, -0.5, 0.2, -0.3, 0.6, 0.4, -1.0],
        4,
        vec![2, 2],
    )
}

/// Full-rank state on 2⊗3.
fn full_rank() -> DensityMatrix {
    state(
        &[
            0.5, -0.7, 1.3, 0.2, -0.4, 0.9, 0.6, 0.1, -0.8, 1.0, 0.3, -0.2, -1.1, 0.4, 0.2, 0.7, 0.5, 0.8, 0.9, -0.3, 0.6,
            -0.5, 1.2, 0.1, 0.2, 0.8, -0.9, 0.4, -0.6, 0.3, -0.4, 1.0, 0.5, -0.2, 0.7, 0.6,
        ],
        &[
            0.1, 0.4, -0.2, 0.9, 0.6, -0.5, -0.7, 0.3, 0.8, -0.1, 0.2, 0.5, 0.3, -0.6, 0.1, 0.4, -0.9, 0.2, -0.2, 0.7, 0.5,
            0.3, -0.4, -0.8, 0.6, -0.1, 0.2, -0.7, 0.3, 0.9, 0.5, 0.2, -0.3, 0.8, -0.5, 0.1,
        ],
        6,
        vec![2, 3],
    )
}

struct Expected {
    c_r: f64,
    c_r_full: f64,
    c_max: f64,
    c_max_full: f64,
    c_max_smooth: f64,
    c_min_smooth: f64,
    e_max: f64,
    e_max_smooth: f64,
    e_min: f64,
}

fn check(rho: &DensityMatrix, want: &Expected) {
    let a = DephasingPattern::single(0);
    let full = DephasingPattern::full(2);
    let zero = SmoothParams::zero();
    let s = SmoothParams::new(0.05).unwrap();
    let parts = [vec![0], vec![1]];
    let got = [
        ("c_r", measures::c_r(rho, &a).unwrap().value, want.c_r),
        ("c_r full", measures::c_r(rho, &full).unwrap().value, want.c_r_full),
        ("c_max", measures::c_max(rho, &a, zero).unwrap().value, want.c_max),
        ("c_max full", measures::c_max(rho, &full, zero).unwrap().value, want.c_max_full),
        ("c_max smooth", measures::c_max(rho, &a, s).unwrap().value, want.c_max_smooth),
        ("c_min smooth", measures::c_min(rho, &a, s).unwrap().value, want.c_min_smooth),
        ("e_max", measures::e_max(rho, &parts, zero).unwrap().value, want.e_max),
        ("e_max smooth", measures::e_max(rho, &parts, s).unwrap().value, want.e_max_smooth),
        ("e_min", measures::e_min(rho, &parts, zero).unwrap().value, want.e_min),
    ];
    for (name, value, expected) in got {
        assert!((value - expected).abs() <= TOL, "{name}: {value} vs {expected}");
    }
}

#[test]
fn rank_two_qubit_pair() {
    let rho = rank_two();
    check(
        &rho,
        &Expected {
            c_r: 0.9252809067118364,
            c_r_full: 1.3164899919350468,
            c_max: 0.9645287849438193,
            c_max_full: 1.7142338562012374,
            c_max_smooth: 0.8886383356306431,
            c_min_smooth: 1.038529365961373,
            e_max: 0.2553426646408856,
            e_max_smooth: 0.13366624865635393,
            e_min: 0.0,
        },
    );
    let cmin = measures::c_min(&rho, &DephasingPattern::single(0), SmoothParams::zero()).unwrap();
    assert!((cmin.value - 0.26981069098839267).abs() <= 1e-9);
}

#[test]
fn full_rank_qubit_qutrit() {
    check(
        &full_rank(),
        &Expected {
            c_r: 0.3246833362191066,
            c_r_full: 0.5445974341644351,
            c_max: 0.6162612431221828,
            c_max_full: 1.1200380952385505,
            c_max_smooth: 0.5189354249010195,
            c_min_smooth: 0.1750105882689494,
            e_max: 0.012898721899210671,
            e_max_smooth: -0.07400058145027111,
            e_min: 0.0,
        },
    );
}
