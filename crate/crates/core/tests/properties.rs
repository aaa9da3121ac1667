//! Property tests for the cross-module invariants: transform round trips,
//! equivalent-matrix vs time-frequency oracle, noiseless estimation and
//! detection, sparsification bounds.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

use otfs::chanest::{assemble_estimate, estimate_links, make_pilot_frames, PilotPlan};
use otfs::channel::{
    apply_channel, build_link_matrix, build_mimo_matrix, effective_gain, LinkChannel, MimoChannel, PathTap,
};
use otfs::detector::{detect_mp, DetectorParams};
use otfs::grid::{unvec_index, unvectorize, vec_index, vectorize};
use otfs::ofdm::{build_mimo_ofdm_matrix, build_mimo_ofdm_sparse, dft_matrix, sparsify_for_mp};
use otfs::transforms::{heisenberg_rect, isfft, oracle_apply, sfft, wigner_rect};
use otfs::{Alphabet, DdGrid, GridDims, Modulation};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn dims_strategy(max: usize) -> impl Strategy<Value = GridDims> {
    (1..=max, 1..=max).prop_map(|(n, m)| GridDims::new(n, m, 15e3).unwrap())
}

fn grid_strategy(max: usize) -> impl Strategy<Value = DdGrid> {
    dims_strategy(max).prop_flat_map(|d| {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), d.len())
            .prop_map(move |v| DdGrid::from_rows(d, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap())
    })
}

/// Distinct random taps on the grid with gains bounded away from zero.
fn taps_strategy(dims: GridDims, max_taps: usize) -> impl Strategy<Value = Vec<PathTap>> {
    prop::collection::vec((0..dims.m, 0..dims.n, 0.1..1.0f64, 0.0..std::f64::consts::TAU), 1..=max_taps).prop_map(
        |raw| {
            let mut taps: Vec<PathTap> = Vec::new();
            for (alpha, beta, mag, ph) in raw {
                if !taps.iter().any(|t| t.alpha == alpha && t.beta == beta) {
                    taps.push(PathTap::new(alpha, beta, Complex64::from_polar(mag, ph)));
                }
            }
            taps
        },
    )
}

fn square_taps(sizes: &'static [usize], max_taps: usize) -> impl Strategy<Value = (GridDims, Vec<PathTap>)> {
    prop::sample::select(sizes).prop_flat_map(move |s| {
        let d = GridDims::square(s);
        (Just(d), taps_strategy(d, max_taps))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vec_index_is_a_bijection(d in dims_strategy(40), seed in any::<u64>()) {
        let i = (seed as usize) % d.len();
        let (k, l) = unvec_index(i, &d).unwrap();
        prop_assert_eq!(vec_index(k, l, &d).unwrap(), i);
        prop_assert_eq!(i, k + d.n * l);
    }

    #[test]
    fn vectorize_round_trip(x in grid_strategy(12)) {
        let v = vectorize(&x);
        prop_assert_eq!(unvectorize(&v, *x.dims()).unwrap(), x);
    }

    #[test]
    fn sfft_inverts_isfft(x in grid_strategy(32)) {
        prop_assert!(sfft(&isfft(&x)).max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn isfft_energy_scales_by_mn(x in grid_strategy(16)) {
        let mn = x.dims().len() as f64;
        let e = isfft(&x).energy();
        prop_assert!((e * mn - x.energy()).abs() < 1e-9 * (1.0 + x.energy()));
    }

    #[test]
    fn wigner_inverts_heisenberg(x in grid_strategy(32)) {
        let tf = isfft(&x);
        prop_assert!(wigner_rect(&heisenberg_rect(&tf)).max_abs_diff(&tf) < 1e-12);
    }

    #[test]
    fn matrix_matches_tf_oracle((d, taps) in square_taps(&[2, 4, 8, 16], 6), x in grid_strategy(1)) {
        // x only seeds the frame content
        let seed = x.get(0, 0);
        let frame = DdGrid::from_fn(d, |k, l| {
            let t = (k * 7 + l * 3) as f64;
            c((seed.re + t).sin(), (seed.im - 0.5 * t).cos())
        });
        let h = build_link_matrix(&LinkChannel::new(taps.clone()).unwrap(), &d).unwrap();
        let hx = unvectorize(&h.mul_vec(&vectorize(&frame)).unwrap(), d).unwrap();
        prop_assert!(hx.max_abs_diff(&oracle_apply(&frame, &taps)) < 1e-9);
    }

    #[test]
    fn equivalent_matrix_degrees((d, taps) in square_taps(&[4, 8, 16], 6)) {
        let h = build_link_matrix(&LinkChannel::new(taps.clone()).unwrap(), &d).unwrap();
        prop_assert!(h.row_degrees().iter().all(|&g| g == taps.len()));
        prop_assert!(h.col_degrees().iter().all(|&g| g == taps.len()));
        let fro2: f64 = taps.iter().map(|t| t.gain.norm_sqr()).sum::<f64>() * d.len() as f64;
        prop_assert!((h.frobenius_norm().powi(2) - fro2).abs() < 1e-9 * fro2);
    }

    #[test]
    fn noiseless_estimation_reconstructs_h(
        n_a in 1usize..=3,
        raw in prop::collection::vec((0usize..4, 0usize..4, 0.1..1.0f64, 0.0..6.28f64), 1..5),
        gains in prop::collection::vec((0.2..1.0f64, 0.0..6.28f64), 9 * 5),
    ) {
        let dims = GridDims::square(16);
        let mut support = Vec::new();
        for (a, b, _, _) in &raw {
            if !support.contains(&(*a, *b)) {
                support.push((*a, *b));
            }
        }
        let links: Vec<LinkChannel> = (0..n_a * n_a)
            .map(|i| {
                LinkChannel::new(
                    support
                        .iter()
                        .enumerate()
                        .map(|(j, &(a, b))| {
                            let (m, p) = gains[(i * support.len() + j) % gains.len()];
                            PathTap::new(a, b, Complex64::from_polar(m, p))
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let ch = MimoChannel::new(n_a, links).unwrap();
        let h = build_mimo_matrix(&ch, &dims).unwrap();
        let plan = PilotPlan::lattice(&dims, n_a, 1.0).unwrap();
        let x: Vec<Complex64> = make_pilot_frames(&plan, &dims).unwrap().iter().flat_map(vectorize).collect();
        let y = h.mul_vec(&x).unwrap();
        let rx: Vec<DdGrid> = y.chunks(dims.len()).map(|s| unvectorize(s, dims).unwrap()).collect();
        let est = estimate_links(&rx, &plan, &dims, 3.0).unwrap();
        for q in 0..n_a {
            for p in 0..n_a {
                let found = est.link(q, p);
                prop_assert_eq!(found.len(), support.len());
                for t in ch.link(q, p).taps() {
                    let e = found.iter().find(|e| e.alpha == t.alpha && e.beta == t.beta).unwrap();
                    prop_assert!((e.gain - effective_gain(t, &dims)).norm() < 1e-12);
                }
            }
        }
        let h_est = assemble_estimate(&est, &dims).unwrap().matrix;
        prop_assert!(otfs::chanest::frobenius_error(&h, &h_est).unwrap() < 1e-12);
    }

    #[test]
    fn guard_disjointness_means_no_crosstalk(
        raw in prop::collection::vec((0usize..6, 0usize..5, 0.1..1.0f64, 0.0..6.28f64), 1..6),
    ) {
        // antenna 1 silent vs sounding: link (0, 0) readout must not change
        let dims = GridDims::reference();
        let mut taps: Vec<PathTap> = Vec::new();
        for (a, b, m, p) in raw {
            if !taps.iter().any(|t| t.alpha == a && t.beta == b) {
                taps.push(PathTap::new(a, b, Complex64::from_polar(m, p)));
            }
        }
        let link = LinkChannel::new(taps.clone()).unwrap();
        let other = LinkChannel::new(taps.iter().map(|t| PathTap::new(t.alpha, t.beta, t.gain * c(0.3, 0.9))).collect()).unwrap();
        let ch = MimoChannel::new(2, vec![link, other.clone(), other.clone(), other]).unwrap();
        let h = build_mimo_matrix(&ch, &dims).unwrap();
        let plan = PilotPlan::lattice(&dims, 2, 1.0).unwrap();
        let frames = make_pilot_frames(&plan, &dims).unwrap();
        let both: Vec<Complex64> = frames.iter().flat_map(vectorize).collect();
        let mut first_only = vectorize(&frames[0]);
        first_only.extend(vec![Complex64::default(); dims.len()]);
        let read = |x: &[Complex64]| {
            let y = h.mul_vec(x).unwrap();
            let rx = vec![unvectorize(&y[..dims.len()], dims).unwrap()];
            estimate_links(&rx, &plan, &dims, 3.0).unwrap().link(0, 0).to_vec()
        };
        prop_assert_eq!(read(&both), read(&first_only));
    }

    #[test]
    fn noiseless_mp_recovers_symbols((d, taps) in square_taps(&[4, 8, 16, 32], 5), seed in any::<u64>()) {
        let alphabet = Alphabet::new(Modulation::Bpsk);
        let h = build_link_matrix(&LinkChannel::new(taps).unwrap(), &d).unwrap();
        let mut rng = otfs::rng::stream_rng(seed, otfs::rng::StreamId::new(0, otfs::rng::Purpose::Symbols));
        let sent: Vec<usize> = (0..d.len()).map(|_| rng.random_range(0..alphabet.len())).collect();
        let x: Vec<Complex64> = sent.iter().map(|&s| alphabet.point(s)).collect();
        let y = apply_channel(&h, &x, 0.0, &mut rng).unwrap();
        let out = detect_mp(&y, &h, &alphabet, &DetectorParams::default(), 0.0).unwrap();
        prop_assert_eq!(out.symbols, sent);
    }

    #[test]
    fn sparsified_ofdm_truncation_bound(seed in any::<u64>(), keep in 0.9..1.0f64) {
        let dims = GridDims::square(8);
        let support = vec![
            otfs::channel::TapIndex::new(0, 0),
            otfs::channel::TapIndex::new(1, 1),
            otfs::channel::TapIndex::new(3, 2),
        ];
        let mut rng = otfs::rng::stream_rng(seed, otfs::rng::StreamId::new(0, otfs::rng::Purpose::Channel));
        let ch = otfs::channel::gen_random_mimo_channel(&mut rng, &support, 2).unwrap();
        let dense = build_mimo_ofdm_matrix(&ch, dims.n, dims.m).unwrap();
        let sparse = sparsify_for_mp(&dense, keep).unwrap();
        prop_assert_eq!(&sparse, &build_mimo_ofdm_sparse(&ch, dims.n, dims.m, keep).unwrap());
        for r in 0..dense.nrows() {
            let total: f64 = dense.row(r).iter().map(|z| z.norm_sqr()).sum();
            let (_, vals) = sparse.row(r);
            let kept: f64 = vals.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!(kept >= keep * total - 1e-12);
        }
    }
}

#[test]
fn block_dft_is_unitary() {
    for m in [1, 2, 7, 32] {
        let w = dft_matrix(m);
        let prod = &w * w.adjoint();
        for i in 0..m {
            for j in 0..m {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }
}
