use aen_core::supervision::{
    gen_boundary_labels, gen_duration_labels, gen_labels, l2_loss, l2_loss_grad, total_loss, weighted_binary_loss,
    weighted_binary_loss_grad, DurationMap, LabelSet, LossConfig, ScoreGrids,
};
use aen_core::timeline::{build_grid, GroundTruthAction, VideoMeta};
use aen_oracles::{central_difference, duration_labels_bruteforce, nearest_center_bruteforce};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_gts(rng: &mut ChaCha8Rng, duration: f64, max: usize) -> Vec<GroundTruthAction> {
    (0..rng.gen_range(0..=max))
        .map(|_| {
            let a = rng.gen_range(0.0..duration);
            let b = rng.gen_range(0.0..duration);
            let (s, e) = (a.min(b), a.max(b));
            GroundTruthAction::new("x", s, if e > s { e } else { s + 1e-3 }.min(duration))
        })
        .filter(|g| g.end_sec > g.start_sec)
        .collect()
}

#[test]
fn duration_labels_match_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..500 {
        let t = rng.gen_range(1..=16u64);
        let delta = [8u64, 16, 5][trial % 3];
        let fps = [16.0, 25.0, 29.97][trial % 3];
        let meta = VideoMeta::new("v", delta * t + rng.gen_range(0..delta), fps, delta).unwrap();
        let grid = build_grid(&meta).unwrap();
        let d = rng.gen_range(1..=t as usize);
        let gts = random_gts(&mut rng, meta.duration_seconds, 4);
        let got = gen_duration_labels(&grid, &gts, d).unwrap();
        let pairs: Vec<(f64, f64)> = gts.iter().map(|g| (g.start_sec, g.end_sec)).collect();
        let want = duration_labels_bruteforce(t as usize, delta as f64, fps, &pairs, d);
        for dd in 1..=d {
            for j in 0..t as usize {
                assert_eq!(got.get(dd, j), f64::from(want[dd - 1][j]), "trial {trial} cell ({dd},{j})");
            }
        }
    }
}

#[test]
fn duration_labels_spec_instance() {
    // T=6, D=6, gt [0.9, 3.1] at 16 frames/snippet and 16 fps: best cell is (2, 1) = [1, 3].
    let grid = build_grid(&VideoMeta::new("v", 96, 16.0, 16).unwrap()).unwrap();
    let got = gen_duration_labels(&grid, &[GroundTruthAction::new("a", 0.9, 3.1)], 6).unwrap();
    let want = duration_labels_bruteforce(6, 16.0, 16.0, &[(0.9, 3.1)], 6);
    let ones: Vec<_> = (1..=6)
        .flat_map(|d| (0..6).map(move |j| (d, j)))
        .filter(|&(d, j)| got.get(d, j) == 1.0)
        .collect();
    assert_eq!(ones, vec![(2, 1)]);
    assert_eq!(want[1][1], 1);
}

#[test]
fn boundary_labels_are_nearest_centers() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let t = rng.gen_range(1..=20u64);
        let meta = VideoMeta::new("v", 16 * t, 16.0, 16).unwrap();
        let grid = build_grid(&meta).unwrap();
        let gts = random_gts(&mut rng, meta.duration_seconds, 3);
        let b = gen_boundary_labels(&grid, &gts).unwrap();
        let mut want_s = vec![0.0; t as usize];
        let mut want_e = vec![0.0; t as usize];
        for g in &gts {
            want_s[nearest_center_bruteforce(t as usize, 16.0, 16.0, g.start_sec)] = 1.0;
            want_e[nearest_center_bruteforce(t as usize, 16.0, 16.0, g.end_sec)] = 1.0;
        }
        assert_eq!(b.starts, want_s);
        assert_eq!(b.ends, want_e);
        assert_eq!(b.warnings.is_empty(), !gts.is_empty());
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let eps = 1e-12;
    let h = 1e-6;
    for _ in 0..100 {
        let n = rng.gen_range(2..40);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let mut l: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.3) as u8)).collect();
        l[0] = 1.0;
        l[1] = 0.0;
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.8)).collect();
        mask[0] = true;
        mask[1] = true;

        let g = weighted_binary_loss_grad(&p, &l, &mask, eps).unwrap();
        let g2 = l2_loss_grad(&p, &l, &mask).unwrap();
        for i in 0..n {
            let fd = central_difference(|x| weighted_binary_loss(x, &l, &mask, eps).unwrap(), &p, i, h);
            assert!(rel_close(g[i], fd, 1e-5), "wbce {i}: {} vs {fd}", g[i]);
            let fd2 = central_difference(|x| l2_loss(x, &l, &mask).unwrap(), &p, i, h);
            assert!(rel_close(g2[i], fd2, 1e-5), "l2 {i}: {} vs {fd2}", g2[i]);
        }
    }
}

#[test]
fn weighted_loss_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let n = rng.gen_range(2..30);
        let mut rows: Vec<(f64, f64)> = (0..n)
            .map(|i| (rng.gen_range(0.01..0.99), f64::from((i % 3 == 0) as u8)))
            .collect();
        let loss = |rows: &[(f64, f64)]| {
            let p: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let l: Vec<f64> = rows.iter().map(|r| r.1).collect();
            weighted_binary_loss(&p, &l, &vec![true; rows.len()], 1e-12).unwrap()
        };
        let base = loss(&rows);
        rows.shuffle(&mut rng);
        assert!((loss(&rows) - base).abs() <= 1e-12 * base.abs().max(1.0));
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> (ScoreGrids, LabelSet) {
    let t = rng.gen_range(3..=12u64);
    let grid = build_grid(&VideoMeta::new("v", 16 * t, 16.0, 16).unwrap()).unwrap();
    let gts = vec![GroundTruthAction::new("a", 0.7, (t as f64 - 0.8).max(1.0))];
    let labels = gen_labels(&grid, &gts, t as usize).unwrap();
    let rand_map = |rng: &mut ChaCha8Rng| {
        let mut m = DurationMap::zeros(t as usize, t as usize);
        for d in 1..=t as usize {
            for j in 0..t as usize {
                if m.is_valid(d, j) {
                    m.set(d, j, rng.gen_range(0.01..0.99));
                }
            }
        }
        m
    };
    let grids = ScoreGrids::new(
        (0..t).map(|_| rng.gen_range(0.01..0.99)).collect(),
        (0..t).map(|_| rng.gen_range(0.01..0.99)).collect(),
        rand_map(rng),
        rand_map(rng),
    )
    .unwrap();
    (grids, labels)
}

#[test]
fn total_loss_composes_its_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cfg = LossConfig::default();
    for _ in 0..50 {
        let (grids, labels) = random_instance(&mut rng);
        let b = total_loss(&grids, &labels, &cfg).unwrap();
        let t = labels.starts.len();
        let cells = labels.durations.valid_mask();
        let s = weighted_binary_loss(&grids.start_probs, &labels.starts, &vec![true; t], 1e-12).unwrap();
        let e = weighted_binary_loss(&grids.end_probs, &labels.ends, &vec![true; t], 1e-12).unwrap();
        let cc = weighted_binary_loss(grids.conf_cls.values(), labels.durations.values(), &cells, 1e-12).unwrap();
        let cr = l2_loss(grids.conf_reg.values(), labels.durations.values(), &cells).unwrap();
        let expect = (s + e) + (cc + 10.0 * cr);
        assert!((b.total - expect).abs() <= 1e-12 * expect.max(1.0));

        let no_tem = total_loss(&grids, &labels, &LossConfig { lambda_1: 0.0, ..cfg }).unwrap();
        assert_eq!(no_tem.total, no_tem.pem * cfg.lambda_2);

        // monotone in each weight
        let mut prev = f64::NEG_INFINITY;
        for k in 0..5 {
            let v = total_loss(&grids, &labels, &LossConfig { lambda_reg: k as f64 * 3.0, ..cfg }).unwrap().total;
            assert!(v >= prev);
            prev = v;
        }
        let a = total_loss(&grids, &labels, &LossConfig { lambda_1: 0.5, ..cfg }).unwrap().total;
        let c = total_loss(&grids, &labels, &LossConfig { lambda_1: 2.0, ..cfg }).unwrap().total;
        assert!(c >= a);
        let a = total_loss(&grids, &labels, &LossConfig { lambda_2: 0.5, ..cfg }).unwrap().total;
        let c = total_loss(&grids, &labels, &LossConfig { lambda_2: 2.0, ..cfg }).unwrap().total;
        assert!(c >= a);
    }
}

#[test]
fn perfect_prediction_is_near_zero() {
    let grid = build_grid(&VideoMeta::new("v", 160, 16.0, 16).unwrap()).unwrap();
    let labels = gen_labels(&grid, &[GroundTruthAction::new("a", 2.1, 5.1)], 10).unwrap();
    let b = total_loss(&ScoreGrids::from_labels(&labels), &labels, &LossConfig::default()).unwrap();
    assert!(b.total >= 0.0 && b.total <= 10.0 * 1e-12 * 3.0, "{b:?}");
}
