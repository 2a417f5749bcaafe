use aen_core::fusion::{
    agent_fusion, attention_encoder, attention_encoder_traced, environment_pathway, featurize_video, roi_align,
    stub_backbone, EncoderWeights, EnvOutput, FeatureMap, FeatureSource, FusionConfig, FusionWeights,
};
use aen_core::tensor_io::{write_tensor, AgentBox, Manifest, SnippetEntry, Tensor};
use aen_core::timeline::{GroundTruthAction, VideoMeta};
use aen_core::Error;
use aen_oracles::roi_align_bruteforce;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg() -> FusionConfig {
    FusionConfig {
        channels: 3,
        d_model: 8,
        num_heads: 2,
        num_layers: 2,
        ffn_dim: 16,
        env_hidden: vec![8],
        roi_grid: (2, 2),
        roi_samples: (2, 2),
        env_output: EnvOutput::Softmax,
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> AgentBox {
    let (a, b) = (rng.gen::<f64>(), rng.gen::<f64>());
    let (c, d) = (rng.gen::<f64>(), rng.gen::<f64>());
    let (x1, x2) = (a.min(b), a.max(b).max(a.min(b) + 1e-3).min(1.0));
    let (y1, y2) = (c.min(d), c.max(d).max(c.min(d) + 1e-3).min(1.0));
    AgentBox([x1.min(x2 - 1e-4), y1.min(y2 - 1e-4), x2, y2])
}

#[test]
fn roi_align_matches_bruteforce() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (c, h, w) = (rng.gen_range(1..4), rng.gen_range(1..9), rng.gen_range(1..9));
        let values: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let map = FeatureMap::new(c, h, w, values.clone()).unwrap();
        let b = random_box(&mut rng);
        let grid = (rng.gen_range(1..5), rng.gen_range(1..5));
        let samples = (rng.gen_range(1..4), rng.gen_range(1..4));
        let got = roi_align(&map, &b, grid, samples).to_f64();
        let want = roi_align_bruteforce(&values, (c, h, w), b.0, grid, samples);
        for (g, e) in got.iter().zip(&want) {
            worst = worst.max((g - e).abs());
        }
    }
    assert!(worst < 1e-9, "max abs diff {worst}");
}

fn patches(rng: &mut ChaCha8Rng, n: usize, cfg: &FusionConfig) -> Vec<Tensor> {
    let map = stub_backbone("perm", rng.gen_range(0..1000), [cfg.channels, 6, 6], 3).unwrap();
    (0..n)
        .map(|_| roi_align(&map, &random_box(rng), cfg.roi_grid, cfg.roi_samples))
        .collect()
}

#[test]
fn agent_fusion_is_permutation_invariant() {
    let cfg = small_cfg();
    let w = FusionWeights::seeded(cfg.clone(), 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=8 {
        let mut ps = patches(&mut rng, n, &cfg);
        let base = agent_fusion(&ps, &w).unwrap().unwrap();
        for _ in 0..20 {
            ps.shuffle(&mut rng);
            let again = agent_fusion(&ps, &w).unwrap().unwrap();
            for (a, b) in base.iter().zip(&again) {
                assert!((a - b).abs() <= 1e-12, "n={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn encoder_is_permutation_equivariant() {
    let cfg = small_cfg();
    let enc = EncoderWeights::seeded(4, "eq", &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=8 {
        let tokens: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let out = attention_encoder(&tokens, &enc).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..20 {
            perm.shuffle(&mut rng);
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| tokens[i].clone()).collect();
            let out_p = attention_encoder(&permuted, &enc).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                for (a, b) in out_p[k].iter().zip(&out[i]) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let cfg = FusionConfig::default();
    let enc = EncoderWeights::seeded(8, "rows", &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tokens: Vec<Vec<f64>> = (0..6).map(|_| (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let (_, maps) = attention_encoder_traced(&tokens, &enc).unwrap();
    for row in maps.iter().flatten().flatten() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn environment_feature_is_a_distribution() {
    let w = FusionWeights::seeded(FusionConfig::default(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let values: Vec<f64> = (0..32 * 4 * 4).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let env = environment_pathway(&FeatureMap::new(32, 4, 4, values).unwrap(), &w).unwrap();
        assert!((env.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(env.iter().all(|&p| p >= 0.0));
    }
}

fn manifest(num_snippets: u64, rng: &mut ChaCha8Rng) -> Manifest {
    let video = VideoMeta::new("vid-7", 16 * num_snippets, 16.0, 16).unwrap();
    let snippets = (0..num_snippets as usize)
        .map(|i| SnippetEntry {
            index: i,
            feature_file: Some(format!("snip{i}.aent")),
            agent_boxes: (0..rng.gen_range(0..4)).map(|_| random_box(rng)).collect(),
        })
        .collect();
    Manifest {
        video,
        annotations: vec![GroundTruthAction::new("a", 0.2, 0.9)],
        snippets,
    }
}

#[test]
fn featurize_is_deterministic_and_box_order_free() {
    let cfg = small_cfg();
    let w = FusionWeights::seeded(cfg.clone(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = manifest(5, &mut rng);
    let src = FeatureSource::Stub {
        seed: 9,
        dims: [cfg.channels, 6, 6],
    };
    let f = featurize_video(&m, &w, &src).unwrap();
    assert_eq!(f.dims(), &[5, 8]);
    assert_eq!(f, featurize_video(&m, &w, &src).unwrap());

    let mut shuffled = m.clone();
    for s in shuffled.snippets.iter_mut() {
        s.agent_boxes.reverse();
    }
    let g = featurize_video(&shuffled, &w, &src).unwrap();
    for (a, b) in f.to_f64().iter().zip(g.to_f64()) {
        assert!((a - b).abs() <= 1e-12);
    }

    let single = manifest(1, &mut rng);
    let t = featurize_video(&single, &w, &src).unwrap();
    assert_eq!(t.dims(), &[1, 8]);
    assert_eq!(t, featurize_video(&single, &w, &src).unwrap());
}

#[test]
fn featurize_from_files_and_missing_file() {
    let cfg = small_cfg();
    let w = FusionWeights::seeded(cfg.clone(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = manifest(3, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        let map = stub_backbone(&m.video.video_id, i, [cfg.channels, 5, 5], 2).unwrap();
        write_tensor(&map.to_tensor(), dir.path().join(format!("snip{i}.aent"))).unwrap();
    }
    let files = FeatureSource::Files {
        dir: dir.path().to_path_buf(),
    };
    let from_files = featurize_video(&m, &w, &files).unwrap();
    let from_stub = featurize_video(
        &m,
        &w,
        &FeatureSource::Stub {
            seed: 2,
            dims: [cfg.channels, 5, 5],
        },
    )
    .unwrap();
    assert_eq!(from_files, from_stub);

    std::fs::remove_file(dir.path().join("snip1.aent")).unwrap();
    match featurize_video(&m, &w, &files) {
        Err(Error::Data(msg)) => assert!(msg.contains("snippet 1"), "{msg}"),
        other => panic!("expected data error, got {other:?}"),
    }
}
