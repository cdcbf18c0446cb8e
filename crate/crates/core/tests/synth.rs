use std::fs;

use avc_core::audio::pipeline;
use avc_core::ground_truth::HeadAnnotations;
use avc_core::synth::{
    generate_dataset, generate_scene, load_dataset, read_manifest, SceneSpec, SynthError,
};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn small(seed: u64) -> SceneSpec {
    SceneSpec {
        width: 64,
        height: 48,
        n_min: 0,
        n_max: 12,
        seed,
        ..SceneSpec::default()
    }
}

#[test]
fn empty_scene_is_silent_and_unannotated() {
    let spec = SceneSpec {
        n_min: 0,
        n_max: 0,
        ..small(3)
    };
    let s = generate_scene::<f64>(&spec, 0).unwrap();
    assert_eq!(s.count(), 0);
    assert!(s.audio.channels()[0].iter().all(|&v| v == 0.0));
    // plain background: no pixel reaches blob brightness
    assert!(s.image.pixels().iter().all(|&v| v < 0.41));
}

#[test]
fn every_head_sits_on_a_bright_blob() {
    let spec = small(4);
    for i in 0..20 {
        let s = generate_scene::<f64>(&spec, i).unwrap();
        assert!((spec.n_min..=spec.n_max).contains(&s.count()));
        for &(x, y) in &s.heads.points {
            let (px, py) = (x as usize, y as usize);
            let peak = (0..3).map(|c| s.image.get(px, py, c)).fold(0.0, f64::max);
            assert!(peak > 0.45, "scene {i} head ({x:.1},{y:.1}) peak {peak}");
        }
    }
}

#[test]
fn single_blob_is_compact() {
    let spec = SceneSpec {
        n_min: 1,
        n_max: 1,
        ..small(5)
    };
    let s = generate_scene::<f64>(&spec, 7).unwrap();
    let (hx, hy) = s.heads.points[0];
    let bright: Vec<(usize, usize)> = (0..spec.height)
        .flat_map(|y| (0..spec.width).map(move |x| (x, y)))
        .filter(|&(x, y)| {
            s.image
                .get(x, y, 0)
                .max(s.image.get(x, y, 1))
                .max(s.image.get(x, y, 2))
                > 0.42
        })
        .collect();
    assert!(!bright.is_empty());
    for (x, y) in bright {
        let d = ((x as f64 + 0.5 - hx).powi(2) + (y as f64 + 0.5 - hy).powi(2)).sqrt();
        assert!(d < 3.0 * spec.blob_radius + 1.0, "pixel ({x},{y}) at {d}");
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn loudness_tracks_square_root_of_count() {
    let spec = SceneSpec {
        width: 16,
        height: 16,
        n_min: 1,
        n_max: 40,
        seed: 9,
        ..SceneSpec::default()
    };
    let (mut rms, mut root) = (Vec::new(), Vec::new());
    for i in 0..200 {
        let s = generate_scene::<f64>(&spec, i).unwrap();
        rms.push(s.audio.rms());
        root.push((s.count() as f64).sqrt());
    }
    let r = pearson(&rms, &root);
    assert!(r > 0.99, "correlation {r}");
}

#[test]
fn babble_stays_in_band() {
    let spec = SceneSpec {
        width: 16,
        height: 16,
        n_min: 10,
        n_max: 10,
        ..small(6)
    };
    let s = generate_scene::<f64>(&spec, 1).unwrap();
    let x = &s.audio.channels()[0];
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut inside, mut outside) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2) {
        let f = k as f64 * 16000.0 / n as f64;
        if (spec.band_lo_hz..=spec.band_hi_hz).contains(&f) {
            inside += c.norm_sqr();
        } else {
            outside += c.norm_sqr();
        }
    }
    assert!(outside / inside < 1e-20, "leak {}", outside / inside);
    assert_eq!(pipeline(&s.audio).unwrap().to_input().dims(), &[1, 96, 64]);
}

#[test]
fn dataset_regenerates_byte_for_byte() {
    let spec = small(11);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let rows = generate_dataset(&spec, 4, a.path()).unwrap();
    generate_dataset(&spec, 4, b.path()).unwrap();
    let mut files = vec!["manifest.csv".to_string()];
    for r in &rows {
        files.extend([r.image.clone(), r.annotation.clone(), r.audio.clone()]);
    }
    for f in files {
        assert_eq!(
            fs::read(a.path().join(&f)).unwrap(),
            fs::read(b.path().join(&f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn manifest_counts_match_annotations() {
    let spec = small(12);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&spec, 5, dir.path()).unwrap();
    let rows = read_manifest(dir.path()).unwrap();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        let ann = HeadAnnotations::load(&dir.path().join(&r.annotation), spec.width, spec.height)
            .unwrap();
        assert_eq!(ann.count(), r.count);
    }
    let scenes = load_dataset::<f32>(dir.path()).unwrap();
    for (s, i) in scenes.iter().zip(0..) {
        let fresh = generate_scene::<f64>(&spec, i).unwrap();
        assert_eq!(s.count(), fresh.count());
        assert_eq!(s.image.width(), spec.width);
        assert_eq!(s.audio.len(), spec.clip_samples);
    }
}

#[test]
fn header_only_manifest_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("manifest.csv"),
        "image,annotation,audio,count\n",
    )
    .unwrap();
    assert!(load_dataset::<f64>(dir.path()).unwrap().is_empty());
    fs::write(
        dir.path().join("manifest.csv"),
        "image,annotation,audio,count\na,b,c\n",
    )
    .unwrap();
    assert!(matches!(
        read_manifest(dir.path()),
        Err(SynthError::Manifest { line: 2, .. })
    ));
}

#[test]
fn bad_specs_are_rejected() {
    let cases = [
        SceneSpec {
            width: 60,
            ..small(0)
        },
        SceneSpec {
            n_min: 5,
            n_max: 2,
            ..small(0)
        },
        SceneSpec {
            band_hi_hz: 9000.0,
            ..small(0)
        },
        SceneSpec {
            per_person_rms: 0.0,
            ..small(0)
        },
        SceneSpec {
            clip_samples: 8000,
            ..small(0)
        },
    ];
    for spec in cases {
        assert!(
            matches!(generate_scene::<f64>(&spec, 0), Err(SynthError::Spec(_))),
            "{spec:?}"
        );
    }
}
