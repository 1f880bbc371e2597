use arc_core::synth::{synthesize_sample, SceneConfig};

#[test]
fn empirical_snr_matches_config() {
    for snr_db in [0.0, 10.0, 20.0] {
        let scene = SceneConfig {
            noise_snr_db: Some(snr_db),
            ..SceneConfig::default()
        };
        let mut entries = 0;
        for (class, index) in [(0, 0), (3, 7)] {
            let p = synthesize_sample(&scene, class, index).unwrap();
            let signal: f64 = p.clean.iter().map(|z| z.norm_sqr()).sum();
            let noise: f64 = p.noise.iter().map(|z| z.norm_sqr()).sum();
            let got = 10.0 * (signal / noise).log10();
            assert!((got - snr_db).abs() < 0.1, "snr {snr_db}: measured {got}");
            entries += p.noise.len();
        }
        assert!(entries >= 100_000);
    }
}

#[test]
fn noise_is_circular_with_equal_quadrature_power() {
    let p = synthesize_sample(&SceneConfig::default(), 1, 2).unwrap();
    let n = p.noise.len() as f64;
    let re = p.noise.iter().map(|z| z.re * z.re).sum::<f64>() / n;
    let im = p.noise.iter().map(|z| z.im * z.im).sum::<f64>() / n;
    let cross = p.noise.iter().map(|z| z.re * z.im).sum::<f64>() / n;
    assert!((re / im - 1.0).abs() < 0.03, "{re} vs {im}");
    assert!(cross.abs() < 0.03 * re);
}

#[test]
fn disabled_noise_leaves_clean_signal() {
    let scene = SceneConfig {
        noise_snr_db: None,
        packets: 50,
        ..SceneConfig::default()
    };
    let p = synthesize_sample(&scene, 0, 0).unwrap();
    assert!(p.noise.iter().all(|z| z.norm_sqr() == 0.0));
    for (z, c) in p.csi.values().iter().zip(&p.clean) {
        assert_eq!(z.re, c.re as f32);
        assert_eq!(z.im, c.im as f32);
    }
}
