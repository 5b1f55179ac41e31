//! Sweeps the paper-like SSVEP amplitude and reports standing ear-EEG CCA
//! accuracy per seed.

use ssvep_core::baselines::{build_references, cca_classify_matrix};
use ssvep_core::signal::{preprocess_channels, Condition};
use ssvep_core::synth::{gen_trial, GenConfig, SubjectProfile, PAPER_LIKE_AMPLITUDE};

fn main() -> ssvep_core::Result<()> {
    let amps: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("amplitude"))
        .collect();
    for &amp in &amps {
        let mut line = format!("amp {amp:.3}:");
        for seed in 0..5 {
            let cfg = GenConfig {
                seed,
                ..GenConfig::default()
            };
            let bank = build_references(&cfg.stimulus_freqs, 2, cfg.samples, cfg.rate)?;
            let spec = cfg.condition_spec(Condition::Standing);
            let mut total = 0.0;
            for s in 1..=cfg.n_subjects as u32 {
                let mut p = SubjectProfile::generate(&cfg, s);
                let k = amp / PAPER_LIKE_AMPLITUDE;
                p.ear_gain.iter_mut().for_each(|g| *g *= k);
                let mut correct = 0;
                let mut n = 0;
                for i in 0..cfg.trials_per_class {
                    for c in 0..3 {
                        let (_, ear) = gen_trial(&p, &spec, c, i, &cfg)?;
                        let x = preprocess_channels(&ear.data, 100.0)?;
                        let (pred, _) = cca_classify_matrix(&x, &bank)?;
                        correct += (pred == c) as usize;
                        n += 1;
                    }
                }
                total += correct as f64 / n as f64;
            }
            line += &format!(" {:.3}", total / cfg.n_subjects as f64);
        }
        println!("{line}");
    }
    Ok(())
}
