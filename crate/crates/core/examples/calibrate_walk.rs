//! Sweeps the cadence amplitudes of the two walking speeds and reports ear
//! CCA accuracy per condition on the paper-like preset.
//! Usage: calibrate_walk <a08,a16[,b08,b16]>... (SEEDS, default 5)

use ssvep_core::baselines::{build_references, cca_classify_matrix};
use ssvep_core::signal::{preprocess_channels, Condition};
use ssvep_core::synth::{gen_trial, GenConfig, SubjectProfile};

fn main() -> ssvep_core::Result<()> {
    for pair in std::env::args().skip(1) {
        let v: Vec<f64> = pair.split(',').map(|x| x.parse().expect("number")).collect();
        let mut cfg = GenConfig::default();
        cfg.walk08.amplitude = v[0];
        cfg.walk16.amplitude = v[1];
        if v.len() == 4 {
            cfg.walk08.burst_rate = v[2];
            cfg.walk16.burst_rate = v[3];
        }
        let mut line = format!("{pair}:");
        for seed in 0..std::env::var("SEEDS").map_or(5, |s| s.parse().unwrap()) {
            cfg.seed = seed;
            let bank = build_references(&cfg.stimulus_freqs, 2, cfg.samples, cfg.rate)?;
            let mut accs = Vec::new();
            for cond in Condition::ALL {
                let spec = cfg.condition_spec(cond);
                let mut total = 0.0;
                for s in 1..=cfg.n_subjects as u32 {
                    let p = SubjectProfile::generate(&cfg, s);
                    let mut correct = 0;
                    for i in 0..cfg.trials_per_class {
                        for c in 0..3 {
                            let (_, ear) = gen_trial(&p, &spec, c, i, &cfg)?;
                            let x = preprocess_channels(&ear.data, 100.0)?;
                            correct += (cca_classify_matrix(&x, &bank)?.0 == c) as usize;
                        }
                    }
                    total += correct as f64 / (3 * cfg.trials_per_class) as f64;
                }
                accs.push(total / cfg.n_subjects as f64);
            }
            line += &format!("  [{:.3} {:.3} {:.3}]", accs[0], accs[1], accs[2]);
        }
        println!("{line}");
    }
    Ok(())
}
