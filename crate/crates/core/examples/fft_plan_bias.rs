//! Loss-sensitivity bias of harmonic vs inharmonic FFT plans: the
//! power-of-two plan's sensitivity map shows stronger periodic structure
//! in its time marginal than the golden-ratio plan's.

use fsqkit::analysis::*;
use fsqkit::filterbank::{StftSpec, WindowKind};
use rand::{Rng, SeedableRng};

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x51a5);
    let signal: Vec<f64> = (0..2048).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let probe = StftSpec::new(128, 32, WindowKind::Hann).unwrap();
    let silence = vec![0.0f64; signal.len()];
    for (name, plan) in [
        ("pow2  ", fft_plan(32, 2.0, 4).unwrap()),
        ("golden", fft_plan(32, GOLDEN_RATIO, 4).unwrap()),
    ] {
        let loss = MultiResL1 {
            resolutions: plan.stft_specs().unwrap(),
            reference: silence.clone(),
        };
        let map = sensitivity_map(&signal, &probe, &loss, 1e-3).unwrap();
        println!(
            "{name} sizes {:?} score {:.3} time peak/mean {:.4}",
            plan.sizes(),
            inharmonicity_score(&plan).unwrap(),
            map.time_peak_to_mean(6)
        );
    }
}
