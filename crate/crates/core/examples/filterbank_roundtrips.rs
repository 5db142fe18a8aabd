//! Round-trip quality of the four transform families on the same noise
//! signal.

use fsqkit::filterbank::*;
use rand::{Rng, SeedableRng};

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..16_384).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let specs = [
        ("patch-320", FilterbankSpec::Patch { size: 320 }),
        (
            "stft-2048/512",
            FilterbankSpec::Stft(StftSpec::new(2048, 512, WindowKind::Hann).unwrap()),
        ),
        ("mdct-512", FilterbankSpec::Mdct { size: 512 }),
        ("pqmf-4", FilterbankSpec::Pqmf(PqmfSpec::new(4).unwrap())),
    ];
    println!("{:<14} {:>12} {:>10} {:>8}", "family", "rel L2", "dB", "ratio");
    for (name, spec) in specs {
        let r = roundtrip_report(&x, &spec).unwrap();
        println!(
            "{name:<14} {:>12.3e} {:>10.2} {:>8.1}",
            r.relative_l2, r.error_db, r.critical_sampling_ratio
        );
    }
}
