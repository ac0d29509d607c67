// Decompose ensemble uncertainty into epistemic and aleatoric parts at a few
// probe states. Scratch diagnostic, run as:
//   cargo run --release -p orpo-cli --example probe_u -- <dynamics.bin>

use orpo_core::dynamics::EnsembleDynamics;

fn main() {
    let path = std::env::args().nth(1).expect("usage: probe_u <dynamics.bin>");
    let model = EnsembleDynamics::load(std::path::Path::new(&path)).unwrap();
    let probes = [
        ("band (0,0)", [0.0, 0.0]),
        ("mid (1,1)", [1.0, 1.0]),
        ("mid (2,2)", [2.0, 2.0]),
        ("corner (3,3)", [3.0, 3.0]),
        ("anti (-3,-3)", [-3.0, -3.0]),
    ];
    for (name, s) in probes {
        let pred = model.predict(&s, &[0.0, 0.0]);
        let n = pred.member_means.len() as f64;
        let k = pred.ensemble_mean.len();
        let mut epi = 0.0;
        for mu in &pred.member_means {
            for j in 0..k {
                let d = mu[j] - pred.ensemble_mean[j];
                epi += d * d;
            }
        }
        epi /= n;
        let mut alea = 0.0;
        for sd in &pred.member_stds {
            for j in 0..k {
                alea += sd[j] * sd[j];
            }
        }
        alea /= n;
        println!(
            "{name:14} u = {:.4}  epistemic² = {:.5}  aleatoric² = {:.5}  max member σ-norm = {:.4}",
            (epi + alea).sqrt(),
            epi,
            alea,
            pred.member_stds
                .iter()
                .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0f64, f64::max)
        );
    }
}
