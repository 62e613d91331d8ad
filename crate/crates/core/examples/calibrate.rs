use glimpse_core::probes::*;
use std::time::Instant;

fn main() {
    let t = Instant::now();
    let ds = synthetic_factorized_dataset(500, 66, 0.35, 5);
    println!("dataset built: {} samples in {:.1?}", ds.len(), t.elapsed());
    let settings = DecoderSettings::default();
    let t = Instant::now();
    let report = binding_analysis(&ds, 0, &settings, 1);
    println!("binding_analysis in {:.1?}", t.elapsed());
    let lab = summarize_window(&report.label_t);
    let pos = summarize_window(&report.pos_t);
    println!("label_t={:.3} pos_t={:.3}", lab.mean, pos.mean);
    for tr in &report.tuples {
        println!(
            "tuple {:?} congruent={:?}: acc={:.3} baseline={:.3} excess={:.4} [{:.4},{:.4}]",
            tr.spec, tr.spec.congruent(), tr.accuracy.mean, tr.baseline_mean,
            tr.excess.mean, tr.excess.ci_low, tr.excess.ci_high
        );
    }
    let hits = binding_selectivity(&[report], 0.99);
    println!("selectivity hits: {}", hits.len());
}
