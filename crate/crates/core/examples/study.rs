use tlx_core::study::{run_seed, StudyConfig};

fn main() {
    let cfg = StudyConfig::default();
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    for seed in if seeds.is_empty() { cfg.seeds.clone() } else { seeds } {
        let (r, _) = run_seed(&cfg, seed).expect("study seed");
        println!(
            "seed {seed}: net {:?} clus {:?} sig {:?} clus/pred {:?} sig/pred {:?} tp {:.3} qrs {:.3} {:.1}s",
            r.net_vs_labels.auroc,
            r.rf_clus_labels.auroc,
            r.rf_sig_labels.auroc,
            r.rf_clus_pred.auroc,
            r.rf_sig_pred.auroc,
            r.best_tp,
            r.best_qrs,
            r.seconds
        );
    }
}
