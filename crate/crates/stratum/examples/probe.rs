//! Scratch probe for acceptance-criterion magnitudes (deleted before ship).
use rayon::prelude::*;
use stratum::*;

fn arm_curve(d: &TrialDataset, arm: Arm) -> SurvivalCurve {
    let pats: Vec<&PatientRecord> = d.patients().iter().filter(|p| p.arm == arm).collect();
    let times: Vec<f64> = pats.iter().map(|p| p.time).collect();
    let events: Vec<bool> = pats.iter().map(|p| p.event).collect();
    nelson_aalen(&times, &events, &WeightVector::uniform(times.len())).unwrap()
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "2".into());
    if which == "2" {
        // Criterion 2: exponential-fit log hazard ratio on arm-level NA curves.
        for sc in [Scenario::I, Scenario::II, Scenario::III] {
            let logs: Vec<f64> = (0..200u64)
                .into_par_iter()
                .map(|i| {
                    let cfg = default_scenario(sc).with_seed(1000 + i);
                    let d = simulate_trial(&cfg).unwrap();
                    let t = arm_curve(&d, Arm::Treatment);
                    let c = arm_curve(&d, Arm::Placebo);
                    summarize_hazard_ratio(&t, &c).unwrap().ln()
                })
                .collect();
            let mean = logs.iter().sum::<f64>() / logs.len() as f64;
            let sd = (logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
            println!(
                "scenario {sc}: mean log-ratio {mean:.4} (sd {sd:.4}, se {:.4}); target {:.4}, dev {:+.4}",
                sd / (200f64).sqrt(),
                0.8f64.ln(),
                mean - 0.8f64.ln()
            );
        }
    } else if which == "3" {
        // Criterion 3: median estimation errors per method at 200 replicates.
        let methods = MethodSpec::default_set();
        for sc in [Scenario::I, Scenario::II, Scenario::III] {
            let cfg0 = default_scenario(sc);
            let mut grid = default_truth_grid();
            grid.push(2.0);
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let truth = true_subgroup_curves(&cfg0.clone().with_seed(0xACC3), 1_000_000, &grid).unwrap();
            let t2 = truth.delta_at(2.0);
            let t5 = truth.delta_at(5.0);
            let tr = truth.delta_rmst_true;
            println!("scenario {sc}: truth d2={t2:.4} d5={t5:.4} rmst={tr:.4} (mc={})", truth.mc_samples);
            let errs: Vec<Vec<[f64; 3]>> = (0..200u64)
                .into_par_iter()
                .map(|i| {
                    let d = simulate_trial(&cfg0.clone().with_seed(5000 + i)).unwrap();
                    methods
                        .iter()
                        .map(|m| {
                            let r = estimate(&d, m, &[2.0, 5.0], 5.0).unwrap();
                            [
                                r.delta_t[0].delta - t2,
                                r.delta_t[1].delta - t5,
                                r.delta_rmst - tr,
                            ]
                        })
                        .collect()
                })
                .collect();
            for (j, m) in methods.iter().enumerate() {
                let med = |k: usize| {
                    let mut v: Vec<f64> = errs.iter().map(|e| e[j][k]).collect();
                    v.sort_by(f64::total_cmp);
                    (v[99] + v[100]) / 2.0
                };
                println!(
                    "  {:<18} median err: d2 {:+.4} d5 {:+.4} rmst {:+.4}",
                    m.label(),
                    med(0),
                    med(1),
                    med(2)
                );
            }
        }
    }
}
