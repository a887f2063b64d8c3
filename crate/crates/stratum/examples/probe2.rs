use nalgebra::{Cholesky, DMatrix, DVector};
use stratum::*;

fn loglik_grad_hess(times: &[f64], events: &[bool], covs: &[Vec<f64>], beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = times.len();
    let k = beta.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut ll = 0.0;
    let mut grad = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(k);
    let mut s2 = DMatrix::zeros(k, k);
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let mut d = 0.0;
        let mut ex = DVector::zeros(k);
        while j < order.len() && times[order[j]] == t {
            let idx = order[j];
            let x = DVector::from_vec(covs[idx].clone());
            let r = x.dot(beta).exp();
            s0 += r;
            s1.axpy(r, &x, 1.0);
            s2 += r * &x * x.transpose();
            if events[idx] { d += 1.0; ex += &x; ll += x.dot(beta); }
            j += 1;
        }
        if d > 0.0 {
            ll -= d * s0.ln();
            let mean = &s1 / s0;
            grad += &ex - &mean * d;
            info += (&s2 / s0 - &mean * mean.transpose()) * d;
        }
        i = j;
    }
    (ll, grad, info)
}

fn main() {
    let d = simulate_trial(&default_scenario(Scenario::I).with_seed(30055)).unwrap();
    let placebo: Vec<&PatientRecord> = d.patients().iter().filter(|p| p.arm == Arm::Placebo).collect();
    let times: Vec<f64> = placebo.iter().map(|p| p.time).collect();
    let events: Vec<bool> = placebo.iter().map(|p| p.event).collect();
    let rows: Vec<Vec<f64>> = placebo.iter().map(|p| vec![p.z0, p.z1]).collect();
    let mut beta = DVector::zeros(2);
    let (mut ll, mut g, mut h) = loglik_grad_hess(&times, &events, &rows, &beta);
    for it in 0..20 {
        let delta = Cholesky::new(h.clone()).unwrap().solve(&g);
        let mut step = 1.0f64;
        for halving in 0..40 {
            let cand = &beta + &delta * step;
            let (ll2, g2, h2) = loglik_grad_hess(&times, &events, &rows, &cand);
            if ll2.is_finite() && ll2 >= ll - 1e-12 {
                println!("it {it}: step {step} halvings {halving} ll {ll:.12} -> {ll2:.12} grad {:.3e} -> {:.3e} delta_norm {:.3e}", g.amax(), g2.amax(), delta.amax());
                beta = cand; ll = ll2; g = g2; h = h2;
                break;
            }
            step *= 0.5;
        }
        if g.amax() < 1e-8 { println!("converged it {it}"); break; }
    }
    println!("n={} events={}", times.len(), events.iter().filter(|&&e| e).count());
}
