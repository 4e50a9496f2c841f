//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,7` restricts the run to the listed criteria.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::{ks_critical_01, ks_statistic, mean};
use rand::Rng;
use rand_distr::{Distribution, Normal as NormalDist, StandardNormal};
use snpe_core::harness::{cmd_train, variance_study, ExperimentConfig, MetricKind, TrainOutcome, DEFAULT_TAUS};
use snpe_core::kernel::{ess_log, solve_tau_log, Covariance, KernelState, TauStatus};
use snpe_core::metrics::{c2st, mmd_squared_with_bandwidth, nlog};
use snpe_core::nn::{Mdn, MdnArchitecture, MogOutput};
use snpe_core::rng::{stream, Domain};
use snpe_core::simulators::{gandk, ModelSpec, PriorSpec};
use snpe_core::smcabc::{reference_posterior, DEFAULT_POPULATION, DESK_BUDGET};
use snpe_core::snpe::{balance_heuristic_log_weight, balance_heuristic_omegas, Proposal, RoundRecord, RoundStore, Snpe, TrainConfig};
use snpe_core::transform::{BoxTransform, ParamSpace};
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = (bool, String);

fn z<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gradient_oracle() -> Outcome {
    let dims = [4, 5, 8, 9];
    let outs = [3, 4, 5];
    let mut worst: f64 = 0.0;
    for cfg in 0..20 {
        let (d, n) = (dims[cfg % 4], outs[cfg % 3]);
        let components = 1 + cfg % 3;
        let mdn = Mdn::new(MdnArchitecture::with_capacity(d, n, vec![10, 10], components)).unwrap();
        let mut rng = stream(cfg as u64, Domain::Misc, 100, 0);
        let p: Vec<f64> = mdn.init(&mut rng).into_iter().map(|v| v + 0.3 * z(&mut rng)).collect();
        let x: Vec<f64> = (0..d).map(|_| z(&mut rng)).collect();
        let theta: Vec<f64> = (0..n).map(|_| z(&mut rng)).collect();
        let g = mdn.grad_log_prob(&p, &x, &theta).unwrap();
        let h = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut q = p.clone();
        for i in 0..p.len() {
            q[i] = p[i] + h;
            let up = mdn.log_prob(&q, &x, &theta).unwrap();
            q[i] = p[i] - h;
            let dn = mdn.log_prob(&q, &x, &theta).unwrap();
            q[i] = p[i];
            let fd = (up - dn) / (2.0 * h);
            num += (g[i] - fd) * (g[i] - fd);
            den += fd * fd;
        }
        worst = worst.max((num / den.max(1e-300)).sqrt());
    }
    (worst <= 1e-4, format!("max relative error {worst:.2e} over 20 configurations"))
}

fn variance_scaling() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, lo, hi) in [(1, -1.3, -0.7), (2, -2.4, -1.6)] {
        let r = variance_study(d, &DEFAULT_TAUS, 1_000_000, 2024).unwrap();
        let ratio = r.bias_ratio.unwrap();
        let se = r.bias_ratio_se.unwrap();
        let slope_ok = (lo..=hi).contains(&r.slope);
        let ratio_ok = (ratio - 4.0).abs() <= 3.0 * se;
        ok &= slope_ok && ratio_ok;
        parts.push(format!("d={d} slope {:.3} bias ratio {ratio:.2} (se {se:.2})", r.slope));
    }
    (ok, parts.join("; "))
}

/// Loss contribution on the 1-D toy: `K_tau(x, x_o) * (-log q(theta | x))`
/// with the fixed density `q(theta | x) = N(x / 2, 1 / 2)`.
fn toy_loss(theta: f64, x: f64, ks: &KernelState) -> f64 {
    let q = MogOutput { n: 1, log_weights: vec![0.0], means: vec![x / 2.0], chol: vec![0.5f64.sqrt()] };
    ks.log_weight(&[x], &[1.0]).exp() * -q.log_prob(&[theta])
}

fn misr_recycling() -> Outcome {
    let ks = KernelState::new(1.0, Covariance::identity(1)).unwrap();
    let space = ParamSpace::new(PriorSpec::gaussian(vec![0.0], vec![1.0]).unwrap(), true).unwrap();
    let second = MogOutput { n: 1, log_weights: vec![0.0], means: vec![0.5], chol: vec![0.7] };
    let proposals = [Proposal::Prior, Proposal::Learned { mog: second.clone() }];
    let counts = [200usize, 100];
    let total = counts.iter().sum::<usize>() as f64;
    let sampler = [NormalDist::new(0.0, 1.0).unwrap(), NormalDist::new(0.5, 0.7).unwrap()];

    // (a) identities through the round store against the direct formula
    let mut worst: f64 = 0.0;
    let mut store = RoundStore::new();
    let mut rng = stream(1, Domain::Misc, 200, 0);
    for k in 0..2 {
        let th: Vec<Vec<f64>> = (0..counts[k]).map(|_| vec![sampler[k].sample(&mut rng)]).collect();
        let rec = RoundRecord {
            round: k + 1,
            proposal: proposals[k].clone(),
            drawn: counts[k],
            x: th.clone(),
            validation: vec![false; th.len()],
            log_prior: th.iter().map(|t| space.log_prior(t)).collect(),
            theta_hat: th,
            resimulations: 0,
            out_of_support: 0,
        };
        store.push(rec, &space).unwrap();
    }
    let w = store.misr_log_weights(2).unwrap();
    let npdf = |t: f64, m: f64, s: f64| (-(t - m) * (t - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    for k in 0..2 {
        for (i, rec_w) in w[k].iter().enumerate() {
            let t = store.rounds()[k].theta_hat[i][0];
            let (p1, p2) = (npdf(t, 0.0, 1.0), npdf(t, 0.5, 0.7));
            let direct = counts[k] as f64 * p1 / (200.0 * p1 + 100.0 * p2);
            worst = worst.max((rec_w.exp() - direct).abs() / direct);
            let om = balance_heuristic_omegas(&[p1.ln(), p2.ln()], &counts);
            worst = worst.max((om.iter().sum::<f64>() - 1.0).abs());
            let own = [p1, p2][k];
            worst = worst.max((om[k] * p1 / own - direct).abs() / direct);
        }
    }
    let a_ok = worst <= 1e-12;

    // direct estimate of the kernel-weighted loss under the prior
    let mut rng = stream(2, Domain::Misc, 200, 0);
    let direct: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let t = z(&mut rng);
            toy_loss(t, t + z(&mut rng), &ks)
        })
        .collect();
    let l_tilde = mean(&direct);
    let direct_se = common::sd(&direct) / (direct.len() as f64).sqrt();

    let log_n = [200f64.ln(), 100f64.ln()];
    let reps = 500;
    let mut bh = Vec::with_capacity(reps);
    let mut eq = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = stream(3, Domain::Misc, 200, rep as u64);
        let (mut lb, mut le) = (0.0, 0.0);
        for k in 0..2 {
            for _ in 0..counts[k] {
                let t = sampler[k].sample(&mut rng);
                let x = t + z(&mut rng);
                let l = toy_loss(t, x, &ks);
                let lp = [npdf(t, 0.0, 1.0).ln(), npdf(t, 0.5, 0.7).ln()];
                let wk = balance_heuristic_log_weight(lp[0], &lp, &log_n, k).exp();
                lb += wk / counts[k] as f64 * l;
                le += (lp[0] - lp[k]).exp() / total * l;
            }
        }
        bh.push(lb);
        eq.push(le);
    }
    let bh200 = &bh[..200];
    let se = (common::sd(bh200).powi(2) / 200.0 + direct_se * direct_se).sqrt();
    let bias = mean(bh200) - l_tilde;
    let b_ok = bias.abs() <= 3.0 * se;

    let (vb, ve) = (common::sd(&bh).powi(2), common::sd(&eq).powi(2));
    let n = reps as f64;
    let mc = ((2.0 / (n - 1.0)) * (vb * vb + ve * ve)).sqrt();
    let slack = (1.0 / 100.0 - 1.0 / total) * l_tilde * l_tilde;
    let c_ok = vb <= ve + slack + 3.0 * mc;
    (
        a_ok && b_ok && c_ok,
        format!(
            "(a) max deviation {worst:.1e}; (b) bias {bias:.2e} vs 3se {:.2e}; (c) var_bh {vb:.3e} <= var_eq {ve:.3e} + {slack:.3e} + {:.3e}",
            3.0 * se,
            3.0 * mc
        ),
    )
}

fn ess_bisection() -> Outcome {
    let mut solved = 0;
    let mut flagged = 0;
    let mut bad = Vec::new();
    for inst in 0..100u64 {
        let mut rng = stream(inst, Domain::Misc, 300, 0);
        let n = 50 + (inst as usize * 7) % 200;
        let lb: Vec<f64> = (0..n).map(|_| 1.5 * z(&mut rng)).collect();
        let dist: Vec<f64> = (0..n).map(|_| 10.0 * rng.random::<f64>().powi(2)).collect();
        let ess_of = |t: f64| ess_log(&lb.iter().zip(&dist).map(|(b, m)| b - m / (2.0 * t * t)).collect::<Vec<_>>()).unwrap();
        let base = ess_log(&lb).unwrap();
        // a target between the small-tau limit (about 1) and the base ESS is reachable
        let target = 1.0 + rng.random::<f64>() * (base - 1.0);
        let sol = solve_tau_log(&lb, &dist, target).unwrap();
        if sol.status == TauStatus::Solved && (ess_of(sol.tau) - target).abs() <= 1e-3 * target {
            solved += 1;
        } else {
            bad.push(format!("instance {inst} missed"));
        }

        // a target above the base ESS may be unreachable; if flagged, a dense
        // scan must confirm that no tau reaches it
        let high = (1.5 * base).min(n as f64);
        let sol = solve_tau_log(&lb, &dist, high).unwrap();
        match sol.status {
            TauStatus::Solved => {
                if (ess_of(sol.tau) - high).abs() > 1e-3 * high {
                    bad.push(format!("instance {inst} high target missed"));
                }
            }
            _ => {
                flagged += 1;
                let reach = (0..4000).map(|i| ess_of((-14.0 + 28.0 * i as f64 / 3999.0).exp()));
                let top = reach.fold(f64::MIN, f64::max);
                if high <= top * (1.0 + 1e-3) || (sol.ess - high).abs() <= 1e-3 * high {
                    bad.push(format!("instance {inst} flagged but reachable"));
                }
            }
        }

        // monotone for equal base weights
        let mut prev = 0.0;
        for i in 0..200 {
            let t = (-5.0 + 10.0 * i as f64 / 199.0).exp();
            let e = ess_log(&dist.iter().map(|m| -m / (2.0 * t * t)).collect::<Vec<_>>()).unwrap();
            if e < prev * (1.0 - 1e-12) {
                bad.push(format!("instance {inst} not monotone"));
                break;
            }
            prev = e;
        }
    }
    // constant distances: only the base ESS is reachable
    let sol = solve_tau_log(&[0.0, 1.0, 2.0], &[3.0; 3], 2.9).unwrap();
    if sol.status != TauStatus::TargetTooHigh {
        bad.push("unreachable target not flagged".into());
    }
    let verdict = if bad.is_empty() { "no violations".to_string() } else { bad.join(", ") };
    (
        bad.is_empty(),
        format!("{solved}/100 reachable targets solved; {flagged}/100 high targets flagged unreachable; {verdict}"),
    )
}

fn pst_identities() -> Outcome {
    let t = BoxTransform::logit(&[0.0, 0.0, 0.0], &[10.0, 10.0, 1.0 / 3.0]).unwrap();
    let mut rng = stream(0, Domain::Misc, 400, 0);
    let (mut rt, mut jac): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let th: Vec<f64> = vec![10.0 * rng.random::<f64>(), 10.0 * rng.random::<f64>(), rng.random::<f64>() / 3.0];
        let h = t.to_unconstrained(&th).unwrap();
        let back = t.from_unconstrained(&h);
        rt = rt.max(th.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        jac = jac.max((t.log_abs_det_jacobian_forward(&th).unwrap() + t.log_abs_det_jacobian_inverse(&h)).abs());
    }
    let space = ParamSpace::new(PriorSpec::uniform_box(vec![0.0], vec![1.0]).unwrap(), true).unwrap();
    let at0 = space.log_prior(&[0.0]).exp();
    let hstep = 1e-3;
    let mass: f64 = (0..=80_000)
        .map(|i| {
            let u = -40.0 + i as f64 * hstep;
            let w = if i == 0 || i == 80_000 { 0.5 } else { 1.0 };
            w * space.log_prior(&[u]).exp()
        })
        .sum::<f64>()
        * hstep;
    let ok = rt <= 1e-12 && jac <= 1e-12 && (at0 - 0.25).abs() <= 1e-15 && (mass - 1.0).abs() <= 1e-6;
    (ok, format!("round trip {rt:.1e}, jacobian {jac:.1e}, density at 0 {at0}, mass {mass:.9}"))
}

fn conjugate_end_to_end() -> Outcome {
    let cfg = TrainConfig { rounds: 5, simulations: 500, ..TrainConfig::default() };
    let mut good = 0;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let mut s = Snpe::new(ModelSpec::gaussian_toy(1.0), cfg.clone(), seed).unwrap();
        s.run().unwrap();
        let mog = s.posterior_mog().unwrap();
        let w = mog.weights();
        let m: f64 = (0..w.len()).map(|c| w[c] * mog.mean(c)[0]).sum();
        let second: f64 = (0..w.len()).map(|c| w[c] * (mog.chol_factor(c)[0].powi(2) + mog.mean(c)[0].powi(2))).sum();
        let sd = (second - m * m).sqrt();
        let want_sd = 0.5f64.sqrt();
        if (m - 0.5).abs() <= 0.1 && (sd - want_sd).abs() <= 0.2 * want_sd {
            good += 1;
        }
        parts.push(format!("{m:.3}/{sd:.3}"));
    }
    (good >= 4, format!("{good}/5 seeds within tolerance (mean/sd: {})", parts.join(" ")))
}

struct Mg1Runs {
    full: TrainOutcome,
    base: TrainOutcome,
}

fn final_values(o: &TrainOutcome, metric: &str, round: usize) -> Vec<f64> {
    o.records.iter().filter(|r| r.metric == metric && r.round == round).map(|r| r.value).collect()
}

fn mg1_runs(dir: &std::path::Path) -> Mg1Runs {
    let model = ModelSpec::mg1();
    let reference = reference_posterior(&model, 10_000, DEFAULT_POPULATION, DESK_BUDGET, 12345).unwrap();
    let ref_path = dir.join("mg1-reference.csv");
    reference.save(&ref_path).unwrap();
    let run = |train: TrainConfig, label: &str| {
        let mut cfg = ExperimentConfig::new("mg1", TrainConfig { rounds: 10, simulations: 500, ..train });
        cfg.label = Some(label.into());
        cfg.seeds = (0..5).collect();
        cfg.metrics = vec![MetricKind::Lmd, MetricKind::C2st];
        cfg.reference = Some(ref_path.clone());
        cmd_train(&cfg, dir, false).unwrap()
    };
    Mg1Runs { full: run(TrainConfig::default(), "full"), base: run(TrainConfig::baseline(), "baseline") }
}

fn defensive_bound(runs: &Mg1Runs) -> Outcome {
    let max = runs
        .full
        .diagnostics
        .iter()
        .flat_map(|(_, d)| d.iter().map(|r| r.max_importance_ratio))
        .fold(0.0, f64::max);
    (max <= 5.0 + 1e-9, format!("max importance ratio {max:.6} over 5 seeds x 10 rounds"))
}

fn mg1_desk_scale(runs: &Mg1Runs) -> Outcome {
    let first = final_values(&runs.full, "lmd", 1);
    let last = final_values(&runs.full, "lmd", 10);
    let better = first.iter().zip(&last).filter(|(a, b)| b < a).count();
    let c = median(final_values(&runs.full, "c2st", 10));
    (
        better >= 4 && c <= 0.80,
        format!("LMD improved in {better}/5 seeds; median final C2ST {c:.3}"),
    )
}

fn ablation_direction(runs: &Mg1Runs) -> Outcome {
    let full = median(final_values(&runs.full, "c2st", 10));
    let base = median(final_values(&runs.base, "c2st", 10));
    (full <= base, format!("median final C2ST full {full:.3} vs baseline {base:.3}"))
}

fn gandk_normality() -> Outcome {
    let th = [0.0, 0.0, 0.0, 0.5f64.ln()];
    let mut rng = stream(0, Domain::Misc, 500, 0);
    let draws = gandk::draw(&th, 10_000, &mut rng).unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let ks = ks_statistic(draws, |t| std.cdf(t));
    let crit = ks_critical_01(10_000);
    (ks < crit, format!("KS statistic {ks:.4} vs critical {crit:.4}"))
}

fn metric_sanity() -> Outcome {
    let mut rng = stream(0, Domain::Misc, 600, 0);
    let pts: Vec<Vec<f64>> = (0..2000).map(|_| vec![z(&mut rng), z(&mut rng)]).collect();
    let c = c2st(&pts[..1000], &pts[1000..], 0).unwrap();

    // every ordered pair of A = B = {0, 1} at bandwidth 1
    let k = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0).exp();
    let s = [0.0, 1.0];
    let mut within = 0.0;
    let mut cross = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            if i != j {
                within += k(s[i], s[j]);
            }
            cross += k(s[i], s[j]);
        }
    }
    let oracle = within / 2.0 + within / 2.0 - 2.0 * cross / 4.0;
    let pair: Vec<Vec<f64>> = s.iter().map(|v| vec![*v]).collect();
    let got = mmd_squared_with_bandwidth(&pair, &pair, 1.0);
    let mmd_err = (got - oracle).abs();

    let mdn = Mdn::new(MdnArchitecture::with_capacity(2, 2, vec![6], 2)).unwrap();
    let p: Vec<f64> = mdn.init(&mut rng).into_iter().map(|v| v + 0.3 * z(&mut rng)).collect();
    let t = BoxTransform::logit(&[0.0, 1.0], &[4.0, 2.0]).unwrap();
    let theta = [1.5, 1.2];
    let h = [(1.5f64 / 2.5).ln(), (0.2f64 / 0.8).ln()];
    let jac = (4.0 / (1.5 * 2.5)) * (1.0 / (0.2 * 0.8));
    let direct = -(mdn.log_prob(&p, &[0.3, 0.3], &h).unwrap().exp() * jac).ln();
    let nlog_err = (nlog(&mdn, &p, &t, &[0.3, 0.3], &theta).unwrap() - direct).abs();
    (
        (c - 0.5).abs() <= 0.05 && mmd_err <= 1e-12 && nlog_err <= 1e-10,
        format!("C2ST null {c:.3}; MMD oracle error {mmd_err:.1e}; NLOG error {nlog_err:.1e}"),
    )
}

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::new("gaussian_toy", TrainConfig { rounds: 2, simulations: 100, ..TrainConfig::default() });
    cfg.seeds = vec![11, 12];
    cfg.metrics = vec![MetricKind::Lmd, MetricKind::Nlog];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = cmd_train(&cfg, a.path(), false).unwrap();
    let rb = cmd_train(&cfg, b.path(), false).unwrap();
    let (x, y) = (std::fs::read(ra.layout.metrics()).unwrap(), std::fs::read(rb.layout.metrics()).unwrap());
    (x == y, format!("{} bytes, identical: {}", x.len(), x == y))
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let want = |i: usize| only.as_ref().is_none_or(|s| s.contains(&i));
    let names = [
        "gradient oracle",
        "kernel variance scaling",
        "balance heuristic recycling",
        "defensive bound",
        "ESS bandwidth solver",
        "parameter space transform",
        "conjugate end-to-end",
        "M/G/1 desk scale",
        "ablation direction",
        "g-and-k normality",
        "metric sanity",
        "determinism",
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut mg1: Option<Mg1Runs> = None;
    let mut failed = 0;
    for (i, name) in names.iter().enumerate() {
        let id = i + 1;
        if !want(id) {
            continue;
        }
        let start = Instant::now();
        // criteria 4, 8 and 9 share one set of runs; the first of them is charged for it
        if matches!(id, 4 | 8 | 9) && mg1.is_none() {
            mg1 = Some(mg1_runs(dir.path()));
        }
        let (ok, detail) = match id {
            1 => gradient_oracle(),
            2 => variance_scaling(),
            3 => misr_recycling(),
            4 => defensive_bound(mg1.as_ref().unwrap()),
            5 => ess_bisection(),
            6 => pst_identities(),
            7 => conjugate_end_to_end(),
            8 => mg1_desk_scale(mg1.as_ref().unwrap()),
            9 => ablation_direction(mg1.as_ref().unwrap()),
            10 => gandk_normality(),
            11 => metric_sanity(),
            _ => determinism(),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
