//! Acceptance suite: one PASS/FAIL line per criterion.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use feedsim_core::metrics::error_rate_exact;
use feedsim_core::model::sentiment_confusion;
use feedsim_core::payoff::best_response_c;
use feedsim_core::{
    expected_payoff_exact, expected_payoff_mc, find_d_opt, find_d_opt_from_oracle_stakes,
    majority_vote, reference_config, settle_round, verify_nash, verify_nash_with,
    write_annotations, ClassLabel, ClassPrior, DOptSolution, Error, MechanismParams, Method,
    NashEvaluator, PayoffQuery, SolverSettings, Strategy, SystemConfig, UserProfile, VoteProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{compositions, corpus, feedsim, random_config};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn reference_solution() -> &'static (DOptSolution, Duration) {
    static SOLUTION: OnceLock<(DOptSolution, Duration)> = OnceLock::new();
    SOLUTION.get_or_init(|| {
        let start = Instant::now();
        let sol = find_d_opt(&reference_config(), &SolverSettings::default())
            .expect("reference config has an equilibrium exponent");
        (sol, start.elapsed())
    })
}

fn best_response_reproduction() -> Check {
    let cfg = reference_config();
    let start = Instant::now();
    let at_one = best_response_c(&cfg, 1, 1.0, Method::Exact).map_err(|e| e.to_string())?;
    let (sol, solve_time) = reference_solution();
    let at_opt = best_response_c(&cfg, 1, sol.d_opt, Method::Exact).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed() + *solve_time;
    ensure(at_one == 8, || format!("best response at d=1 is {at_one}, want 8"))?;
    ensure(at_opt == 1, || format!("best response at d_opt is {at_opt}, want 1"))?;
    ensure(elapsed.as_secs() <= 1800, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "c*(d=1) = {at_one}, c*(d_opt={}) = {at_opt}, {:.1}s",
        sol.d_opt,
        elapsed.as_secs_f64()
    ))
}

fn error_rate_monotone() -> Check {
    let cfg = reference_config();
    let rates = (1..=8)
        .map(|c| error_rate_exact(&cfg, &cfg.mirroring_strategies(1, c)?))
        .collect::<Result<Vec<f64>, Error>>()
        .map_err(|e| e.to_string())?;
    for (i, w) in rates.windows(2).enumerate() {
        ensure(w[1] >= w[0] - 1e-12, || {
            format!("decrease from c={} to c={}: {rates:?}", i + 1, i + 2)
        })?;
    }
    ensure(rates[1..].iter().all(|&r| r > rates[0]), || {
        format!("c=1 not the strict minimum: {rates:?}")
    })?;
    Ok(format!("{:.6} at c=1 .. {:.6} at c=8", rates[0], rates[7]))
}

fn nash_minimality() -> Check {
    let settings = SolverSettings::default();
    let (sol, _) = reference_solution();
    let cfg = reference_config();
    let at = verify_nash(&cfg, sol.d_opt).map_err(|e| e.to_string())?;
    let below_d = settings.grid_point(sol.grid_index - 1);
    ensure((sol.d_opt - settings.epsilon - below_d).abs() < 1e-12, || {
        format!("grid point below d_opt is {below_d}")
    })?;
    let below = verify_nash(&cfg, below_d).map_err(|e| e.to_string())?;
    ensure(at.satisfied, || format!("not satisfied at d_opt {}", sol.d_opt))?;
    ensure(!below.satisfied, || format!("already satisfied at {below_d}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut found = 0;
    for _ in 0..2000 {
        if found == 6 {
            break;
        }
        let cfg = random_config(&mut rng, 4, 3, 5);
        let Ok(sol) = find_d_opt(&cfg, &settings) else {
            continue;
        };
        if sol.grid_index == 0 {
            continue;
        }
        let at = verify_nash(&cfg, sol.d_opt).map_err(|e| e.to_string())?;
        let below_d = settings.grid_point(sol.grid_index - 1);
        let below = verify_nash_with(&cfg, below_d, &settings).map_err(|e| e.to_string())?;
        ensure(at.satisfied && !below.satisfied, || {
            format!("stakes {:?}: d_opt {} not minimal", cfg.stakes(), sol.d_opt)
        })?;
        found += 1;
    }
    ensure(found >= 5, || format!("only {found} random instances with d_opt > 1"))?;
    Ok(format!(
        "reference d_opt = {} (violated at {below_d}); {found} random instances minimal",
        sol.d_opt
    ))
}

fn allocation_dominance() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut comparisons = 0usize;
    for s in 1..=8u32 {
        for _ in 0..3 {
            let base = random_config(&mut rng, 4, 3, 5);
            let mut users: Vec<UserProfile> = base.users().to_vec();
            users[0].stake = s;
            let cfg = SystemConfig::new(
                ClassPrior::uniform(base.num_classes()),
                base.confusion().clone(),
                users,
                1.0,
            )
            .map_err(|e| e.to_string())?;
            for c in 1..=s {
                for d in [1.0, 1.5, 2.0] {
                    let best = expected_payoff_exact(
                        &PayoffQuery::concentrated(&cfg, 1, c, d).map_err(|e| e.to_string())?,
                    )
                    .map_err(|e| e.to_string())?
                    .value;
                    for alloc in compositions(s, c) {
                        let q = PayoffQuery {
                            config: &cfg,
                            focal_user: 1,
                            focal_strategy: Strategy::new(alloc.clone()).unwrap(),
                            other_strategies: None,
                            d,
                        };
                        let v = expected_payoff_exact(&q).map_err(|e| e.to_string())?.value;
                        ensure(v <= best + 1e-12, || {
                            format!("{alloc:?} beats concentrated at d={d}: {v} > {best}")
                        })?;
                        comparisons += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed.as_secs() <= 300, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{comparisons} allocations compared, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn entry_point_equality() -> Check {
    let settings = SolverSettings::default();
    let (sol, _) = reference_solution();
    let cfg = reference_config();
    let by_oracle = find_d_opt_from_oracle_stakes(&cfg.stakes(), cfg.confusion(), &settings)
        .map_err(|e| e.to_string())?;
    ensure(sol.d_opt.to_bits() == by_oracle.d_opt.to_bits(), || {
        format!("{} vs {}", sol.d_opt, by_oracle.d_opt)
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut agreed = 0;
    while agreed < 5 {
        let cfg = random_config(&mut rng, 4, 3, 5);
        let a = find_d_opt(&cfg, &settings);
        let b = find_d_opt_from_oracle_stakes(&cfg.stakes(), cfg.confusion(), &settings);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                ensure(a.d_opt.to_bits() == b.d_opt.to_bits(), || {
                    format!("stakes {:?}: {} vs {}", cfg.stakes(), a.d_opt, b.d_opt)
                })?;
                agreed += 1;
            }
            (Err(Error::NoEquilibrium { .. }), Err(Error::NoEquilibrium { .. })) => {}
            (a, b) => return Err(format!("entry points disagree: {a:?} vs {b:?}")),
        }
    }
    Ok(format!("reference d_opt {} on both paths; {agreed} random instances agree", sol.d_opt))
}

fn random_composition(rng: &mut ChaCha8Rng, stake: u32) -> Vec<u32> {
    let c = rng.gen_range(1..=stake);
    let mut cuts: Vec<u32> = rand::seq::index::sample(rng, (stake - 1) as usize, (c - 1) as usize)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    cuts.sort_unstable();
    cuts.push(stake);
    let mut prev = 0;
    cuts.into_iter()
        .map(|cut| {
            let part = cut - prev;
            prev = cut;
            part
        })
        .collect()
}

fn budget_balance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for round in 0..100_000 {
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(2..=5);
        let strategies: Vec<Strategy> = (0..n)
            .map(|_| {
                let stake = rng.gen_range(1..=10);
                Strategy::new(random_composition(&mut rng, stake)).unwrap()
            })
            .collect();
        let reports: Vec<ClassLabel> = (0..n)
            .map(|_| ClassLabel::new(rng.gen_range(1..=k), k).unwrap())
            .collect();
        let profile = VoteProfile::new(
            reports.clone(),
            strategies.iter().map(Strategy::oracle_count).collect(),
        )
        .map_err(|e| e.to_string())?;
        let decided = majority_vote(&profile, k, Some(&mut rng))
            .map_err(|e| e.to_string())?
            .sampled_output
            .expect("sampling requested");
        let r = rng.gen_range(0.1..10.0);
        let params = MechanismParams::new(rng.gen_range(1.0..5.0), r).unwrap();
        let out = settle_round(&strategies, &reports, decided, &params).map_err(|e| e.to_string())?;
        let gap = (out.per_user_payoffs.iter().sum::<f64>() - r).abs();
        worst = worst.max(gap);
        ensure(gap <= 1e-12, || format!("round {round}: sum off by {gap}"))?;
    }
    Ok(format!("100000 rounds, max |sum - R| = {worst:e}"))
}

fn exact_mc_agreement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let instances = 24;
    let (mut payoff_ok, mut error_ok) = (0, 0);
    for i in 0..instances {
        let cfg = random_config(&mut rng, 4, 3, 5);
        let focal = rng.gen_range(1..=cfg.num_users());
        let stake = cfg.user(focal).unwrap().stake;
        let c = rng.gen_range(1..=stake);
        let d = rng.gen_range(1.0..3.0);
        let q = PayoffQuery::concentrated(&cfg, focal, c, d).map_err(|e| e.to_string())?;
        let exact = expected_payoff_exact(&q).map_err(|e| e.to_string())?.value;
        let mc = expected_payoff_mc(&q, 1_000_000, 1000 + i).map_err(|e| e.to_string())?;
        if (mc.value - exact).abs() <= 3.0 * mc.std_error + 1e-12 {
            payoff_ok += 1;
        }
        let strategies = q.strategies().map_err(|e| e.to_string())?;
        let err = error_rate_exact(&cfg, &strategies).map_err(|e| e.to_string())?;
        let (m, se) = feedsim_core::error_rate_mc(&cfg, &strategies, 1_000_000, 2000 + i)
            .map_err(|e| e.to_string())?;
        if (m - err).abs() <= 3.0 * se + 1e-12 {
            error_ok += 1;
        }
    }
    let need = (0.95 * instances as f64).ceil() as usize;
    ensure(payoff_ok >= need && error_ok >= need, || {
        format!("payoff {payoff_ok}/{instances}, error {error_ok}/{instances} within 3 SE")
    })?;
    Ok(format!(
        "payoff {payoff_ok}/{instances}, error rate {error_ok}/{instances} within 3 SE"
    ))
}

fn ingest_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let truth = sentiment_confusion();
    let records = corpus(&truth, 5000, 20, 25, 8);
    let csv_path = dir.path().join("records.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| e.to_string())?;
    write_annotations(&records, file).map_err(|e| e.to_string())?;
    let out = dir.path().join("cm.json");
    let run = feedsim(&[
        "estimate-cm",
        csv_path.to_str().unwrap(),
        "--k",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    ensure(run.status.success(), || {
        String::from_utf8_lossy(&run.stderr).into_owned()
    })?;
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let est: Vec<Vec<f64>> = serde_json::from_value(doc["confusion"].clone()).unwrap();
    let linf = est
        .iter()
        .flatten()
        .zip(truth.rows().iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let dropped = &doc["ingest_report"]["dropped_annotators"];
    ensure(linf <= 0.01, || format!("L_inf {linf}"))?;
    ensure(*dropped == serde_json::json!(["drifter"]), || {
        format!("dropped {dropped}")
    })?;
    Ok(format!(
        "{} records, L_inf = {linf:.5}, dropped {dropped}",
        records.len()
    ))
}

fn sweep_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = support::write(dir.path(), "reference.json", &support::reference_json());
    let run = |threads: &str, method: &str, name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let mut args = vec![
            "--threads", threads, "sweep", cfg.to_str().unwrap(), "--c-range", "1..8",
            "--d-list", "1,1.5,2.28", "--method", method, "--seed", "17", "--out",
        ];
        args.push(out.to_str().unwrap());
        if method == "mc" {
            args.extend(["--samples", "20000"]);
        }
        let r = feedsim(&args);
        ensure(r.status.success(), || String::from_utf8_lossy(&r.stderr).into_owned())?;
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    for method in ["mc", "exact"] {
        let a = run("1", method, &format!("{method}-a.csv"))?;
        let b = run("1", method, &format!("{method}-b.csv"))?;
        let c = run("4", method, &format!("{method}-c.csv"))?;
        ensure(a == b, || format!("{method}: two 1-thread runs differ"))?;
        ensure(a == c, || format!("{method}: 1 vs 4 threads differ"))?;
        ensure(a.iter().filter(|&&x| x == b'\n').count() == 25, || {
            format!("{method}: unexpected row count")
        })?;
    }
    Ok("mc and exact sweeps byte-identical across runs and 1 vs 4 threads".into())
}

fn grid_audit_note() -> String {
    let settings = SolverSettings::default();
    let cfg = reference_config();
    let evaluator = NashEvaluator::new(&cfg, &settings).expect("evaluator builds");
    let audit = evaluator.audit(&settings, settings.d_max).expect("audit runs");
    match audit.reversals.first() {
        None => "no reversals on the grid through d_max".into(),
        Some(first) => {
            let worst = evaluator.certificate(*first);
            let v = worst.tightest_violation().unwrap();
            format!(
                "condition fails again from d = {first} (user {} on {} oracles); {} of {} grid points after d_opt fail",
                v.n,
                v.c,
                audit.reversals.len(),
                audit.points.iter().filter(|(d, _)| *d >= reference_solution().0.d_opt).count()
            )
        }
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("best response argmax at d=1 and d_opt", best_response_reproduction),
        ("error rate non-decreasing in c, minimal at c=1", error_rate_monotone),
        ("d_opt satisfied, d_opt - eps violated", nash_minimality),
        ("concentrated allocation dominates", allocation_dominance),
        ("solver entry points agree bit-for-bit", entry_point_equality),
        ("reward rounds sum to R", budget_balance),
        ("Monte Carlo within 3 SE of exact", exact_mc_agreement),
        ("confusion matrix round trip", ingest_round_trip),
        ("sweep CSV determinism", sweep_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {}. {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("INFO  grid audit on the reference config: {}", grid_audit_note());
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
