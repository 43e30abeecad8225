//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use welfarium::cellsys::{Boundary, CellularSystem, WorldState};
use welfarium::inference::{boltzmann, expected_utility, infer, Counterfactuals, LikelihoodModel, StructureEvent};
use welfarium::oracle::{oracle_posterior, oracle_welfare};
use welfarium::structures::{enumerate_spaces, Space, SpaceFamily};
use welfarium::udsl::random::random_expr;
use welfarium::udsl::{eval, make_prior, parse, HypothesisWorld, PriorMode, UtilityExpr};
use welfarium::verify::{random_instance, Instance, InstanceBounds, BETA_GRID};
use welfarium::welfare::{compare_histories, event_terms, global_welfare, TruncationPolicy, Verdict, WelfareOptions};

const SUITE_SIZE: usize = 250;
const SUITE_SEED: u64 = 0x5eed_2024;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn suite() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let bounds = InstanceBounds::default();
    (0..SUITE_SIZE).map(|_| random_instance(&mut rng, &bounds)).collect()
}

/// Calls `f` with the counterfactual set of every event of every instance.
fn for_each_event(
    instances: &[Instance],
    mut f: impl FnMut(&Instance, &Counterfactuals) -> Result<(), String>,
) -> Result<usize, String> {
    let mut events = 0;
    for inst in instances {
        let spaces = enumerate_spaces(inst.history.system(), &inst.policy.space_family, &inst.policy.limits)
            .map_err(|e| e.to_string())?;
        for time in 0..=inst.history.horizon() {
            for space in &spaces {
                let cf = Counterfactuals::build(&inst.history, space, time, &inst.policy.limits)
                    .map_err(|e| e.to_string())?;
                f(inst, &cf)?;
                events += 1;
            }
        }
    }
    Ok(events)
}

fn normalization() -> Outcome {
    let start = Instant::now();
    let instances = suite();
    let mut worst: f64 = 0.0;
    let mut distributions = 0;
    let events = for_each_event(&instances, |inst, cf| {
        for h in inst.policy.hypotheses.iter() {
            let l = cf.likelihood(&h.expr, &inst.policy.model).map_err(|e| e.to_string())?;
            worst = worst.max((l.probabilities().iter().sum::<f64>() - 1.0).abs());
            distributions += 1;
        }
        let observed = StructureEvent::observed(&inst.history, cf.space(), cf.time()).map_err(|e| e.to_string())?;
        let table = infer(
            &inst.history,
            &observed,
            &inst.policy.hypotheses,
            &inst.policy.model,
            &inst.policy.limits,
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max((table.posteriors().iter().sum::<f64>() - 1.0).abs());
        Ok(())
    })?;
    let elapsed = start.elapsed();
    let detail = format!(
        "{SUITE_SIZE} instances, {events} events, {distributions} likelihoods, max |sum-1| = {worst:e}, {:.2}s",
        elapsed.as_secs_f64()
    );
    if worst <= 1e-12 && elapsed < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn beta_zero() -> Outcome {
    let mut instances = suite();
    for inst in &mut instances {
        inst.policy.model = LikelihoodModel::new(0.0).unwrap();
    }
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for_each_event(&instances, |inst, cf| {
        let ev = StructureEvent::observed(&inst.history, cf.space(), cf.time()).map_err(|e| e.to_string())?;
        let table = infer(
            &inst.history,
            &ev,
            &inst.policy.hypotheses,
            &inst.policy.model,
            &inst.policy.limits,
        )
        .map_err(|e| e.to_string())?;
        for r in &table.rows {
            worst = worst.max((r.posterior - r.prior).abs());
            rows += 1;
        }
        Ok(())
    })?;
    let detail = format!("{rows} rows, max |posterior-prior| = {worst:e}");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_equivalence() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_welfarium");
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/small.toml");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let status = Command::new(exe)
        .args(["verify", "-c"])
        .arg(&fixture)
        .arg("--out")
        .arg(out.path())
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let report: serde_json::Value = std::fs::read_to_string(out.path().join("verify.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    let r = &report["result"];
    let detail = format!(
        "exit {:?}, {} cases, {} posterior rows, max posterior diff {}, max welfare diff {}, {:.2}s",
        status.status.code(),
        r["cases"],
        r["posterior_rows_checked"],
        r["max_posterior_diff"],
        r["max_welfare_diff"],
        elapsed.as_secs_f64()
    );
    let ok = status.status.code() == Some(0)
        && r["max_posterior_diff"].as_f64().is_some_and(|d| d <= 1e-10)
        && r["max_welfare_diff"].as_f64().is_some_and(|d| d <= 1e-9)
        && elapsed < Duration::from_secs(60);
    if ok {
        Ok(detail)
    } else {
        Err(format!("{detail}; stderr: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn identity_world() -> CellularSystem {
    let table: BTreeMap<Vec<u8>, u8> = [(vec![0], 0), (vec![1], 1)].into_iter().collect();
    CellularSystem::table(1, 2, vec![vec![0]], table).unwrap()
}

fn worked_example() -> Outcome {
    // Reference values from an independent 30-digit brute-force computation.
    const POSTERIOR: [f64; 2] = [0.4061545150486906, 0.5938454849513094];
    const EXPECTED_UTILITY: f64 = 0.7969227424756547;
    const WELFARE: f64 = 1.5938454849513094;
    const TOL: f64 = 1e-6;

    let sys = identity_world();
    let h = sys.history(WorldState::parse("1").unwrap(), 1).unwrap();
    let set = make_prior(
        vec![parse("(const 0.5)").unwrap(), parse("(alive 0 1)").unwrap()],
        &PriorMode::Uniform,
    )
    .unwrap();
    let model = LikelihoodModel::new(1.0).unwrap();
    let policy = TruncationPolicy::new(1, SpaceFamily::AllUpToSize { k: 1 }, set.clone(), model);
    let ev = StructureEvent::observed(&h, &Space::single(0), 0).unwrap();
    let table = infer(&h, &ev, &set, &model, &policy.limits).map_err(|e| e.to_string())?;
    let q = table.posteriors();
    let eu = expected_utility(&table, &h).map_err(|e| e.to_string())?;
    let w = global_welfare(&h, &policy).map_err(|e| e.to_string())?.total;
    let oracle_q = oracle_posterior(&h, &Space::single(0), 0, &set, 1.0)
        .map_err(|e| e.to_string())?
        .posteriors();
    let oracle_w = oracle_welfare(&h, &policy).map_err(|e| e.to_string())?;

    let detail = format!(
        "posterior ({:.10}, {:.10}), expected utility {eu:.10}, welfare {w:.10}",
        q[0], q[1]
    );
    let ok = (q[0] - POSTERIOR[0]).abs() <= TOL
        && (q[1] - POSTERIOR[1]).abs() <= TOL
        && (eu - EXPECTED_UTILITY).abs() <= TOL
        && (w - WELFARE).abs() <= TOL
        && (oracle_q[0] - POSTERIOR[0]).abs() <= TOL
        && (oracle_w - WELFARE).abs() <= TOL;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn constants_tie() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED ^ 5);
    let mut pairs = 0;
    for inst in suite() {
        let n = rng.random_range(1..=4);
        let mut exprs: Vec<UtilityExpr> = Vec::new();
        while exprs.len() < n {
            let c = UtilityExpr::constant(rng.random_range(0..=20) as f64 / 20.0).unwrap();
            if !exprs.contains(&c) {
                exprs.push(c);
            }
        }
        let mut policy = inst.policy.clone();
        policy.hypotheses = make_prior(exprs, &PriorMode::Mdl).unwrap();
        let sys = inst.history.system();
        let other = WorldState::new((0..sys.cell_count()).map(|_| rng.random_range(0..2)).collect());
        let other = sys.history(other, policy.horizon).unwrap();
        for (a, b) in [(&inst.history, &other), (&other, &inst.history)] {
            let v = compare_histories(a, b, &policy, &WelfareOptions::default()).map_err(|e| e.to_string())?;
            if v.verdict != Verdict::Tie || v.difference != 0.0 {
                return Err(format!(
                    "{} vs {}: {:?} ({:e})",
                    a.initial(),
                    b.initial(),
                    v.verdict,
                    v.difference
                ));
            }
            pairs += 1;
        }
    }
    Ok(format!("{pairs} ordered pairs, all tie with difference exactly 0"))
}

fn monotonicity() -> Outcome {
    let instances = suite();
    let mut checked = 0;
    let mut worst_shift: f64 = 0.0;
    for_each_event(&instances, |inst, cf| {
        for h in inst.policy.hypotheses.iter() {
            let values = cf.values(&h.expr).map_err(|e| e.to_string())?;
            let best = (0..values.len()).fold(0, |b, k| if values[k] > values[b] { k } else { b });
            let mut previous = 0.0;
            for beta in BETA_GRID {
                let p = cf
                    .likelihood(&h.expr, &LikelihoodModel::new(beta).unwrap())
                    .map_err(|e| e.to_string())?;
                let p = p.probabilities()[best];
                if p < previous {
                    return Err(format!("`{}`: argmax probability fell to {p} at beta {beta}", h.expr));
                }
                previous = p;
                for shift in [-3.5, -1.0, 0.25, 7.0] {
                    let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
                    let a = boltzmann(&values, beta);
                    let b = boltzmann(&shifted, beta);
                    for (x, y) in a.iter().zip(&b) {
                        worst_shift = worst_shift.max((x - y).abs());
                    }
                }
            }
            checked += 1;
        }
        Ok(())
    })?;
    let detail = format!("{checked} (event, hypothesis) pairs over beta grid; max shift deviation {worst_shift:e}");
    if worst_shift <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn engine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(204);
    for _ in 0..100 {
        let width = rng.random_range(1..=32);
        let s = WorldState::new((0..width).map(|_| rng.random_range(0..2)).collect());
        for boundary in [Boundary::Toroidal, Boundary::FixedZero] {
            let identity = CellularSystem::elementary(204, width, boundary).unwrap();
            if identity.step(&s).unwrap() != s {
                return Err(format!("rule 204 moved {s}"));
            }
            let zero = CellularSystem::elementary(0, width, boundary).unwrap();
            if zero.step(&s).unwrap() != WorldState::zeros(width) {
                return Err(format!("rule 0 kept a live cell of {s}"));
            }
        }
    }
    let r110 = CellularSystem::elementary(110, 5, Boundary::Toroidal).unwrap();
    let next = r110.step(&WorldState::parse("00100").unwrap()).unwrap();
    if next.to_string() != "01100" {
        return Err(format!("rule 110 gave {next}"));
    }
    let life = CellularSystem::life_like(&[3], &[2, 3], 4, 4, Boundary::Toroidal).unwrap();
    let block = life.parse_state("0000/0110/0110/0000").unwrap();
    if life.step(&block).unwrap() != block {
        return Err("block is not still".into());
    }
    let life = CellularSystem::life_like(&[3], &[2, 3], 5, 5, Boundary::Toroidal).unwrap();
    let vertical = life.parse_state("00000/00100/00100/00100/00000").unwrap();
    let horizontal = life.parse_state("00000/00000/01110/00000/00000").unwrap();
    let one = life.step(&vertical).unwrap();
    let two = life.step(&one).unwrap();
    if one != horizontal || two != vertical {
        return Err(format!("blinker went {vertical} -> {one} -> {two}"));
    }
    Ok("rule 204 fixpoint and rule 0 on 100 random states; 00100 -> 01100; block still; blinker period 2".into())
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_welfarium");
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut files = 0;
    for (name, threads) in [("small.toml", ["1", "1"]), ("life.toml", ["1", "4"])] {
        let mut outputs = Vec::new();
        for t in threads {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let status = Command::new(exe)
                .args(["welfare", "--format", "json", "--threads", t, "-c"])
                .arg(fixtures.join(name))
                .arg("--out")
                .arg(dir.path())
                .output()
                .map_err(|e| e.to_string())?
                .status;
            if !status.success() {
                return Err(format!("{name}: exit {status}"));
            }
            outputs.push(std::fs::read(dir.path().join("welfare.json")).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{name}: welfare.json differs between runs"));
        }
        files += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED ^ 8);
    let mut worst: f64 = 0.0;
    for inst in suite() {
        let total = global_welfare(&inst.history, &inst.policy)
            .map_err(|e| e.to_string())?
            .total;
        // Shuffle the flattened (i, Spc, u) terms.
        let events = event_terms(&inst.history, &inst.policy, &WelfareOptions::default()).map_err(|e| e.to_string())?;
        let mut terms: Vec<f64> = events.iter().flat_map(|e| e.terms.iter().copied()).collect();
        terms.shuffle(&mut rng);
        worst = worst.max((terms.iter().sum::<f64>() - total).abs());
        // Re-declare the hypotheses in a shuffled order with the same priors.
        let mut pairs: Vec<(UtilityExpr, f64)> = inst
            .policy
            .hypotheses
            .iter()
            .map(|h| (h.expr.clone(), h.prior))
            .collect();
        pairs.shuffle(&mut rng);
        let (exprs, weights): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let mut permuted = inst.policy.clone();
        permuted.hypotheses = make_prior(exprs, &PriorMode::Explicit(weights)).map_err(|e| e.to_string())?;
        let other = global_welfare(&inst.history, &permuted)
            .map_err(|e| e.to_string())?
            .total;
        worst = worst.max((other - total).abs());
    }
    let detail =
        format!("{files} configs byte-identical across runs and thread counts; max permuted deviation {worst:e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cases = 2000;
    for n in 0..cases {
        let world = HypothesisWorld {
            cell_count: rng.random_range(1..=6),
            state_count: rng.random_range(2..=4),
            horizon: rng.random_range(0..=4),
        };
        let depth = rng.random_range(0..=5);
        let e = random_expr(&mut rng, world, depth);
        let text = e.to_string();
        match parse(&text) {
            Ok(back) if back == e => {}
            other => return Err(format!("case {n}: `{text}` -> {other:?}")),
        }
        let sys = CellularSystem::table(
            world.cell_count,
            world.state_count,
            (0..world.cell_count).map(|c| vec![c]).collect(),
            (0..world.state_count as u8)
                .map(|s| (vec![s], (s + 1) % world.state_count as u8))
                .collect(),
        )
        .unwrap();
        let init = WorldState::new(
            (0..world.cell_count)
                .map(|_| rng.random_range(0..world.state_count as u8))
                .collect(),
        );
        let h = sys.history(init, world.horizon).unwrap();
        let v = eval(&e, &h).map_err(|err| format!("case {n}: `{text}`: {err}"))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("case {n}: `{text}` evaluated to {v}"));
        }
    }
    Ok(format!("{cases} random expressions round-trip; all values in [0, 1]"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("likelihood and posterior normalization", normalization),
        ("beta = 0 collapses posterior to prior", beta_zero),
        ("verify agrees with the brute-force oracle", oracle_equivalence),
        ("worked two-hypothesis instance", worked_example),
        ("all-constant hypotheses always tie", constants_tie),
        ("Boltzmann monotonicity and shift invariance", monotonicity),
        ("cellular engine correctness", engine),
        ("determinism and ordering", determinism),
        ("DSL round-trip and evaluation range", round_trip),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {detail}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
