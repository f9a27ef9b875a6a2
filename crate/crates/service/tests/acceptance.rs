//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails or runs over its time budget.

mod common;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use envforge_core::augment::{self, AugmentSpec};
use envforge_core::episode::{strip_spans, EnvId, Episode, EpisodeConfig, Span, StepRecord, Trajectory};
use envforge_core::grpo::{self, DEFAULT_STD_FLOOR};
use envforge_core::metrics::{self, ResultMatrix, ResultRow};
use envforge_core::rollout::{self, PolicyKind, PolicySpec, SuiteSpec};
use envforge_core::sokoban::{Dir, Pos, SokobanState};
use envforge_core::world::World;
use num_rational::BigRational;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        check($cond, || format!($($msg)+))?
    };
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 9] = [
        ("augmentation formula exactness", Duration::from_secs(1), augmentation_counts),
        ("observation-only guarantee", Duration::from_secs(30), observation_only),
        ("strip-recovery", Duration::from_secs(30), strip_recovery),
        ("sokoban mechanics", Duration::from_secs(120), sokoban_mechanics),
        ("rendering golden", Duration::from_secs(1), rendering_golden),
        ("metrics reproduction", Duration::from_secs(1), metrics_reproduction),
        ("trajectory metrics and determinism", Duration::from_secs(60), substitute_suite),
        ("grpo properties", Duration::from_secs(30), grpo_properties),
        ("protocol goldens", Duration::from_secs(60), protocol_goldens),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|()| {
            if elapsed <= budget {
                Ok(())
            } else {
                Err(format!("took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(()) => println!("PASS {name} ({elapsed:.2?})"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn augmentation_counts() -> Result<(), String> {
    let got = [
        augment::alf_sentence_count(120.0),
        augment::alf_sentence_count(360.0),
        augment::web_result_count(100.0, 0.5),
        augment::sokoban_line_count(50.0),
        augment::sokoban_line_count(150.0),
    ];
    ensure!(got == [10, 30, 5, 5, 15], "counts {got:?}");
    Ok(())
}

fn state_hash(world: &World) -> u64 {
    let mut h = DefaultHasher::new();
    world.state_json().hash(&mut h);
    h.finish()
}

/// (reward, done, state hash) after each of a fixed random action sequence.
fn sokoban_stream(seed: u64, actions: &[&str], augment: Option<AugmentSpec>) -> Vec<(u64, bool, u64)> {
    let cfg = EpisodeConfig::for_env(EnvId::Sokoban);
    let world = World::generate(EnvId::Sokoban, seed, &cfg).unwrap();
    let mut ep = Episode::start(world, seed, cfg, augment).unwrap();
    let mut out = Vec::new();
    for a in actions {
        if ep.is_finished() {
            break;
        }
        let rec = ep.apply(&rollout::format_response(a, Some("t"))).unwrap().clone();
        out.push((rec.reward.to_bits(), rec.done, state_hash(ep.sim())));
    }
    out
}

fn observation_only() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b5);
    for seed in 0..1000u64 {
        let actions: Vec<&str> = (0..15).map(|_| Dir::ALL.choose(&mut rng).unwrap().as_str()).collect();
        let plain = sokoban_stream(seed, &actions, None);
        ensure!(!plain.is_empty(), "seed {seed}: empty episode");
        for eps in [10.0, 80.0, 300.0] {
            let aug = sokoban_stream(seed, &actions, Some(AugmentSpec::new(eps, 1.0, seed + 1)));
            ensure!(aug == plain, "seed {seed}, epsilon {eps}: streams differ");
        }
    }
    Ok(())
}

/// Plays random admissible actions on a plain and an augmented copy and
/// checks every augmented observation against the plain one.
fn strip_recovery() -> Result<(), String> {
    let mut checked: BTreeMap<EnvId, usize> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x57);
    let target = 1000;
    let mut seed = 0u64;
    while checked.values().sum::<usize>() < target {
        let env = EnvId::ALL[seed as usize % 3];
        let eps = [40.0, 100.0, 120.0, 300.0][seed as usize / 3 % 4];
        let cfg = EpisodeConfig { thinking_required: false, ..EpisodeConfig::for_env(env) };
        let world = World::generate(env, seed, &cfg).unwrap();
        let spec = AugmentSpec::new(eps, 1.0, seed ^ 0xa5);
        let mut aug = Episode::start(world.clone(), seed, cfg, Some(spec)).unwrap();
        let mut plain = Episode::start(world, seed, cfg, None).unwrap();
        for _ in 0..6 {
            let (a, p) = (aug.observation(), plain.observation());
            if !a.injected_spans.is_empty() {
                ensure!(strip_spans(&a.text, &a.injected_spans) == p.text, "{env} seed {seed}: strip mismatch");
                *checked.entry(env).or_default() += 1;
            }
            if plain.is_finished() {
                break;
            }
            let action = p.admissible_actions.choose(&mut rng).cloned().unwrap_or_default();
            let raw = format!("<action>{action}</action>");
            aug.apply(&raw).unwrap();
            plain.apply(&raw).unwrap();
        }
        seed += 1;
    }
    ensure!(checked.len() == 3, "domains covered: {checked:?}");
    Ok(())
}

fn border(h: i32, w: i32) -> BTreeSet<Pos> {
    (0..h)
        .flat_map(|r| (0..w).map(move |c| Pos::new(r, c)))
        .filter(|p| p.row == 0 || p.col == 0 || p.row == h - 1 || p.col == w - 1)
        .collect()
}

fn sokoban_mechanics() -> Result<(), String> {
    let s = SokobanState::new(6, 7, border(6, 7), Pos::new(2, 3), Pos::new(2, 4), Pos::new(1, 1)).unwrap();
    let m = s.apply_move(Dir::Right);
    ensure!(m.moved && m.pushed, "push example did not push");
    ensure!(
        m.state.player == Pos::new(2, 4) && m.state.box_pos == Pos::new(2, 5),
        "push example landed at {:?}/{:?}",
        m.state.player,
        m.state.box_pos
    );

    let cfg = EpisodeConfig::for_env(EnvId::Sokoban);
    let spec = SuiteSpec {
        env: EnvId::Sokoban,
        episodes: 1000,
        suite_seed: 6,
        config: cfg,
        augment: None,
        policy: PolicySpec::new(PolicyKind::SokobanBfs),
    };
    for t in rollout::run_suite(&spec).map_err(|e| e.to_string())?.trajectories {
        let World::Sokoban(env) = World::generate(EnvId::Sokoban, t.seed, &cfg).unwrap() else { unreachable!() };
        ensure!((env.state.height, env.state.width) == (6, 6), "seed {}: not 6x6", t.seed);
        let plan = env.state.solve_bfs().ok_or(format!("seed {}: unsolvable instance", t.seed))?;
        ensure!(
            t.success && t.steps.len() == plan.len(),
            "seed {}: {} steps for a {}-move plan",
            t.seed,
            t.steps.len(),
            plan.len()
        );
    }

    // every valid 5x5 state: interior walls, distinct player and box, goal on a free cell
    let interior: Vec<Pos> = (1..4).flat_map(|r| (1..4).map(move |c| Pos::new(r, c))).collect();
    let mut deadlocked = 0;
    for mask in 0u32..1 << interior.len() {
        let mut walls = border(5, 5);
        walls.extend(interior.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, p)| *p));
        let free: Vec<Pos> = interior.iter().copied().filter(|p| !walls.contains(p)).collect();
        for &player in &free {
            for &b in free.iter().filter(|&&b| b != player) {
                for &goal in &free {
                    let s = SokobanState::new(5, 5, walls.clone(), player, b, goal).unwrap();
                    if s.is_corner_deadlocked() {
                        deadlocked += 1;
                        ensure!(s.solve_bfs().is_none(), "deadlocked but solvable: {}", s.render());
                    }
                }
            }
        }
    }
    ensure!(deadlocked > 0, "no deadlocked states enumerated");
    Ok(())
}

const STEP_28: &str = "Wall at (0, 0) Wall at (0, 1) Wall at (0, 2) Wall at (0, 3) Wall at (0, 4) Wall at (0, 5) \
Wall at (1, 0) Wall at (1, 5) Wall at (2, 0) Goal at (2, 1) Wall at (2, 5) Wall at (3, 0) Box at (3, 3) \
Wall at (3, 5) Wall at (4, 0) Wall at (4, 1) Wall at (4, 2) Player at (4, 3) Wall at (4, 4) Wall at (4, 5) \
Wall at (5, 0) Wall at (5, 1) Wall at (5, 2) Wall at (5, 3) Wall at (5, 4) Wall at (5, 5)";

fn rendering_golden() -> Result<(), String> {
    let mut walls = border(6, 6);
    walls.extend([Pos::new(4, 1), Pos::new(4, 2), Pos::new(4, 4)]);
    let s = SokobanState::new(6, 6, walls, Pos::new(4, 3), Pos::new(3, 3), Pos::new(2, 1)).unwrap();
    let got = s.render();
    ensure!(got == STEP_28, "render differs:\n{got}");
    Ok(())
}

fn rates(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn metrics_reproduction() -> Result<(), String> {
    let ood = [
        (
            &[("WebShop", 30.5), ("Sokoban", 9.8), ("SciWorld", 10.0)],
            &[("WebShop", 30.3), ("Sokoban", 11.0), ("SciWorld", 12.5)],
            7.0,
        ),
        (
            &[("ALFWorld", 17.0), ("Sokoban", 9.0), ("SciWorld", 13.8)],
            &[("ALFWorld", 25.8), ("Sokoban", 11.8), ("SciWorld", 15.5)],
            33.4,
        ),
        (
            &[("ALFWorld", 20.0), ("WebShop", 34.0), ("SciWorld", 13.0)],
            &[("ALFWorld", 20.8), ("WebShop", 37.0), ("SciWorld", 13.0)],
            5.7,
        ),
    ];
    for (base, aug, want) in ood {
        let got = metrics::ood_change(&rates(base), &rates(aug)).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() <= 0.05, "ood_change {got} vs {want}");
    }
    for (after, before, want) in [(15.0, 34.4, -56.4), (14.0, 12.5, 12.0), (17.0, 21.9, -22.4), (9.0, 14.1, -36.2)] {
        let got = metrics::rel_change(after, before).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() <= 0.05, "rel_change({after}, {before}) = {got}, want {want}");
    }

    let row =
        |train: &str, evals: &[(&str, f64)]| ResultRow { train: train.into(), evals: rates(evals), id_rate: None };
    let matrix = ResultMatrix {
        rows: vec![
            row("ALFWorld", &[("WebShop", 30.5), ("Sokoban", 9.8), ("SciWorld", 10.0)]),
            row("WebShop", &[("ALFWorld", 17.0), ("Sokoban", 9.0), ("SciWorld", 13.8)]),
            row("Sokoban", &[("ALFWorld", 20.0), ("WebShop", 34.0), ("SciWorld", 13.0)]),
            row("SciWorld", &[("ALFWorld", 19.8), ("WebShop", 35.8), ("Sokoban", 12.0)]),
        ],
    };
    let r = metrics::ood_ranking(&matrix, 0.5).map_err(|e| e.to_string())?;
    let scores: BTreeMap<&str, u32> = r.scores.iter().map(|(k, v)| (k.as_str(), v.score)).collect();
    ensure!(
        scores == BTreeMap::from([("SciWorld", 3), ("Sokoban", 5), ("WebShop", 6), ("ALFWorld", 8)]),
        "scores {scores:?}"
    );
    let ranks: [(&str, [(&str, u32); 3]); 4] = [
        ("ALFWorld", [("WebShop", 3), ("Sokoban", 2), ("SciWorld", 3)]),
        ("WebShop", [("ALFWorld", 2), ("Sokoban", 3), ("SciWorld", 1)]),
        ("Sokoban", [("ALFWorld", 1), ("WebShop", 2), ("SciWorld", 2)]),
        ("SciWorld", [("ALFWorld", 1), ("WebShop", 1), ("Sokoban", 1)]),
    ];
    for (train, want) in ranks {
        let want: BTreeMap<String, u32> = want.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        ensure!(r.scores[train].per_eval_ranks == want, "{train} ranks {:?}", r.scores[train].per_eval_ranks);
    }
    // 20.0 and 19.8 share first place in the ALFWorld column
    let alf: Vec<(&str, u32)> = r.columns["ALFWorld"].iter().map(|e| (e.train.as_str(), e.rank)).collect();
    ensure!(alf == [("Sokoban", 1), ("SciWorld", 1), ("WebShop", 2)], "ALFWorld column {alf:?}");
    Ok(())
}

fn record(t: u32, obs: &str, spans: Vec<Span>) -> StepRecord {
    StepRecord {
        t,
        obs: obs.into(),
        action_raw: String::new(),
        action: None,
        invalid: false,
        reward: 0.0,
        done: false,
        truncated: false,
        injected_spans: spans,
    }
}

fn synthetic(lengths: &[(usize, bool)], env: EnvId) -> Vec<Trajectory> {
    lengths
        .iter()
        .map(|&(n, success)| Trajectory {
            env,
            seed: 0,
            config: EpisodeConfig::for_env(env),
            augment: None,
            success,
            total_reward: if success { 10.0 } else { 0.0 },
            steps: (1..=n as u32).map(|t| record(t, &"o".repeat(t as usize), vec![])).collect(),
        })
        .collect()
}

fn substitute_suite() -> Result<(), String> {
    // failed episodes are charged the full budget
    let logs = synthetic(&[(10, true), (20, true), (7, false)], EnvId::House);
    let got = metrics::avg_traj_length(&logs, 50).map_err(|e| e.to_string())?;
    ensure!(got == 80.0 / 3.0, "avg_traj_length {got}");
    let logs = synthetic(&[(3, true), (15, false), (1, false), (4, true)], EnvId::Sokoban);
    let got = metrics::avg_traj_length(&logs, 15).map_err(|e| e.to_string())?;
    ensure!(got == (3.0 + 15.0 + 15.0 + 4.0) / 4.0, "avg_traj_length {got}");

    // mean over every observation, augmentation bytes excluded
    let logs = synthetic(&[(2, true), (3, false)], EnvId::Shop);
    let got = metrics::avg_char_count(&logs).map_err(|e| e.to_string())?;
    ensure!(got == (1.0 + 2.0 + 1.0 + 2.0 + 3.0) / 5.0, "avg_char_count {got}");
    let mut padded = synthetic(&[(1, true)], EnvId::Shop);
    padded[0].steps[0] = record(1, "abcdPAD", vec![Span::new(4, 7)]);
    let got = metrics::avg_char_count(&padded).map_err(|e| e.to_string())?;
    ensure!(got == 4.0, "augmented avg_char_count {got}");

    let runs = [
        (EnvId::Sokoban, PolicyKind::SokobanRandom),
        (EnvId::Sokoban, PolicyKind::SokobanBfs),
        (EnvId::House, PolicyKind::UniformRandom),
        (EnvId::House, PolicyKind::HouseGreedy),
        (EnvId::Shop, PolicyKind::UniformRandom),
        (EnvId::Shop, PolicyKind::ShopGreedy),
    ];
    for (env, policy) in runs {
        for augment in [None, Some(AugmentSpec::new(120.0, 0.5, 9))] {
            let spec = SuiteSpec {
                env,
                episodes: 32,
                suite_seed: 77,
                config: EpisodeConfig::for_env(env),
                augment,
                policy: PolicySpec::new(policy),
            };
            let bytes: Vec<Vec<u8>> = (0..3)
                .map(|_| {
                    let mut buf = Vec::new();
                    rollout::write_jsonl(&mut buf, &rollout::run_suite(&spec).unwrap().trajectories).unwrap();
                    buf
                })
                .collect();
            ensure!(bytes[0] == bytes[1] && bytes[1] == bytes[2], "{env}/{}: runs differ", policy.as_str());
        }
    }
    Ok(())
}

fn exact_sum_is_zero(xs: &[f64]) -> bool {
    xs.iter().map(|&x| BigRational::from_float(x).unwrap()).fold(BigRational::zero(), |a, b| a + b).is_zero()
}

fn grpo_properties() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6790);
    let group = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let n = *[2usize, 4, 8].choose(rng).unwrap();
        match rng.gen_range(0..3) {
            0 => (0..n).map(|_| if rng.gen_bool(0.4) { 10.0 } else { 0.0 }).collect(),
            1 => (0..n).map(|_| *[10.0, 0.0, -0.1, -0.3, 9.8].choose(rng).unwrap()).collect(),
            _ => (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect(),
        }
    };
    let pop_std = |a: &[f64]| {
        let m = a.iter().sum::<f64>() / a.len() as f64;
        (a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / a.len() as f64).sqrt()
    };
    let mut normalized = 0;
    while normalized < 10_000 {
        let r = group(&mut rng);
        let a = grpo::group_advantages(&r, DEFAULT_STD_FLOOR).map_err(|e| e.to_string())?;
        if pop_std(&r) < DEFAULT_STD_FLOOR {
            ensure!(a.iter().all(|x| *x == 0.0), "degenerate group {r:?} gave {a:?}");
            continue;
        }
        normalized += 1;
        ensure!(exact_sum_is_zero(&a), "mean not exactly zero for {r:?}: {a:?}");
        ensure!((pop_std(&a) - 1.0).abs() <= 1e-9, "std {} for {r:?}", pop_std(&a));
    }

    for _ in 0..1000 {
        let r: Vec<f64> = (0..*[2usize, 4, 8].choose(&mut rng).unwrap()).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let (c, d) = (rng.gen_range(0.01..100.0), rng.gen_range(-100.0..100.0));
        let a = grpo::group_advantages(&r, DEFAULT_STD_FLOOR).map_err(|e| e.to_string())?;
        let shifted: Vec<f64> = r.iter().map(|x| c * x + d).collect();
        let b = grpo::group_advantages(&shifted, DEFAULT_STD_FLOOR).map_err(|e| e.to_string())?;
        ensure!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9), "affine case c={c} d={d}: {a:?} vs {b:?}");
    }

    for v in [0.0, 10.0, -0.1, 3.7] {
        for n in [2, 4, 8] {
            let a = grpo::group_advantages(&vec![v; n], DEFAULT_STD_FLOOR).map_err(|e| e.to_string())?;
            ensure!(a == vec![0.0; n], "constant group {v} x {n} gave {a:?}");
        }
    }

    let t = grpo::clipped_term(10.0, 1.0, 0.2);
    ensure!(t == 1.2, "clipped term {t}");

    for i in 0..10_000 {
        let r = rng.gen_range(-30.0..0.0);
        let c = if i % 10 == 0 { r } else { rng.gen_range(-30.0..0.0) };
        let k = grpo::kl_term(r, c);
        ensure!(k >= 0.0, "kl({r}, {c}) = {k}");
        ensure!((k == 0.0) == (r == c), "kl({r}, {c}) = {k}");
    }
    Ok(())
}

fn protocol_goldens() -> Result<(), String> {
    for s in common::scripts() {
        let (requests, responses) = common::load_golden(&s);
        let replayed = common::replay_binary(&requests);
        ensure!(replayed == responses, "{} transcript differs from the golden", s.env);
    }
    let plans = common::sixteen_plans();
    let serial_server = envforge_service::Server::new(envforge_service::ServerConfig::default());
    let serial = common::play_serial(&mut |l: &str| serial_server.handle_line(l), &plans);
    let mixed_server = envforge_service::Server::new(envforge_service::ServerConfig::default());
    let mixed = common::play_interleaved(&mut |l: &str| mixed_server.handle_line(l), &plans, 42);
    ensure!(serial == mixed, "interleaved trajectories differ from serial");
    Ok(())
}
