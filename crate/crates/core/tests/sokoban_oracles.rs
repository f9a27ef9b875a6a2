use std::collections::{BTreeSet, HashSet};

use envforge_core::sokoban::{self, Dir, GenerateParams, Pos, SokobanState};
use proptest::prelude::*;

fn border(h: i32, w: i32) -> BTreeSet<Pos> {
    let mut walls = BTreeSet::new();
    for r in 0..h {
        for c in 0..w {
            if r == 0 || c == 0 || r == h - 1 || c == w - 1 {
                walls.insert(Pos::new(r, c));
            }
        }
    }
    walls
}

/// Every valid single-box state on an `h`×`w` grid: any interior wall subset,
/// distinct player and box, goal on any free cell.
fn all_states(h: i32, w: i32) -> Vec<SokobanState> {
    let interior: Vec<Pos> = (1..h - 1).flat_map(|r| (1..w - 1).map(move |c| Pos::new(r, c))).collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << interior.len()) {
        let mut walls = border(h, w);
        let mut free = Vec::new();
        for (i, p) in interior.iter().enumerate() {
            if mask & (1 << i) != 0 {
                walls.insert(*p);
            } else {
                free.push(*p);
            }
        }
        for &player in &free {
            for &b in &free {
                if b == player {
                    continue;
                }
                for &goal in &free {
                    out.push(SokobanState::new(h, w, walls.clone(), player, b, goal).unwrap());
                }
            }
        }
    }
    out
}

/// Shortest solution length by exhaustive depth-limited enumeration of move
/// strings, independent of the library's BFS.
fn brute_force_shortest(s: &SokobanState, limit: usize) -> Option<usize> {
    fn reach(s: &SokobanState, depth: usize) -> bool {
        if s.is_solved() {
            return true;
        }
        if depth == 0 {
            return false;
        }
        Dir::ALL.iter().any(|&d| {
            let m = s.apply_move(d);
            m.moved && reach(&m.state, depth - 1)
        })
    }
    (0..=limit).find(|&d| reach(s, d))
}

fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn corner_deadlock_implies_unsolvable_on_all_5x5_states() {
    let states = all_states(5, 5);
    // sum over free-cell counts k of C(9, k) * k * (k - 1) * k
    let expected: usize = (2..=9usize).map(|k| binom(9, k) * k * (k - 1) * k).sum();
    assert_eq!(states.len(), expected);
    let mut deadlocked = 0;
    for s in &states {
        if s.is_corner_deadlocked() {
            deadlocked += 1;
            assert_eq!(s.solve_bfs(), None, "{}", s.render());
        }
        if s.is_solved() {
            assert_eq!(s.solve_bfs(), Some(vec![]));
        }
    }
    assert!(deadlocked > 0);
}

#[test]
fn render_is_injective_and_parses_back_on_4x4() {
    let states = all_states(4, 4);
    let mut seen = HashSet::new();
    for s in &states {
        let text = s.render();
        assert!(seen.insert(text.clone()), "duplicate rendering {text}");
        assert_eq!(&SokobanState::parse_render(&text).unwrap(), s);
    }
}

#[test]
fn bfs_plans_are_optimal_on_small_grids() {
    for seed in 0..150 {
        let s = sokoban::generate(seed, 5, 5, 0.1).unwrap();
        let plan = s.solve_bfs().unwrap();
        let mut cur = s.clone();
        for (i, d) in plan.iter().enumerate() {
            assert!(!cur.is_solved(), "solved early at step {i}");
            cur = cur.apply_move(*d).state;
        }
        assert!(cur.is_solved());
        assert_eq!(brute_force_shortest(&s, plan.len()), Some(plan.len()), "seed {seed}");
    }
}

#[test]
fn generation_honours_plan_cap() {
    for seed in 0..50 {
        let params = GenerateParams { max_plan_len: Some(4), ..Default::default() };
        let s = sokoban::generate_with(seed, params).unwrap();
        let n = s.solve_bfs().unwrap().len();
        assert!((1..=4).contains(&n));
    }
}

fn arb_state() -> impl Strategy<Value = SokobanState> {
    (0u64..5_000).prop_map(|seed| sokoban::generate(seed, 6, 6, 0.15).unwrap())
}

fn arb_dir() -> impl Strategy<Value = Dir> {
    prop::sample::select(Dir::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn moves_conserve_static_structure(s in arb_state(), dirs in prop::collection::vec(arb_dir(), 0..30)) {
        let mut cur = s.clone();
        for d in dirs {
            let m = cur.apply_move(d);
            prop_assert_eq!(m.state.height, s.height);
            prop_assert_eq!(m.state.width, s.width);
            prop_assert_eq!(&m.state.walls, &s.walls);
            prop_assert_eq!(m.state.goal, s.goal);
            prop_assert!(m.state.validate().is_ok());
            if m.pushed {
                let (dr, dc) = d.delta();
                prop_assert_eq!(m.state.player, cur.box_pos);
                prop_assert_eq!(m.state.box_pos, Pos::new(cur.box_pos.row + dr, cur.box_pos.col + dc));
                prop_assert_eq!(cur.player.step(d), cur.box_pos);
            }
            if !m.moved {
                prop_assert_eq!(&m.state, &cur);
            }
            cur = m.state;
        }
    }

    #[test]
    fn parse_inverts_render_on_generated_states(s in arb_state(), dirs in prop::collection::vec(arb_dir(), 0..10)) {
        let mut cur = s;
        for d in dirs {
            cur = cur.apply_move(d).state;
        }
        prop_assert_eq!(SokobanState::parse_render(&cur.render()).unwrap(), cur);
    }
}
