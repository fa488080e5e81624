mod common;

use agrn::grn::*;
use common::*;
use proptest::prelude::*;

fn config(mode: AffinityMode) -> GrnConfig {
    GrnConfig {
        affinity_mode: mode,
        ..GrnConfig::default()
    }
}

fn hand_case(mode: AffinityMode, plus: [[f64; 3]; 3], minus: [[f64; 3]; 3], sig: [[f64; 3]; 3], step: [f64; 3]) {
    let g = three_protein_genome();
    let cfg = config(mode);
    let reference = ReferenceGrn::from_genome(&g, mode == AffinityMode::RelativeMax);
    let aff = compute_affinities(&g, &cfg).unwrap();
    let s = signature_matrix(&g, &cfg).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((aff.a_plus.get(i, j) - plus[i][j]).abs() < 1e-12);
            assert!((aff.a_minus.get(i, j) - minus[i][j]).abs() < 1e-12);
            assert!((s.get(i, j) - sig[i][j]).abs() < 1e-12);
            assert!((aff.a_plus.get(i, j) - reference.affinity(i, j, true)).abs() < 1e-12);
            assert!((s.get(i, j) - reference.signature(i, j)).abs() < 1e-12);
        }
    }
    let mut state = init_state(&g);
    assert_eq!(state.concentrations, vec![0.0, 0.5, 0.5]);
    set_inputs(&g, &mut state, &[1.0]).unwrap();
    let expected = reference.step(&state.concentrations);
    grn_step(&g, &mut state, &cfg).unwrap();
    for k in 0..3 {
        assert!((state.concentrations[k] - step[k]).abs() < 1e-12);
        assert!((state.concentrations[k] - expected[k]).abs() < 1e-12);
    }
    assert_eq!(read_raw_outputs(&g, &state), &state.concentrations[1..2]);
}

#[test]
fn hand_example_paper_literal() {
    hand_case(AffinityMode::PaperLiteral, PLUS_LITERAL, MINUS_LITERAL, SIG_LITERAL, STEP_LITERAL);
}

#[test]
fn hand_example_relative_max() {
    hand_case(AffinityMode::RelativeMax, PLUS_RELATIVE, MINUS_RELATIVE, SIG_RELATIVE, STEP_RELATIVE);
}

#[test]
fn reference_agrees_over_long_runs() {
    let mut r = rng(11);
    for mode in [AffinityMode::PaperLiteral, AffinityMode::RelativeMax] {
        for _ in 0..20 {
            let g = random_genome(&mut r, 3, 4, 3);
            let reference = ReferenceGrn::from_genome(&g, mode == AffinityMode::RelativeMax);
            let grn = CompiledGrn::new(g.clone(), &config(mode)).unwrap();
            let mut state = grn.init_state();
            let mut c = state.concentrations.clone();
            for t in 0..50 {
                let x = [0.1 * (t % 10) as f64, 0.5, 1.0];
                set_inputs(&g, &mut state, &x).unwrap();
                c[..3].copy_from_slice(&x);
                grn.step(&mut state);
                c = reference.step(&c);
                for (a, b) in state.concentrations.iter().zip(&c) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn init_state_shares() {
    let mut r = rng(1);
    for (n_out, n_reg, share) in [(1, 1, 0.5), (4, 0, 0.25), (8, 12, 0.05)] {
        let g = random_genome(&mut r, 2, n_out, n_reg);
        let s = init_state(&g);
        assert_eq!(&s.concentrations[..2], &[0.0, 0.0]);
        assert!(s.concentrations[2..].iter().all(|&c| (c - share).abs() < 1e-15));
    }
}

fn genome_strategy() -> impl Strategy<Value = (Genome, Vec<Vec<f64>>, bool)> {
    (1usize..5, 1usize..5, 0usize..6, any::<u64>(), any::<bool>()).prop_flat_map(|(n_in, n_out, n_reg, seed, rel)| {
        let g = random_genome(&mut rng(seed), n_in, 2 * n_out, n_reg);
        (
            Just(g),
            prop::collection::vec(prop::collection::vec(-0.5f64..1.5, n_in), 1..30),
            Just(rel),
        )
    })
}

fn mode(relative: bool) -> AffinityMode {
    if relative {
        AffinityMode::RelativeMax
    } else {
        AffinityMode::PaperLiteral
    }
}

proptest! {
    #[test]
    fn dynamics_invariants((g, inputs, rel) in genome_strategy()) {
        let grn = CompiledGrn::new(g.clone(), &config(mode(rel))).unwrap();
        let n_in = g.n_inputs();
        let mut direct = grn.init_state();
        let mut via_sig = grn.init_state();
        for x in &inputs {
            set_inputs(&g, &mut direct, x).unwrap();
            set_inputs(&g, &mut via_sig, x).unwrap();
            let before = direct.concentrations[..n_in].to_vec();
            grn.step(&mut direct);
            grn.step_signature(&mut via_sig);
            prop_assert_eq!(&direct.concentrations[..n_in], &before[..]);
            prop_assert!(direct.concentrations.iter().all(|&c| c >= 0.0));
            let sum: f64 = direct.concentrations[n_in..].iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            for (a, b) in direct.concentrations.iter().zip(&via_sig.concentrations) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outputs_have_no_outgoing_influence((g, inputs, rel) in genome_strategy(), noise in prop::collection::vec(0.0f64..1.0, 8)) {
        let grn = CompiledGrn::new(g.clone(), &config(mode(rel))).unwrap();
        let (n_in, n_out) = (g.n_inputs(), g.n_outputs());
        let mut a = grn.init_state();
        set_inputs(&g, &mut a, &inputs[0]).unwrap();
        let mut b = a.clone();
        for k in 0..n_out {
            b.concentrations[n_in + k] = noise[k % noise.len()];
        }
        grn.step(&mut a);
        grn.step(&mut b);
        // Regulators agree up to the common normalization factor.
        let regs = n_in + n_out..g.len();
        let ra = &a.concentrations[regs.clone()];
        let rb = &b.concentrations[regs];
        if let Some(k) = ra.iter().zip(rb).find(|(x, _)| **x > 1e-6).map(|(x, y)| y / x) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x * k - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn trajectories_are_deterministic((g, inputs, rel) in genome_strategy()) {
        let run = || {
            let grn = CompiledGrn::new(g.clone(), &config(mode(rel))).unwrap();
            let mut s = grn.init_state();
            let mut out = Vec::new();
            for x in &inputs {
                out.push(grn.query(&mut s, x).unwrap());
            }
            (s, out)
        };
        let (s1, o1) = run();
        let (s2, o2) = run();
        prop_assert_eq!(s1.concentrations.iter().map(|c| c.to_bits()).collect::<Vec<_>>(),
                        s2.concentrations.iter().map(|c| c.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(o1, o2);
    }

    #[test]
    fn paired_outputs_range_and_scale(raw in prop::collection::vec(0.0f64..10.0, 2..12), k in 1e-3f64..1e3) {
        let raw = if raw.len() % 2 == 1 { raw[1..].to_vec() } else { raw };
        let n = raw.len() / 2;
        let o = paired_outputs(&raw, n).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|x| x * k).collect();
        let os = paired_outputs(&scaled, n).unwrap();
        for (a, b) in o.iter().zip(&os) {
            prop_assert!((0.0..=1.0).contains(a));
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affinity_exponents_are_nonpositive_in_relative_mode((g, _, _) in genome_strategy()) {
        let aff = compute_affinities(&g, &config(AffinityMode::RelativeMax)).unwrap();
        let n = g.len();
        let mut plus_max = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                prop_assert!(aff.a_plus.get(i, j) <= 0.0 && aff.a_minus.get(i, j) <= 0.0);
                plus_max = plus_max.max(aff.a_plus.get(i, j));
            }
        }
        prop_assert_eq!(plus_max, 0.0);
    }
}
