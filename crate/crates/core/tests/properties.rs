mod common;

use adyn_core::esc::{certify_esc, stability_degree, StabilityDegree};
use adyn_core::excursions::birth_fraction;
use adyn_core::lnk::{run_lnk, Termination};
use adyn_core::lotka_volterra::{fitness_profile, invasion_fitness, lv_equilibrium, lv_flow};
use adyn_core::meta_graph::{build_l_scale_graph, build_meta_graph, check_no_cycles};
use adyn_core::model::{graph_distance, load_model, shortest_paths, TraitGraphModel, TraitSet};
use adyn_core::rates::exit_law;
use adyn_core::{AnalysisError, EscDescriptor};
use common::arb_model;
use proptest::prelude::*;

fn escs(m: &TraitGraphModel) -> Vec<EscDescriptor> {
    (1u64..1 << m.n()).filter_map(|mask| certify_esc(m, &TraitSet::from_mask(mask)).ok()).collect()
}

fn zero_fitness(e: &AnalysisError) -> bool {
    matches!(e, AnalysisError::ZeroFitness { .. })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triangle_inequality(m in arb_model()) {
        let n = m.n();
        for u in 0..n {
            for x in 0..n {
                for w in 0..n {
                    if let (Some(a), Some(b)) = (m.distance(u, x), m.distance(x, w)) {
                        prop_assert!(m.distance(u, w).unwrap() <= a + b);
                    }
                }
            }
        }
    }

    #[test]
    fn shortest_paths_have_distance_length(m in arb_model(), src in 0usize..6, dst in 0usize..6) {
        prop_assume!(src < m.n() && dst < m.n());
        let s = TraitSet::singleton(src);
        let d = graph_distance(&m, &s, dst).unwrap();
        match d {
            None => prop_assert!(shortest_paths(&m, &s, dst).is_err()),
            Some(d) => {
                let paths = shortest_paths(&m, &s, dst).unwrap();
                prop_assert!(!paths.is_empty());
                for p in paths {
                    prop_assert_eq!(p.len() as u32, d);
                    for pair in p.vertices().windows(2) {
                        prop_assert!(m.mutation(pair[0], pair[1]) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn config_round_trip(m in arb_model()) {
        let text = m.to_json();
        let back = load_model(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn accepted_equilibria_solve_lv(m in arb_model(), mask in 1u64..64) {
        let s = TraitSet::from_mask(mask & ((1 << m.n()) - 1));
        prop_assume!(!s.is_empty());
        if let Ok(eq) = lv_equilibrium(&m, &s) {
            for (v, _) in eq.iter() {
                let rhs = m.growth(v) - eq.iter().map(|(u, x)| m.competition(v, u) * x).sum::<f64>();
                prop_assert!(rhs.abs() < 1e-10);
                prop_assert_eq!(invasion_fitness(&m, &eq, v).unwrap(), 0.0);
            }
            // small perturbation relaxes back
            let mut init = vec![0.0; m.n()];
            for (v, x) in eq.iter() {
                init[v] = x * 1.01;
            }
            let flow = lv_flow(&m, &s, &init, 4000.0, 1).unwrap();
            for (i, (_, x)) in eq.iter().enumerate() {
                prop_assert!((flow.final_state()[i] - x).abs() < 1e-5 * x.max(1.0));
            }
        }
    }

    #[test]
    fn equal_competition_fitness_is_growth_difference(
        r in prop::collection::vec(0.1f64..3.0, 3),
        kappa in 0.2f64..2.0,
    ) {
        let doc = serde_json::json!({
            "vertices": ["a","b","c"], "edges": [],
            "birth": {"a": r[0] + 1.0, "b": r[1] + 1.0, "c": r[2] + 1.0},
            "death": {"a": 1.0, "b": 1.0, "c": 1.0},
            "competition": {"equal": kappa}, "alpha": 1.5
        });
        let m = load_model(&doc.to_string()).unwrap();
        let eq = lv_equilibrium(&m, &TraitSet::singleton(0)).unwrap();
        for w in 1..3 {
            match invasion_fitness(&m, &eq, w) {
                Ok(f) => prop_assert!((f - (m.growth(w) - m.growth(0))).abs() < 1e-10),
                Err(e) => prop_assert!(zero_fitness(&e)),
            }
        }
    }

    #[test]
    fn esc_certification_matches_degree(m in arb_model(), mask in 1u64..64) {
        let s = TraitSet::from_mask(mask & ((1 << m.n()) - 1));
        prop_assume!(!s.is_empty() && lv_equilibrium(&m, &s).is_ok());
        let degree = match stability_degree(&m, &s) {
            Ok(d) => d,
            Err(e) => { prop_assert!(zero_fitness(&e)); return Ok(()); }
        };
        let certified = certify_esc(&m, &s);
        prop_assert_eq!(degree.exceeds(m.alpha()), certified.is_ok());
        if let Ok(esc) = certified {
            for w in esc.mutant_candidates.iter() {
                prop_assert!(!esc.v_alpha.contains(w));
            }
            for w in 0..m.n() {
                let b = esc.beta_profile[w];
                prop_assert!((0.0..=1.0).contains(&b));
                if let Some(d) = esc.distance(w) {
                    prop_assert!((b - (1.0 - d as f64 / m.alpha()).max(0.0)).abs() < 1e-15);
                }
            }
            for w in esc.v_alpha.iter() {
                prop_assert!(esc.prefactor(w).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn unfit_iff_subcritical(m in arb_model(), v in 0usize..6) {
        prop_assume!(v < m.n());
        let Ok(eq) = lv_equilibrium(&m, &TraitSet::singleton(v)) else { return Ok(()) };
        let Ok(profile) = fitness_profile(&m, &eq) else { return Ok(()) };
        for w in (0..m.n()).filter(|&w| w != v) {
            prop_assert_eq!(birth_fraction(&m, &eq, w).subcritical, profile.of(w) < 0.0);
        }
    }

    #[test]
    fn exit_law_conserves_mass(m in arb_model()) {
        for esc in escs(&m) {
            if esc.is_absorbing() { continue; }
            let law = exit_law(&m, &esc).unwrap();
            let sum: f64 = law.per_trait.iter().map(|t| t.rate).sum();
            prop_assert!((law.exit_rate - sum).abs() <= 1e-12 * sum);
            prop_assert!((law.fixation_split.values().sum::<f64>() - 1.0).abs() < 1e-12);
            for t in &law.per_trait {
                for p in &t.paths {
                    prop_assert!(p.within_block > 0.0 && p.boundary_factor > 0.0);
                    prop_assert!(p.excursion_block > 0.0 && p.fixation_factor > 0.0);
                }
            }
        }
    }

    #[test]
    fn rates_scale_with_time_unit(m in arb_model(), factor in 1.5f64..4.0) {
        let mut cfg = m.to_config();
        for x in cfg.birth.values_mut().chain(cfg.death.values_mut()) {
            *x *= factor;
        }
        match &mut cfg.competition {
            adyn_core::model::CompetitionConfig::Equal { equal } => *equal *= factor,
            adyn_core::model::CompetitionConfig::Matrix(rows) => {
                for row in rows.values_mut() {
                    for x in row.values_mut() { *x *= factor; }
                }
            }
        }
        let scaled = TraitGraphModel::from_config(&cfg).unwrap();
        for esc in escs(&m) {
            if esc.is_absorbing() { continue; }
            let base = exit_law(&m, &esc).unwrap();
            let other = exit_law(&scaled, &certify_esc(&scaled, &esc.resident).unwrap()).unwrap();
            prop_assert!((other.exit_rate - factor * base.exit_rate).abs() <= 1e-9 * other.exit_rate);
        }
    }

    #[test]
    fn esc_profile_is_lnk_fixed_point(m in arb_model()) {
        for esc in escs(&m) {
            let t = run_lnk(&m, &esc.beta_profile).unwrap();
            prop_assert!(t.phases.is_empty());
            prop_assert_eq!(t.termination.esc(), Some(&esc.resident));
            prop_assert_eq!(&t.final_beta, &esc.beta_profile);
        }
    }

    #[test]
    fn lnk_trajectories_are_continuous_and_bounded(m in arb_model(), start in 0usize..6, seed_beta in prop::collection::vec(0.0f64..1.0, 6)) {
        prop_assume!(start < m.n());
        let mut init: Vec<f64> = seed_beta[..m.n()].iter().map(|b| b * 0.9).collect();
        init[start] = 1.0;
        let traj = match run_lnk(&m, &init) {
            Ok(t) => t,
            Err(e) => { prop_assert!(zero_fitness(&e)); return Ok(()); }
        };
        let rows = traj.breakpoints();
        for (_, b) in &rows {
            prop_assert!(b.iter().all(|x| (0.0..=1.0 + 1e-9).contains(x)));
        }
        for w in traj.phases.windows(2) {
            // the next phase starts from where the previous one ended
            let s = w[0].end;
            let before = traj.beta_at(s);
            for v in 0..m.n() {
                if w[1].start_beta[v] < 1.0 {
                    prop_assert!((before[v] - w[1].start_beta[v]).abs() < 1e-9);
                }
            }
        }
        for p in &traj.phases {
            let bound = p.fitness.iter().fold(0.0f64, |a, f| a.max(f.abs()));
            for pair in rows.windows(2) {
                let (t0, b0) = &pair[0];
                let (t1, b1) = &pair[1];
                if *t0 >= p.start && *t1 <= p.end && t1 > t0 {
                    for v in 0..m.n() {
                        prop_assert!((b1[v] - b0[v]).abs() <= bound * (t1 - t0) + 1e-9);
                    }
                }
            }
        }
        if let Termination::Horizon { .. } = traj.termination {
            prop_assert!(traj.phases.len() >= 1000);
        }
    }

    #[test]
    fn graph_levels_conserve_probability(m in arb_model()) {
        let g = match build_meta_graph(&m, None) {
            Ok(g) => g,
            Err(e) => { prop_assert!(zero_fitness(&e)); return Ok(()); }
        };
        for (i, node) in g.nodes.iter().enumerate() {
            prop_assert!(node.stability_degree.exceeds(m.alpha()));
            prop_assert!(certify_esc(&m, &node.resident).is_ok());
            if node.is_absorbing() || node.frontier_invalid.is_some() { continue; }
            let total: f64 = g.out_edges(i).map(|e| e.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
        let mut previous: Option<Vec<TraitSet>> = None;
        for level in g.levels().into_iter().filter(|&l| f64::from(l) > m.alpha()) {
            let verdict = check_no_cycles(&g, &m, level).unwrap();
            if !verdict.holds || g.has_frontier_invalid() { previous = None; continue; }
            let gl = build_l_scale_graph(&g, &m, level).unwrap();
            for (i, node) in gl.nodes.iter().enumerate() {
                let out: Vec<_> = gl.edges.iter().filter(|e| e.from == i).collect();
                if node.stability_degree == StabilityDegree::Finite(level) {
                    let total: f64 = out.iter().map(|e| e.probability).sum();
                    prop_assert!((total - 1.0).abs() < 1e-9);
                    for e in out {
                        prop_assert!((e.rate / node.exit_rate.unwrap() - e.probability).abs() < 1e-12);
                    }
                } else {
                    prop_assert!(out.is_empty());
                }
            }
            let sets: Vec<TraitSet> = gl.nodes.iter().map(|n| n.resident.clone()).collect();
            if let Some(prev) = &previous {
                prop_assert!(sets.iter().all(|s| prev.contains(s)));
            }
            previous = Some(sets);
        }
    }
}
