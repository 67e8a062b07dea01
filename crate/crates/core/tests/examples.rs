//! Categorical claims of the nine worked examples, on the fixtures in `fixtures/`.

mod common;

use adyn_core::esc::{certify_esc, EscRejection, StabilityDegree};
use adyn_core::excursions::birth_fraction;
use adyn_core::lnk::{esc_after_fixation, Termination};
use adyn_core::lotka_volterra::{invasion_fitness, lv_equilibrium, lv_flow};
use adyn_core::meta_graph::{
    build_l_scale_graph, build_meta_graph, check_no_cycles, sample_jump_chain, JumpChainEnd,
    MetastabilityGraph,
};
use adyn_core::model::{graph_distance, shortest_paths, TraitGraphModel, TraitSet};
use adyn_core::rates::{exit_law, trait_rate};
use common::fixture;

fn set(m: &TraitGraphModel, ids: &[&str]) -> TraitSet {
    TraitSet::new(ids.iter().map(|id| m.vertex(id).unwrap()))
}

fn level_sets(m: &TraitGraphModel, g: &MetastabilityGraph, level: StabilityDegree) -> Vec<String> {
    g.nodes
        .iter()
        .filter(|n| n.stability_degree == level)
        .map(|n| m.format_set(&n.resident))
        .collect()
}

fn edge_list(m: &TraitGraphModel, g: &MetastabilityGraph) -> Vec<(String, String)> {
    g.edges
        .iter()
        .map(|e| (m.format_set(&g.nodes[e.from].resident), m.format_set(&g.nodes[e.to].resident)))
        .collect()
}

fn pair(a: &str, b: &str) -> (String, String) {
    (a.to_string(), b.to_string())
}

#[test]
fn ex1_structure() {
    let m = fixture("ex1");
    assert_eq!(m.n(), 6);
    let zero = set(&m, &["0"]);
    assert_eq!(graph_distance(&m, &zero, m.vertex("2a").unwrap()).unwrap(), Some(2));
    let paths = shortest_paths(&m, &zero, m.vertex("2a").unwrap()).unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(m.format_path(&paths[0]), "(0,1a,2a)");

    let eq = lv_equilibrium(&m, &zero).unwrap();
    assert!(invasion_fitness(&m, &eq, m.vertex("1a").unwrap()).unwrap() < 0.0);
    assert!(invasion_fitness(&m, &eq, m.vertex("2a").unwrap()).unwrap() > 0.0);
    assert!(birth_fraction(&m, &eq, m.vertex("1a").unwrap()).rho < 0.5);

    let esc = certify_esc(&m, &zero).unwrap();
    assert_eq!(esc.stability_degree, StabilityDegree::Finite(2));
    assert_eq!(esc.mutant_candidates, set(&m, &["2a", "2b"]));
}

#[test]
fn ex1_two_b_is_not_an_esc() {
    let m = fixture("ex1");
    match certify_esc(&m, &set(&m, &["2b"])) {
        Err(EscRejection::FitInsideNeighbourhood { vertex, .. }) => assert_eq!(m.id(vertex), "3b"),
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn ex1_escs_after_fixation() {
    let m = fixture("ex1");
    let esc = certify_esc(&m, &set(&m, &["0"])).unwrap();
    let a = esc_after_fixation(&m, &esc, m.vertex("2a").unwrap()).unwrap();
    assert_eq!(a.target(), Some(&set(&m, &["2a"])));
    let b = esc_after_fixation(&m, &esc, m.vertex("2b").unwrap()).unwrap();
    assert_eq!(b.target(), Some(&set(&m, &["3b"])));
}

#[test]
fn ex1_transition_probabilities_are_rate_ratios() {
    let m = fixture("ex1");
    let esc = certify_esc(&m, &set(&m, &["0"])).unwrap();
    let law = exit_law(&m, &esc).unwrap();
    let g = build_meta_graph(&m, Some(&set(&m, &["0"]))).unwrap();
    let r2a = law.rate_of(m.vertex("2a").unwrap()).unwrap();
    let p = g.probability(&set(&m, &["0"]), &set(&m, &["2a"]));
    assert!((p - r2a / law.exit_rate).abs() < 1e-15);
    let p3b = g.probability(&set(&m, &["0"]), &set(&m, &["3b"]));
    assert!((p + p3b - 1.0).abs() < 1e-12);
}

#[test]
fn ex1_sampled_first_steps_match_split() {
    let m = fixture("ex1");
    let g = build_meta_graph(&m, None).unwrap();
    let start = set(&m, &["0"]);
    let target = set(&m, &["2a"]);
    let p = g.probability(&start, &target);
    let n = 100_000u64;
    let hits = (0..n)
        .filter(|&seed| sample_jump_chain(&g, &start, 1, seed).unwrap().steps[0].to == target)
        .count() as f64;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((hits - n as f64 * p).abs() < 3.0 * sigma, "hits {hits}, expected {}", n as f64 * p);
}

#[test]
fn ex2_two_paths_add_up() {
    let m = fixture("ex2");
    let zero = set(&m, &["0"]);
    let two = m.vertex("2").unwrap();
    let paths = shortest_paths(&m, &zero, two).unwrap();
    let shown: Vec<String> = paths.iter().map(|p| m.format_path(p)).collect();
    assert_eq!(shown, ["(0,1a,2)", "(0,1b,2)"]);

    let esc = certify_esc(&m, &zero).unwrap();
    assert_eq!(esc.stability_degree, StabilityDegree::Finite(2));
    assert_eq!(esc.mutant_candidates, set(&m, &["2"]));
    let rate = trait_rate(&m, &esc, two).unwrap();
    assert_eq!(rate.paths.len(), 2);
    assert_eq!(rate.rate, rate.paths[0].total + rate.paths[1].total);

    let g = build_meta_graph(&m, Some(&zero)).unwrap();
    assert_eq!(edge_list(&m, &g), [pair("{0}", "{2}")]);
    assert_eq!(g.edges[0].probability, 1.0);
}

#[test]
fn ex3_both_mutants_reach_the_same_esc() {
    let m = fixture("ex3");
    let zero = set(&m, &["0"]);
    let esc = certify_esc(&m, &zero).unwrap();
    assert_eq!(esc.mutant_candidates, set(&m, &["2a", "2b"]));
    for w in ["2a", "2b"] {
        let after = esc_after_fixation(&m, &esc, m.vertex(w).unwrap()).unwrap();
        assert_eq!(after.target(), Some(&set(&m, &["4"])), "mutant {w}");
    }
    let g = build_meta_graph(&m, Some(&zero)).unwrap();
    assert_eq!(edge_list(&m, &g), [pair("{0}", "{4}")]);
    assert!((g.edges[0].probability - 1.0).abs() < 1e-12);
    assert_eq!(g.edges[0].mutants.len(), 2);
}

#[test]
fn ex4_coexisting_esc() {
    let m = fixture("ex4");
    let v = set(&m, &["0", "3"]);
    let eq = lv_equilibrium(&m, &v).unwrap();
    assert!(eq.values.iter().all(|&x| x > 0.0));
    let esc = certify_esc(&m, &v).unwrap();
    assert_eq!(esc.v_alpha, set(&m, &["0", "1", "2", "3"]));
    assert_eq!(esc.stability_degree, StabilityDegree::Finite(2));
    assert_eq!(esc.mutant_candidates, set(&m, &["4", "5"]));

    let law = exit_law(&m, &esc).unwrap();
    assert_eq!(law.per_trait.len(), 2);
    let via: Vec<String> = law
        .per_trait
        .iter()
        .map(|t| {
            assert_eq!(t.paths.len(), 1);
            m.format_path(&t.paths[0].path)
        })
        .collect();
    assert_eq!(via, ["(0,1,4)", "(3,2,5)"]);
}

#[test]
fn ex4_flow_from_coexistence_goes_to_four() {
    let m = fixture("ex4");
    let eq = lv_equilibrium(&m, &set(&m, &["0", "3"])).unwrap();
    let mut init = vec![0.0; m.n()];
    for (v, x) in eq.iter() {
        init[v] = x;
    }
    init[m.vertex("4").unwrap()] = 1e-3;
    let flow = lv_flow(&m, &set(&m, &["0", "3", "4"]), &init, 200.0, 10).unwrap();
    assert_eq!(flow.final_support, set(&m, &["4"]));
    let n4 = lv_equilibrium(&m, &set(&m, &["4"])).unwrap().values[0];
    let pos = flow.traits.iter().position(|v| m.id(v) == "4").unwrap();
    assert!((flow.final_state()[pos] - n4).abs() < 1e-6);
}

#[test]
fn ex4_metastability_graph() {
    let m = fixture("ex4");
    let g = build_meta_graph(&m, Some(&set(&m, &["0", "3"]))).unwrap();
    let nodes: Vec<String> = g.nodes.iter().map(|n| m.format_set(&n.resident)).collect();
    assert_eq!(nodes, ["{0,3}", "{4}", "{5}"]);
    assert_eq!(edge_list(&m, &g), [pair("{0,3}", "{4}"), pair("{0,3}", "{5}")]);
}

#[test]
fn ex5_self_connection() {
    let m = fixture("ex5");
    let g = build_meta_graph(&m, Some(&set(&m, &["0"]))).unwrap();
    assert!(edge_list(&m, &g).contains(&pair("{2}", "{2}")));

    let esc = certify_esc(&m, &set(&m, &["2"])).unwrap();
    let after = esc_after_fixation(&m, &esc, m.vertex("4").unwrap()).unwrap();
    assert_eq!(after.target(), Some(&set(&m, &["2"])));
    let invaders: Vec<&str> =
        after.trajectory.phases.iter().filter_map(|p| p.invader).map(|w| m.id(w)).collect();
    assert_eq!(invaders, ["4", "5", "2"]);
}

#[test]
fn ex6_levels_and_graphs() {
    let m = fixture("ex6");
    let g = build_meta_graph(&m, None).unwrap();
    assert_eq!(level_sets(&m, &g, StabilityDegree::Finite(1)), ["{1}", "{2}", "{3}", "{5}", "{7}"]);
    assert_eq!(level_sets(&m, &g, StabilityDegree::Finite(2)), ["{0}", "{4}"]);
    assert_eq!(level_sets(&m, &g, StabilityDegree::Infinite), ["{6}"]);

    let six = g.node_index(&set(&m, &["6"])).unwrap();
    assert!(g.nodes[six].descriptor.mutant_candidates.is_empty());
    let three = g.node_index(&set(&m, &["3"])).unwrap();
    assert_eq!(g.nodes[three].descriptor.mutant_candidates, set(&m, &["4", "7"]));

    assert!(check_no_cycles(&g, &m, 1).unwrap().holds);
    assert!(check_no_cycles(&g, &m, 2).unwrap().holds);

    let g1 = build_l_scale_graph(&g, &m, 1).unwrap();
    let e1: Vec<(String, String)> = g1
        .edges
        .iter()
        .map(|e| (m.format_set(&g1.nodes[e.from].resident), m.format_set(&g1.nodes[e.to].resident)))
        .collect();
    assert_eq!(
        e1,
        [
            pair("{1}", "{2}"),
            pair("{2}", "{3}"),
            pair("{3}", "{4}"),
            pair("{3}", "{7}"),
            pair("{5}", "{6}"),
            pair("{7}", "{2}")
        ]
    );
    let g2 = build_l_scale_graph(&g, &m, 2).unwrap();
    let e2: Vec<(String, String)> = g2
        .edges
        .iter()
        .map(|e| (m.format_set(&g2.nodes[e.from].resident), m.format_set(&g2.nodes[e.to].resident)))
        .collect();
    assert_eq!(e2, [pair("{0}", "{4}"), pair("{4}", "{6}")]);
    assert!((g2.probability(&set(&m, &["0"]), &set(&m, &["4"])) - 1.0).abs() < 1e-9);
}

#[test]
fn ex7_assumption_fails_at_level_two() {
    let m = fixture("ex7");
    let g = build_meta_graph(&m, None).unwrap();
    assert_eq!(
        level_sets(&m, &g, StabilityDegree::Finite(1)),
        ["{1}", "{2}", "{3}", "{7}", "{8}"]
    );
    assert_eq!(level_sets(&m, &g, StabilityDegree::Finite(2)), ["{0}"]);
    assert_eq!(level_sets(&m, &g, StabilityDegree::Infinite), ["{4}"]);
    let three = g.node_index(&set(&m, &["3"])).unwrap();
    assert_eq!(g.nodes[three].descriptor.mutant_candidates, set(&m, &["7"]));

    assert!(check_no_cycles(&g, &m, 1).unwrap().holds);
    let verdict = check_no_cycles(&g, &m, 2).unwrap();
    assert!(!verdict.holds);
    let witness: Vec<String> =
        verdict.witness.unwrap().iter().map(|&i| m.format_set(&g.nodes[i].resident)).collect();
    assert_eq!(witness, ["{2}", "{3}", "{7}"]);
    assert!(build_l_scale_graph(&g, &m, 2).is_err());
}

#[test]
fn ex8_collapse_on_level_three() {
    let m = fixture("ex8");
    let g = build_meta_graph(&m, None).unwrap();
    assert_eq!(level_sets(&m, &g, StabilityDegree::Finite(2)), ["{3}", "{6}"]);
    assert_eq!(level_sets(&m, &g, StabilityDegree::Finite(3)), ["{0}", "{5}"]);
    assert_eq!(level_sets(&m, &g, StabilityDegree::Infinite), ["{8}"]);

    let g2 = build_l_scale_graph(&g, &m, 2).unwrap();
    assert_eq!(g2.nodes.len(), 5);
    assert_eq!(g2.edges.len(), 2);
    assert_eq!(g2.probability(&set(&m, &["3"]), &set(&m, &["5"])), 1.0);
    assert_eq!(g2.probability(&set(&m, &["6"]), &set(&m, &["8"])), 1.0);

    let g3 = build_l_scale_graph(&g, &m, 3).unwrap();
    assert_eq!(g3.edges.len(), 2);
    assert_eq!(g3.probability(&set(&m, &["0"]), &set(&m, &["5"])), 1.0);
    assert_eq!(g3.probability(&set(&m, &["5"]), &set(&m, &["8"])), 1.0);
}

#[test]
fn ex8_jump_chain_is_deterministic() {
    let m = fixture("ex8");
    let g = build_meta_graph(&m, None).unwrap();
    for seed in 0..20 {
        let s = sample_jump_chain(&g, &set(&m, &["0"]), 10, seed).unwrap();
        let visited: Vec<String> = std::iter::once(m.format_set(&s.start))
            .chain(s.steps.iter().map(|st| m.format_set(&st.to)))
            .collect();
        assert_eq!(visited, ["{0}", "{3}", "{5}", "{8}"]);
        assert_eq!(s.end, JumpChainEnd::Absorbing);
        let exps: Vec<u32> = s.steps.iter().map(|st| st.exponent).collect();
        assert_eq!(exps, [3, 2, 3]);
    }
}

#[test]
fn ex9_merged_edge() {
    let m = fixture("ex9");
    let zero = set(&m, &["0"]);
    let esc = certify_esc(&m, &zero).unwrap();
    assert_eq!(esc.stability_degree, StabilityDegree::Finite(3));
    assert_eq!(esc.mutant_candidates, set(&m, &["3", "5"]));

    let after = esc_after_fixation(&m, &esc, m.vertex("3").unwrap()).unwrap();
    assert_eq!(after.target(), Some(&set(&m, &["3"])));
    let four = m.vertex("4").unwrap();
    assert!(after.trajectory.phases.iter().all(|p| !p.residents.contains(four)));
    assert!(after.trajectory.phases.iter().any(|p| p.fitness[four] < 0.0 && p.birth_times[four].is_some()));

    let g = build_meta_graph(&m, None).unwrap();
    assert_eq!(edge_list(&m, &g), [pair("{0}", "{3}"), pair("{0}", "{5}"), pair("{3}", "{5}")]);
    let g3 = build_l_scale_graph(&g, &m, 3).unwrap();
    assert_eq!(g3.edges.len(), 1);
    assert!((g3.probability(&zero, &set(&m, &["5"])) - 1.0).abs() < 1e-12);
}

#[test]
fn absorbing_start_has_no_transitions() {
    let m = fixture("ex2");
    let g = build_meta_graph(&m, None).unwrap();
    let s = sample_jump_chain(&g, &set(&m, &["2"]), 5, 1).unwrap();
    assert!(s.steps.is_empty());
    assert_eq!(s.end, JumpChainEnd::Absorbing);
}

#[test]
fn single_absorbing_node_passes_every_level() {
    let m = fixture("prefactor");
    let g = build_meta_graph(&m, None).unwrap();
    assert_eq!(g.nodes.len(), 1);
    for level in 3..8 {
        assert!(check_no_cycles(&g, &m, level).unwrap().holds);
    }
}

#[test]
fn esc_profile_is_a_fixed_point_of_lnk() {
    let m = fixture("ex6");
    let esc = certify_esc(&m, &set(&m, &["3"])).unwrap();
    let t = adyn_core::lnk::run_lnk(&m, &esc.beta_profile).unwrap();
    assert!(t.phases.is_empty());
    assert_eq!(t.termination, Termination::EscReached { resident: esc.resident.clone(), time: 0.0 });
}
