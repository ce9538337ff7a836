use proptest::prelude::*;

use normgraph_core::epi::{
    ode_rhs, EpiParams, MacroClass, ModelKind, Seird2Params, SirParams, TwoStrainParams,
};
use normgraph_core::graph::SpatialGraph;
use normgraph_core::search::{
    build_quadtree, dtw_distance, dtw_scalar, fitness, infer_edges, leaf_satisfies_stop,
};
use normgraph_core::sim::{agreement, EpiLog, NodeLog, PositionLog, Trajectory};
use normgraph_core::walk::{fit_mc, for_each_transition, NeighborBins};
use normgraph_core::Point;

fn point() -> impl Strategy<Value = Point> {
    (0.0..100.0f64, 0.0..100.0f64).prop_map(|(x, y)| Point::new(x, y))
}

fn prob() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn params() -> impl Strategy<Value = EpiParams> {
    let gamma = 1u32..400;
    prop_oneof![
        (prob(), gamma.clone()).prop_map(|(beta, gamma)| EpiParams::Sir(SirParams { beta, gamma })),
        (
            prop::array::uniform8(prob()),
            prop::array::uniform2(gamma.clone()),
            prop::array::uniform2(prob()),
            prop::array::uniform2(prob())
        )
            .prop_map(|(b, gamma, rho, psi)| {
                let beta = [[[b[0], b[1]], [b[2], b[3]]], [[b[4], b[5]], [b[6], b[7]]]];
                EpiParams::Seird2(Seird2Params {
                    beta,
                    gamma,
                    rho,
                    psi,
                })
            }),
        (
            prop::array::uniform4(prob()),
            prop::array::uniform4(gamma),
            prop::array::uniform4(prob())
        )
            .prop_map(|(beta, gamma, rho)| EpiParams::TwoStrain(TwoStrainParams {
                beta,
                gamma,
                rho
            })),
    ]
}

/// Exhaustive DTW by recursion over all monotone warping paths.
fn brute_dtw(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
    let c = (a[i] - b[j]).abs();
    if i == 0 && j == 0 {
        return c;
    }
    let mut best = f64::INFINITY;
    if i > 0 {
        best = best.min(brute_dtw(a, b, i - 1, j));
    }
    if j > 0 {
        best = best.min(brute_dtw(a, b, i, j - 1));
    }
    if i > 0 && j > 0 {
        best = best.min(brute_dtw(a, b, i - 1, j - 1));
    }
    c + best
}

fn trajectory(counts: Vec<Vec<u32>>, n: usize) -> Trajectory {
    Trajectory {
        model: ModelKind::Sir,
        population: n,
        counts,
    }
}

/// Splits `n` agents over three compartments for each of `len` rows.
fn sir_rows(n: u32, len: usize) -> impl Strategy<Value = Vec<Vec<u32>>> {
    prop::collection::vec((0..=n, 0..=n), len).prop_map(move |rows| {
        rows.into_iter()
            .map(|(a, b)| {
                let (lo, hi) = (a.min(b), a.max(b));
                vec![lo, hi - lo, n - hi]
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ode_rhs_conserves_mass(p in params(), seed in prop::collection::vec(0.0..1.0f64, 10)) {
        let m = p.model().n_compartments();
        let s: f64 = seed[..m].iter().sum::<f64>().max(1e-12);
        let y: Vec<f64> = seed[..m].iter().map(|x| x / s).collect();
        let d = ode_rhs(&p, &y).unwrap();
        prop_assert!(d.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn dtw_matches_exhaustive_search(
        a in prop::collection::vec(-5.0..5.0f64, 1..6),
        b in prop::collection::vec(-5.0..5.0f64, 1..6),
    ) {
        let d = dtw_scalar(&a, &b).unwrap();
        prop_assert!((d - brute_dtw(&a, &b, a.len() - 1, b.len() - 1)).abs() <= 1e-12);
    }

    #[test]
    fn dtw_is_symmetric_with_zero_self_distance(
        a in prop::collection::vec(point(), 1..20),
        b in prop::collection::vec(point(), 1..20),
    ) {
        let ab = dtw_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - dtw_distance(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn quadtree_leaves_tile_the_root(
        pts in prop::collection::vec(point(), 1..60),
        probes in prop::collection::vec(point(), 50),
        r in 0.5..10.0f64,
    ) {
        let tree = build_quadtree(&pts, r, 8);
        let root = tree.cell;
        let leaves = tree.leaves();
        let area: f64 = leaves.iter().map(|l| l.cell.area()).sum();
        prop_assert!((area - root.area()).abs() <= 1e-9 * root.area());
        for p in probes.iter().chain(&pts) {
            if !root.contains_in(*p, &root) {
                continue;
            }
            let owners = leaves.iter().filter(|l| l.cell.contains_in(*p, &root)).count();
            prop_assert_eq!(owners, 1);
            prop_assert!(tree.locate(*p).cell.contains_in(*p, &root));
        }
        for l in &leaves {
            prop_assert!(leaf_satisfies_stop(l, &root, &pts, r, 8));
        }
    }

    #[test]
    fn fitness_is_translation_invariant(
        member in prop::collection::vec(point(), 1..6),
        frames in prop::collection::vec(prop::collection::vec(point(), 5), 1..4),
        dx in -50.0..50.0f64,
        dy in -50.0..50.0f64,
    ) {
        let shift = |p: &Point| Point::new(p.x + dx, p.y + dy);
        let log = PositionLog { frames: frames.clone() };
        let moved = PositionLog { frames: frames.iter().map(|f| f.iter().map(shift).collect()).collect() };
        let m2: Vec<Point> = member.iter().map(shift).collect();
        let a = fitness(&member, &log, 0.5).unwrap();
        let b = fitness(&m2, &moved, 0.5).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn inferred_edges_are_proper(
        nodes in prop::collection::vec(point(), 1..10),
        frames in prop::collection::vec(prop::collection::vec(point(), 8), 2..6),
        min_count in 1usize..3,
    ) {
        let edges = infer_edges(&nodes, &PositionLog { frames }, min_count).unwrap();
        for &(u, v) in &edges {
            prop_assert!(u < v && v < nodes.len());
        }
        prop_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(SpatialGraph::new(nodes, edges).is_ok());
    }

    #[test]
    fn agreement_is_a_symmetric_similarity(
        (a, b, n) in (1usize..12, 1u32..50)
            .prop_flat_map(|(len, n)| (sir_rows(n, len), sir_rows(n, len), Just(n as usize))),
    ) {
        let (a, b) = (trajectory(a, n), trajectory(b, n));
        let ab = agreement(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, agreement(&b, &a).unwrap());
        prop_assert_eq!(agreement(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn fitted_markov_rows_are_distributions(
        n_nodes in 2usize..6,
        n_agents in 1usize..6,
        moves in prop::collection::vec(prop::collection::vec(0usize..3, 6), 6),
        classes in prop::collection::vec(0u8..3, 36),
        alpha in prop_oneof![Just(0.0), 0.1..2.0f64],
    ) {
        // path graph 0 - 1 - ... - (n_nodes - 1); moves: 0 stay, 1 left, 2 right
        let nodes: Vec<Point> = (0..n_nodes).map(|i| Point::new(i as f64, 0.0)).collect();
        let graph = SpatialGraph::new(nodes, (1..n_nodes).map(|i| (i - 1, i))).unwrap();
        let mut pos = vec![0usize; n_agents];
        let mut frames = vec![pos.clone()];
        for step in &moves {
            for (a, p) in pos.iter_mut().enumerate() {
                match step[a] {
                    1 if *p > 0 => *p -= 1,
                    2 if *p + 1 < n_nodes => *p += 1,
                    _ => {}
                }
            }
            frames.push(pos.clone());
        }
        let class = |c: u8| [MacroClass::Susceptible, MacroClass::Infectious, MacroClass::Removed][c as usize];
        let epi = EpiLog {
            classes: (0..frames.len()).map(|t| (0..n_agents).map(|a| class(classes[t * 5 + a])).collect()).collect(),
            clock_ratio: vec![vec![0.5; n_agents]; frames.len()],
        };
        let log = NodeLog { frames };
        let model = fit_mc(&log, &epi, &graph, &NeighborBins::default(), alpha).unwrap();
        for_each_transition(&log, &epi, &graph, |ctx, _| {
            let row = model.lookup(ctx).expect("observed context has a row");
            assert_eq!(row.len(), graph.neighbors(ctx.node).len() + 1);
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        })
        .unwrap();
    }
}
