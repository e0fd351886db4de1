//! Small end-to-end checks on a model that has only ever seen a clean house.

use std::sync::OnceLock;

use subdiff::datasets::HOUSE_EDGES;
use subdiff::diffusion::{eval_loss, train, DiffusionModel, TrainConfig};
use subdiff::edit::{run_edit, EditRequest, EditTask};
use subdiff::subgraph::{global_context, Subgraph};
use subdiff::{rng_stream, Graph};

const SAMPLES: usize = 64;

fn house() -> Graph {
    Graph::from_edges(5, HOUSE_EDGES).unwrap()
}

fn house_subgraph() -> Subgraph {
    let g = house();
    let c = global_context(&g, 2).unwrap();
    Subgraph::induced(&g, &c, &[0, 1, 2, 3, 4], 0).unwrap()
}

fn config(steps: usize) -> TrainConfig {
    TrainConfig {
        t_max: 20,
        layers: 2,
        hidden: 16,
        steps,
        batch: 4,
        lr: 3e-3,
        n_max: 8,
        seed: 1,
        ..Default::default()
    }
}

fn model() -> &'static DiffusionModel {
    static MODEL: OnceLock<DiffusionModel> = OnceLock::new();
    MODEL.get_or_init(|| train(&[house_subgraph()], &config(500)).unwrap().model)
}

/// Brute force over all relabelings.
fn isomorphic(a: &Graph, b: &Graph) -> bool {
    fn perms(k: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in 0..k {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                perms(k, cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    if a.n() != b.n() || a.edge_count() != b.edge_count() {
        return false;
    }
    let mut all = Vec::new();
    perms(a.n(), &mut Vec::new(), &mut vec![false; a.n()], &mut all);
    all.iter().any(|p| a.edges().all(|e| b.has_edge(p[e.0], p[e.1])))
}

#[test]
fn isomorphism_oracle_sanity() {
    let h = house();
    assert!(isomorphic(&h, &h.permute(&[4, 2, 0, 3, 1]).unwrap()));
    let mut moved = h.clone();
    moved.remove_edge(0, 4);
    moved.insert_edge(2, 4);
    assert!(isomorphic(&h, &moved));
    let mut pendant = h.clone();
    pendant.remove_edge(0, 4);
    pendant.insert_edge(0, 2);
    assert!(!isomorphic(&h, &pendant));
}

#[test]
fn samples_reproduce_the_house() {
    let m = model();
    let s = house_subgraph();
    let mut rng = rng_stream(11, 0);
    let mut hits = 0;
    let mut edges = 0;
    for _ in 0..SAMPLES {
        let g = m.reverse_sample(5, s.context.clone(), &mut rng).unwrap().graph();
        edges += g.edge_count();
        hits += usize::from(isomorphic(&g, &house()));
    }
    assert!(hits * 10 >= SAMPLES * 8, "{hits}/{SAMPLES} samples are houses");
    let mean = edges as f64 / SAMPLES as f64;
    assert!((mean - 6.0).abs() <= 0.2 * 6.0, "mean edge count {mean}");
}

#[test]
fn expansion_restores_a_missing_roof_edge() {
    let m = model();
    for (a, b) in [(0, 4), (1, 4)] {
        let mut g = house();
        g.remove_edge(a, b);
        let observed = Subgraph {
            graph: g,
            ..house_subgraph()
        };
        let req = EditRequest {
            observed,
            task: EditTask::Expand,
            rounds: SAMPLES,
            seed: 5,
            style: None,
        };
        let out = run_edit(m, &req).unwrap();
        let hit = out.iter().filter(|o| o.has_edge(a, b)).count();
        assert!(hit * 2 > SAMPLES, "roof edge {a}-{b} restored in {hit}/{SAMPLES}");
    }
}

#[test]
fn denoising_drops_a_spurious_chord() {
    let m = model();
    let h = house();
    for (a, b) in [(0, 2), (1, 3), (2, 4), (3, 4)] {
        let mut g = h.clone();
        g.insert_edge(a, b);
        let observed = Subgraph {
            graph: g,
            ..house_subgraph()
        };
        let req = EditRequest {
            observed,
            task: EditTask::Denoise,
            rounds: SAMPLES,
            seed: 5,
            style: None,
        };
        let out = run_edit(m, &req).unwrap();
        let good = out
            .iter()
            .filter(|o| !o.has_edge(a, b) && h.edges().filter(|e| o.has_edge(e.0, e.1)).count() >= 5)
            .count();
        assert!(good * 2 > SAMPLES, "chord {a}-{b} cleanly dropped in {good}/{SAMPLES}");
    }
}

#[test]
fn overfitting_one_subgraph_drives_the_loss_down() {
    let s = house_subgraph();
    let untrained = train(&[s.clone()], &config(0)).unwrap().model;
    let trained = train(&[s.clone()], &config(2000)).unwrap().model;
    let mean_loss = |m: &DiffusionModel| {
        let mut rng = rng_stream(3, 0);
        (0..32).map(|_| eval_loss(m, &s, 1, &mut rng).unwrap()).sum::<f64>() / 32.0
    };
    let before = mean_loss(&untrained);
    let after = mean_loss(&trained);
    assert!(after < 0.1 * before, "loss at t=1 went from {before} to {after}");
}
