use subdiff::datasets::barabasi_albert;
use subdiff::diffusion::{train, DiffusionState, TrainConfig};
use subdiff::edit::{train_regressor, RegressorConfig, StyleAttr};
use subdiff::subgraph::{global_context, sample_ego_networks, subsample, Subgraph};

#[test]
fn regressor_beats_the_mean_on_held_out_subgraphs() {
    let g = barabasi_albert(120, 2, 4).unwrap();
    let c = global_context(&g, 2).unwrap();
    let subs: Vec<Subgraph> = sample_ego_networks(&g, &c, 2)
        .unwrap()
        .iter()
        .map(|s| subsample(s, 16, 0).unwrap())
        .collect();
    let (fit, held): (Vec<_>, Vec<_>) = subs.iter().cloned().enumerate().partition(|(k, _)| k % 4 != 0);
    let fit: Vec<Subgraph> = fit.into_iter().map(|p| p.1).collect();
    let held: Vec<Subgraph> = held.into_iter().map(|p| p.1).collect();
    // only the schedule and transition of the diffusion model are used
    let cfg = TrainConfig { t_max: 20, layers: 1, hidden: 4, steps: 0, n_max: 16, ..Default::default() };
    let model = train(&fit, &cfg).unwrap().model;
    let attr = StyleAttr::SumDegree;
    let rcfg = RegressorConfig { steps: 600, ..Default::default() };
    let (reg, _) = train_regressor(&fit, attr, &rcfg, &model).unwrap();
    let mut mae = 0.0;
    let mut base = 0.0;
    for s in &held {
        let y = attr.value(&s.graph);
        let st = DiffusionState::from_graph(&s.graph, s.context.clone(), 1);
        mae += (reg.predict(&st) - y).abs();
        base += (reg.mean - y).abs();
    }
    assert!(mae < base, "regressor MAE {mae} vs constant {base} over {} subgraphs", held.len());
}
