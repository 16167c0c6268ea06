//! Sensor-network simulation: local filtering at every node, one exchange
//! round per scan, sequential fusion and optional feedback.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, WeightPolicy};
use crate::error::{Error, Result};
use crate::filter::{extract_estimates, filter_step, initialize_tracks};
use crate::fusion::{metropolis_fold_weights, sequential_fuse, FusionWeights};
use crate::metrics::{approximation_error, efficiency_proportion, ospa};
use crate::rfs::{MbPosterior, SingleState};
use crate::tbd::{generate_frame, SensorModel};

/// Environment variable bounding the number of Monte Carlo worker threads.
pub const THREADS_ENV: &str = "GCIMB_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkMode {
    /// Local filters never see the fused posterior.
    #[default]
    M1,
    /// The fused posterior replaces the local one before the next scan.
    M2,
}

impl fmt::Display for WorkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkMode::M1 => "M1",
            WorkMode::M2 => "M2",
        })
    }
}

impl FromStr for WorkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(WorkMode::M1),
            "M2" => Ok(WorkMode::M2),
            _ => Err(Error::config("mode", format!("expected M1 or M2, got `{s}`"))),
        }
    }
}

/// Undirected connected sensor graph. Nodes are indexed from zero.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTopology {
    sensors: Vec<SensorModel>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl NetworkTopology {
    pub fn new(sensors: Vec<SensorModel>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = sensors.len();
        if n == 0 {
            return Err(Error::domain("network needs at least one node"));
        }
        let mut adjacency = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::domain(format!("edge ({a}, {b}) refers to a missing node")));
            }
            if a == b {
                return Err(Error::domain(format!("self-loop at node {a}")));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::domain("network is not connected"));
        }
        Ok(Self { sensors, adjacency })
    }

    /// Path graph `0 - 1 - … - (n−1)` with identical sensors.
    pub fn chain(n: usize, sensor: SensorModel) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(vec![sensor; n], &edges)
    }

    pub fn node_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn sensor(&self, node: usize) -> &SensorModel {
        &self.sensors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency.get(node).map_or(0, |s| s.len())
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency.get(a).is_some_and(|s| s.contains(&b))
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, node: usize) -> Result<Vec<usize>> {
        self.adjacency
            .get(node)
            .map(|s| s.iter().copied().collect())
            .ok_or_else(|| Error::domain(format!("node {node} does not exist")))
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    /// Nodes adjacent to every other node, whose fused posterior therefore
    /// includes information from the whole network.
    pub fn informed_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&v| self.degree(v) + 1 == self.node_count())
            .collect()
    }
}

/// Outcome of one scan at one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub node: usize,
    pub local_ospa: f64,
    pub fused_ospa: f64,
    pub local_estimates: Vec<SingleState>,
    pub fused_estimates: Vec<SingleState>,
    /// Expected number of targets `Σ r` of the local posterior.
    pub card_local: f64,
    pub card_fused: f64,
    /// Nodes whose posteriors entered this node's fusion, in fold order.
    pub fusion_inputs: Vec<usize>,
    /// Powered-sum approximation error of the local posterior at its own
    /// estimates.
    pub approximation_error: f64,
    pub approximation_relative_error: f64,
}

/// Runs one scenario with node `i` drawing frames and filter noise from
/// RNG streams derived from `seed` and `streams[i]`.
pub fn run_scenario_with_streams(config: &ScenarioConfig, seed: u64, streams: &[u64]) -> Result<Vec<StepRecord>> {
    config.validate()?;
    let topology = config.topology()?;
    let n = topology.node_count();
    if streams.len() != n {
        return Err(Error::domain(format!("{n} nodes need {n} streams, got {}", streams.len())));
    }
    let truth = config.ground_truth();
    let fusion_cfg = config.fusion_config();
    let ospa_params = config.metrics.ospa();
    let omega = config.metrics.approximation_omega;

    let rng_for = |stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    };
    let mut frame_rngs: Vec<ChaCha8Rng> = streams.iter().map(|&s| rng_for(2 * s)).collect();
    let mut filter_rngs: Vec<ChaCha8Rng> = streams.iter().map(|&s| rng_for(2 * s + 1)).collect();

    let mut plans = Vec::with_capacity(n);
    for v in 0..n {
        let neighbors = topology.neighbors(v)?;
        let weights = match config.fusion.policy {
            WeightPolicy::Metropolis => metropolis_fold_weights(&topology, v)?,
            WeightPolicy::Fixed => {
                let w = FusionWeights::new(config.fusion.own_weight, 1.0 - config.fusion.own_weight)?;
                vec![w; neighbors.len()]
            }
        };
        plans.push((neighbors, weights));
    }

    let initial = truth.states_at(1);
    let mut working: Vec<MbPosterior> = filter_rngs
        .iter_mut()
        .map(|rng| initialize_tracks(&initial, &config.filter, rng))
        .collect();

    let mut records = Vec::with_capacity(config.steps * n);
    for k in 1..=config.steps {
        let truth_k = truth.states_at(k);
        let locals: Vec<MbPosterior> = (0..n)
            .map(|v| {
                let sensor = topology.sensor(v);
                let frame = generate_frame(&truth_k, sensor, k, &mut frame_rngs[v]);
                filter_step(
                    &working[v],
                    &frame,
                    sensor,
                    &config.motion,
                    &config.filter,
                    k == 1,
                    &mut filter_rngs[v],
                )
            })
            .collect();

        let mut fused_all = Vec::with_capacity(n);
        for v in 0..n {
            let (neighbors, weights) = &plans[v];
            let mut inputs = vec![v];
            inputs.extend(neighbors);
            let posts: Vec<MbPosterior> = inputs.iter().map(|&u| locals[u].clone()).collect();
            let fused = sequential_fuse(&posts, weights, &fusion_cfg)?;

            let local_est = extract_estimates(&locals[v], &config.filter);
            let fused_est = extract_estimates(&fused, &config.filter);
            let approx = approximation_error(&locals[v], &local_est, omega)?;
            records.push(StepRecord {
                step: k,
                node: v,
                local_ospa: ospa(&local_est, &truth_k, &ospa_params),
                fused_ospa: ospa(&fused_est, &truth_k, &ospa_params),
                card_local: locals[v].expected_cardinality(),
                card_fused: fused.expected_cardinality(),
                local_estimates: local_est,
                fused_estimates: fused_est,
                fusion_inputs: inputs,
                approximation_error: approx.error,
                approximation_relative_error: approx.relative_error,
            });
            fused_all.push(fused);
        }

        working = match config.mode {
            WorkMode::M1 => locals,
            WorkMode::M2 => fused_all,
        };
    }
    Ok(records)
}

/// Runs one scenario; node `i` uses stream `i`.
pub fn run_scenario(config: &ScenarioConfig, seed: u64) -> Result<Vec<StepRecord>> {
    let n = config.topology()?.node_count();
    let streams: Vec<u64> = (0..n as u64).collect();
    run_scenario_with_streams(config, seed, &streams)
}

/// Mean statistics of one node at one scan across Monte Carlo runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepStats {
    pub step: usize,
    pub node: usize,
    pub local_ospa: f64,
    pub fused_ospa: f64,
    pub card_local: f64,
    pub card_fused: f64,
}

/// Per-node statistics over all scans and runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeStats {
    pub node: usize,
    pub local_ospa: f64,
    pub fused_ospa: f64,
    pub local_efficiency: f64,
    pub fused_efficiency: f64,
    /// Mean approximation error over scans with an efficient local
    /// estimate; NaN when there are none.
    pub approximation_error: f64,
    pub approximation_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub mode: WorkMode,
    pub seeds: Vec<u64>,
    pub by_step: Vec<StepStats>,
    pub by_node: Vec<NodeStats>,
    pub informed_nodes: Vec<usize>,
    /// Mean fused OSPA over the informed nodes.
    pub informed_fused_ospa: f64,
    pub network_local_ospa: f64,
    pub network_fused_ospa: f64,
}

/// Thread pool sized by `GCIMB_THREADS` when set, rayon's default otherwise.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::config(THREADS_ENV, format!("expected a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::domain(e.to_string()))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Runs `seeds.len()` independent replications in parallel and averages
/// them. Aggregation is in seed order, so results do not depend on the
/// thread count.
pub fn monte_carlo_seeds(config: &ScenarioConfig, seeds: &[u64]) -> Result<MonteCarloSummary> {
    if seeds.is_empty() {
        return Err(Error::domain("Monte Carlo needs at least one run"));
    }
    config.validate()?;
    let topology = config.topology()?;
    let pool = worker_pool()?;
    let runs: Vec<Vec<StepRecord>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_scenario(config, s))
            .collect::<Result<Vec<_>>>()
    })?;
    let n = topology.node_count();
    let threshold = config.metrics.threshold();

    let mut by_step = Vec::with_capacity(config.steps * n);
    for (idx, rec) in runs[0].iter().enumerate() {
        let all = || runs.iter().map(|r| &r[idx]);
        by_step.push(StepStats {
            step: rec.step,
            node: rec.node,
            local_ospa: mean(all().map(|r| r.local_ospa)),
            fused_ospa: mean(all().map(|r| r.fused_ospa)),
            card_local: mean(all().map(|r| r.card_local)),
            card_fused: mean(all().map(|r| r.card_fused)),
        });
    }

    let mut by_node = Vec::with_capacity(n);
    for v in 0..n {
        let recs: Vec<&StepRecord> = runs.iter().flatten().filter(|r| r.node == v).collect();
        let local: Vec<f64> = recs.iter().map(|r| r.local_ospa).collect();
        let fused: Vec<f64> = recs.iter().map(|r| r.fused_ospa).collect();
        let efficient = || recs.iter().filter(|r| r.local_ospa < threshold);
        by_node.push(NodeStats {
            node: v,
            local_ospa: mean(local.iter().copied()),
            fused_ospa: mean(fused.iter().copied()),
            local_efficiency: efficiency_proportion(&local, threshold)?,
            fused_efficiency: efficiency_proportion(&fused, threshold)?,
            approximation_error: mean(efficient().map(|r| r.approximation_error)),
            approximation_relative_error: mean(efficient().map(|r| r.approximation_relative_error)),
        });
    }

    let informed = topology.informed_nodes();
    Ok(MonteCarloSummary {
        mode: config.mode,
        seeds: seeds.to_vec(),
        informed_fused_ospa: mean(informed.iter().map(|&v| by_node[v].fused_ospa)),
        network_local_ospa: mean(by_node.iter().map(|s| s.local_ospa)),
        network_fused_ospa: mean(by_node.iter().map(|s| s.fused_ospa)),
        informed_nodes: informed,
        by_step,
        by_node,
    })
}

/// Seeds `seed, seed + 1, …, seed + runs − 1`.
pub fn run_seeds(seed: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| seed.wrapping_add(i)).collect()
}

pub fn monte_carlo(config: &ScenarioConfig, runs: usize, seed: u64) -> Result<MonteCarloSummary> {
    monte_carlo_seeds(config, &run_seeds(seed, runs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Row {
    pub sensors: usize,
    pub mode: WorkMode,
    /// Mean fused OSPA at the informed nodes.
    pub ospa: f64,
    pub network_ospa: f64,
}

/// Mean OSPA for chains of 1, 2 and 3 sensors in both work modes.
pub fn table1(base: &ScenarioConfig, runs: usize, seed: u64) -> Result<Vec<Table1Row>> {
    let mut rows: Vec<Table1Row> = Vec::with_capacity(6);
    for sensors in 1..=3 {
        for mode in [WorkMode::M1, WorkMode::M2] {
            // A lone sensor has nothing to fuse or feed back.
            if sensors == 1 && mode == WorkMode::M2 {
                let m1 = rows[rows.len() - 1].clone();
                rows.push(Table1Row { mode, ..m1 });
                continue;
            }
            let mut cfg = base.clone();
            cfg.network.nodes = sensors;
            cfg.network.edges = None;
            cfg.mode = mode;
            cfg.runs = runs;
            cfg.seed = seed;
            let s = monte_carlo(&cfg, runs, seed)?;
            rows.push(Table1Row {
                sensors,
                mode,
                ospa: s.informed_fused_ospa,
                network_ospa: s.network_fused_ospa,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::metropolis_weights;

    fn sensor() -> SensorModel {
        SensorModel::from_snr((50, 50), (1.0, 1.0), 15.0, 1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn topology_checks() {
        assert!(NetworkTopology::new(vec![sensor(); 2], &[(0, 0)]).is_err());
        assert!(NetworkTopology::new(vec![sensor(); 3], &[(0, 1)]).is_err());
        let t = NetworkTopology::chain(3, sensor()).unwrap();
        assert_eq!(t.degree(1), 2);
        assert_eq!(t.neighbors(1).unwrap(), vec![0, 2]);
        assert_eq!(t.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(t.informed_nodes(), vec![1]);
        assert_eq!(NetworkTopology::chain(2, sensor()).unwrap().informed_nodes(), vec![0, 1]);
    }

    #[test]
    fn metropolis_examples() {
        let two = NetworkTopology::chain(2, sensor()).unwrap();
        assert_eq!(metropolis_weights(&two, 0, 1).unwrap().w2, 0.5);
        let three = NetworkTopology::chain(3, sensor()).unwrap();
        let w = metropolis_weights(&three, 1, 0).unwrap();
        assert!((w.w2 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w, metropolis_weights(&three, 0, 1).unwrap());
        assert!(matches!(metropolis_weights(&three, 0, 2), Err(Error::NotAdjacent { .. })));
    }

    #[test]
    fn fold_weights_reproduce_metropolis_row() {
        let t = NetworkTopology::chain(3, sensor()).unwrap();
        let f = metropolis_fold_weights(&t, 1).unwrap();
        // Final exponents: self = Π w1, neighbor k = w2_k Π_{later} w1.
        let self_exp = f[0].w1 * f[1].w1;
        let first = f[0].w2 * f[1].w1;
        let second = f[1].w2;
        for e in [self_exp, first, second] {
            assert!((e - 1.0 / 3.0).abs() < 1e-12);
        }
        let end = metropolis_fold_weights(&t, 0).unwrap();
        assert!((end[0].w1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("m2".parse::<WorkMode>().unwrap(), WorkMode::M2);
        assert!("M3".parse::<WorkMode>().is_err());
        assert_eq!(WorkMode::M1.to_string(), "M1");
    }
}
