//! The scalable cluster-then-decluster pipeline.
//!
//! Four steps: (1) dispatch the grand coalition and record the optimized
//! battery schedules, (2) cluster the post-dispatch load profiles, (3) play
//! the cooperative game between clusters (each cluster keeps its members'
//! original loads and batteries), (4) distribute each cluster's payoff to
//! its members in proportion to their absolute standalone costs. The number
//! of dispatch LPs drops from `2^N` to `1 + N + 2^K`.

use crate::cluster::{select_clustering, ClusterAssignment, ClusterError, ProfileMatrix, SelectedClustering};
use crate::dispatch::{CostEvaluator, DispatchError, DispatchSolution};
use crate::game::{
    nucleolus_capped, CoalitionGame, GameError, NucleolusError, PayoffAllocation, Provenance,
    DEFAULT_PLAYER_CAP,
};
use crate::model::{Coalition, Scenario};
use rayon::prelude::*;
use thiserror::Error;

/// A scenario together with a prosumer-to-cluster assignment.
#[derive(Debug, Clone)]
pub struct ClusteredScenario<'a> {
    pub scenario: &'a Scenario,
    pub k: usize,
    /// `assignment[i]` is prosumer `i`'s cluster in `[0, k)`.
    pub assignment: Vec<usize>,
    /// Prosumer bitmask per cluster; all nonempty, disjoint, covering.
    cluster_masks: Vec<Coalition>,
}

#[derive(Debug, Error)]
pub enum ClusteredScenarioError {
    #[error("assignment covers {actual} prosumers, scenario has {expected}")]
    WrongLength { expected: usize, actual: usize },
    #[error("cluster index {index} out of range for k={k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
}

impl<'a> ClusteredScenario<'a> {
    pub fn new(
        scenario: &'a Scenario,
        k: usize,
        assignment: Vec<usize>,
    ) -> Result<Self, ClusteredScenarioError> {
        if assignment.len() != scenario.n_prosumers() {
            return Err(ClusteredScenarioError::WrongLength {
                expected: scenario.n_prosumers(),
                actual: assignment.len(),
            });
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &a) in assignment.iter().enumerate() {
            if a >= k {
                return Err(ClusteredScenarioError::IndexOutOfRange { index: a, k });
            }
            members[a].push(i);
        }
        if let Some(j) = members.iter().position(|m| m.is_empty()) {
            return Err(ClusteredScenarioError::EmptyCluster(j));
        }
        let cluster_masks = members
            .iter()
            .map(|m| Coalition::from_members(m.iter().copied()))
            .collect();
        Ok(ClusteredScenario {
            scenario,
            k,
            assignment,
            cluster_masks,
        })
    }

    pub fn from_assignment(
        scenario: &'a Scenario,
        clusters: &ClusterAssignment,
    ) -> Result<Self, ClusteredScenarioError> {
        Self::new(scenario, clusters.k, clusters.assignment.clone())
    }

    pub fn cluster_mask(&self, j: usize) -> Coalition {
        self.cluster_masks[j]
    }

    pub fn members_of(&self, j: usize) -> Vec<usize> {
        self.cluster_masks[j].members()
    }

    /// The prosumer coalition behind a coalition of clusters.
    pub fn expand(&self, cluster_coalition: Coalition) -> Coalition {
        cluster_coalition
            .members()
            .into_iter()
            .fold(Coalition::empty(), |acc, j| acc.union(self.cluster_masks[j]))
    }
}

/// Step 1: dispatch the grand coalition, recording cost and schedules.
pub fn grand_dispatch(evaluator: &CostEvaluator) -> Result<DispatchSolution, DispatchError> {
    evaluator.solve(evaluator.scenario().grand_coalition())
}

/// Step 2: per-prosumer post-dispatch profiles `l* = q + b*`.
pub fn post_dispatch_profiles(
    scenario: &Scenario,
    grand: &DispatchSolution,
) -> Result<ProfileMatrix, ClusterError> {
    let rows = scenario
        .prosumers
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = p.net_load.clone();
            if let Some(b) = grand.schedule_for(i) {
                for (l, bi) in row.iter_mut().zip(b) {
                    *l += bi;
                }
            }
            row
        })
        .collect();
    ProfileMatrix::new(rows)
}

/// Step 3: the K-player game between clusters. Each cluster coalition's
/// cost is the dispatch cost of the union of its members' original inputs,
/// and `v(U) = sum_{i in U's members} C({i}) - C(U)`. Unlike the prosumer
/// game, singleton clusters can already be worth more than zero.
pub fn build_clustered_game(
    clustered: &ClusteredScenario,
    evaluator: &CostEvaluator,
    cap: usize,
) -> Result<CoalitionGame, GameError> {
    let k = clustered.k;
    if k > cap || k > 63 {
        return Err(GameError::CapExceeded { n: k, cap: cap.min(63) });
    }
    let n = clustered.scenario.n_prosumers();
    let singleton_prosumer_costs = (0..n)
        .map(|i| evaluator.cost(Coalition::singleton(i)))
        .collect::<Result<Vec<f64>, _>>()?;

    let values = (0u64..1u64 << k)
        .into_par_iter()
        .map(|mask| {
            if mask == 0 {
                return Ok(0.0);
            }
            let union = clustered.expand(Coalition::from_mask(mask));
            let joint = evaluator.cost(union)?;
            let separate: f64 = union
                .members()
                .iter()
                .map(|&i| singleton_prosumer_costs[i])
                .sum();
            Ok(separate - joint)
        })
        .collect::<Result<Vec<f64>, DispatchError>>()?;

    let singleton_costs = (0..k)
        .map(|j| evaluator.cost(clustered.cluster_mask(j)))
        .collect::<Result<Vec<f64>, _>>()?;

    Ok(CoalitionGame {
        n_players: k,
        values,
        singleton_costs,
    })
}

/// How cluster payoffs are turned into prosumer payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclusterMode {
    /// Distribute the formula amount `u_j + v({cl_j})` verbatim. The total
    /// handed out exceeds `v(cl_K)` by `sum_j v({cl_j})`.
    PaperLiteral,
    /// Distribute the cluster nucleolus `u_j` alone, so prosumer payoffs
    /// sum to the clustered grand value.
    EfficiencyPreserving,
}

impl DeclusterMode {
    pub fn name(&self) -> &'static str {
        match self {
            DeclusterMode::PaperLiteral => "paper-literal",
            DeclusterMode::EfficiencyPreserving => "efficiency-preserving",
        }
    }
}

impl std::str::FromStr for DeclusterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper-literal" => Ok(DeclusterMode::PaperLiteral),
            "efficiency-preserving" => Ok(DeclusterMode::EfficiencyPreserving),
            other => Err(format!(
                "unknown mode `{other}` (expected paper-literal or efficiency-preserving)"
            )),
        }
    }
}

/// Step 4 output.
#[derive(Debug, Clone)]
pub struct DeclusterOutcome {
    pub allocation: PayoffAllocation,
    /// Amount distributed within each cluster.
    pub cluster_amounts: Vec<f64>,
    /// Clusters where every member's standalone cost was zero and the
    /// amount was split equally instead of proportionally.
    pub equal_split_clusters: Vec<usize>,
    /// Sum of all prosumer payoffs.
    pub total: f64,
}

/// Distributes cluster payoffs to member prosumers in proportion to the
/// absolute value of each member's standalone cost.
pub fn decluster_payoffs(
    cluster_payoffs: &[f64],
    cluster_game: &CoalitionGame,
    singleton_costs: &[f64],
    clustered: &ClusteredScenario,
    mode: DeclusterMode,
) -> DeclusterOutcome {
    assert_eq!(cluster_payoffs.len(), clustered.k);
    assert_eq!(singleton_costs.len(), clustered.scenario.n_prosumers());

    let mut payoffs = vec![0.0; clustered.scenario.n_prosumers()];
    let mut cluster_amounts = Vec::with_capacity(clustered.k);
    let mut equal_split_clusters = Vec::new();

    for j in 0..clustered.k {
        let singleton_value = cluster_game.value(Coalition::singleton(j));
        let amount = match mode {
            DeclusterMode::PaperLiteral => cluster_payoffs[j] + singleton_value,
            DeclusterMode::EfficiencyPreserving => cluster_payoffs[j],
        };
        cluster_amounts.push(amount);

        let members = clustered.members_of(j);
        let weight_total: f64 = members.iter().map(|&i| singleton_costs[i].abs()).sum();
        if weight_total > 0.0 {
            for &i in &members {
                payoffs[i] = amount * singleton_costs[i].abs() / weight_total;
            }
        } else {
            equal_split_clusters.push(j);
            let share = amount / members.len() as f64;
            for &i in &members {
                payoffs[i] = share;
            }
        }
    }

    let total = payoffs.iter().sum();
    DeclusterOutcome {
        allocation: PayoffAllocation {
            payoffs,
            provenance: Provenance::Declustered,
        },
        cluster_amounts,
        equal_split_clusters,
        total,
    }
}

/// Everything the pipeline produced, plus instrumentation.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub grand_cost: f64,
    /// Optimized grand-coalition battery schedule, one row per prosumer.
    pub grand_schedule: Vec<Vec<f64>>,
    pub selection: SelectedClustering,
    pub cluster_game: CoalitionGame,
    /// Nucleolus of the cluster game.
    pub cluster_payoffs: Vec<f64>,
    pub nucleolus_rounds: usize,
    /// Cluster singleton values `v({cl_j})`.
    pub cluster_singleton_values: Vec<f64>,
    pub decluster: DeclusterOutcome,
    pub mode: DeclusterMode,
    pub kmeans_seed: u64,
    /// Dispatch-cost evaluations requested: 1 grand + N singletons +
    /// (2^k - 1) cluster coalitions. Coinciding masks are served from the
    /// memo cache.
    pub dispatch_requests: usize,
    /// Dispatch LPs actually solved (requests minus cache hits).
    pub dispatch_lp_solves: usize,
    /// LPs solved inside the nucleolus rounds.
    pub nucleolus_lp_solves: usize,
}

impl PipelineResult {
    pub fn prosumer_payoffs(&self) -> &[f64] {
        &self.decluster.allocation.payoffs
    }

    /// Total LP solves across dispatch and nucleolus stages.
    pub fn total_lp_solves(&self) -> usize {
        self.dispatch_lp_solves + self.nucleolus_lp_solves
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("grand dispatch: {0}")]
    GrandDispatch(#[source] DispatchError),
    #[error("post-dispatch profiles: {0}")]
    Profiles(#[source] ClusterError),
    #[error("clustering: {0}")]
    Clustering(#[source] ClusterError),
    #[error("cluster assignment: {0}")]
    Assignment(#[from] ClusteredScenarioError),
    #[error("clustered game: {0}")]
    ClusteredGame(#[source] GameError),
    #[error("cluster nucleolus: {0}")]
    Nucleolus(#[source] NucleolusError),
}

/// Pipeline knobs; `seed` drives the K-means restarts.
#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub k: usize,
    pub kmeans_runs: usize,
    pub eurelax: f64,
    pub seed: u64,
    pub mode: DeclusterMode,
    pub cap: usize,
}

impl PipelineOptions {
    pub fn new(k: usize) -> Self {
        PipelineOptions {
            k,
            kmeans_runs: 1000,
            eurelax: 0.01,
            seed: 0,
            mode: DeclusterMode::EfficiencyPreserving,
            cap: DEFAULT_PLAYER_CAP,
        }
    }
}

/// Runs the four pipeline steps on a validated scenario.
pub fn run_pipeline(scenario: &Scenario, opts: &PipelineOptions) -> Result<PipelineResult, PipelineError> {
    let evaluator = CostEvaluator::new(scenario);
    run_pipeline_with(scenario, opts, &evaluator)
}

/// As [`run_pipeline`], with a caller-supplied evaluator so LP counts can
/// be inspected alongside the result.
pub fn run_pipeline_with(
    scenario: &Scenario,
    opts: &PipelineOptions,
    evaluator: &CostEvaluator,
) -> Result<PipelineResult, PipelineError> {
    let grand = grand_dispatch(evaluator).map_err(PipelineError::GrandDispatch)?;

    let profiles =
        post_dispatch_profiles(scenario, &grand).map_err(PipelineError::Profiles)?;
    let selection = select_clustering(
        &profiles,
        opts.k,
        opts.kmeans_runs,
        opts.eurelax,
        opts.seed,
    )
    .map_err(PipelineError::Clustering)?;

    let clustered = ClusteredScenario::from_assignment(scenario, &selection.chosen)?;
    let cluster_game = build_clustered_game(&clustered, evaluator, opts.cap)
        .map_err(PipelineError::ClusteredGame)?;

    let (cluster_payoffs, nucleolus_rounds, nucleolus_lp_solves) = if opts.k == 1 {
        // One cluster: efficiency pins its payoff outright.
        (vec![cluster_game.value(Coalition::grand(1))], 0, 0)
    } else {
        let outcome =
            nucleolus_capped(&cluster_game, opts.cap).map_err(PipelineError::Nucleolus)?;
        (
            outcome.allocation.payoffs,
            outcome.rounds,
            outcome.lp_solves,
        )
    };

    let cluster_singleton_values = (0..opts.k)
        .map(|j| cluster_game.value(Coalition::singleton(j)))
        .collect::<Vec<f64>>();

    let n = scenario.n_prosumers();
    let singleton_costs: Vec<f64> = (0..n)
        .map(|i| {
            evaluator
                .cost(Coalition::singleton(i))
                .expect("singleton already computed for the clustered game")
        })
        .collect();

    let decluster = decluster_payoffs(
        &cluster_payoffs,
        &cluster_game,
        &singleton_costs,
        &clustered,
        opts.mode,
    );

    // Grand + N singletons + (2^k - 1) cluster coalitions; the k cluster
    // singleton reads, the decluster re-reads and the final singleton pass
    // all hit the cache and are not requests of new coalitions.
    let dispatch_requests = 1 + n + ((1usize << opts.k) - 1);

    let mut grand_schedule = vec![vec![0.0; scenario.horizon]; n];
    for (i, row) in grand_schedule.iter_mut().enumerate() {
        if let Some(b) = grand.schedule_for(i) {
            row.copy_from_slice(b);
        }
    }

    Ok(PipelineResult {
        grand_cost: grand.cost,
        grand_schedule,
        selection,
        cluster_game,
        cluster_payoffs,
        nucleolus_rounds,
        cluster_singleton_values,
        decluster,
        mode: opts.mode,
        kmeans_seed: opts.seed,
        dispatch_requests,
        dispatch_lp_solves: evaluator.lp_solves(),
        nucleolus_lp_solves,
    })
}
