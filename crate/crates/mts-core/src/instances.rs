//! Cost instances: piecewise-constant cost-rate paths over the leaves of a
//! weighted tree, plus discrete cost-vector sequences and generators for the
//! benchmark families used by the command-line driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{TreeFile, WeightedRootedTree};

/// One segment of a piecewise-constant cost path: a nonnegative cost rate per
/// leaf, held for `duration` time units.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSegment {
    pub rates: Vec<f64>,
    pub duration: f64,
}

/// A finite sequence of cost segments over a fixed leaf set. Segments are
/// consecutive in time; total horizon is the sum of durations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostPath {
    pub segments: Vec<CostSegment>,
}

impl CostPath {
    pub fn new(segments: Vec<CostSegment>) -> Result<Self> {
        let path = CostPath { segments };
        path.validate()?;
        Ok(path)
    }

    /// Number of leaves the path is defined over; zero for an empty path.
    pub fn n_leaves(&self) -> usize {
        self.segments.first().map_or(0, |s| s.rates.len())
    }

    pub fn horizon(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_leaves();
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.rates.len() != n {
                return Err(Error::MassArity { expected: n, got: seg.rates.len() });
            }
            if !seg.duration.is_finite() || seg.duration < 0.0 {
                return Err(Error::BadParams {
                    context: format!("segment {} has duration {}", i, seg.duration),
                });
            }
            if seg.rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(Error::BadParams {
                    context: format!("segment {} has a negative or non-finite rate", i),
                });
            }
        }
        Ok(())
    }

    /// Total cost charged to a fixed leaf over the whole path.
    pub fn integrated_cost(&self, leaf: usize) -> f64 {
        self.segments.iter().map(|s| s.rates[leaf] * s.duration).sum()
    }

    /// The largest instantaneous rate appearing anywhere in the path.
    pub fn max_rate(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.rates.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// A discrete request sequence: one nonnegative cost vector per round on a
/// fixed tree, served from `start` (a leaf position).
#[derive(Debug, Clone)]
pub struct DiscreteInstance {
    pub tree: WeightedRootedTree,
    pub costs: Vec<Vec<f64>>,
    pub start: usize,
    pub seed: u64,
}

impl DiscreteInstance {
    pub fn n_rounds(&self) -> usize {
        self.costs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tree.n_leaves();
        if self.start >= n {
            return Err(Error::BadParams {
                context: format!("start leaf {} out of range for {} leaves", self.start, n),
            });
        }
        for (t, row) in self.costs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::MassArity { expected: n, got: row.len() });
            }
            if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::BadParams {
                    context: format!("round {t} has a negative or non-finite cost"),
                });
            }
        }
        Ok(())
    }

    /// Unit-duration continuous embedding: round costs become rates held for
    /// one time unit each.
    pub fn to_path(&self) -> Result<CostPath> {
        CostPath::new(
            self.costs
                .iter()
                .map(|row| CostSegment { rates: row.clone(), duration: 1.0 })
                .collect(),
        )
    }
}

/// A continuous cost path bound to its tree and start leaf.
#[derive(Debug, Clone)]
pub struct ContinuousInstance {
    pub tree: WeightedRootedTree,
    pub path: CostPath,
    pub start: usize,
    pub seed: u64,
}

/// Either instance kind, as read from an instance file.
#[derive(Debug, Clone)]
pub enum Instance {
    Discrete(DiscreteInstance),
    Continuous(ContinuousInstance),
}

impl Instance {
    pub fn tree(&self) -> &WeightedRootedTree {
        match self {
            Instance::Discrete(d) => &d.tree,
            Instance::Continuous(c) => &c.tree,
        }
    }

    pub fn start(&self) -> usize {
        match self {
            Instance::Discrete(d) => d.start,
            Instance::Continuous(c) => c.start,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Instance::Discrete(d) => d.seed,
            Instance::Continuous(c) => c.seed,
        }
    }

    /// The continuous embedding either way.
    pub fn to_path(&self) -> Result<CostPath> {
        match self {
            Instance::Discrete(d) => d.to_path(),
            Instance::Continuous(c) => Ok(c.path.clone()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SegmentFile {
    duration: f64,
    rates: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    tree: TreeFile,
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    costs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<SegmentFile>>,
    start: u64,
    seed: u64,
}

/// Reads an instance from its JSON text form.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| Error::Parse { context: e.to_string() })?;
    let tree = WeightedRootedTree::from_file(&file.tree)?;
    let start = tree.leaf_position_of_id(file.start)?;
    match file.mode.as_str() {
        "discrete" => {
            if file.segments.is_some() {
                return Err(Error::Parse {
                    context: "discrete instance carries a segments field".to_string(),
                });
            }
            let costs = file.costs.ok_or_else(|| Error::Parse {
                context: "discrete instance is missing the costs field".to_string(),
            })?;
            let inst = DiscreteInstance { tree, costs, start, seed: file.seed };
            inst.validate()?;
            Ok(Instance::Discrete(inst))
        }
        "continuous" => {
            if file.costs.is_some() {
                return Err(Error::Parse {
                    context: "continuous instance carries a costs field".to_string(),
                });
            }
            let segments = file.segments.ok_or_else(|| Error::Parse {
                context: "continuous instance is missing the segments field".to_string(),
            })?;
            let path = CostPath::new(
                segments
                    .into_iter()
                    .map(|s| CostSegment { rates: s.rates, duration: s.duration })
                    .collect(),
            )?;
            if path.n_leaves() != tree.n_leaves() {
                return Err(Error::MassArity { expected: tree.n_leaves(), got: path.n_leaves() });
            }
            Ok(Instance::Continuous(ContinuousInstance { tree, path, start, seed: file.seed }))
        }
        other => Err(Error::Parse { context: format!("unknown instance mode {other:?}") }),
    }
}

/// Writes an instance back to its JSON text form.
pub fn serialize_instance(instance: &Instance) -> String {
    let tree = instance.tree();
    let start_id = tree.id(tree.leaves()[instance.start()]);
    let file = match instance {
        Instance::Discrete(d) => InstanceFile {
            tree: tree.to_file(),
            mode: "discrete".to_string(),
            costs: Some(d.costs.clone()),
            segments: None,
            start: start_id,
            seed: d.seed,
        },
        Instance::Continuous(c) => InstanceFile {
            tree: tree.to_file(),
            mode: "continuous".to_string(),
            costs: None,
            segments: Some(
                c.path
                    .segments
                    .iter()
                    .map(|s| SegmentFile { duration: s.duration, rates: s.rates.clone() })
                    .collect(),
            ),
            start: start_id,
            seed: c.seed,
        },
    };
    serde_json::to_string_pretty(&file).expect("instance files always serialize")
}

/// Unit requests on uniformly random points of the uniform metric: the
/// classic sequence that forces a log-factor gap over the offline optimum.
pub fn gen_coupon_collector(n: usize, rounds: usize, seed: u64) -> Result<DiscreteInstance> {
    if n < 2 {
        return Err(Error::BadParams { context: format!("need at least 2 points, got {n}") });
    }
    // Half-unit spokes put every pair at distance exactly 1.
    let tree = WeightedRootedTree::star(&vec![0.5; n])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let costs = (0..rounds)
        .map(|_| {
            let mut row = vec![0.0; n];
            row[rng.gen_range(0..n)] = 1.0;
            row
        })
        .collect();
    Ok(DiscreteInstance { tree, costs, start: 0, seed })
}

/// Adaptive adversary: each round puts unit cost on the algorithm's current
/// heaviest leaf (ties to the lowest leaf id), then lets the algorithm serve
/// via `serve`, which maps the round's cost vector to the post-round leaf
/// masses. The realized sequence is returned as an ordinary static instance
/// so exact offline comparators apply to it.
pub fn gen_cruel(
    tree: &WeightedRootedTree,
    rounds: usize,
    start: usize,
    mut serve: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<DiscreteInstance> {
    let n = tree.n_leaves();
    if start >= n {
        return Err(Error::BadParams {
            context: format!("start leaf {start} out of range for {n} leaves"),
        });
    }
    let mut masses = vec![0.0; n];
    masses[start] = 1.0;
    let mut costs = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut target = 0usize;
        for pos in 1..n {
            let tid = tree.id(tree.leaves()[pos]);
            let best = tree.id(tree.leaves()[target]);
            if masses[pos] > masses[target] || (masses[pos] == masses[target] && tid < best) {
                target = pos;
            }
        }
        let mut row = vec![0.0; n];
        row[target] = 1.0;
        masses = serve(&row)?;
        if masses.len() != n {
            return Err(Error::MassArity { expected: n, got: masses.len() });
        }
        costs.push(row);
    }
    Ok(DiscreteInstance { tree: tree.clone(), costs, start, seed: 0 })
}

/// Piecewise-constant noise: i.i.d. uniform rates in `[0, magnitude]` with
/// segment durations uniform in `[0.1, 1]`.
pub fn gen_random(
    tree: &WeightedRootedTree,
    segments: usize,
    seed: u64,
    magnitude: f64,
) -> Result<CostPath> {
    if !magnitude.is_finite() || magnitude < 0.0 {
        return Err(Error::BadParams { context: format!("magnitude {magnitude} must be nonnegative") });
    }
    let n = tree.n_leaves();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segs = (0..segments)
        .map(|_| {
            let rates = (0..n)
                .map(|_| if magnitude == 0.0 { 0.0 } else { rng.gen_range(0.0..magnitude) })
                .collect();
            CostSegment { rates, duration: rng.gen_range(0.1..1.0) }
        })
        .collect();
    CostPath::new(segs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupon_collector_is_deterministic_unit_cost() {
        let a = gen_coupon_collector(4, 50, 7).unwrap();
        let b = gen_coupon_collector(4, 50, 7).unwrap();
        assert_eq!(a.costs, b.costs);
        assert_eq!(a.n_rounds(), 50);
        for row in &a.costs {
            assert_eq!(row.iter().filter(|&&c| c == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&c| c == 0.0).count(), 3);
        }
        // Uniform metric: every pair at distance 1.
        let m = a.tree.metric_matrix();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.0 } else { 1.0 };
                assert!((m[i][j] - want).abs() < 1e-15);
            }
        }
        assert!(gen_coupon_collector(1, 5, 0).is_err());
    }

    #[test]
    fn cruel_tracks_the_heaviest_leaf() {
        let star = WeightedRootedTree::star(&[1.0, 1.0, 1.0]).unwrap();
        // A frozen server: mass never moves off the start leaf.
        let inst = gen_cruel(&star, 3, 2, |_| Ok(vec![0.0, 0.0, 1.0])).unwrap();
        for row in &inst.costs {
            assert_eq!(row, &vec![0.0, 0.0, 1.0]);
        }

        // Uniform masses tie; the lowest leaf id (position 0 here) gets hit.
        let two = WeightedRootedTree::star(&[1.0, 1.0]).unwrap();
        let mut first = None;
        let _ = gen_cruel(&two, 1, 0, |row| {
            first = Some(row.to_vec());
            Ok(vec![0.5, 0.5])
        })
        .unwrap();
        // Round one sees the point mass at the start.
        assert_eq!(first.unwrap(), vec![1.0, 0.0]);
        let inst = gen_cruel(&two, 2, 0, |_| Ok(vec![0.5, 0.5])).unwrap();
        assert_eq!(inst.costs[1], vec![1.0, 0.0]);
    }

    #[test]
    fn random_paths_are_seeded_and_bounded() {
        let star = WeightedRootedTree::star(&[1.0, 1.0, 1.0]).unwrap();
        let a = gen_random(&star, 20, 9, 2.0).unwrap();
        let b = gen_random(&star, 20, 9, 2.0).unwrap();
        assert_eq!(a, b);
        for seg in &a.segments {
            assert!(seg.duration >= 0.1 && seg.duration < 1.0);
            assert!(seg.rates.iter().all(|&r| (0.0..2.0).contains(&r)));
        }
        let zero = gen_random(&star, 5, 1, 0.0).unwrap();
        assert_eq!(zero.max_rate(), 0.0);
        assert!(gen_random(&star, 5, 1, -1.0).is_err());
    }

    #[test]
    fn random_rate_mean_matches_expectation() {
        // Rates are uniform on [0, 2]: the time-averaged rate per leaf over
        // many segments concentrates near 1.
        let star = WeightedRootedTree::star(&[1.0, 1.0]).unwrap();
        let path = gen_random(&star, 10_000, 123, 2.0).unwrap();
        let horizon = path.horizon();
        for leaf in 0..2 {
            let mean = path.integrated_cost(leaf) / horizon;
            println!("leaf {leaf} mean rate {mean}");
            assert!((mean - 1.0).abs() < 0.05, "mean {mean} drifted");
        }
    }

    #[test]
    fn instance_files_round_trip() {
        let disc = Instance::Discrete(gen_coupon_collector(3, 4, 11).unwrap());
        let text = serialize_instance(&disc);
        let back = parse_instance(&text).unwrap();
        assert_eq!(serialize_instance(&back), text);
        match back {
            Instance::Discrete(d) => {
                assert_eq!(d.seed, 11);
                assert_eq!(d.start, 0);
                assert_eq!(d.n_rounds(), 4);
            }
            _ => panic!("mode flipped"),
        }

        let tree = WeightedRootedTree::star(&[1.0, 2.0]).unwrap();
        let path = gen_random(&tree, 3, 5, 1.0).unwrap();
        let cont =
            Instance::Continuous(ContinuousInstance { tree, path, start: 1, seed: 5 });
        let text = serialize_instance(&cont);
        let back = parse_instance(&text).unwrap();
        assert_eq!(serialize_instance(&back), text);
        assert_eq!(back.start(), 1);
    }

    #[test]
    fn parse_rejects_malformed_instances() {
        let tree = WeightedRootedTree::star(&[1.0, 1.0]).unwrap().to_file();
        let tree_json = serde_json::to_value(&tree).unwrap();
        let cases = [
            serde_json::json!({"tree": tree_json, "mode": "sideways", "costs": [[0.0, 0.0]], "start": 1, "seed": 0}),
            serde_json::json!({"tree": tree_json, "mode": "discrete", "start": 1, "seed": 0}),
            serde_json::json!({"tree": tree_json, "mode": "discrete", "costs": [[0.0]], "start": 1, "seed": 0}),
            serde_json::json!({"tree": tree_json, "mode": "discrete", "costs": [[0.0, -1.0]], "start": 1, "seed": 0}),
            serde_json::json!({"tree": tree_json, "mode": "discrete", "costs": [[0.0, 0.0]], "start": 99, "seed": 0}),
            serde_json::json!({"tree": tree_json, "mode": "continuous", "costs": [[0.0, 0.0]], "start": 1, "seed": 0}),
        ];
        for case in &cases {
            let text = serde_json::to_string(case).unwrap();
            assert!(parse_instance(&text).is_err(), "accepted {text}");
        }
        assert!(parse_instance("{ not json").is_err());
    }
}
