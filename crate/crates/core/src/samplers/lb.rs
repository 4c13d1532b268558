//! Locally balanced matching-vector proposals.
//!
//! A proposal enumerates the local move neighborhood of one vector — add,
//! delete, swap one end of a link, or exchange the targets of two links —
//! weights each candidate landing state `y` by the Barker function
//! `g(t) = t / (1 + t)` of its posterior ratio `t = pi(y)/pi(x)`, and samples
//! one. Because `g(t) = t g(1/t)` and the unweighted neighborhood relation is
//! symmetric, the Metropolis-Hastings ratio reduces to the ratio of weight
//! normalizers `Z_g(x) / Z_g(y)`.
//!
//! The neighborhood can be blocked: a random subset of the vector's rows and
//! an equally sized random subset of the earlier records are drawn fresh for
//! each proposal, and only moves whose endpoints all fall inside those
//! subsets are considered.

use std::collections::HashMap;

use rand::Rng;

use crate::comparators::ComparisonSet;
use crate::model::{self, LogRatios, ZPriorHyper};
use crate::schema::FieldSchema;

use super::state::ChainState;

/// One local move on a single matching vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Move {
    /// Link a currently unlinked row to a free target.
    Add { row: usize, target: usize },
    /// Unlink a row.
    Delete { row: usize },
    /// Re-point a linked row at a different free target.
    SwapTarget { row: usize, target: usize },
    /// Hand a row's link to a currently unlinked row (same target).
    SwapSource { from_row: usize, to_row: usize },
    /// Exchange the targets of two linked rows.
    DoubleSwap { row_a: usize, row_b: usize },
}

/// A sampled proposal with the normalizers the acceptance ratio needs.
#[derive(Debug, Clone)]
pub struct MoveProposal {
    pub vector: usize,
    pub chosen: Move,
    /// Log posterior change of the chosen move.
    pub delta_log_post: f64,
    /// Log weight normalizer at the current state.
    pub log_zg_x: f64,
    /// Log weight normalizer at the proposed state.
    pub log_zg_y: f64,
}

/// Row and target subsets a proposal is restricted to.
#[derive(Debug, Clone)]
pub struct BlockConfig {
    pub rows: Vec<usize>,
    pub targets: Vec<usize>,
}

impl BlockConfig {
    /// The whole vector: every row and every earlier record.
    pub fn full(n_rows: usize, n_targets: usize) -> Self {
        BlockConfig {
            rows: (0..n_rows).collect(),
            targets: (0..n_targets).collect(),
        }
    }

    /// Random equal-size subsets (clamped to the available counts).
    pub fn sample<R: Rng>(n_rows: usize, n_targets: usize, size: usize, rng: &mut R) -> Self {
        let take_rows = size.min(n_rows);
        let take_targets = size.min(n_targets);
        BlockConfig {
            rows: rand::seq::index::sample(rng, n_rows, take_rows).into_vec(),
            targets: rand::seq::index::sample(rng, n_targets, take_targets).into_vec(),
        }
    }
}

/// Log Barker weight of a move with log posterior change `delta`:
/// `ln g(e^delta) = -ln(1 + e^(-delta))`.
#[inline]
pub fn log_barker(delta: f64) -> f64 {
    -(-delta).exp().ln_1p()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Enumerates every legal move inside the block with its log posterior
/// change.
pub(crate) fn enumerate_moves(
    state: &ChainState,
    schema: &FieldSchema,
    comps: &ComparisonSet,
    z_hyper: &ZPriorHyper,
    lr: &LogRatios,
    v: usize,
    block: &BlockConfig,
    out: &mut Vec<(Move, f64)>,
) {
    out.clear();
    let z = state.z();
    let n = z.vector(v).len();
    let prev_total = z.prev_total(v);
    let c = z.link_count(v);
    let dprior_add =
        model::log_z_prior_counts(c + 1, n, prev_total, z_hyper)
            - model::log_z_prior_counts(c, n, prev_total, z_hyper);
    let dprior_del = if c > 0 {
        model::log_z_prior_counts(c - 1, n, prev_total, z_hyper)
            - model::log_z_prior_counts(c, n, prev_total, z_hyper)
    } else {
        f64::NEG_INFINITY
    };

    let mut in_targets = vec![false; prev_total];
    for &t in &block.targets {
        in_targets[t] = true;
    }

    let sizes = state.sizes();
    let mut suffixes: HashMap<usize, Vec<(usize, usize, usize)>> = HashMap::new();
    for &row in &block.rows {
        let own = z.self_value(v, row);
        suffixes.insert(row, model::suffix_chain(own, sizes, state.inbound()));
    }
    let mut prefixes: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut prefix_of = |g: usize, z: &crate::linkage::MatchingVectors| -> Vec<usize> {
        prefixes
            .entry(g)
            .or_insert_with(|| model::prefix_chain(g, z))
            .clone()
    };

    // rows split by link status; linked rows only count when their current
    // target is inside the block
    let mut self_rows = Vec::new();
    let mut linked_rows = Vec::new();
    for &row in &block.rows {
        match z.target(v, row) {
            None => self_rows.push(row),
            Some(g) if in_targets[g] => linked_rows.push((row, g)),
            Some(_) => {}
        }
    }
    let free_targets: Vec<usize> = block
        .targets
        .iter()
        .copied()
        .filter(|&t| state.inbound().is_free(t))
        .collect();

    // likelihood change of removing each in-block link
    let mut del_part = Vec::with_capacity(linked_rows.len());
    for &(row, g) in &linked_rows {
        let p = prefix_of(g, z);
        del_part.push(model::cross_llr(schema, comps, lr, &p, &suffixes[&row]));
    }

    for &row in &self_rows {
        for &t in &free_targets {
            let p = prefix_of(t, z);
            let delta = dprior_add + model::cross_llr(schema, comps, lr, &p, &suffixes[&row]);
            out.push((Move::Add { row, target: t }, delta));
        }
    }
    for (i, &(row, _)) in linked_rows.iter().enumerate() {
        out.push((Move::Delete { row }, dprior_del - del_part[i]));
    }
    for (i, &(row, g)) in linked_rows.iter().enumerate() {
        for &t in &free_targets {
            if t == g {
                continue;
            }
            let p = prefix_of(t, z);
            let gain = model::cross_llr(schema, comps, lr, &p, &suffixes[&row]);
            out.push((Move::SwapTarget { row, target: t }, gain - del_part[i]));
        }
    }
    for (i, &(row, g)) in linked_rows.iter().enumerate() {
        let p = prefix_of(g, z);
        for &to_row in &self_rows {
            let gain = model::cross_llr(schema, comps, lr, &p, &suffixes[&to_row]);
            out.push((
                Move::SwapSource {
                    from_row: row,
                    to_row,
                },
                gain - del_part[i],
            ));
        }
    }
    for i in 0..linked_rows.len() {
        for j in (i + 1)..linked_rows.len() {
            let (row_a, ga) = linked_rows[i];
            let (row_b, gb) = linked_rows[j];
            let pa = prefix_of(ga, z);
            let pb = prefix_of(gb, z);
            let delta = model::cross_llr(schema, comps, lr, &pb, &suffixes[&row_a])
                + model::cross_llr(schema, comps, lr, &pa, &suffixes[&row_b])
                - del_part[i]
                - del_part[j];
            out.push((Move::DoubleSwap { row_a, row_b }, delta));
        }
    }
}

/// Applies a move through single-component updates and returns its inverse.
pub(crate) fn apply_move(
    state: &mut ChainState,
    schema: &FieldSchema,
    comps: &ComparisonSet,
    v: usize,
    mv: Move,
) -> Move {
    match mv {
        Move::Add { row, target } => {
            state.set_component(schema, comps, v, row, target);
            Move::Delete { row }
        }
        Move::Delete { row } => {
            let g = state.z().target(v, row).expect("delete needs a link");
            let own = state.z().self_value(v, row);
            state.set_component(schema, comps, v, row, own);
            Move::Add { row, target: g }
        }
        Move::SwapTarget { row, target } => {
            let g = state.z().target(v, row).expect("swap needs a link");
            state.set_component(schema, comps, v, row, target);
            Move::SwapTarget { row, target: g }
        }
        Move::SwapSource { from_row, to_row } => {
            let g = state.z().target(v, from_row).expect("swap needs a link");
            let own = state.z().self_value(v, from_row);
            state.set_component(schema, comps, v, from_row, own);
            state.set_component(schema, comps, v, to_row, g);
            Move::SwapSource {
                from_row: to_row,
                to_row: from_row,
            }
        }
        Move::DoubleSwap { row_a, row_b } => {
            let ga = state.z().target(v, row_a).expect("double swap needs links");
            let gb = state.z().target(v, row_b).expect("double swap needs links");
            let own_a = state.z().self_value(v, row_a);
            state.set_component(schema, comps, v, row_a, own_a);
            state.set_component(schema, comps, v, row_b, ga);
            state.set_component(schema, comps, v, row_a, gb);
            Move::DoubleSwap { row_a, row_b }
        }
    }
}

/// Samples one move from the blocked neighborhood, recording both weight
/// normalizers. Returns `None` when the neighborhood is empty (the chain
/// stays put). The state is left exactly as it was found.
#[allow(clippy::too_many_arguments)]
pub fn lb_propose<R: Rng>(
    state: &mut ChainState,
    schema: &FieldSchema,
    comps: &ComparisonSet,
    z_hyper: &ZPriorHyper,
    lr: &LogRatios,
    v: usize,
    block_size: Option<usize>,
    rng: &mut R,
) -> Option<MoveProposal> {
    let n = state.z().vector(v).len();
    let prev_total = state.z().prev_total(v);
    let block = match block_size {
        None => BlockConfig::full(n, prev_total),
        Some(size) => BlockConfig::sample(n, prev_total, size, rng),
    };
    let mut moves = Vec::new();
    enumerate_moves(state, schema, comps, z_hyper, lr, v, &block, &mut moves);
    if moves.is_empty() {
        return None;
    }
    let log_w: Vec<f64> = moves.iter().map(|(_, d)| log_barker(*d)).collect();
    let log_zx = log_sum_exp(log_w.iter().copied());

    // inverse-CDF over normalized weights with one uniform
    let u: f64 = rng.random();
    let mut idx = log_w.len() - 1;
    let mut acc = 0.0;
    for (i, lw) in log_w.iter().enumerate() {
        acc += (lw - log_zx).exp();
        if u < acc {
            idx = i;
            break;
        }
    }
    let (chosen, delta) = moves[idx];

    let inverse = apply_move(state, schema, comps, v, chosen);
    enumerate_moves(state, schema, comps, z_hyper, lr, v, &block, &mut moves);
    let log_zy = log_sum_exp(moves.iter().map(|(_, d)| log_barker(*d)));
    apply_move(state, schema, comps, v, inverse);

    Some(MoveProposal {
        vector: v,
        chosen,
        delta_log_post: delta,
        log_zg_x: log_zx,
        log_zg_y: log_zy,
    })
}

/// One proposal plus its accept/reject decision; returns whether the state
/// moved.
#[allow(clippy::too_many_arguments)]
pub fn lb_step<R: Rng>(
    state: &mut ChainState,
    schema: &FieldSchema,
    comps: &ComparisonSet,
    z_hyper: &ZPriorHyper,
    lr: &LogRatios,
    v: usize,
    block_size: Option<usize>,
    rng: &mut R,
) -> bool {
    let Some(p) = lb_propose(state, schema, comps, z_hyper, lr, v, block_size, rng) else {
        return false;
    };
    let log_ratio = p.log_zg_x - p.log_zg_y;
    let accept = rng.random::<f64>().ln() < log_ratio;
    if accept {
        apply_move(state, schema, comps, v, p.chosen);
    }
    accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkage::MatchingVectors;
    use crate::model::MuParams;
    use crate::records::{FieldValue, FileSizes, Record, RecordFile};
    use crate::schema::FieldDef;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn corpus() -> (FieldSchema, ComparisonSet, FileSizes) {
        let schema =
            FieldSchema::new(vec![FieldDef::text("n"), FieldDef::categorical("c")]).unwrap();
        let mk = |n: &str, c: &str| Record {
            values: vec![FieldValue::Text(n.into()), FieldValue::Text(c.into())],
        };
        let files = vec![
            RecordFile {
                records: vec![mk("ann", "x"), mk("bob", "y"), mk("cara", "z")],
            },
            RecordFile {
                records: vec![mk("ann", "x"), mk("dan", "w"), mk("bob", "y")],
            },
            RecordFile {
                records: vec![mk("cara", "z"), mk("ann", "q")],
            },
        ];
        let sizes = FileSizes(vec![3, 3, 2]);
        (schema.clone(), ComparisonSet::build(&schema, &files).unwrap(), sizes)
    }

    #[test]
    fn barker_weight_of_equal_density_states_is_half() {
        assert_relative_eq!(log_barker(0.0).exp(), 0.5, epsilon = 1e-15);
        // balance: g(t) = t * g(1/t) in log space
        for d in [-3.0, -0.5, 0.1, 2.7] {
            assert_relative_eq!(log_barker(d), d + log_barker(-d), epsilon = 1e-12);
        }
    }

    #[test]
    fn oversized_block_matches_unblocked_neighborhood() {
        let (schema, comps, sizes) = corpus();
        let mu = MuParams::uniform(&schema);
        let z = MatchingVectors::from_vectors(&sizes, vec![vec![0, 4, 2], vec![6, 1]]).unwrap();
        let state = ChainState::new(&schema, &comps, mu, z).unwrap();
        let lr = LogRatios::new(&state.mu);
        let z_hyper = ZPriorHyper::default();

        // vector 1 belongs to the third file: two rows, six earlier records
        let full = BlockConfig::full(2, 6);
        let mut rng = StdRng::seed_from_u64(1);
        let big = BlockConfig::sample(2, 6, 100, &mut rng);

        let mut a = Vec::new();
        let mut b = Vec::new();
        enumerate_moves(&state, &schema, &comps, &z_hyper, &lr, 1, &full, &mut a);
        enumerate_moves(&state, &schema, &comps, &z_hyper, &lr, 1, &big, &mut b);
        let key = |m: &(Move, f64)| m.0;
        a.sort_by_key(key);
        b.sort_by_key(key);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.0, y.0);
            assert_relative_eq!(x.1, y.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn every_move_has_its_inverse_in_the_new_neighborhood() {
        let (schema, comps, sizes) = corpus();
        let mu = MuParams::uniform(&schema);
        let z = MatchingVectors::from_vectors(&sizes, vec![vec![0, 4, 2], vec![6, 1]]).unwrap();
        let mut state = ChainState::new(&schema, &comps, mu, z).unwrap();
        let lr = LogRatios::new(&state.mu);
        let z_hyper = ZPriorHyper::default();
        // vector 0 belongs to the second file: three rows, three targets
        let block = BlockConfig::full(3, 3);
        let mut moves = Vec::new();
        enumerate_moves(&state, &schema, &comps, &z_hyper, &lr, 0, &block, &mut moves);
        assert!(!moves.is_empty());
        let snapshot = state.z().clone();
        for (mv, delta) in moves.clone() {
            let inverse = apply_move(&mut state, &schema, &comps, 0, mv);
            let mut back = Vec::new();
            enumerate_moves(&state, &schema, &comps, &z_hyper, &lr, 0, &block, &mut back);
            let found = back
                .iter()
                .find(|(m, _)| *m == inverse)
                .unwrap_or_else(|| panic!("inverse of {mv:?} missing"));
            // the inverse move undoes the log posterior change
            assert_relative_eq!(found.1, -delta, epsilon = 1e-9);
            apply_move(&mut state, &schema, &comps, 0, inverse);
            assert_eq!(state.z(), &snapshot);
        }
        state.verify_cache(&schema, &comps).unwrap();
    }

    #[test]
    fn propose_leaves_state_untouched_and_steps_accept() {
        let (schema, comps, sizes) = corpus();
        let mu = MuParams::uniform(&schema);
        let z = MatchingVectors::unlinked(&sizes);
        let mut state = ChainState::new(&schema, &comps, mu, z).unwrap();
        let lr = LogRatios::new(&state.mu);
        let z_hyper = ZPriorHyper::default();
        let mut rng = StdRng::seed_from_u64(5);

        let before = state.z().clone();
        let p = lb_propose(&mut state, &schema, &comps, &z_hyper, &lr, 0, None, &mut rng)
            .expect("nonempty neighborhood");
        assert_eq!(state.z(), &before);
        assert!(p.log_zg_x.is_finite());
        assert!(p.log_zg_y.is_finite());

        let mut accepts = 0;
        for _ in 0..100 {
            for v in 0..state.z().vector_count() {
                if lb_step(&mut state, &schema, &comps, &z_hyper, &lr, v, Some(2), &mut rng) {
                    accepts += 1;
                }
            }
        }
        assert!(accepts > 0, "no accepted moves in 200 proposals");
        state.verify_cache(&schema, &comps).unwrap();
    }
}
