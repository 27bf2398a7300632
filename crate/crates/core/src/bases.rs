//! Topology-aware measurement planning.
//!
//! For any qubit topology that admits a vertex ordering in which no vertex
//! is preceded by more than two connected vertices, nine measurement bases
//! suffice: their restrictions to every edge cover all of {X,Y,Z}² exactly
//! once. The planner then enumerates, per basis, which single fidelities and
//! fidelity pairs a layer's decay benchmarks determine.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{GateLayer, Letter, PauliString, SignedPauli};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("no vertex ordering with at most two placed neighbors exists (greedy exhausted)")]
    NoValidOrdering,
    #[error("basis construction failed to cover edge ({0}, {1})")]
    CoverageFailure(usize, usize),
    #[error("generator {0} is not covered by any fidelity spec")]
    UncoveredGenerator(PauliString),
    #[error("topology edge ({0}, {1}) is invalid for {2} vertices")]
    BadEdge(usize, usize, usize),
    #[error("layer has {layer} qubits but topology has {topology}")]
    SizeMismatch { layer: usize, topology: usize },
}

/// Simple undirected qubit connectivity graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, PlanError> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(PlanError::BadEdge(a, b, n));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Topology { n, edges: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn are_connected(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Linear chain 0-1-...-(n-1).
    pub fn path(n: usize) -> Self {
        let edges: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        Topology::new(n, &edges).unwrap()
    }

    /// One center qubit (0) connected to n-1 leaves.
    pub fn star(n: usize) -> Self {
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (0, i)).collect();
        Topology::new(n, &edges).unwrap()
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = vec![];
        for a in 0..n {
            for b in (a + 1)..n {
                edges.push((a, b));
            }
        }
        Topology::new(n, &edges).unwrap()
    }

    /// Rectangular grid, row-major vertex numbering.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut edges = vec![];
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Topology::new(rows * cols, &edges).unwrap()
    }

    /// The 7-qubit heavy-hexagon fragment (H shape).
    pub fn heavy_hex_7() -> Self {
        Topology::new(7, &[(0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6)]).unwrap()
    }

    /// The 27-qubit heavy-hexagon processor topology (28 edges, degree <= 3).
    pub fn heavy_hex_27() -> Self {
        Topology::new(
            27,
            &[
                (0, 1),
                (1, 2),
                (1, 4),
                (2, 3),
                (3, 5),
                (4, 7),
                (5, 8),
                (6, 7),
                (7, 10),
                (8, 9),
                (8, 11),
                (10, 12),
                (11, 14),
                (12, 13),
                (12, 15),
                (13, 14),
                (14, 16),
                (15, 18),
                (16, 19),
                (17, 18),
                (18, 21),
                (19, 20),
                (19, 22),
                (21, 23),
                (22, 25),
                (23, 24),
                (24, 25),
                (25, 26),
            ],
        )
        .unwrap()
    }
}

/// Greedy vertex ordering such that every vertex has at most two already
/// placed neighbors. Fails (rather than backtracking) when the greedy runs
/// out of candidates, e.g. on K₄.
pub fn order_vertices(t: &Topology) -> Result<Vec<usize>, PlanError> {
    let n = t.n();
    let mut placed = vec![false; n];
    let mut placed_neighbors = vec![0usize; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let next = (0..n).find(|&v| !placed[v] && placed_neighbors[v] <= 2);
        let Some(v) = next else {
            return Err(PlanError::NoValidOrdering);
        };
        placed[v] = true;
        order.push(v);
        for u in t.neighbors(v) {
            placed_neighbors[u] += 1;
        }
    }
    Ok(order)
}

const BASIS_LETTERS: [Letter; 3] = [Letter::X, Letter::Y, Letter::Z];

fn letter_slot(l: Letter) -> usize {
    match l {
        Letter::X => 0,
        Letter::Y => 1,
        Letter::Z => 2,
        Letter::I => unreachable!("basis strings have no identity"),
    }
}

/// Construct nine basis strings whose restriction to every edge covers
/// {X,Y,Z}² exactly once. Vertices are processed in the greedy order; a
/// vertex with zero placed neighbors receives a random permutation of three
/// instances of each letter, one placed neighbor induces a permutation per
/// neighbor-letter group, and two placed neighbors are completed by a
/// doubly-constrained assignment (which always exists for 3x3 groups).
pub fn nine_bases<R: Rng + ?Sized>(
    t: &Topology,
    rng: &mut R,
) -> Result<Vec<PauliString>, PlanError> {
    let order = order_vertices(t)?;
    let n = t.n();
    // letters[s][v] for string s, vertex v.
    let mut letters = vec![vec![Letter::I; n]; 9];
    let mut placed = vec![false; n];
    for &v in &order {
        let nbrs: Vec<usize> = t.neighbors(v).into_iter().filter(|&u| placed[u]).collect();
        match nbrs.len() {
            0 => {
                let mut pool = [
                    Letter::X,
                    Letter::X,
                    Letter::X,
                    Letter::Y,
                    Letter::Y,
                    Letter::Y,
                    Letter::Z,
                    Letter::Z,
                    Letter::Z,
                ];
                pool.shuffle(rng);
                for s in 0..9 {
                    letters[s][v] = pool[s];
                }
            }
            1 => {
                let j = nbrs[0];
                for &group in &BASIS_LETTERS {
                    let members: Vec<usize> =
                        (0..9).filter(|&s| letters[s][j] == group).collect();
                    debug_assert_eq!(members.len(), 3);
                    let mut perm = BASIS_LETTERS;
                    perm.shuffle(rng);
                    for (i, &s) in members.iter().enumerate() {
                        letters[s][v] = perm[i];
                    }
                }
            }
            2 => {
                let (j, k) = (nbrs[0], nbrs[1]);
                let assignment = complete_two_neighbors(&letters, v, j, k, rng)
                    .ok_or(PlanError::CoverageFailure(j, k))?;
                for s in 0..9 {
                    letters[s][v] = assignment[s];
                }
            }
            _ => return Err(PlanError::NoValidOrdering),
        }
        placed[v] = true;
    }

    // Verify the coverage invariant on every edge.
    for (a, b) in t.edges() {
        let mut seen = [[false; 3]; 3];
        for s in 0..9 {
            seen[letter_slot(letters[s][a])][letter_slot(letters[s][b])] = true;
        }
        if !seen.iter().flatten().all(|&x| x) {
            return Err(PlanError::CoverageFailure(a, b));
        }
    }

    Ok(letters
        .into_iter()
        .map(|ls| PauliString::from_letters(&ls))
        .collect())
}

/// Letters for vertex `v` such that within each letter-group of `j` and each
/// letter-class of `k` every basis letter appears exactly once. Both
/// partitions split the nine strings 3+3+3, so a solution exists; found by
/// backtracking with an rng-shuffled candidate order.
fn complete_two_neighbors<R: Rng + ?Sized>(
    letters: &[Vec<Letter>],
    _v: usize,
    j: usize,
    k: usize,
    rng: &mut R,
) -> Option<[Letter; 9]> {
    let mut prefs: Vec<[Letter; 3]> = Vec::with_capacity(9);
    for _ in 0..9 {
        let mut p = BASIS_LETTERS;
        p.shuffle(rng);
        prefs.push(p);
    }
    let mut out = [Letter::I; 9];
    let mut row_used = [[false; 3]; 3];
    let mut col_used = [[false; 3]; 3];

    #[allow(clippy::too_many_arguments)]
    fn backtrack(
        s: usize,
        letters: &[Vec<Letter>],
        j: usize,
        k: usize,
        prefs: &[[Letter; 3]],
        out: &mut [Letter; 9],
        row_used: &mut [[bool; 3]; 3],
        col_used: &mut [[bool; 3]; 3],
    ) -> bool {
        if s == 9 {
            return true;
        }
        let r = letter_slot(letters[s][j]);
        let c = letter_slot(letters[s][k]);
        for &cand in &prefs[s] {
            let l = letter_slot(cand);
            if row_used[r][l] || col_used[c][l] {
                continue;
            }
            row_used[r][l] = true;
            col_used[c][l] = true;
            out[s] = cand;
            if backtrack(s + 1, letters, j, k, prefs, out, row_used, col_used) {
                return true;
            }
            row_used[r][l] = false;
            col_used[c][l] = false;
        }
        false
    }

    if backtrack(
        0,
        letters,
        j,
        k,
        &prefs,
        &mut out,
        &mut row_used,
        &mut col_used,
    ) {
        Some(out)
    } else {
        None
    }
}

/// One measurable decay: the observable `b` read out in a given basis, and,
/// when the layer conjugates `b` into a different Pauli, the partner whose
/// fidelity alternates with `b` in even-depth products.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FidelitySpec {
    pub basis: usize,
    pub observable: PauliString,
    pub partner: Option<PauliString>,
}

impl FidelitySpec {
    pub fn is_pair(&self) -> bool {
        self.partner.is_some()
    }

    /// Canonical unordered identity of the decay product this spec measures.
    pub fn pair_key(&self) -> (PauliString, PauliString) {
        match &self.partner {
            None => (self.observable.clone(), self.observable.clone()),
            Some(p) => {
                if self.observable.canonical_key() <= p.canonical_key() {
                    (self.observable.clone(), p.clone())
                } else {
                    (p.clone(), self.observable.clone())
                }
            }
        }
    }
}

impl Serialize for FidelitySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Json<'a> {
            basis: usize,
            kind: &'static str,
            b: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            b2: Option<&'a PauliString>,
        }
        Json {
            basis: self.basis,
            kind: if self.partner.is_some() {
                "pair"
            } else {
                "single"
            },
            b: self.observable.to_string(),
            b2: self.partner.as_ref(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FidelitySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Json {
            basis: usize,
            #[allow(dead_code)]
            kind: String,
            b: PauliString,
            #[serde(default)]
            b2: Option<PauliString>,
        }
        let j = Json::deserialize(d)?;
        Ok(FidelitySpec {
            basis: j.basis,
            observable: j.b,
            partner: j.b2,
        })
    }
}

/// Nine bases plus the fidelity specs measurable in each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementPlan {
    pub bases: Vec<PauliString>,
    pub specs: Vec<FidelitySpec>,
}

impl MeasurementPlan {
    pub fn specs_for_basis(&self, basis: usize) -> impl Iterator<Item = &FidelitySpec> {
        self.specs.iter().filter(move |s| s.basis == basis)
    }
}

/// Build the learning plan for a layer on a topology with model terms `k`.
///
/// Per basis, every sub-Pauli of the basis string supported on a single
/// qubit or on a topology edge yields a spec: single when it is invariant
/// under layer conjugation, otherwise a pair with the (sign-stripped)
/// conjugate as partner. Benchmark depths are even, so the observable always
/// returns to the basis-diagonal Pauli at readout regardless of the
/// partner's frame. Errors if some model generator ends up in no spec.
pub fn plan_learning<R: Rng + ?Sized>(
    layer: &GateLayer,
    t: &Topology,
    k: &[PauliString],
    rng: &mut R,
) -> Result<MeasurementPlan, PlanError> {
    if layer.n() != t.n() {
        return Err(PlanError::SizeMismatch {
            layer: layer.n(),
            topology: t.n(),
        });
    }
    let bases = nine_bases(t, rng)?;
    let n = t.n();
    let mut specs = Vec::new();
    for (bi, basis) in bases.iter().enumerate() {
        let mut supports: Vec<Vec<usize>> = (0..n).map(|q| vec![q]).collect();
        supports.extend(t.edges().iter().map(|&(a, b)| vec![a, b]));
        for support in supports {
            let mut b = PauliString::identity(n);
            for &q in &support {
                b.set(q, basis.get(q));
            }
            let conj = layer.conjugate(&SignedPauli::positive(b.clone())).pauli;
            let partner = if conj == b { None } else { Some(conj) };
            specs.push(FidelitySpec {
                basis: bi,
                observable: b,
                partner,
            });
        }
    }
    // Every model term must take part in at least one spec.
    for gen in k {
        let covered = specs.iter().any(|s| {
            s.observable == *gen || s.partner.as_ref() == Some(gen)
        });
        if !covered {
            return Err(PlanError::UncoveredGenerator(gen.clone()));
        }
    }
    Ok(MeasurementPlan { bases, specs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::two_local_generators;
    use crate::pauli::{GateKind, TwoQubitGate};
    use crate::testutil::seeded_rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn assert_edge_coverage(t: &Topology, bases: &[PauliString]) {
        assert_eq!(bases.len(), 9);
        for (a, b) in t.edges() {
            let mut seen = std::collections::HashSet::new();
            for basis in bases {
                seen.insert((basis.get(a), basis.get(b)));
            }
            assert_eq!(seen.len(), 9, "edge ({a}, {b}) not fully covered");
        }
    }

    #[test]
    fn path_graph_orders_naturally() {
        let t = Topology::path(5);
        assert_eq!(order_vertices(&t).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn heavy_hex_orderings_succeed() {
        assert!(order_vertices(&Topology::heavy_hex_7()).is_ok());
        assert!(order_vertices(&Topology::heavy_hex_27()).is_ok());
        assert_eq!(Topology::heavy_hex_27().edges().len(), 28);
    }

    #[test]
    fn k4_has_no_valid_ordering() {
        assert_eq!(
            order_vertices(&Topology::complete(4)),
            Err(PlanError::NoValidOrdering)
        );
        let mut rng = seeded_rng(51);
        assert!(matches!(
            nine_bases(&Topology::complete(4), &mut rng),
            Err(PlanError::NoValidOrdering)
        ));
    }

    #[test]
    fn single_edge_bases_are_all_nine_combinations() {
        let mut rng = seeded_rng(52);
        let t = Topology::path(2);
        let bases = nine_bases(&t, &mut rng).unwrap();
        let set: std::collections::HashSet<String> =
            bases.iter().map(|b| b.to_string()).collect();
        assert_eq!(set.len(), 9);
        assert_edge_coverage(&t, &bases);
    }

    #[test]
    fn three_qubit_path_covers_both_edges() {
        let mut rng = seeded_rng(53);
        let t = Topology::path(3);
        let bases = nine_bases(&t, &mut rng).unwrap();
        assert_edge_coverage(&t, &bases);
    }

    #[test]
    fn heavy_hex_27_covered() {
        let mut rng = seeded_rng(54);
        let t = Topology::heavy_hex_27();
        let bases = nine_bases(&t, &mut rng).unwrap();
        assert_edge_coverage(&t, &bases);
        assert!(bases.iter().all(|b| b.weight() == 27));
    }

    #[test]
    fn random_trees_and_grids_covered() {
        let mut rng = seeded_rng(55);
        for trial in 0..20 {
            let n = 3 + (trial % 10);
            let mut edges = vec![];
            for v in 1..n {
                let parent = rng.random_range(0..v);
                edges.push((parent, v));
            }
            let t = Topology::new(n, &edges).unwrap();
            let bases = nine_bases(&t, &mut rng).unwrap();
            assert_edge_coverage(&t, &bases);
        }
        for (r, c) in [(2, 2), (3, 4), (4, 4)] {
            let t = Topology::grid(r, c);
            let bases = nine_bases(&t, &mut rng).unwrap();
            assert_edge_coverage(&t, &bases);
        }
    }

    #[test]
    fn fixed_seed_gives_identical_plan() {
        let t = Topology::path(4);
        let layer = GateLayer::new(
            4,
            vec![
                TwoQubitGate {
                    kind: GateKind::CX,
                    control: 0,
                    target: 1,
                },
                TwoQubitGate {
                    kind: GateKind::CX,
                    control: 2,
                    target: 3,
                },
            ],
        )
        .unwrap();
        let k = two_local_generators(4, &[0, 1, 2, 3], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let plan1 = plan_learning(&layer, &t, &k, &mut seeded_rng(99)).unwrap();
        let plan2 = plan_learning(&layer, &t, &k, &mut seeded_rng(99)).unwrap();
        assert_eq!(plan1.bases, plan2.bases);
        assert_eq!(plan1.specs, plan2.specs);
    }

    #[test]
    fn identity_layer_gives_all_singles() {
        let mut rng = seeded_rng(56);
        let t = Topology::path(3);
        let layer = GateLayer::empty(3);
        let k = two_local_generators(3, &[0, 1, 2], &[(0, 1), (1, 2)]).unwrap();
        let plan = plan_learning(&layer, &t, &k, &mut rng).unwrap();
        assert!(plan.specs.iter().all(|s| s.partner.is_none()));
    }

    #[test]
    fn cz_layer_produces_ix_zx_pair() {
        let mut rng = seeded_rng(57);
        let t = Topology::path(2);
        let layer = GateLayer::new(
            2,
            vec![TwoQubitGate {
                kind: GateKind::CZ,
                control: 0,
                target: 1,
            }],
        )
        .unwrap();
        let k = two_local_generators(2, &[0, 1], &[(0, 1)]).unwrap();
        let plan = plan_learning(&layer, &t, &k, &mut rng).unwrap();
        // The single-qubit X on the target pairs with ZX.
        let found = plan
            .specs
            .iter()
            .any(|s| s.observable == p("IX") && s.partner == Some(p("ZX")));
        assert!(found, "expected the IX-ZX fidelity pair");
    }

    #[test]
    fn four_qubit_two_cx_plan_covers_model_and_repeats_pairs() {
        let mut rng = seeded_rng(58);
        let t = Topology::path(4);
        let layer = GateLayer::new(
            4,
            vec![
                TwoQubitGate {
                    kind: GateKind::CX,
                    control: 0,
                    target: 1,
                },
                TwoQubitGate {
                    kind: GateKind::CX,
                    control: 2,
                    target: 3,
                },
            ],
        )
        .unwrap();
        let k = two_local_generators(4, &[0, 1, 2, 3], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let plan = plan_learning(&layer, &t, &k, &mut rng).unwrap();
        assert_eq!(plan.bases.len(), 9);

        // Every observable is a sub-Pauli of its basis string (diagonal in
        // the measurement frame).
        for s in &plan.specs {
            let basis = &plan.bases[s.basis];
            for q in s.observable.support() {
                assert_eq!(s.observable.get(q), basis.get(q));
            }
        }

        // The Y on a CX target pairs with its Z-dressed conjugate, and the
        // same unordered pair shows up both from the single-qubit observable
        // and from the gate-edge observable in a matching basis.
        let target_pair_keys: Vec<_> = plan
            .specs
            .iter()
            .filter(|s| {
                s.pair_key()
                    == (
                        p("IYII"),
                        p("ZYII"),
                    )
            })
            .collect();
        assert!(
            target_pair_keys.len() >= 2,
            "expected the IY/ZY pair to occur at least twice, got {}",
            target_pair_keys.len()
        );
    }

    #[test]
    fn uncovered_generator_is_reported() {
        let mut rng = seeded_rng(59);
        let t = Topology::path(2);
        let layer = GateLayer::empty(2);
        // Ask for coverage of a three-body term that no single/edge spec has.
        let mut k = two_local_generators(2, &[0, 1], &[(0, 1)]).unwrap();
        k.push(p("YY"));
        let plan = plan_learning(&layer, &t, &k, &mut rng);
        assert!(plan.is_ok(), "YY is an edge sub-Pauli and is covered");

        let t3 = Topology::new(3, &[(0, 1)]).unwrap();
        let layer3 = GateLayer::empty(3);
        let k3 = vec![p("XIX")];
        assert!(matches!(
            plan_learning(&layer3, &t3, &k3, &mut rng),
            Err(PlanError::UncoveredGenerator(_))
        ));
    }

    #[test]
    fn plan_json_round_trip() {
        let mut rng = seeded_rng(60);
        let t = Topology::path(2);
        let layer = GateLayer::new(
            2,
            vec![TwoQubitGate {
                kind: GateKind::CZ,
                control: 0,
                target: 1,
            }],
        )
        .unwrap();
        let k = two_local_generators(2, &[0, 1], &[(0, 1)]).unwrap();
        let plan = plan_learning(&layer, &t, &k, &mut rng).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        assert!(json.contains("\"kind\":\"pair\""));
        let back: MeasurementPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back.specs, plan.specs);
    }
}
