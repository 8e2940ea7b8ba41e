//! Orbit combinatorics over itineraries: entrances, returns, children,
//! successors, combinatorial accumulation, the preferred pieces `P_c`, the
//! operators 𝒜, ℬ, 𝒟 and the enhanced nest.
//!
//! A piece is a word of depth-0 labels; an orbit point `f^j(c)` lies in the
//! piece `w` iff the itinerary of `c` read from index `j` starts with `w`.

use crate::poly_core::C64;
use crate::puzzle::{PieceId, PuzzleError, PuzzleSpec};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NestError {
    #[error("{what} not resolved within horizon {horizon}")]
    HorizonExceeded { what: String, horizon: usize },
    #[error("piece {0} contains no critical end")]
    NotCritical(String),
    #[error("horizon too short to classify: {0}")]
    Inconclusive(String),
    #[error("union of pieces is not decent: {0}")]
    DecencyViolation(String),
    #[error("invalid table: {0}")]
    BadTable(String),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
}

/// Z-function of `s`, with `z[0] = s.len()`.
fn z_function(s: &[u8]) -> Vec<usize> {
    let n = s.len();
    let mut z = vec![0usize; n];
    if n == 0 {
        return z;
    }
    z[0] = n;
    let (mut l, mut r) = (0usize, 0usize);
    for i in 1..n {
        if i < r {
            z[i] = (r - i).min(z[i - l]);
        }
        while i + z[i] < n && s[z[i]] == s[i + z[i]] {
            z[i] += 1;
        }
        if i + z[i] > r {
            l = i;
            r = i + z[i];
        }
    }
    z
}

/// `out[i]` is the longest common prefix of `text[i..]` and `pattern`.
pub(crate) fn lcp_against(pattern: &[u8], text: &[u8]) -> Vec<u32> {
    let mut s = Vec::with_capacity(pattern.len() + 1 + text.len());
    s.extend_from_slice(pattern);
    s.push(u8::MAX);
    s.extend_from_slice(text);
    let z = z_function(&s);
    z[pattern.len() + 1..].iter().map(|&v| v as u32).collect()
}

/// Occurrence times `k >= from` of `word` in `itin`, in increasing order.
fn occurrences(itin: &[u8], word: &[u8], from: usize) -> impl Iterator<Item = usize> {
    let l = lcp_against(word, itin);
    let w = word.len() as u32;
    (from..itin.len()).filter(move |&k| l[k] >= w)
}

/// Critical end of the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalEnd {
    pub name: String,
    pub point: Option<C64>,
    pub local_degree: u32,
    /// Depth-0 labels of `f^j(c)` for `j` up to the recorded length.
    pub itinerary: Vec<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orbit: Vec<C64>,
    /// Why the itinerary stops before the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped: Option<String>,
}

/// Itineraries of the critical ends up to a horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalOrbitTable {
    pub horizon: usize,
    pub labels: usize,
    pub ends: Vec<CriticalEnd>,
    /// `lcp[e][c][i]`: common prefix of `I_c[i..]` and `I_e`.
    #[serde(skip)]
    lcp: OnceLock<Vec<Vec<Vec<u32>>>>,
}

impl CriticalOrbitTable {
    pub fn new(ends: Vec<CriticalEnd>, labels: usize, horizon: usize) -> Result<Self, NestError> {
        if ends.is_empty() {
            return Err(NestError::BadTable("no critical ends".into()));
        }
        for e in &ends {
            if e.itinerary.is_empty() {
                return Err(NestError::BadTable(format!("end {} has an empty itinerary", e.name)));
            }
            if let Some(&s) = e.itinerary.iter().find(|&&s| s as usize >= labels) {
                return Err(NestError::BadTable(format!("label {s} out of range in end {}", e.name)));
            }
            if e.local_degree < 2 {
                return Err(NestError::BadTable(format!("end {} has local degree < 2", e.name)));
            }
        }
        Ok(Self { horizon, labels, ends: merge_ends(ends), lcp: OnceLock::new() })
    }

    /// Table from model itineraries `(name, local degree, itinerary)`.
    pub fn from_itineraries(ends: Vec<(String, u32, Vec<u8>)>, labels: usize) -> Result<Self, NestError> {
        let horizon = ends.iter().map(|e| e.2.len().saturating_sub(1)).max().unwrap_or(0);
        let ends = ends
            .into_iter()
            .map(|(name, local_degree, itinerary)| CriticalEnd {
                name,
                point: None,
                local_degree,
                itinerary,
                orbit: Vec::new(),
                stopped: None,
            })
            .collect();
        Self::new(ends, labels, horizon)
    }

    /// Orbits of the free critical points of `spec` labelled to `horizon`. With
    /// `include_center`, `c0` joins as an end with the constant itinerary of its piece.
    pub fn from_puzzle(spec: &PuzzleSpec, horizon: usize, include_center: bool) -> Result<Self, NestError> {
        let mut ends = Vec::new();
        if include_center {
            ends.push(CriticalEnd {
                name: "c0".into(),
                point: Some(spec.c0),
                local_degree: spec.d,
                itinerary: vec![spec.c0_label(); horizon + 1],
                orbit: Vec::new(),
                stopped: None,
            });
        }
        for (i, (c, m)) in spec.free_criticals().into_iter().enumerate() {
            let mut itinerary = Vec::with_capacity(horizon + 1);
            let mut orbit = Vec::with_capacity(horizon + 1);
            let mut stopped = None;
            let mut z = c;
            for j in 0..=horizon {
                match spec.label(z) {
                    Ok(s) => {
                        itinerary.push(s);
                        orbit.push(z);
                    }
                    Err(e) => {
                        stopped = Some(match e {
                            PuzzleError::OnGraph(_) => format!("iterate {j} lies on the graph"),
                            PuzzleError::LeftDomain(_) => format!("iterate {j} leaves the domain"),
                            other => other.to_string(),
                        });
                        break;
                    }
                }
                z = spec.poly.eval(z);
            }
            if itinerary.is_empty() {
                continue;
            }
            ends.push(CriticalEnd { name: format!("c{}", i + 1), point: Some(c), local_degree: m, itinerary, orbit, stopped });
        }
        Self::new(ends, spec.label_count(), horizon)
    }

    /// Number of critical ends `b`.
    pub fn b(&self) -> usize {
        self.ends.len()
    }

    /// Largest local degree `δ`.
    pub fn delta(&self) -> u64 {
        self.ends.iter().map(|e| e.local_degree as u64).max().unwrap_or(2)
    }

    pub fn itinerary(&self, e: usize) -> &[u8] {
        &self.ends[e].itinerary
    }

    fn lcp(&self) -> &Vec<Vec<Vec<u32>>> {
        self.lcp.get_or_init(|| {
            self.ends
                .iter()
                .map(|e| self.ends.iter().map(|c| lcp_against(&e.itinerary, &c.itinerary)).collect())
                .collect()
        })
    }

    /// Common prefix length of `I_c[i..]` and `I_e`.
    fn lcp_at(&self, e: usize, c: usize, i: usize) -> usize {
        self.lcp()[e][c].get(i).map_or(0, |&v| v as usize)
    }

    /// Ends whose critical point lies in the piece.
    pub fn criticals_in(&self, w: &[u8]) -> Vec<usize> {
        (0..self.b()).filter(|&e| self.ends[e].itinerary.starts_with(w)).collect()
    }

    /// `#{0 <= i < steps : c_e ∈ f^i(P(w))}` per end.
    pub fn visits(&self, w: &[u8], steps: usize) -> Vec<usize> {
        self.ends
            .iter()
            .map(|e| {
                let l = lcp_against(&e.itinerary, w);
                (0..steps.min(w.len())).filter(|&i| l[i] as usize >= w.len() - i).count()
            })
            .collect()
    }

    /// Degree of `f^steps` on `P(w)`: the product of the local degrees met along the way.
    pub fn degree(&self, w: &[u8], steps: usize) -> u64 {
        self.visits(w, steps)
            .iter()
            .zip(&self.ends)
            .fold(1u64, |acc, (&v, e)| acc.saturating_mul((e.local_degree as u64).saturating_pow(v as u32)))
    }

    /// The end whose point lies in `a`.
    fn critical_of(&self, a: &[u8]) -> Result<usize, NestError> {
        self.criticals_in(a).first().copied().ok_or_else(|| NestError::NotCritical(PieceId::from_vec(a.to_vec()).to_string()))
    }
}

/// Ends with identical itineraries cannot be separated; they become one end.
fn merge_ends(ends: Vec<CriticalEnd>) -> Vec<CriticalEnd> {
    let mut out: Vec<CriticalEnd> = Vec::new();
    for e in ends {
        if let Some(o) = out.iter_mut().find(|o| o.itinerary == e.itinerary) {
            o.local_degree *= e.local_degree;
            o.name = format!("{}+{}", o.name, e.name);
        } else {
            out.push(e);
        }
    }
    out
}

/// Fixed point of the substitution `A -> AB, B -> A`, truncated to `len`.
pub fn fibonacci_word(len: usize) -> Vec<u8> {
    let mut w = vec![0u8];
    while w.len() < len {
        let mut next = Vec::with_capacity(2 * w.len());
        for &s in &w {
            next.push(0);
            if s == 0 {
                next.push(1);
            }
        }
        w = next;
    }
    w.truncate(len);
    w
}

/// Unicritical model with the Fibonacci itinerary.
pub fn fibonacci_model(horizon: usize) -> CriticalOrbitTable {
    CriticalOrbitTable::from_itineraries(vec![("c".into(), 2, fibonacci_word(horizon + 1))], 2).expect("valid model")
}

/// Two quadratic ends, the second one at the image of the first.
pub fn bicritical_model(horizon: usize) -> CriticalOrbitTable {
    let w = fibonacci_word(horizon + 2);
    CriticalOrbitTable::from_itineraries(
        vec![("c".into(), 2, w[..=horizon].to_vec()), ("c'".into(), 2, w[1..].to_vec())],
        2,
    )
    .expect("valid model")
}

/// First entrance of a point into a piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entrance {
    pub time: usize,
    pub piece: PieceId,
}

/// Least `r >= min_time` with `f^r(z)` in `target`, with the pulled-back piece.
pub fn entrance_from(itin: &[u8], target: &[u8], min_time: usize) -> Result<Entrance, NestError> {
    let r = occurrences(itin, target, min_time).next().ok_or_else(|| NestError::HorizonExceeded {
        what: format!("entrance into {}", PieceId::from_vec(target.to_vec())),
        horizon: itin.len().saturating_sub(1),
    })?;
    Ok(Entrance { time: r, piece: PieceId::from_vec(itin[..r + target.len()].to_vec()) })
}

pub fn first_entrance(itin: &[u8], target: &PieceId) -> Result<Entrance, NestError> {
    entrance_from(itin, target.word(), 0)
}

/// First entrance into a union of pieces at time `>= min_time`; the longest
/// component wins when several contain the iterate.
fn entrance_union(itin: &[u8], h: &[Vec<u8>], min_time: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (i, w) in h.iter().enumerate() {
        if let Some(t) = occurrences(itin, w, min_time).next() {
            best = match best {
                Some((bt, bi)) if bt < t || (bt == t && h[bi].len() >= w.len()) => Some((bt, bi)),
                _ => Some((t, i)),
            };
        }
    }
    best
}

/// Return time of a piece from its word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnTime {
    Exact(usize),
    AtLeast(usize),
}

impl ReturnTime {
    /// Certified lower bound.
    pub fn lower(&self) -> usize {
        match *self {
            ReturnTime::Exact(k) | ReturnTime::AtLeast(k) => k,
        }
    }

    pub fn exact(&self) -> Option<usize> {
        match *self {
            ReturnTime::Exact(k) => Some(k),
            ReturnTime::AtLeast(_) => None,
        }
    }
}

/// Least lag `k > 0` at which the word overlaps itself.
pub fn return_time(a: &PieceId) -> ReturnTime {
    let w = a.word();
    let z = z_function(w);
    (1..w.len()).find(|&k| z[k] == w.len() - k).map_or(ReturnTime::AtLeast(w.len()), ReturnTime::Exact)
}

/// Least `k > 0` with `f^k(A) ⊇ A` for some point of `A` returning: the word
/// overlap when one exists, otherwise `|a|` when the symbol pair (last, first)
/// occurs in some table itinerary.
pub fn piece_return_time(table: &CriticalOrbitTable, a: &PieceId) -> ReturnTime {
    let r = return_time(a);
    if r.exact().is_some() {
        return r;
    }
    let w = a.word();
    let (last, first) = (w[w.len() - 1], w[0]);
    let seen = table.ends.iter().any(|e| e.itinerary.windows(2).any(|p| p[0] == last && p[1] == first));
    if seen {
        ReturnTime::Exact(w.len())
    } else {
        r
    }
}

/// Child `P_{n+k}(c')` of a critical piece with `f^k` onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Child {
    pub end: usize,
    pub k: usize,
    pub piece: PieceId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildList {
    pub children: Vec<Child>,
    /// No children with `k` in the second half of the searched range.
    pub stable: bool,
    pub horizon: usize,
}

/// Children of the critical piece `a` among the ends `pool`.
pub fn children_among(table: &CriticalOrbitTable, a: &PieceId, pool: &[usize]) -> Result<ChildList, NestError> {
    table.critical_of(a.word())?;
    let len = a.word().len();
    let mut children = Vec::new();
    let mut stable = true;
    for &c in pool {
        let it = table.itinerary(c);
        if it.len() <= len {
            continue;
        }
        // m[j] = max over ends of j + lcp(I_c[j..], I_e), for j >= 1.
        let mut prefix_max = 0usize;
        for k in 1..=it.len() - len {
            if table.lcp_at(c, c, k) >= len && it[k..k + len] == *a.word() && prefix_max < k + len {
                children.push(Child { end: c, k, piece: PieceId::from_vec(it[..k + len].to_vec()) });
                if 2 * (k + len) > it.len() {
                    stable = false;
                }
            }
            let v = (0..table.b()).map(|e| k + table.lcp_at(e, c, k)).max().unwrap_or(0);
            prefix_max = prefix_max.max(v);
        }
    }
    children.sort_by(|x, y| x.k.cmp(&y.k).then(x.piece.cmp(&y.piece)));
    children.dedup_by(|x, y| x.piece == y.piece);
    Ok(ChildList { children, stable, horizon: table.horizon })
}

pub fn children(table: &CriticalOrbitTable, a: &PieceId) -> Result<ChildList, NestError> {
    let all: Vec<usize> = (0..table.b()).collect();
    children_among(table, a, &all)
}

/// Successor `P_{n+k}(c)` of `P_n(c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    pub k: usize,
    pub piece: PieceId,
    pub degree: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessorList {
    pub end: usize,
    pub successors: Vec<Successor>,
    /// No successors with `k` in the second half of the searched range.
    pub stable: bool,
    pub horizon: usize,
}

impl SuccessorList {
    /// `(𝒟(a), σ(a))`.
    pub fn last(&self) -> Option<(&PieceId, usize)> {
        self.successors.last().map(|s| (&s.piece, s.k))
    }
}

pub fn successors(table: &CriticalOrbitTable, a: &PieceId) -> Result<SuccessorList, NestError> {
    let c = table.critical_of(a.word())?;
    let it = table.itinerary(c);
    let len = a.word().len();
    let n = it.len();
    if n <= len {
        return Ok(SuccessorList { end: c, successors: Vec::new(), stable: false, horizon: table.horizon });
    }
    let kmax = n - len;
    // count[e][k] = #{0 <= i <= k : c_e ∈ f^i(P_{n+k}(c))}; index i counts for k in [i, i + lcp - len].
    let mut over = vec![false; kmax + 1];
    for e in 0..table.b() {
        let mut diff = vec![0i64; kmax + 2];
        for i in 0..=kmax {
            let l = if e == c && i == 0 { n } else { table.lcp_at(e, c, i) };
            if l >= len {
                let hi = (i + l - len).min(kmax);
                diff[i] += 1;
                diff[hi + 1] -= 1;
            }
        }
        let mut acc = 0i64;
        for k in 0..=kmax {
            acc += diff[k];
            if acc > 2 {
                over[k] = true;
            }
        }
    }
    let mut list = Vec::new();
    let mut stable = true;
    for k in 1..=kmax {
        if over[k] || table.lcp_at(c, c, k) < len {
            continue;
        }
        let piece = it[..k + len].to_vec();
        let degree = table.degree(&piece, k);
        list.push(Successor { k, piece: PieceId::from_vec(piece), degree });
        if 2 * (k + len) > n {
            stable = false;
        }
    }
    Ok(SuccessorList { end: c, successors: list, stable, horizon: table.horizon })
}

/// `(𝒟(a), σ(a))`, requiring a stable, nonempty successor list.
pub fn last_successor(table: &CriticalOrbitTable, a: &PieceId) -> Result<(PieceId, usize), NestError> {
    let s = successors(table, a)?;
    if !s.stable {
        return Err(NestError::HorizonExceeded { what: format!("successors of {}", short(a)), horizon: table.horizon });
    }
    s.last().map(|(p, k)| (p.clone(), k)).ok_or_else(|| NestError::HorizonExceeded {
        what: format!("a successor of {}", short(a)),
        horizon: table.horizon,
    })
}

fn short(a: &PieceId) -> String {
    if a.depth() < 12 {
        a.to_string()
    } else {
        format!("depth-{} piece", a.depth())
    }
}

/// Finite-depth, finite-horizon approximation of ω_comb restricted to critical ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaComb {
    pub depth: usize,
    pub horizon: usize,
    pub ends: Vec<usize>,
}

/// Ends `c` such that some `f^k(z)`, `k > 0`, enters `P_depth(c)`.
pub fn omega_comb(table: &CriticalOrbitTable, itin: &[u8], depth: usize) -> OmegaComb {
    let ends = (0..table.b())
        .filter(|&e| {
            let it = table.itinerary(e);
            it.len() > depth && occurrences(itin, &it[..=depth], 1).next().is_some()
        })
        .collect();
    OmegaComb { depth, horizon: itin.len().saturating_sub(1), ends }
}

/// ω_comb of a critical end, from the precomputed overlaps.
pub fn omega_crit(table: &CriticalOrbitTable, c: usize, depth: usize) -> Vec<usize> {
    let n = table.itinerary(c).len();
    (0..table.b())
        .filter(|&e| table.itinerary(e).len() > depth && (1..n).any(|k| table.lcp_at(e, c, k) > depth))
        .collect()
}

/// Outcome of the recurrence classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recurrence {
    /// Bounded-degree witness following one of the three simple cases.
    StarWitness { case: u8, ends: Vec<usize>, times: Vec<usize>, degrees: Vec<u64>, bound: u64 },
    /// Self-recurrent, with some critical piece whose successor list keeps growing.
    SelfRecurrent { omega: Vec<usize>, growing: Vec<(usize, usize)> },
    /// Self-recurrent with successor lists frozen over the second half of the horizon.
    PersistentlyRecurrentEvidence { depth: usize, horizon: usize, omega: Vec<usize>, successor_counts: Vec<(usize, usize, usize)> },
}

pub fn classify_recurrence(table: &CriticalOrbitTable, c: usize, depth: usize) -> Result<Recurrence, NestError> {
    let it = table.itinerary(c);
    if it.len() < 4 * (depth + 1) {
        return Err(NestError::Inconclusive(format!(
            "itinerary of {} has {} symbols, depth {depth} needs {}",
            table.ends[c].name,
            it.len(),
            4 * (depth + 1)
        )));
    }
    let delta = table.delta();
    let b = table.b() as u32;
    let omega = omega_crit(table, c, depth);
    if omega.is_empty() {
        let times: Vec<usize> = (1..it.len().min(17)).collect();
        let degrees = times.iter().map(|&k| table.degree(&it[..=k], k)).collect();
        return Ok(Recurrence::StarWitness { case: 1, ends: vec![c], times, degrees, bound: delta });
    }
    let omegas: Vec<Vec<usize>> = (0..table.b()).map(|e| omega_crit(table, e, depth)).collect();
    if let Some(&c1) = omega.iter().find(|&&c1| omegas[c1].is_empty()) {
        let e = entrance_from(it, &table.itinerary(c1)[..=depth], 1)?;
        return Ok(Recurrence::StarWitness {
            case: 2,
            ends: vec![c, c1],
            times: vec![e.time],
            degrees: vec![table.degree(e.piece.word(), e.time)],
            bound: delta.saturating_pow(b),
        });
    }
    for &c1 in &omega {
        for &c2 in &omega {
            if !omegas[c2].contains(&c1) {
                let e = entrance_from(it, &table.itinerary(c2)[..=depth], 1)?;
                return Ok(Recurrence::StarWitness {
                    case: 3,
                    ends: vec![c1, c2],
                    times: vec![e.time],
                    degrees: vec![table.degree(e.piece.word(), e.time)],
                    bound: delta.saturating_pow(b),
                });
            }
        }
    }
    let mut growing = Vec::new();
    let mut counts = Vec::new();
    for &c1 in &omega {
        for n0 in 0..=depth {
            let a = PieceId::from_vec(table.itinerary(c1)[..=n0].to_vec());
            let s = successors(table, &a)?;
            counts.push((c1, n0, s.successors.len()));
            if !s.stable {
                growing.push((c1, n0));
            }
        }
    }
    if growing.is_empty() {
        Ok(Recurrence::PersistentlyRecurrentEvidence { depth, horizon: it.len() - 1, omega, successor_counts: counts })
    } else {
        Ok(Recurrence::SelfRecurrent { omega, growing })
    }
}

/// No component maps into a component (strictly or exactly) under a positive iterate.
fn decent(h: &[Vec<u8>]) -> bool {
    h.iter().all(|wi| {
        (1..wi.len()).all(|j| h.iter().all(|wl| !wi[j..].starts_with(wl)))
    })
}

/// Preferred pieces around one critical end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcEntry {
    pub end: usize,
    pub p: PieceId,
    pub p_prime: PieceId,
    /// `f^time(P_c) = I`.
    pub time: usize,
    pub degree: u64,
    /// `#{0 <= i < time : c0 ∈ f^i(P_c)}`.
    pub c0_visits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcResult {
    pub entries: Vec<PcEntry>,
    /// Ends in the order they were added by the induction, starting with `c0`.
    pub order: Vec<usize>,
    pub steps: usize,
    pub degree_bound: u64,
    pub visit_bound: usize,
    pub omega: Vec<usize>,
    pub within_bounds: bool,
}

impl PcResult {
    pub fn entry(&self, end: usize) -> Option<&PcEntry> {
        self.entries.iter().find(|e| e.end == end)
    }
}

/// `𝓛_z(H)` for the critical end `e`: first entrance at time `>= min_time`.
fn pull_union(table: &CriticalOrbitTable, e: usize, h: &[Vec<u8>], min_time: usize) -> Result<(usize, Vec<u8>), NestError> {
    let it = table.itinerary(e);
    let (t, i) = entrance_union(it, h, min_time).ok_or_else(|| NestError::HorizonExceeded {
        what: format!("entrance of {} into a union of {} pieces", table.ends[e].name, h.len()),
        horizon: it.len().saturating_sub(1),
    })?;
    Ok((t, it[..t + h[i].len()].to_vec()))
}

/// The pieces `P_c`, `P'_c` for `c ∈ ωCrit(c0)` by the H/J induction.
pub fn build_pc(table: &CriticalOrbitTable, i_piece: &PieceId, c0: usize, depth: usize) -> Result<PcResult, NestError> {
    let iw = i_piece.word().to_vec();
    if !table.itinerary(c0).starts_with(&iw) {
        return Err(NestError::NotCritical(short(i_piece)));
    }
    let omega = omega_crit(table, c0, depth);
    let mut order = vec![c0];
    let mut h: Vec<Vec<u8>> = vec![iw.clone()];
    let mut j: Vec<Vec<u8>> = vec![pull_union(table, c0, &h, 1)?.1];
    let mut steps = 0usize;
    loop {
        if !decent(&h) {
            return Err(NestError::DecencyViolation(format!("H_{steps}")));
        }
        let mut violator: Option<(usize, usize)> = None;
        for &c in omega.iter().filter(|c| !order.contains(c)) {
            let (t, w) = pull_union(table, c, &h, 1)?;
            let in_j = j.iter().any(|jw| w[t..].starts_with(jw));
            if !in_j && violator.map_or(true, |(bt, _)| t < bt) {
                violator = Some((t, c));
            }
        }
        let Some((_, c_new)) = violator else { break };
        let it = table.itinerary(c_new);
        let (t1, _) = entrance_union(it, &h, 1).expect("entrance found above");
        let (_, second) = pull_union(table, c_new, &h, t1 + 1)?;
        order.push(c_new);
        let mut h_next = j.clone();
        h_next.push(second);
        h = h_next;
        j = order.iter().map(|&c| pull_union(table, c, &h, 1).map(|x| x.1)).collect::<Result<_, _>>()?;
        steps += 1;
        if steps > table.b() {
            return Err(NestError::DecencyViolation("induction did not terminate".into()));
        }
    }
    let component = |set: &[Vec<u8>], c: usize| -> Option<Vec<u8>> {
        set.iter().filter(|w| table.itinerary(c).starts_with(w)).max_by_key(|w| w.len()).cloned()
    };
    let b = table.b() as u32;
    let delta = table.delta();
    let degree_bound = if b == 1 { 1 } else { delta.saturating_pow(b * b - b) };
    let visit_bound = (b as usize).saturating_sub(1);
    let mut entries = Vec::new();
    let mut ok = true;
    for &c in &omega {
        let (p, pp) = if order.contains(&c) {
            let p = component(&h, c).ok_or_else(|| NestError::DecencyViolation(format!("no H component around {}", table.ends[c].name)))?;
            let pp = component(&j, c).ok_or_else(|| NestError::DecencyViolation(format!("no J component around {}", table.ends[c].name)))?;
            (p, pp)
        } else {
            (pull_union(table, c, &h, 1)?.1, pull_union(table, c, &j, 1)?.1)
        };
        let time = p.len() - iw.len();
        let degree = table.degree(&p, time);
        let c0_visits = table.visits(&p, time)[c0];
        if degree > degree_bound.max(if b == 1 { delta } else { 0 }) && order.contains(&c) && b > 1 {
            ok = false;
        }
        if c0_visits > visit_bound && order.contains(&c) && b > 1 {
            ok = false;
        }
        if !pp.starts_with(&p) || !p.ends_with(&iw) {
            ok = false;
        }
        entries.push(PcEntry { end: c, p: PieceId::from_vec(p), p_prime: PieceId::from_vec(pp), time, degree, c0_visits });
    }
    Ok(PcResult { entries, order, steps, degree_bound, visit_bound, omega, within_bounds: ok })
}

/// Result of ℬ or 𝒜 applied to a critical piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorResult {
    pub piece: PieceId,
    /// `f^time` maps the piece onto `I`.
    pub time: usize,
    pub degree: u64,
    pub degree_bound: u64,
    /// `#{0 <= j < time : c0 ∈ f^j(piece)}`.
    pub c0_visits: usize,
    pub visit_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbReport {
    pub b: OperatorResult,
    pub a: OperatorResult,
    /// `τ` of the maximal child and its end.
    pub tau_child: usize,
    pub child_end: usize,
    pub child: PieceId,
    /// Maximal child unchanged between half and full horizon.
    pub stable: bool,
    /// Orbit points in ℬ(I) but outside 𝒜(I).
    pub avoidance_violations: usize,
    /// `c0 ∈ 𝒜 ⊂ ℬ ⊂ I` as words.
    pub nested: bool,
}

fn max_child(table: &CriticalOrbitTable, pc: &PcResult, limit: Option<usize>) -> Result<Option<(usize, Child)>, NestError> {
    let mut best: Option<(usize, Child)> = None;
    for e in &pc.entries {
        let list = children_among(table, &e.p, &pc.omega)?;
        for ch in list.children {
            if let Some(l) = limit {
                if ch.piece.word().len() > l {
                    continue;
                }
            }
            let better = match &best {
                None => true,
                Some((_, b)) => ch.k > b.k || (ch.k == b.k && ch.piece < b.piece),
            };
            if better {
                best = Some((e.end, ch));
            }
        }
    }
    Ok(best)
}

/// ℬ(I) and 𝒜(I) around `c0`, with `ωCrit(c0)` taken at `depth`.
pub fn operators_ab(table: &CriticalOrbitTable, i_piece: &PieceId, c0: usize, depth: usize) -> Result<AbReport, NestError> {
    let pc = build_pc(table, i_piece, c0, depth)?;
    let it0 = table.itinerary(c0);
    let (_, q) = max_child(table, &pc, None)?.ok_or_else(|| NestError::HorizonExceeded {
        what: format!("a child of the preferred pieces of {}", short(i_piece)),
        horizon: table.horizon,
    })?;
    let half = max_child(table, &pc, Some(it0.len() / 2))?;
    let stable = half.as_ref().map_or(false, |(_, h)| h.piece == q.piece);
    let iw = i_piece.word();
    let b_cnt = table.b() as u32;
    let delta = table.delta();
    // Entrance time 0 is allowed: c0 may already lie in the child.
    let bw = entrance_from(it0, q.piece.word(), 0)?.piece.word().to_vec();
    let b_time = bw.len() - iw.len();
    let b_res = OperatorResult {
        piece: PieceId::from_vec(bw.clone()),
        time: b_time,
        degree: table.degree(&bw, b_time),
        degree_bound: delta.saturating_pow(b_cnt * b_cnt),
        c0_visits: table.visits(&bw, b_time)[c0],
        visit_bound: b_cnt as usize,
    };
    let w = entrance_from(it0, iw, b_time + 1)?;
    let aw = w.piece.word().to_vec();
    let a_time = aw.len() - iw.len();
    let a_res = OperatorResult {
        piece: PieceId::from_vec(aw.clone()),
        time: a_time,
        degree: table.degree(&aw, a_time),
        degree_bound: delta.saturating_pow(b_cnt * b_cnt + b_cnt),
        c0_visits: table.visits(&aw, a_time)[c0],
        visit_bound: b_cnt as usize + 1,
    };
    let nested = it0.starts_with(&aw) && aw.starts_with(&bw) && bw.starts_with(iw);
    let mut violations = 0usize;
    for &e in &pc.omega {
        let it = table.itinerary(e);
        let lb = lcp_against(&bw, it);
        let la = lcp_against(&aw, it);
        for jx in 0..it.len() {
            if lb[jx] as usize == bw.len() && (la[jx] as usize) < aw.len() && jx + aw.len() <= it.len() {
                violations += 1;
            }
        }
    }
    Ok(AbReport {
        b: b_res,
        a: a_res,
        tau_child: q.k,
        child_end: q.end,
        child: q.piece,
        stable,
        avoidance_violations: violations,
        nested,
    })
}

/// One stage of the enhanced nest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestStage {
    pub n: usize,
    pub h: usize,
    #[serde(rename = "h'")]
    pub h_prime: usize,
    pub p: usize,
    #[serde(rename = "p'")]
    pub p_prime: usize,
    pub deg: u64,
    #[serde(rename = "deg'")]
    pub deg_prime: u64,
    #[serde(rename = "word_K")]
    pub word_k: PieceId,
    #[serde(rename = "word_K'")]
    pub word_k_prime: PieceId,
    pub return_time: ReturnTime,
    /// Transition time to `K_0`.
    pub t: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub degenerate_contact: bool,
    pub avoidance_violations: usize,
}

/// Pass/fail of the stage inequalities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NestChecks {
    pub nested: bool,
    pub shift: bool,
    pub doubling: bool,
    pub degree: bool,
    pub height_gap: bool,
    pub return_growth: bool,
    pub telescoping: bool,
    pub avoidance: bool,
    pub failures: Vec<String>,
}

impl NestChecks {
    pub fn all(&self) -> bool {
        self.nested
            && self.shift
            && self.doubling
            && self.degree
            && self.height_gap
            && self.return_growth
            && self.telescoping
            && self.avoidance
    }
}

pub const NEST_SCHEMA: &str = "fatou-puzzle/nest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestRecord {
    pub schema: String,
    pub tau: usize,
    pub b: usize,
    pub delta: u64,
    /// `C(b, δ) = δ^{b² + b + 2bτ}`.
    pub c_bound: u64,
    pub horizon: usize,
    pub omega_depth: usize,
    pub k0: PieceId,
    pub stages: Vec<NestStage>,
    /// Reason the construction stopped before `n_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partial: Option<String>,
    pub checks: NestChecks,
}

/// `K_n = 𝒜𝒟^τ(K_{n-1})`, `K'_n = ℬ𝒟^τ(K_{n-1})` around the end `c0`.
pub fn enhanced_nest(
    table: &CriticalOrbitTable,
    c0: usize,
    k0: &PieceId,
    tau: Option<usize>,
    n_max: usize,
    omega_depth: usize,
) -> Result<NestRecord, NestError> {
    let it0 = table.itinerary(c0);
    if !it0.starts_with(k0.word()) {
        return Err(NestError::NotCritical(short(k0)));
    }
    let b = table.b();
    let tau = tau.unwrap_or(b + 1).max(1);
    let delta = table.delta();
    let bu = b as u32;
    let c_bound = delta.saturating_pow(bu * bu + bu + 2 * bu * tau as u32);
    let mut stages: Vec<NestStage> = Vec::new();
    let mut checks = NestChecks {
        nested: true,
        shift: true,
        doubling: true,
        degree: true,
        height_gap: true,
        return_growth: true,
        telescoping: true,
        avoidance: true,
        failures: Vec::new(),
    };
    let mut partial = None;
    let mut prev = k0.clone();
    let mut t_total = 0usize;
    for n in 1..=n_max {
        let step = (|| -> Result<NestStage, NestError> {
            let mut d = prev.clone();
            for _ in 0..tau {
                d = last_successor(table, &d)?.0;
            }
            let ab = operators_ab(table, &d, c0, omega_depth)?;
            if !ab.stable {
                return Err(NestError::HorizonExceeded { what: "maximal child".into(), horizon: table.horizon });
            }
            let kn = ab.a.piece.clone();
            let knp = ab.b.piece.clone();
            let h = kn.depth();
            let hp = knp.depth();
            let p = h - prev.depth();
            let pp = hp - prev.depth();
            Ok(NestStage {
                n,
                h,
                h_prime: hp,
                p,
                p_prime: pp,
                deg: table.degree(kn.word(), p),
                deg_prime: table.degree(knp.word(), pp),
                return_time: piece_return_time(table, &kn),
                t: t_total + p,
                word_k: kn,
                word_k_prime: knp,
                mu: None,
                degenerate_contact: false,
                avoidance_violations: ab.avoidance_violations,
            })
        })();
        let stage = match step {
            Ok(s) => s,
            Err(e) => {
                partial = Some(format!("stage {n}: {e}"));
                break;
            }
        };
        let mut fail = |flag: &mut bool, what: String| {
            *flag = false;
            checks.failures.push(format!("stage {n}: {what}"));
        };
        let kw = stage.word_k.word();
        let kpw = stage.word_k_prime.word();
        if !(kw.starts_with(kpw) && kpw.starts_with(prev.word()) && stage.h > stage.h_prime && stage.h_prime > prev.depth()) {
            fail(&mut checks.nested, "K_n ⊂ K'_n ⊂ K_{n-1} fails".into());
        }
        if kw[stage.p..] != *prev.word() || kpw[stage.p_prime..] != *prev.word() {
            fail(&mut checks.shift, "f^p(K_n) ≠ K_{n-1}".into());
        }
        if let Some(last) = stages.last() {
            if stage.p < 2 * last.p {
                fail(&mut checks.doubling, format!("p_n = {} < 2 p_(n-1) = {}", stage.p, 2 * last.p));
            }
            let need = (1usize << tau.min(60)).saturating_mul(last.return_time.exact().unwrap_or(usize::MAX));
            if stage.return_time.lower() < need {
                fail(&mut checks.return_growth, format!("r(K_n) = {:?} < 2^τ r(K_(n-1))", stage.return_time));
            }
        }
        if stage.deg > c_bound || stage.deg_prime > c_bound {
            fail(&mut checks.degree, format!("degree {} exceeds C = {c_bound}", stage.deg.max(stage.deg_prime)));
        }
        let r_prev = piece_return_time(table, &prev);
        if stage.h - stage.h_prime < r_prev.exact().unwrap_or(usize::MAX) {
            fail(&mut checks.height_gap, format!("h - h' = {} < r(K_(n-1)) = {:?}", stage.h - stage.h_prime, r_prev));
        }
        if stage.t >= 2 * stage.p {
            fail(&mut checks.telescoping, format!("t_n = {} >= 2 p_n = {}", stage.t, 2 * stage.p));
        }
        if stage.avoidance_violations > 0 {
            fail(&mut checks.avoidance, format!("{} postcritical points in K'_n minus K_n", stage.avoidance_violations));
        }
        t_total = stage.t;
        prev = stage.word_k.clone();
        stages.push(stage);
    }
    Ok(NestRecord {
        schema: NEST_SCHEMA.into(),
        tau,
        b,
        delta,
        c_bound,
        horizon: table.horizon,
        omega_depth,
        k0: k0.clone(),
        stages,
        partial,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> PieceId {
        s.parse().unwrap()
    }

    #[test]
    fn return_time_examples() {
        assert_eq!(return_time(&w("A,B,A")), ReturnTime::Exact(2));
        assert_eq!(return_time(&w("A,A,A")), ReturnTime::Exact(1));
        assert_eq!(return_time(&w("A,B,C")), ReturnTime::AtLeast(3));
    }

    #[test]
    fn first_entrance_examples() {
        let it = [1u8, 0, 0, 0];
        let e = first_entrance(&it, &w("A")).unwrap();
        assert_eq!((e.time, e.piece.to_string()), (1, "B,A".to_string()));
        let e = first_entrance(&[0u8, 1, 0], &w("A")).unwrap();
        assert_eq!((e.time, e.piece.to_string()), (0, "A".to_string()));
        assert!(matches!(first_entrance(&[0u8, 0, 0], &w("B")), Err(NestError::HorizonExceeded { .. })));
    }

    #[test]
    fn fibonacci_prefix() {
        let f = fibonacci_word(13);
        assert_eq!(PieceId::from_vec(f).to_string(), "A,B,A,A,B,A,B,A,A,B,A,A,B");
    }

    #[test]
    fn unicritical_children_are_successors() {
        let t = fibonacci_model(4000);
        for n in 0..8 {
            let a = PieceId::from_vec(t.itinerary(0)[..=n].to_vec());
            let ch: Vec<usize> = children(&t, &a).unwrap().children.iter().map(|c| c.k).collect();
            let su: Vec<usize> = successors(&t, &a).unwrap().successors.iter().map(|s| s.k).collect();
            assert_eq!(ch, su, "depth {n}");
        }
    }

    #[test]
    fn unicritical_b_is_last_successor() {
        let t = fibonacci_model(20000);
        for n in [0usize, 2, 4, 7] {
            let a = PieceId::from_vec(t.itinerary(0)[..=n].to_vec());
            let ab = operators_ab(&t, &a, 0, 4).unwrap();
            let (d, _) = last_successor(&t, &a).unwrap();
            assert_eq!(ab.b.piece, d);
            assert!(ab.nested);
        }
    }
}
