//! Approximate diagnosability of finite metric systems.
//!
//! A fault is a first visit to `F̂`. A system is diagnosable with delay `Δ̂`
//! when every first visit is detected within `Δ̂` steps from outputs alone,
//! and every alarm is backed by a visit to the `ρ̂`-ball `B̂` around `F̂`
//! within the last `Δ̂` steps.
//!
//! The checker searches the twin plant (pairs of runs with equal outputs)
//! for a pair in which the first run has seen a fault while the second has
//! never entered `B̂`. Such ambiguity lasting forever means the fault cannot
//! be detected; otherwise the longest ambiguity bounds the delay.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::finsys::FiniteSystem;

/// Cap on the nodes explored when the alarm window is computed exactly.
pub const BELIEF_LIMIT: usize = 4_000_000;

/// Default cap on the number of run prefixes the brute-force oracle keeps.
pub const BRUTE_FORCE_LIMIT: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosisError {
    #[error("fault state {0} is out of range")]
    OutOfRange(usize),
    #[error("fault set contains initial state {0}")]
    FaultMeetsInitial(usize),
    #[error("radius must be a non-negative number, got {0}")]
    BadRadius(f64),
    #[error("system is not diagnosable; no diagnoser exists")]
    NotDiagnosable,
    #[error("initial state {0} lies within the fault neighbourhood, so the first output cannot be alarm-free")]
    InitialInBall(usize),
    #[error("observation {step} is inconsistent with the model")]
    InfeasibleObservation { step: usize },
    #[error("alarms of the belief diagnoser cannot be bounded to a finite window after a fault-neighbourhood visit")]
    UnboundedAlarmWindow,
    #[error("brute-force search exceeded {0} run prefixes")]
    Resource(usize),
    #[error("horizon must be at least 1")]
    Horizon,
}

/// Fault states (by index) and the radius of their neighbourhood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultSpec {
    pub faults: Vec<usize>,
    pub rho: f64,
    /// Precomputed neighbourhood, for fault sets that extend beyond the
    /// states of the system. Must contain `faults`.
    #[serde(skip)]
    pub ball: Option<Vec<usize>>,
}

impl FaultSpec {
    pub fn new(mut faults: Vec<usize>, rho: f64) -> Self {
        faults.sort_unstable();
        faults.dedup();
        FaultSpec { faults, rho, ball: None }
    }

    pub fn with_ball(mut self, mut ball: Vec<usize>) -> Self {
        ball.extend_from_slice(&self.faults);
        ball.sort_unstable();
        ball.dedup();
        self.ball = Some(ball);
        self
    }

    fn validate(&self, s: &FiniteSystem) -> Result<(), DiagnosisError> {
        if self.rho.is_nan() || self.rho < 0.0 {
            return Err(DiagnosisError::BadRadius(self.rho));
        }
        if let Some(&f) = self.faults.iter().chain(self.ball.iter().flatten()).find(|&&f| f >= s.num_states()) {
            return Err(DiagnosisError::OutOfRange(f));
        }
        if let Some(&i) = s.initial().iter().find(|i| self.faults.binary_search(i).is_ok()) {
            return Err(DiagnosisError::FaultMeetsInitial(i));
        }
        Ok(())
    }

    fn masks(&self, s: &FiniteSystem) -> (Vec<bool>, Vec<bool>) {
        let mut fault = vec![false; s.num_states()];
        for &f in &self.faults {
            fault[f] = true;
        }
        let mut ball = vec![false; s.num_states()];
        let members = match &self.ball {
            Some(b) => b.clone(),
            None => s.ball_states(&self.faults, self.rho),
        };
        for b in members {
            ball[b] = true;
        }
        (fault, ball)
    }
}

/// Two runs with equal outputs: the first enters `F̂`, the second never
/// enters `B̂`. For lasso witnesses the suffix from `loop_start` repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub faulty: Vec<usize>,
    pub safe: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop_start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub diagnosable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
    /// Delay within which every alarm of the belief diagnoser follows a
    /// visit to the fault neighbourhood; `None` if no such bound exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alarm_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Nodes explored: tagged pairs for the checker, run prefixes for the oracle.
    pub explored: usize,
}

impl Verdict {
    fn diagnosable(delta: usize, explored: usize) -> Self {
        Verdict { diagnosable: true, delta: Some(delta), alarm_window: None, witness: None, explored }
    }
}

/// Re-checks a witness against the definition. Returns the reason on failure.
pub fn validate_witness(s: &FiniteSystem, spec: &FaultSpec, w: &Witness) -> Result<(), String> {
    let (fault, ball) = spec.masks(s);
    if w.faulty.is_empty() || w.faulty.len() != w.safe.len() {
        return Err("runs must be non-empty and of equal length".into());
    }
    for run in [&w.faulty, &w.safe] {
        if !s.initial().contains(&run[0]) {
            return Err(format!("run starts at non-initial state {}", run[0]));
        }
        s.output_run(run).map_err(|e| e.to_string())?;
    }
    if let Some(t) = w.faulty.iter().zip(&w.safe).position(|(&a, &b)| s.output_symbol(a) != s.output_symbol(b)) {
        return Err(format!("outputs differ at step {t}"));
    }
    if !w.faulty.iter().any(|&x| fault[x]) {
        return Err("first run never enters the fault set".into());
    }
    if let Some(t) = w.safe.iter().position(|&x| ball[x]) {
        return Err(format!("second run enters the fault neighbourhood at step {t}"));
    }
    if let Some(k) = w.loop_start {
        let (a, b) = (w.faulty.last().unwrap(), w.safe.last().unwrap());
        if k >= w.faulty.len() || !s.post(*a).contains(&w.faulty[k]) || !s.post(*b).contains(&w.safe[k]) {
            return Err("lasso does not close".into());
        }
    }
    Ok(())
}

/// Successors of a state grouped by output symbol, sorted by symbol.
fn grouped_post(s: &FiniteSystem) -> Vec<Vec<(usize, Vec<usize>)>> {
    (0..s.num_states())
        .map(|x| {
            let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for y in s.post(x) {
                g.entry(s.output_symbol(y)).or_default().push(y);
            }
            g.into_iter().collect()
        })
        .collect()
}

fn fault_reachable(s: &FiniteSystem, fault: &[bool]) -> bool {
    let mut seen = vec![false; s.num_states()];
    let mut queue: VecDeque<usize> = s.initial().iter().copied().collect();
    for &i in s.initial() {
        seen[i] = true;
    }
    while let Some(x) = queue.pop_front() {
        if fault[x] {
            return true;
        }
        for y in s.post(x) {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    false
}

/// Longest path, counted in nodes, inside the sub-graph induced by `member`.
/// `Err` carries the residual in-degrees when that sub-graph has a cycle:
/// exactly the nodes with positive residual lie on or after a cycle.
fn longest_path(member: &[bool], edges: &[Vec<u32>]) -> Result<usize, Vec<u32>> {
    let mut indeg = vec![0u32; member.len()];
    let mut total = 0;
    for v in (0..member.len()).filter(|&v| member[v]) {
        total += 1;
        for &w in edges[v].iter().filter(|&&w| member[w as usize]) {
            indeg[w as usize] += 1;
        }
    }
    let mut longest = vec![1usize; member.len()];
    let mut queue: VecDeque<usize> = (0..member.len()).filter(|&v| member[v] && indeg[v] == 0).collect();
    let (mut done, mut best) = (0, 0);
    while let Some(v) = queue.pop_front() {
        done += 1;
        best = best.max(longest[v]);
        for &w in edges[v].iter().filter(|&&w| member[w as usize]) {
            let w = w as usize;
            longest[w] = longest[w].max(longest[v] + 1);
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    if done == total {
        Ok(best)
    } else {
        Err(indeg)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct PairNode {
    i: usize,
    j: usize,
    /// The first run has visited `F̂`.
    seen: bool,
    /// The first run has visited `B̂`.
    visited: bool,
}

/// Decides diagnosability on the twin plant.
///
/// Nodes are pairs `(i, j)` with equal output histories, where `j` has never
/// entered `B̂` (pairs where it has are dropped), tagged with whether the
/// first run has visited `F̂` and `B̂`. The system is diagnosable iff the
/// fault-seen part is acyclic; the delay is one more than the number of
/// nodes on its longest path, or 0 when no fault is reachable.
///
/// The verdict also carries the alarm window of the belief diagnoser: the
/// delay after which its alarms are guaranteed to be backed by a recent
/// visit to `B̂`. It is the largest of the delay and one more than the
/// longest stay of the first run outside `B̂` after having visited it.
pub fn check_diagnosability(s: &FiniteSystem, spec: &FaultSpec) -> Result<Verdict, DiagnosisError> {
    spec.validate(s)?;
    let (fault, ball) = spec.masks(s);
    if !fault_reachable(s, &fault) {
        return Ok(Verdict { alarm_window: Some(0), ..Verdict::diagnosable(0, 0) });
    }
    let post = grouped_post(s);

    let mut ids: HashMap<PairNode, u32> = HashMap::new();
    let mut nodes: Vec<PairNode> = Vec::new();
    let mut parent: Vec<u32> = Vec::new();
    let mut edges: Vec<Vec<u32>> = Vec::new();
    let mut intern = |node: PairNode, from: u32, nodes: &mut Vec<PairNode>| -> u32 {
        *ids.entry(node).or_insert_with(|| {
            nodes.push(node);
            parent.push(from);
            nodes.len() as u32 - 1
        })
    };
    for &i in s.initial() {
        for &j in s.initial() {
            if s.output_symbol(i) == s.output_symbol(j) && !ball[j] {
                intern(PairNode { i, j, seen: fault[i], visited: ball[i] }, u32::MAX, &mut nodes);
            }
        }
    }
    let mut k = 0;
    while k < nodes.len() {
        let PairNode { i, j, seen, visited } = nodes[k];
        let mut out = Vec::new();
        let (gi, gj) = (&post[i], &post[j]);
        let (mut a, mut b) = (0, 0);
        while a < gi.len() && b < gj.len() {
            match gi[a].0.cmp(&gj[b].0) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    for &x in &gi[a].1 {
                        for &y in gj[b].1.iter().filter(|&&y| !ball[y]) {
                            let next = PairNode { i: x, j: y, seen: seen || fault[x], visited: visited || ball[x] };
                            out.push(intern(next, k as u32, &mut nodes));
                        }
                    }
                    a += 1;
                    b += 1;
                }
            }
        }
        edges.push(out);
        k += 1;
    }
    let explored = nodes.len();

    let seen: Vec<bool> = nodes.iter().map(|n| n.seen).collect();
    let residual = match longest_path(&seen, &edges) {
        Ok(a) => {
            let delta = a + 1;
            let outside: Vec<bool> = nodes.iter().map(|n| n.visited && !ball[n.i]).collect();
            let alarm_window = match longest_path(&outside, &edges) {
                Ok(n2) => Some(delta.max(n2 + 1)),
                Err(_) => belief_alarm_window(s, &ball, BELIEF_LIMIT).map(|w| delta.max(w)),
            };
            return Ok(Verdict { alarm_window, ..Verdict::diagnosable(delta, explored) });
        }
        Err(residual) => residual,
    };

    // Every node left with positive residual in-degree has such a
    // predecessor; walking backwards must close a cycle.
    let cyclic = |v: usize| seen[v] && residual[v] > 0;
    let mut pred: HashMap<u32, u32> = HashMap::new();
    for v in (0..nodes.len()).filter(|&v| cyclic(v)) {
        for &w in edges[v].iter().filter(|&&w| cyclic(w as usize)) {
            pred.entry(w).or_insert(v as u32);
        }
    }
    let start = (0..nodes.len()).find(|&v| cyclic(v)).unwrap() as u32;
    let mut order: HashMap<u32, usize> = HashMap::from([(start, 0)]);
    let mut walk = vec![start];
    let mut cur = start;
    let entry = loop {
        cur = pred[&cur];
        if let Some(&pos) = order.get(&cur) {
            break pos;
        }
        order.insert(cur, walk.len());
        walk.push(cur);
    };
    let mut cycle: Vec<u32> = walk[entry..].to_vec();
    cycle.reverse();
    let mut prefix = Vec::new();
    let mut p = parent[cycle[0] as usize];
    while p != u32::MAX {
        prefix.push(p);
        p = parent[p as usize];
    }
    prefix.reverse();
    let loop_start = prefix.len();
    let path: Vec<u32> = prefix.into_iter().chain(cycle).collect();
    let witness = Witness {
        faulty: path.iter().map(|&v| nodes[v as usize].i).collect(),
        safe: path.iter().map(|&v| nodes[v as usize].j).collect(),
        loop_start: Some(loop_start),
    };
    Ok(Verdict { diagnosable: false, delta: None, alarm_window: None, witness: Some(witness), explored })
}

/// Exact alarm window of the belief diagnoser: the largest number of steps
/// between the true run's last visit to `B̂` and a first alarm, found by
/// exploring (true state, belief) pairs up to the first alarm. `None` if
/// the gap is unbounded or the exploration exceeds `limit` nodes.
fn belief_alarm_window(s: &FiniteSystem, ball: &[bool], limit: usize) -> Option<usize> {
    let d = Diagnoser { sys: s, ball: ball.to_vec(), delta: 0, silent: false };
    let starts = || {
        s.initial().iter().filter_map(|&x| d.start(s.output_symbol(x)).ok().map(|b| (x, b)))
    };
    // first pass: distinct pre-alarm (state, belief) pairs bound any
    // cycle-free stretch outside the ball
    let mut seen: HashMap<(usize, Belief), ()> = HashMap::new();
    let mut queue: VecDeque<(usize, Belief)> = VecDeque::new();
    for (x, b) in starts() {
        if b.decision() == 0 && seen.insert((x, b.clone()), ()).is_none() {
            queue.push_back((x, b));
        }
    }
    while let Some((x, b)) = queue.pop_front() {
        for y in s.post(x) {
            let (nb, dec) = d.step(&b, s.output_symbol(y), 0).ok()?;
            if dec == 0 && !seen.contains_key(&(y, nb.clone())) {
                if seen.len() >= limit {
                    return None;
                }
                seen.insert((y, nb.clone()), ());
                queue.push_back((y, nb));
            }
        }
    }
    let cap = seen.len() + 1;
    if cap.saturating_mul(cap + 2) > limit.saturating_mul(4) {
        return None;
    }
    // second pass: carry the time since the last ball visit, capped
    let tick = |t: Option<usize>, y: usize| if ball[y] { Some(0) } else { t.map(|t| (t + 1).min(cap)) };
    let mut visited: HashSet<(usize, Belief, Option<usize>)> = HashSet::new();
    let mut queue: VecDeque<(usize, Belief, Option<usize>)> = VecDeque::new();
    let mut worst = 0;
    for (x, b) in starts() {
        let t = ball[x].then_some(0);
        if b.decision() == 1 {
            worst = worst.max(t?);
        } else if visited.insert((x, b.clone(), t)) {
            queue.push_back((x, b, t));
        }
    }
    while let Some((x, b, t)) = queue.pop_front() {
        for y in s.post(x) {
            let (nb, dec) = d.step(&b, s.output_symbol(y), 0).ok()?;
            let nt = tick(t, y);
            if dec == 1 {
                // the true run is consistent, so it has visited the ball
                let gap = nt?;
                if gap >= cap {
                    return None;
                }
                worst = worst.max(gap);
            } else if visited.insert((y, nb.clone(), nt)) {
                queue.push_back((y, nb, nt));
            }
        }
    }
    Some(worst)
}

/// Unrolls a lasso witness until it has at least `len` steps.
pub fn unroll(w: &Witness, len: usize) -> Witness {
    let Some(k) = w.loop_start else { return w.clone() };
    let mut out = w.clone();
    let mut idx = k;
    while out.faulty.len() < len {
        out.faulty.push(w.faulty[idx]);
        out.safe.push(w.safe[idx]);
        idx = if idx + 1 == w.faulty.len() { k } else { idx + 1 };
    }
    out.loop_start = None;
    out
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Member {
    state: usize,
    /// Time of the first fault visit on this run.
    fault_time: Option<usize>,
    /// The run has not entered the fault neighbourhood yet.
    clear: bool,
}

/// Exhaustive transcription of the definition over a finite horizon.
///
/// Runs are grouped by output history (a prefix tree of depth `horizon`).
/// Faults occurring by time `h = horizon / 2` are considered, and a delay
/// `Δ ≤ horizon − 1 − h` is refuted when some output history of length
/// `t + Δ + 1` is shared by a run with a first fault at `t` and a run that
/// has stayed outside `B̂`: no diagnoser can alarm on that history without
/// blaming the clear run, nor stay silent without missing the fault. The
/// smallest unrefuted delay is reported; if none, a witness pair.
pub fn brute_force_check(s: &FiniteSystem, spec: &FaultSpec, horizon: usize, limit: usize) -> Result<Verdict, DiagnosisError> {
    spec.validate(s)?;
    if horizon == 0 {
        return Err(DiagnosisError::Horizon);
    }
    let (fault, ball) = spec.masks(s);
    let h = horizon / 2;
    let max_delta = horizon - 1 - h;
    let mut refuted = vec![false; max_delta + 1];

    // arena of run tips; parent links recover the runs
    let mut arena: Vec<(Member, u32)> = Vec::new();
    let mut level: Vec<Vec<u32>> = Vec::new();
    let mut roots: BTreeMap<usize, BTreeSet<Member>> = BTreeMap::new();
    for &i in s.initial() {
        let m = Member { state: i, fault_time: fault[i].then_some(0), clear: !ball[i] };
        roots.entry(s.output_symbol(i)).or_default().insert(m);
    }
    for (_, members) in roots {
        level.push(
            members
                .into_iter()
                .map(|m| {
                    arena.push((m, u32::MAX));
                    arena.len() as u32 - 1
                })
                .collect(),
        );
    }
    // best witness so far: (depth, faulty tip, clear tip)
    let mut witness_tips: Option<(usize, u32, u32)> = None;
    for depth in 0..horizon {
        for node in &level {
            let clear = node.iter().copied().find(|&v| arena[v as usize].0.clear);
            let Some(clear) = clear else { continue };
            for &v in node {
                if let Some(t) = arena[v as usize].0.fault_time {
                    if t <= h && depth - t <= max_delta {
                        refuted[depth - t] = true;
                    }
                    if t <= h && depth - t >= max_delta && witness_tips.is_none_or(|(d, ..)| depth > d) {
                        witness_tips = Some((depth, v, clear));
                    }
                }
            }
        }
        if depth + 1 == horizon {
            break;
        }
        let mut next = Vec::new();
        for node in &level {
            let mut children: BTreeMap<usize, BTreeMap<Member, u32>> = BTreeMap::new();
            for &v in node {
                let m = arena[v as usize].0;
                for y in s.post(m.state) {
                    let child = Member {
                        state: y,
                        fault_time: m.fault_time.or(fault[y].then_some(depth + 1)),
                        clear: m.clear && !ball[y],
                    };
                    children.entry(s.output_symbol(y)).or_default().entry(child).or_insert(v);
                }
            }
            for (_, members) in children {
                let mut ids = Vec::with_capacity(members.len());
                for (m, parent) in members {
                    arena.push((m, parent));
                    ids.push(arena.len() as u32 - 1);
                }
                next.push(ids);
            }
            if arena.len() > limit {
                return Err(DiagnosisError::Resource(limit));
            }
        }
        level = next;
    }
    let explored = arena.len();
    if let Some(delta) = refuted.iter().position(|&r| !r) {
        return Ok(Verdict::diagnosable(delta, explored));
    }
    let (_, a, b) = witness_tips.expect("a refuted delay leaves a witness");
    let trace = |mut v: u32| {
        let mut run = Vec::new();
        while v != u32::MAX {
            run.push(arena[v as usize].0.state);
            v = arena[v as usize].1;
        }
        run.reverse();
        run
    };
    let witness = Witness { faulty: trace(a), safe: trace(b), loop_start: None };
    Ok(Verdict { diagnosable: false, delta: None, alarm_window: None, witness: Some(witness), explored })
}

/// Online diagnoser: tracks every state consistent with the observations,
/// tagged by whether its run has visited the fault neighbourhood.
#[derive(Debug, Clone)]
pub struct Diagnoser<'a> {
    sys: &'a FiniteSystem,
    ball: Vec<bool>,
    pub delta: usize,
    silent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Belief {
    /// `(state, visited)` pairs, sorted.
    pub members: Vec<(usize, bool)>,
}

impl Belief {
    /// 1 iff every consistent run has visited the fault neighbourhood.
    pub fn decision(&self) -> u8 {
        (!self.members.is_empty() && self.members.iter().all(|&(_, v)| v)) as u8
    }
}

/// Builds the belief diagnoser; its delay is the certified alarm window.
pub fn synthesize_diagnoser<'a>(s: &'a FiniteSystem, spec: &FaultSpec) -> Result<Diagnoser<'a>, DiagnosisError> {
    let verdict = check_diagnosability(s, spec)?;
    if !verdict.diagnosable {
        return Err(DiagnosisError::NotDiagnosable);
    }
    let (_, ball) = spec.masks(s);
    if let Some(&i) = s.initial().iter().find(|&&i| ball[i]) {
        return Err(DiagnosisError::InitialInBall(i));
    }
    let delta = verdict.alarm_window.ok_or(DiagnosisError::UnboundedAlarmWindow)?;
    // with no reachable fault the constant-0 diagnoser is the right one
    Ok(Diagnoser { sys: s, ball, delta, silent: verdict.delta == Some(0) })
}

impl Diagnoser<'_> {
    /// Belief after the first observation.
    pub fn start(&self, y0: usize) -> Result<Belief, DiagnosisError> {
        let members: Vec<(usize, bool)> = self
            .sys
            .initial()
            .iter()
            .filter(|&&i| self.sys.output_symbol(i) == y0)
            .map(|&i| (i, self.ball[i]))
            .collect();
        if members.is_empty() {
            return Err(DiagnosisError::InfeasibleObservation { step: 0 });
        }
        Ok(Belief { members })
    }

    pub fn decision(&self, belief: &Belief) -> u8 {
        if self.silent {
            0
        } else {
            belief.decision()
        }
    }

    pub fn step(&self, belief: &Belief, y: usize, step: usize) -> Result<(Belief, u8), DiagnosisError> {
        let mut next: BTreeSet<(usize, bool)> = BTreeSet::new();
        for &(x, visited) in &belief.members {
            for z in self.sys.post(x) {
                if self.sys.output_symbol(z) == y {
                    next.insert((z, visited || self.ball[z]));
                }
            }
        }
        // (z, false) and (z, true) both present: keep both, the unvisited
        // copy is what withholds the alarm
        if next.is_empty() {
            return Err(DiagnosisError::InfeasibleObservation { step });
        }
        let b = Belief { members: next.into_iter().collect() };
        let d = self.decision(&b);
        Ok((b, d))
    }

    /// Decisions along a whole observation sequence of output symbols.
    pub fn run(&self, outputs: &[usize]) -> Result<Vec<u8>, DiagnosisError> {
        let Some((&y0, rest)) = outputs.split_first() else { return Ok(Vec::new()) };
        let mut b = self.start(y0)?;
        let mut out = vec![self.decision(&b)];
        for (k, &y) in rest.iter().enumerate() {
            let (nb, d) = self.step(&b, y, k + 1)?;
            b = nb;
            out.push(d);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractReport {
    pub runs: usize,
    pub faulty_runs: usize,
    pub alarms: usize,
    /// Fault visits not followed by an alarm exactly `Δ̂` steps later.
    pub detection_violations: usize,
    /// First alarms without a neighbourhood visit in the preceding window.
    pub converse_violations: usize,
}

/// Monte-Carlo check of both clauses of the definition on random runs.
///
/// Runs start at a uniformly chosen initial state and pick inputs and
/// successors uniformly; a run stops early if it blocks.
pub fn check_contract(
    s: &FiniteSystem,
    spec: &FaultSpec,
    d: &Diagnoser<'_>,
    runs: usize,
    length: usize,
    seed: u64,
) -> Result<ContractReport, DiagnosisError> {
    let (fault, ball) = spec.masks(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = ContractReport { runs, faulty_runs: 0, alarms: 0, detection_violations: 0, converse_violations: 0 };
    for _ in 0..runs {
        if s.initial().is_empty() {
            break;
        }
        let mut run = vec![s.initial()[rng.gen_range(0..s.initial().len())]];
        while run.len() < length {
            let x = *run.last().unwrap();
            let u = rng.gen_range(0..s.num_inputs());
            let succ = s.successors(x, u);
            if succ.is_empty() {
                break;
            }
            run.push(succ[rng.gen_range(0..succ.len())]);
        }
        let outputs: Vec<usize> = run.iter().map(|&x| s.output_symbol(x)).collect();
        let dec = d.run(&outputs)?;
        if let Some(t) = run.iter().position(|&x| fault[x]) {
            r.faulty_runs += 1;
            if let Some(&v) = dec.get(t + d.delta) {
                if v != 1 {
                    r.detection_violations += 1;
                }
            }
        }
        if let Some(t1) = dec.iter().position(|&v| v == 1) {
            r.alarms += 1;
            let lo = t1.saturating_sub(d.delta);
            if !run[lo..=t1].iter().any(|&x| ball[x]) {
                r.converse_violations += 1;
            }
        }
    }
    Ok(r)
}
