//! Exact branch-and-bound over sentence choices.
//!
//! The search enumerates chosen-id sets in lexicographic order: a node is a
//! sorted prefix of chosen ids, and its children append one larger id. Every
//! node is itself a complete candidate (the "stop here" branch), so the first
//! optimum reached is the lexicographically smallest one. Subtrees are cut
//! with the smallest of three admissible bounds:
//!
//! * a fractional knapsack over the sentence term plus full credit for every
//!   uncovered word reachable from the remaining sentences;
//! * a fractional knapsack over per-sentence stand-alone gains (sentence
//!   term plus the still-uncovered words of that sentence);
//! * a fractional knapsack in which each sentence's gain is split into its
//!   own term and one item per uncovered word, every word priced at the best
//!   density of any open sentence containing it. A chosen set pays at most its
//!   length for the items it earns, and shared words are counted once.
//!
//! A greedy solution improved by local search seeds the incumbent threshold,
//! so a timeout always leaves a feasible answer.

use std::time::{Duration, Instant};

use super::{check_feasible, objective, IlpInstance, Selection};
use crate::error::Result;

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// `None` searches to completion.
    pub timeout: Option<Duration>,
}

impl SolveOptions {
    pub fn with_timeout_ms(ms: Option<u64>) -> Self {
        SolveOptions {
            timeout: ms.map(Duration::from_millis),
        }
    }
}

fn tolerance(x: f64) -> f64 {
    1e-10 * x.abs().max(1.0)
}

struct Search<'a> {
    inst: &'a IlpInstance,
    member_of: Vec<Vec<usize>>,
    by_u: Vec<usize>,
    // state
    chosen: Vec<usize>,
    cover: Vec<u32>,
    used: usize,
    usage: Vec<usize>,
    sentence_sum: f64,
    word_sum: f64,
    // incumbents
    /// Maps search indices back to instance indices.
    order: Vec<usize>,
    greedy_value: f64,
    /// Best value so far and the smallest original-index set reaching it.
    best: Option<(f64, Vec<usize>)>,
    deadline: Option<Instant>,
    nodes: u64,
    timed_out: bool,
    scratch: Vec<(f64, usize)>,
    items: Vec<(f64, f64)>,
    seen_words: Vec<u32>,
    word_density: Vec<f64>,
    stamp: u32,
}

impl<'a> Search<'a> {
    fn new(inst: &'a IlpInstance, order: Vec<usize>, greedy_value: f64, deadline: Option<Instant>) -> Self {
        let n = inst.len();
        let mut member_of = vec![Vec::new(); n];
        for (k, e) in inst.exclusions.iter().enumerate() {
            for &i in &e.members {
                member_of[i].push(k);
            }
        }
        let mut by_u: Vec<usize> = (0..n).collect();
        by_u.sort_by(|&a, &b| inst.u[b].total_cmp(&inst.u[a]).then(a.cmp(&b)));
        Search {
            inst,
            member_of,
            by_u,
            chosen: Vec::new(),
            cover: vec![0; inst.v.len()],
            used: 0,
            usage: vec![0; inst.exclusions.len()],
            sentence_sum: 0.0,
            word_sum: 0.0,
            order,
            greedy_value,
            best: None,
            deadline,
            nodes: 0,
            timed_out: false,
            scratch: Vec::with_capacity(n),
            items: Vec::with_capacity(n + inst.v.len()),
            seen_words: vec![0; inst.v.len()],
            word_density: vec![0.0; inst.v.len()],
            stamp: 0,
        }
    }

    fn value(&self) -> f64 {
        let l = self.inst.budget as f64;
        self.inst.lambda * self.sentence_sum / l + (1.0 - self.inst.lambda) * self.word_sum / l
    }

    fn can_add(&self, i: usize) -> bool {
        self.used + self.inst.lengths[i] <= self.inst.budget
            && self.member_of[i]
                .iter()
                .all(|&k| self.usage[k] < self.inst.exclusions[k].cap)
    }

    fn add(&mut self, i: usize) {
        self.chosen.push(i);
        self.used += self.inst.lengths[i];
        self.sentence_sum += self.inst.lengths[i] as f64 * self.inst.u[i];
        for &j in &self.inst.incidence[i] {
            if self.cover[j] == 0 {
                self.word_sum += self.inst.v[j];
            }
            self.cover[j] += 1;
        }
        for &k in &self.member_of[i] {
            self.usage[k] += 1;
        }
    }

    fn remove(&mut self, i: usize) {
        debug_assert_eq!(self.chosen.last(), Some(&i));
        self.chosen.pop();
        self.used -= self.inst.lengths[i];
        for &j in &self.inst.incidence[i] {
            self.cover[j] -= 1;
        }
        for &k in &self.member_of[i] {
            self.usage[k] -= 1;
        }
    }

    /// Upper bound on any extension by ids greater than `after`, in objective units.
    fn bound(&mut self, after: Option<usize>) -> f64 {
        let inst = self.inst;
        let l = inst.budget as f64;
        let lambda = inst.lambda;
        let remaining = (inst.budget - self.used) as f64;
        let start = after.map_or(0, |k| k + 1);
        let open = |s: &Self, i: usize| i >= start && s.can_add(i);

        // bound 1: sentence term by u-density plus every reachable uncovered word
        let mut room = remaining;
        let mut sentence_extra = 0.0;
        for &i in &self.by_u {
            if room <= 0.0 {
                break;
            }
            if !open(self, i) {
                continue;
            }
            let take = (inst.lengths[i] as f64).min(room);
            sentence_extra += take * inst.u[i];
            room -= take;
        }
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.seen_words.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        let mut word_extra = 0.0;
        self.scratch.clear();
        for i in start..inst.len() {
            if !self.can_add(i) {
                continue;
            }
            let mut gain_words = 0.0;
            for &j in &inst.incidence[i] {
                if self.cover[j] == 0 {
                    gain_words += inst.v[j];
                    if self.seen_words[j] != self.stamp {
                        self.seen_words[j] = self.stamp;
                        self.word_density[j] = 0.0;
                        word_extra += inst.v[j];
                    }
                }
            }
            let gain = lambda * inst.lengths[i] as f64 * inst.u[i] + (1.0 - lambda) * gain_words;
            self.scratch.push((gain, i));
        }
        let first = lambda * sentence_extra + (1.0 - lambda) * word_extra;

        // bound 2: fractional knapsack over stand-alone gains
        self.scratch.sort_by(|a, b| {
            let da = a.0 / inst.lengths[a.1] as f64;
            let db = b.0 / inst.lengths[b.1] as f64;
            db.total_cmp(&da)
        });
        let mut room = remaining;
        let mut second = 0.0;
        for &(gain, i) in &self.scratch {
            if room <= 0.0 {
                break;
            }
            let len = inst.lengths[i] as f64;
            if len <= room {
                second += gain;
                room -= len;
            } else {
                second += gain * room / len;
                room = 0.0;
            }
        }

        // bound 3: sentence terms and deduplicated words priced by best density
        self.items.clear();
        for &(gain, i) in &self.scratch {
            let density = gain / inst.lengths[i] as f64;
            if density <= 0.0 {
                continue;
            }
            let own = lambda * inst.lengths[i] as f64 * inst.u[i];
            if own > 0.0 {
                self.items.push((density, own));
            }
            for &j in &inst.incidence[i] {
                if self.cover[j] == 0 && self.word_density[j] < density {
                    self.word_density[j] = density;
                }
            }
        }
        if lambda < 1.0 {
            for j in 0..inst.v.len() {
                if self.seen_words[j] == self.stamp && self.word_density[j] > 0.0 && inst.v[j] > 0.0 {
                    self.items.push((self.word_density[j], (1.0 - lambda) * inst.v[j]));
                }
            }
        }
        self.items.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut room = remaining;
        let mut third = 0.0;
        for &(density, value) in &self.items {
            if room <= 0.0 {
                break;
            }
            let cost = value / density;
            if cost <= room {
                third += value;
                room -= cost;
            } else {
                third += density * room;
                room = 0.0;
            }
        }
        self.value() + first.min(second).min(third) / l
    }

    fn threshold(&self) -> f64 {
        let t = self
            .best
            .as_ref()
            .map_or(self.greedy_value, |(b, _)| b.max(self.greedy_value));
        t - tolerance(t)
    }

    fn prune(&self, bound: f64) -> bool {
        bound < self.threshold()
    }

    /// Near-ties are kept until the end, so the order of the search does not
    /// decide which optimum is returned.
    fn offer(&mut self, value: f64) {
        if value < self.threshold() {
            return;
        }
        let mut set: Vec<usize> = self.chosen.iter().map(|&i| self.order[i]).collect();
        set.sort_unstable();
        match &mut self.best {
            Some((b, _)) if value > *b + tolerance(*b) => self.best = Some((value, set)),
            Some((b, current)) => {
                if set < *current {
                    *current = set;
                }
                *b = b.max(value);
            }
            None => self.best = Some((value, set)),
        }
    }

    fn visit(&mut self, last: Option<usize>) {
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.timed_out = true;
                }
            }
        }
        if self.timed_out {
            return;
        }
        let value = self.value();
        self.offer(value);
        let bound = self.bound(last);
        if self.prune(bound) {
            return;
        }
        let start = last.map_or(0, |k| k + 1);
        for i in start..self.inst.len() {
            if !self.can_add(i) {
                continue;
            }
            let saved = (self.sentence_sum, self.word_sum);
            self.add(i);
            self.visit(Some(i));
            self.remove(i);
            (self.sentence_sum, self.word_sum) = saved;
            if self.timed_out {
                return;
            }
        }
    }
}

fn selection(inst: &IlpInstance, chosen: Vec<usize>, proven_optimal: bool) -> Result<Selection> {
    Ok(Selection {
        objective: objective(inst, &chosen)?,
        covered: inst.coverage(&chosen),
        total_length: inst.total_length(&chosen),
        chosen,
        proven_optimal,
    })
}

/// Greedy warm start: repeatedly add the sentence with the best marginal gain
/// per unit length, then keep the better of that and the best single sentence.
pub fn greedy(inst: &IlpInstance) -> Vec<usize> {
    let mut search = Search::new(inst, (0..inst.len()).collect(), f64::NEG_INFINITY, None);
    let l = inst.budget as f64;
    let marginal = |s: &Search, i: usize| {
        let words: f64 = inst.incidence[i]
            .iter()
            .filter(|&&j| s.cover[j] == 0)
            .map(|&j| inst.v[j])
            .sum();
        (inst.lambda * inst.lengths[i] as f64 * inst.u[i] + (1.0 - inst.lambda) * words) / l
    };
    loop {
        let mut pick: Option<(f64, usize)> = None;
        for i in 0..inst.len() {
            if search.chosen.contains(&i) || !search.can_add(i) {
                continue;
            }
            let gain = marginal(&search, i);
            if gain <= 0.0 {
                continue;
            }
            let ratio = gain / inst.lengths[i] as f64;
            if pick.is_none_or(|(r, _)| ratio > r) {
                pick = Some((ratio, i));
            }
        }
        match pick {
            Some((_, i)) => search.add(i),
            None => break,
        }
    }
    let mut greedy_set = search.chosen.clone();
    greedy_set.sort_unstable();
    let empty = Search::new(inst, (0..inst.len()).collect(), f64::NEG_INFINITY, None);
    let single = (0..inst.len())
        .filter(|&i| empty.can_add(i))
        .map(|i| (marginal(&empty, i), i))
        .fold(None::<(f64, usize)>, |acc, x| match acc {
            Some(a) if a.0 >= x.0 => Some(a),
            _ => Some(x),
        });
    let greedy_value = objective(inst, &greedy_set).unwrap_or(0.0);
    let start = match single {
        Some((v, i)) if v > greedy_value => vec![i],
        _ => greedy_set,
    };
    improve(inst, start)
}

/// Best-improvement local search over single additions and one-for-one swaps.
fn improve(inst: &IlpInstance, mut set: Vec<usize>) -> Vec<usize> {
    let score = |s: &[usize]| check_feasible(inst, s).ok().and_then(|_| objective(inst, s).ok());
    let Some(mut current) = score(&set) else {
        return set;
    };
    for _ in 0..64 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut consider = |cand: Vec<usize>| {
            if let Some(v) = score(&cand) {
                if v > current + 1e-12 && best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, cand));
                }
            }
        };
        for a in (0..inst.len()).filter(|a| !set.contains(a)) {
            let mut added = set.clone();
            added.push(a);
            added.sort_unstable();
            consider(added.clone());
            for &r in &set {
                consider(added.iter().copied().filter(|&x| x != r).collect());
            }
        }
        match best {
            Some((v, s)) => {
                current = v;
                set = s;
            }
            None => break,
        }
    }
    set
}

/// The instance with sentences reordered by stand-alone value per unit
/// length, plus the map from new to old indices.
fn by_density(inst: &IlpInstance) -> (IlpInstance, Vec<usize>) {
    let density = |i: usize| {
        let words: f64 = inst.incidence[i].iter().map(|&j| inst.v[j]).sum();
        (inst.lambda * inst.lengths[i] as f64 * inst.u[i] + (1.0 - inst.lambda) * words) / inst.lengths[i] as f64
    };
    let mut order: Vec<usize> = (0..inst.len()).collect();
    order.sort_by(|&a, &b| density(b).total_cmp(&density(a)).then(a.cmp(&b)));
    let mut position = vec![0; inst.len()];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let mut permuted = inst.clone();
    permuted.u = order.iter().map(|&i| inst.u[i]).collect();
    permuted.lengths = order.iter().map(|&i| inst.lengths[i]).collect();
    permuted.incidence = order.iter().map(|&i| inst.incidence[i].clone()).collect();
    permuted.sentence_ids = order.iter().map(|&i| inst.sentence_ids[i]).collect();
    for e in &mut permuted.exclusions {
        e.members = e.members.iter().map(|&i| position[i]).collect();
        e.members.sort_unstable();
    }
    (permuted, order)
}

/// Solves the instance exactly; among equal-valued optima the
/// lexicographically smallest chosen-id sequence is returned.
///
/// Sentences are searched in order of stand-alone value per unit length,
/// which tightens the bounds early; ties are resolved on original indices.
pub fn solve(inst: &IlpInstance, options: SolveOptions) -> Result<Selection> {
    inst.validate()?;
    let warm = greedy(inst);
    let warm_value = objective(inst, &warm)?;
    let deadline = options.timeout.map(|t| Instant::now() + t);
    let (permuted, order) = by_density(inst);
    let mut search = Search::new(&permuted, order, warm_value, deadline);
    search.visit(None);
    let proven = !search.timed_out;
    match search.best {
        Some((_, chosen)) => selection(inst, chosen, proven),
        None => selection(inst, warm, false),
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy;
    use super::super::{check_feasible, Exclusion};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: best objective over all feasible subsets and the
    /// lexicographically smallest set reaching it.
    fn brute_force(inst: &IlpInstance) -> (f64, Vec<usize>) {
        let n = inst.len();
        let feasible: Vec<(f64, Vec<usize>)> = (0u32..(1 << n))
            .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect::<Vec<usize>>())
            .filter(|set| check_feasible(inst, set).is_ok())
            .map(|set| (objective(inst, &set).unwrap(), set))
            .collect();
        let best = feasible.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
        let lex = feasible
            .into_iter()
            .filter(|f| f.0 >= best - tolerance(best))
            .map(|f| f.1)
            .min()
            .unwrap();
        (best, lex)
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> IlpInstance {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=30);
        let incidence = (0..n)
            .map(|_| {
                let mut w: Vec<usize> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(0..m)).collect();
                w.sort_unstable();
                w.dedup();
                w
            })
            .collect();
        let mut inst = IlpInstance {
            u: (0..n).map(|_| rng.random::<f64>()).collect(),
            v: (0..m).map(|_| rng.random::<f64>() * 2.0).collect(),
            lengths: (0..n).map(|_| rng.random_range(1..=10)).collect(),
            incidence,
            budget: rng.random_range(5..=25),
            lambda: [0.0, 0.3, 0.7, 1.0][rng.random_range(0..4)],
            exclusions: vec![],
            sentence_ids: (0..n).collect(),
        };
        if rng.random_bool(0.5) {
            let members: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            inst.exclusions.push(Exclusion::with_ratio(members, 0.6));
        }
        inst
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..150 {
            let inst = random_instance(&mut rng);
            let sel = solve(&inst, SolveOptions::default()).unwrap();
            let (best, lex) = brute_force(&inst);
            assert!((sel.objective - best).abs() <= 1e-9, "{} vs {best}", sel.objective);
            assert_eq!(sel.chosen, lex);
            assert!(sel.proven_optimal);
            check_feasible(&inst, &sel.chosen).unwrap();
            assert_eq!(sel.covered, inst.coverage(&sel.chosen));
        }
    }

    #[test]
    fn budget_forces_empty() {
        let inst = IlpInstance { budget: 2, ..toy() };
        let sel = solve(&inst, SolveOptions::default()).unwrap();
        assert!(sel.chosen.is_empty());
        assert_eq!(sel.objective, 0.0);
    }

    #[test]
    fn unit_length_hand_case() {
        let inst = IlpInstance {
            u: vec![5.0, 4.0, 3.0],
            v: vec![0.0; 3],
            lengths: vec![1, 1, 1],
            incidence: vec![vec![0], vec![1], vec![2]],
            budget: 2,
            lambda: 1.0,
            exclusions: vec![],
            sentence_ids: vec![0, 1, 2],
        };
        assert_eq!(solve(&inst, SolveOptions::default()).unwrap().chosen, [0, 1]);
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let inst = IlpInstance {
            u: vec![1.0, 1.0, 1.0],
            v: vec![0.0; 3],
            lengths: vec![1, 1, 1],
            incidence: vec![vec![0], vec![1], vec![2]],
            budget: 1,
            lambda: 1.0,
            exclusions: vec![],
            sentence_ids: vec![0, 1, 2],
        };
        assert_eq!(solve(&inst, SolveOptions::default()).unwrap().chosen, [0]);
        let zero = IlpInstance {
            u: vec![0.0; 3],
            budget: 3,
            ..inst
        };
        assert!(solve(&zero, SolveOptions::default()).unwrap().chosen.is_empty());
    }

    #[test]
    fn exclusion_respected() {
        let mut inst = IlpInstance {
            u: vec![1.0; 7],
            v: vec![0.0; 7],
            lengths: vec![1; 7],
            incidence: (0..7).map(|i| vec![i]).collect(),
            budget: 5,
            lambda: 1.0,
            exclusions: vec![],
            sentence_ids: (0..7).collect(),
        };
        inst.u[5] = 0.5;
        inst.u[6] = 0.5;
        let first = solve(&inst, SolveOptions::default()).unwrap();
        assert_eq!(first.chosen, [0, 1, 2, 3, 4]);
        inst.exclusions.push(Exclusion::with_ratio(first.chosen, 0.6));
        let second = solve(&inst, SolveOptions::default()).unwrap();
        assert_eq!(second.chosen, [0, 1, 2, 5, 6]);
    }

    #[test]
    fn timeout_returns_feasible_incumbent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let inst = IlpInstance {
            u: (0..n).map(|_| rng.random::<f64>()).collect(),
            v: (0..200).map(|_| rng.random::<f64>()).collect(),
            lengths: (0..n).map(|_| rng.random_range(5..30)).collect(),
            incidence: (0..n)
                .map(|_| {
                    let mut w: Vec<usize> = (0..8).map(|_| rng.random_range(0..200)).collect();
                    w.sort_unstable();
                    w.dedup();
                    w
                })
                .collect(),
            budget: 150,
            lambda: 0.5,
            exclusions: vec![],
            sentence_ids: (0..n).collect(),
        };
        let sel = solve(&inst, SolveOptions::with_timeout_ms(Some(0))).unwrap();
        check_feasible(&inst, &sel.chosen).unwrap();
        assert!(sel.objective >= objective(&inst, &greedy(&inst)).unwrap() - 1e-12);
    }
}
