//! Particle load balancing: turn per-rank particle counts into a transfer plan.
//!
//! Ranks are first classified as senders (holding more than their target) or
//! receivers (holding less). Three schedulers then match them:
//!
//! * [`greedy_schedule`] walks senders in the given order and fills receivers
//!   one after another. Loads end exactly at their targets.
//! * [`sorted_greedy_schedule`] does the same after sorting both lists by
//!   amount, largest first, which usually needs fewer links.
//! * [`largest_gradient_schedule`] pairs the i-th largest sender with the
//!   i-th largest receiver only, capping the links at `min(|S|, |R|)` and
//!   accepting some residual imbalance.
//!
//! All functions are deterministic; every rank can run them on the same
//! gathered [`LoadReport`] and obtain the same plan.

use std::io::Write;
use thiserror::Error;

pub type Rank = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("classification is inconsistent: surplus {surplus} vs deficit {deficit}")]
    InconsistentClassification { surplus: usize, deficit: usize },
}

/// Particle counts per rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub counts: Vec<usize>,
}

impl LoadReport {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn ranks(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `⌊N/P⌋` per rank plus one extra particle for each of the first `N mod P` ranks.
    pub fn targets(&self) -> Vec<usize> {
        balanced_targets(self.total(), self.ranks())
    }
}

/// Even split of `total` over `ranks`, remainder to the lowest ranks.
pub fn balanced_targets(total: usize, ranks: usize) -> Vec<usize> {
    if ranks == 0 {
        return Vec::new();
    }
    let (base, extra) = (total / ranks, total % ranks);
    (0..ranks).map(|r| base + usize::from(r < extra)).collect()
}

/// Senders with their surplus and receivers with their deficit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    pub senders: Vec<(Rank, usize)>,
    pub receivers: Vec<(Rank, usize)>,
}

impl Classification {
    pub fn total_surplus(&self) -> usize {
        self.senders.iter().map(|s| s.1).sum()
    }

    pub fn total_deficit(&self) -> usize {
        self.receivers.iter().map(|r| r.1).sum()
    }

    fn check(&self) -> Result<(), ScheduleError> {
        let (surplus, deficit) = (self.total_surplus(), self.total_deficit());
        if surplus != deficit {
            return Err(ScheduleError::InconsistentClassification { surplus, deficit });
        }
        Ok(())
    }
}

pub fn classify(report: &LoadReport) -> Classification {
    let mut c = Classification::default();
    for (rank, (&count, target)) in report.counts.iter().zip(report.targets()).enumerate() {
        if count > target {
            c.senders.push((rank, count - target));
        } else if count < target {
            c.receivers.push((rank, target - count));
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub from: Rank,
    pub to: Rank,
    pub count: usize,
}

/// Ordered list of transfers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RouteSchedule {
    pub transfers: Vec<Transfer>,
}

impl RouteSchedule {
    pub fn is_empty(&self) -> bool {
        self.transfers.is_empty()
    }

    /// Number of sender→receiver links used.
    pub fn link_count(&self) -> usize {
        self.transfers.len()
    }

    pub fn particles_moved(&self) -> usize {
        self.transfers.iter().map(|t| t.count).sum()
    }

    /// Loads after executing the schedule.
    pub fn apply(&self, counts: &[usize]) -> Vec<usize> {
        let mut out = counts.to_vec();
        for t in &self.transfers {
            out[t.from] -= t.count;
            out[t.to] += t.count;
        }
        out
    }

    /// Appends `step,from,to,count` rows.
    pub fn write_csv<W: Write>(&self, step: usize, w: &mut csv::Writer<W>) -> csv::Result<()> {
        for t in &self.transfers {
            w.write_record(&[
                step.to_string(),
                t.from.to_string(),
                t.to.to_string(),
                t.count.to_string(),
            ])?;
        }
        Ok(())
    }
}

pub const SCHEDULE_CSV_HEADER: [&str; 4] = ["step", "from", "to", "count"];

/// Largest amount first, ties by ascending rank.
fn sorted_desc(list: &[(Rank, usize)]) -> Vec<(Rank, usize)> {
    let mut v = list.to_vec();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

fn greedy(senders: &[(Rank, usize)], receivers: &[(Rank, usize)]) -> RouteSchedule {
    let mut remaining: Vec<(Rank, usize)> = receivers.to_vec();
    let mut j = 0;
    let mut transfers = Vec::new();
    for &(from, surplus) in senders {
        let mut left = surplus;
        while left > 0 {
            let (to, deficit) = &mut remaining[j];
            let count = left.min(*deficit);
            transfers.push(Transfer {
                from,
                to: *to,
                count,
            });
            left -= count;
            *deficit -= count;
            if *deficit == 0 {
                j += 1;
            }
        }
    }
    RouteSchedule { transfers }
}

/// Greedy matching in the given order with a forward-only receiver cursor.
pub fn greedy_schedule(c: &Classification) -> Result<RouteSchedule, ScheduleError> {
    c.check()?;
    Ok(greedy(&c.senders, &c.receivers))
}

/// Greedy matching after sorting senders and receivers by amount, descending.
pub fn sorted_greedy_schedule(c: &Classification) -> Result<RouteSchedule, ScheduleError> {
    c.check()?;
    Ok(greedy(&sorted_desc(&c.senders), &sorted_desc(&c.receivers)))
}

/// Pairs the i-th largest sender with the i-th largest receiver, moving
/// `min(surplus, deficit)` along each of at most `min(|S|, |R|)` links.
///
/// Only the pairing matters here, so unequal surplus and deficit totals are accepted.
pub fn largest_gradient_schedule(c: &Classification) -> Result<RouteSchedule, ScheduleError> {
    let transfers = sorted_desc(&c.senders)
        .into_iter()
        .zip(sorted_desc(&c.receivers))
        .filter_map(|((from, surplus), (to, deficit))| {
            let count = surplus.min(deficit);
            (count > 0).then_some(Transfer { from, to, count })
        })
        .collect();
    Ok(RouteSchedule { transfers })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    Greedy,
    #[default]
    SortedGreedy,
    LargestGradient,
}

impl Scheduler {
    pub fn schedule(self, c: &Classification) -> Result<RouteSchedule, ScheduleError> {
        match self {
            Scheduler::Greedy => greedy_schedule(c),
            Scheduler::SortedGreedy => sorted_greedy_schedule(c),
            Scheduler::LargestGradient => largest_gradient_schedule(c),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheduler::Greedy => "gs",
            Scheduler::SortedGreedy => "sgs",
            Scheduler::LargestGradient => "lgs",
        }
    }
}

impl std::str::FromStr for Scheduler {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gs" | "greedy" => Ok(Scheduler::Greedy),
            "sgs" | "sorted-greedy" => Ok(Scheduler::SortedGreedy),
            "lgs" | "largest-gradient" => Ok(Scheduler::LargestGradient),
            other => Err(format!(
                "unknown scheduler `{other}` (expected gs, sgs or lgs)"
            )),
        }
    }
}

impl std::fmt::Display for Scheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: Rank = 0;
    const B: Rank = 1;
    const C: Rank = 2;
    const D: Rank = 3;

    fn cls(senders: &[(Rank, usize)], receivers: &[(Rank, usize)]) -> Classification {
        Classification {
            senders: senders.to_vec(),
            receivers: receivers.to_vec(),
        }
    }

    fn plan(s: &RouteSchedule) -> Vec<(Rank, Rank, usize)> {
        s.transfers
            .iter()
            .map(|t| (t.from, t.to, t.count))
            .collect()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify(&LoadReport::new(vec![4, 4, 4])),
            Classification::default()
        );
        assert_eq!(
            classify(&LoadReport::new(vec![8, 4, 0])),
            cls(&[(0, 4)], &[(2, 4)])
        );
        let r = LoadReport::new(vec![7, 0, 0]);
        assert_eq!(r.targets(), vec![3, 2, 2]);
        assert_eq!(classify(&r), cls(&[(0, 4)], &[(1, 2), (2, 2)]));
    }

    #[test]
    fn greedy_examples() {
        let s = greedy_schedule(&cls(&[(A, 5)], &[(B, 3), (C, 2)])).unwrap();
        assert_eq!(plan(&s), vec![(A, B, 3), (A, C, 2)]);
        assert!(greedy_schedule(&Classification::default())
            .unwrap()
            .is_empty());
        let s = greedy_schedule(&cls(&[(A, 2), (B, 2)], &[(C, 4)])).unwrap();
        assert_eq!(plan(&s), vec![(A, C, 2), (B, C, 2)]);
    }

    #[test]
    fn sorting_saves_a_link() {
        let c = cls(&[(A, 1), (B, 5)], &[(C, 5), (D, 1)]);
        assert_eq!(greedy_schedule(&c).unwrap().link_count(), 3);
        let s = sorted_greedy_schedule(&c).unwrap();
        assert_eq!(plan(&s), vec![(B, C, 5), (A, D, 1)]);
    }

    #[test]
    fn sorted_input_matches_greedy() {
        let c = cls(&[(A, 6), (B, 3)], &[(C, 5), (D, 4)]);
        assert_eq!(greedy_schedule(&c), sorted_greedy_schedule(&c));
    }

    #[test]
    fn equal_amounts_match_one_to_one() {
        let c = cls(&[(0, 3), (1, 3), (2, 3)], &[(3, 3), (4, 3), (5, 3)]);
        let s = sorted_greedy_schedule(&c).unwrap();
        assert_eq!(plan(&s), vec![(0, 3, 3), (1, 4, 3), (2, 5, 3)]);
    }

    #[test]
    fn sorting_can_cost_a_link() {
        // Unsorted prefix sums {1,3,5,6} and {3,6} coincide twice; sorted {2,4,5,6} only once.
        let c = cls(&[(0, 1), (1, 2), (2, 2), (3, 1)], &[(4, 3), (5, 3)]);
        assert_eq!(greedy_schedule(&c).unwrap().link_count(), 4);
        assert_eq!(sorted_greedy_schedule(&c).unwrap().link_count(), 5);
    }

    #[test]
    fn largest_gradient_examples() {
        let s = largest_gradient_schedule(&cls(&[(A, 5), (B, 2)], &[(C, 4)])).unwrap();
        assert_eq!(plan(&s), vec![(A, C, 4)]);
        let s = largest_gradient_schedule(&cls(&[(A, 3)], &[(C, 5)])).unwrap();
        assert_eq!(plan(&s), vec![(A, C, 3)]);
        let c = cls(&[(A, 4), (B, 2)], &[(C, 2), (D, 4)]);
        let s = largest_gradient_schedule(&c).unwrap();
        assert_eq!(plan(&s), vec![(A, D, 4), (B, C, 2)]);
    }

    #[test]
    fn inconsistent_rejected() {
        let c = cls(&[(A, 5)], &[(B, 3)]);
        for sched in [Scheduler::Greedy, Scheduler::SortedGreedy] {
            assert_eq!(
                sched.schedule(&c),
                Err(ScheduleError::InconsistentClassification {
                    surplus: 5,
                    deficit: 3
                })
            );
        }
    }

    #[test]
    fn csv_rows() {
        let s = greedy_schedule(&cls(&[(A, 5)], &[(B, 3), (C, 2)])).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SCHEDULE_CSV_HEADER).unwrap();
        s.write_csv(7, &mut w).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text, "step,from,to,count\n7,0,1,3\n7,0,2,2\n");
    }

    #[test]
    fn scheduler_names_parse() {
        for s in [
            Scheduler::Greedy,
            Scheduler::SortedGreedy,
            Scheduler::LargestGradient,
        ] {
            assert_eq!(s.name().parse::<Scheduler>().unwrap(), s);
        }
        assert!("fifo".parse::<Scheduler>().is_err());
    }

    proptest! {
        #[test]
        fn balancing_properties(counts in prop::collection::vec(0usize..5000, 1..64)) {
            prop_assume!(counts.iter().sum::<usize>() >= counts.len());
            let report = LoadReport::new(counts.clone());
            let c = classify(&report);
            prop_assert_eq!(c.total_surplus(), c.total_deficit());
            let targets = report.targets();
            for sched in [Scheduler::Greedy, Scheduler::SortedGreedy] {
                let s = sched.schedule(&c).unwrap();
                prop_assert_eq!(s.apply(&counts), targets.clone());
                prop_assert!(s.transfers.iter().all(|t| t.count > 0 && t.from != t.to));
            }
            let l = largest_gradient_schedule(&c).unwrap();
            prop_assert_eq!(l.link_count(), c.senders.len().min(c.receivers.len()));
            prop_assert!(l.particles_moved() <= c.total_surplus());
            prop_assert_eq!(l.apply(&counts).iter().sum::<usize>(), report.total());
        }
    }
}
