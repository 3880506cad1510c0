//! Encounter-history algebra for two-sided photo identification.
//!
//! An individual's history over `T` occasions records one event per occasion:
//! not seen, left side only, right side only, both sides simultaneously, or
//! both sides on the same occasion without a simultaneous photo. Histories
//! containing a simultaneous event, or photographs of only one side, are
//! observable as written. Any other nonzero history cannot be observed as a
//! single record and instead contributes two one-sided histories, its left
//! and right parents. This module provides the parsing, classification,
//! splitting, and combining rules, plus the latent constraint structure that
//! pairs each (left-only, right-only) parent pair with its child history.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};

/// Per-occasion encounter event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Event {
    /// Not captured.
    Zero = 0,
    /// Left-side photograph only.
    L = 1,
    /// Right-side photograph only.
    R = 2,
    /// Both sides photographed simultaneously at least once.
    S = 3,
    /// Both sides photographed, never simultaneously.
    B = 4,
}

impl Event {
    pub fn from_char(c: char) -> Result<Event> {
        match c {
            '0' => Ok(Event::Zero),
            'L' => Ok(Event::L),
            'R' => Ok(Event::R),
            'S' => Ok(Event::S),
            'B' => Ok(Event::B),
            other => Err(Error::InvalidEvent(other)),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Event::Zero => '0',
            Event::L => 'L',
            Event::R => 'R',
            Event::S => 'S',
            Event::B => 'B',
        }
    }

    /// True for any capture event.
    pub fn is_capture(self) -> bool {
        self != Event::Zero
    }

    /// Index into the event-probability vector (rho_L, rho_R, rho_S, rho_B).
    pub fn rho_index(self) -> Option<usize> {
        match self {
            Event::Zero => None,
            Event::L => Some(0),
            Event::R => Some(1),
            Event::S => Some(2),
            Event::B => Some(3),
        }
    }
}

/// One individual's event sequence over the study's capture occasions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EncounterHistory {
    events: Vec<Event>,
}

impl EncounterHistory {
    pub fn new(events: Vec<Event>) -> EncounterHistory {
        EncounterHistory { events }
    }

    /// Number of capture occasions.
    pub fn t(&self) -> usize {
        self.events.len()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// First capture occasion, 0-based.
    pub fn first_capture(&self) -> Option<usize> {
        self.events.iter().position(|e| e.is_capture())
    }

    /// Last capture occasion, 0-based.
    pub fn last_capture(&self) -> Option<usize> {
        self.events.iter().rposition(|e| e.is_capture())
    }

    pub fn is_nonzero(&self) -> bool {
        self.events.iter().any(|e| e.is_capture())
    }
}

impl fmt::Display for EncounterHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            write!(f, "{}", e.to_char())?;
        }
        Ok(())
    }
}

/// Parse a history string of length `t`.
///
/// The all-zero string parses successfully; dataset validation rejects it
/// separately, keeping parse and validate responsibilities apart.
pub fn parse_history(text: &str, t: usize) -> Result<EncounterHistory> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() != t {
        return Err(Error::HistoryLength {
            expected: t,
            got: chars.len(),
        });
    }
    let events = chars
        .into_iter()
        .map(Event::from_char)
        .collect::<Result<Vec<_>>>()?;
    Ok(EncounterHistory::new(events))
}

/// Observability class of a nonzero history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservedClass {
    /// Events drawn from {0, L}, at least one L.
    LeftOnly,
    /// Events drawn from {0, R}, at least one R.
    RightOnly,
    /// At least one S event.
    Simultaneous,
    /// No S, and either a B event or both L and R events present.
    Unobservable,
}

/// Classify a nonzero history.
pub fn classify(h: &EncounterHistory) -> Result<ObservedClass> {
    if !h.is_nonzero() {
        return Err(Error::AllZeroHistory);
    }
    let mut has_l = false;
    let mut has_r = false;
    let mut has_s = false;
    let mut has_b = false;
    for e in h.events() {
        match e {
            Event::L => has_l = true,
            Event::R => has_r = true,
            Event::S => has_s = true,
            Event::B => has_b = true,
            Event::Zero => {}
        }
    }
    if has_s {
        return Ok(ObservedClass::Simultaneous);
    }
    if has_b || (has_l && has_r) {
        return Ok(ObservedClass::Unobservable);
    }
    if has_l {
        Ok(ObservedClass::LeftOnly)
    } else {
        Ok(ObservedClass::RightOnly)
    }
}

/// Split an unobservable history into its (left parent, right parent) pair.
///
/// The left view keeps occasions where the left side was photographed
/// ({L, B} become L), the right view keeps {R, B} as R. Both views are
/// nonzero by the unobservability precondition.
pub fn split_unobservable(
    h: &EncounterHistory,
) -> Result<(EncounterHistory, EncounterHistory)> {
    if classify(h)? != ObservedClass::Unobservable {
        return Err(Error::NotUnobservable(h.to_string()));
    }
    let left = EncounterHistory::new(
        h.events()
            .iter()
            .map(|e| match e {
                Event::L | Event::B => Event::L,
                _ => Event::Zero,
            })
            .collect(),
    );
    let right = EncounterHistory::new(
        h.events()
            .iter()
            .map(|e| match e {
                Event::R | Event::B => Event::R,
                _ => Event::Zero,
            })
            .collect(),
    );
    Ok((left, right))
}

/// Combine a left-only and a right-only parent into their child history.
///
/// Per occasion: (L,0) -> L, (0,R) -> R, (L,R) -> B, (0,0) -> 0. Because both
/// parents are nonzero the child always carries events from both sides and is
/// therefore unobservable.
pub fn combine(
    left: &EncounterHistory,
    right: &EncounterHistory,
) -> Result<EncounterHistory> {
    let ok = left.t() == right.t()
        && classify(left)? == ObservedClass::LeftOnly
        && classify(right)? == ObservedClass::RightOnly;
    if !ok {
        return Err(Error::NotParents {
            left: left.to_string(),
            right: right.to_string(),
        });
    }
    let events = left
        .events()
        .iter()
        .zip(right.events())
        .map(|(l, r)| match (l, r) {
            (Event::L, Event::R) => Event::B,
            (Event::L, Event::Zero) => Event::L,
            (Event::Zero, Event::R) => Event::R,
            _ => Event::Zero,
        })
        .collect();
    Ok(EncounterHistory::new(events))
}

/// Unique observed histories with counts, ordered left-only, right-only,
/// then simultaneous; first-appearance order within each block.
#[derive(Debug, Clone)]
pub struct ObservedData {
    histories: Vec<EncounterHistory>,
    counts: Vec<u64>,
    n_left: usize,
    n_right: usize,
    n_sim: usize,
    t: usize,
}

impl ObservedData {
    /// Build from raw records, merging duplicates by summing counts.
    pub fn from_records<I>(records: I) -> Result<ObservedData>
    where
        I: IntoIterator<Item = (EncounterHistory, u64)>,
    {
        let mut blocks: [Vec<(EncounterHistory, u64)>; 3] = Default::default();
        let mut index: HashMap<EncounterHistory, (usize, usize)> = HashMap::new();
        let mut t = None;
        for (h, count) in records {
            if count == 0 {
                return Err(Error::NonPositiveCount(count));
            }
            let t = *t.get_or_insert(h.t());
            if h.t() != t {
                return Err(Error::HistoryLength {
                    expected: t,
                    got: h.t(),
                });
            }
            let block = match classify(&h)? {
                ObservedClass::LeftOnly => 0,
                ObservedClass::RightOnly => 1,
                ObservedClass::Simultaneous => 2,
                ObservedClass::Unobservable => {
                    return Err(Error::UnobservableInData(h.to_string()))
                }
            };
            match index.get(&h) {
                Some(&(b, i)) => blocks[b][i].1 += count,
                None => {
                    index.insert(h.clone(), (block, blocks[block].len()));
                    blocks[block].push((h, count));
                }
            }
        }
        let t = t.ok_or(Error::EmptyData)?;
        let (n_left, n_right, n_sim) = (blocks[0].len(), blocks[1].len(), blocks[2].len());
        let mut histories = Vec::with_capacity(n_left + n_right + n_sim);
        let mut counts = Vec::with_capacity(histories.capacity());
        for block in blocks {
            for (h, c) in block {
                histories.push(h);
                counts.push(c);
            }
        }
        Ok(ObservedData {
            histories,
            counts,
            n_left,
            n_right,
            n_sim,
            t,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn histories(&self) -> &[EncounterHistory] {
        &self.histories
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of unique observed histories.
    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    /// Unique-history counts per class: (left-only, right-only, simultaneous).
    pub fn class_sizes(&self) -> (usize, usize, usize) {
        (self.n_left, self.n_right, self.n_sim)
    }

    /// Total observed-history count, summing multiplicities.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Count totals per class: (left-only, right-only, simultaneous).
    pub fn class_totals(&self) -> (u64, u64, u64) {
        let sum = |r: std::ops::Range<usize>| self.counts[r].iter().sum();
        (
            sum(0..self.n_left),
            sum(self.n_left..self.n_left + self.n_right),
            sum(self.n_left + self.n_right..self.histories.len()),
        )
    }
}

/// Observed histories extended with every (left, right) parent pair's child,
/// the compatible true-history space the latent counts live on.
#[derive(Debug, Clone)]
pub struct LatentStructure {
    true_histories: Vec<EncounterHistory>,
    n_observed: usize,
    left_parent: Vec<usize>,
    right_parent: Vec<usize>,
}

impl LatentStructure {
    /// Build from observed data. True histories are the observed ones in
    /// data order, followed by children grouped by right parent, left parent
    /// varying fastest, the ordering under which the toy example's children
    /// come out in their conventional positions.
    pub fn build(data: &ObservedData) -> Result<LatentStructure> {
        let (n_left, n_right, _) = data.class_sizes();
        let n_observed = data.len();
        let mut true_histories = data.histories().to_vec();
        let mut left_parent = Vec::with_capacity(n_left * n_right);
        let mut right_parent = Vec::with_capacity(n_left * n_right);
        for r in 0..n_right {
            for l in 0..n_left {
                let child = combine(
                    &data.histories()[l],
                    &data.histories()[n_left + r],
                )?;
                debug_assert_eq!(classify(&child)?, ObservedClass::Unobservable);
                true_histories.push(child);
                left_parent.push(l);
                right_parent.push(n_left + r);
            }
        }
        Ok(LatentStructure {
            true_histories,
            n_observed,
            left_parent,
            right_parent,
        })
    }

    /// Total number of compatible true histories K'.
    pub fn k_prime(&self) -> usize {
        self.true_histories.len()
    }

    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    pub fn n_children(&self) -> usize {
        self.true_histories.len() - self.n_observed
    }

    pub fn true_histories(&self) -> &[EncounterHistory] {
        &self.true_histories
    }

    /// Indices of the child block.
    pub fn child_range(&self) -> std::ops::Range<usize> {
        self.n_observed..self.true_histories.len()
    }

    /// Left parent index of child `k` (absolute index into true histories).
    pub fn left_parent(&self, k: usize) -> usize {
        self.left_parent[k - self.n_observed]
    }

    /// Right parent index of child `k`.
    pub fn right_parent(&self, k: usize) -> usize {
        self.right_parent[k - self.n_observed]
    }

    /// The constraint equations tying observed counts to true-history counts,
    /// rendered 1-based as strings like "f_1 = x_1 + x_7 + x_9".
    pub fn constraint_equations(&self) -> Vec<String> {
        (0..self.n_observed)
            .map(|j| {
                let mut terms = vec![format!("x_{}", j + 1)];
                for k in self.child_range() {
                    if self.left_parent(k) == j || self.right_parent(k) == j {
                        terms.push(format!("x_{}", k + 1));
                    }
                }
                format!("f_{} = {}", j + 1, terms.join(" + "))
            })
            .collect()
    }
}

/// Counts of the full history space for `t` occasions: all nonzero histories
/// K = 5^t - 1, observable histories L, and the number of unobservable
/// histories (the dimension of the constraint null space in the full
/// space), nullDim = (4^t - 1) - 2(2^t - 1).
///
/// Computed with arbitrary-precision integers; values exceeding `u64` are an
/// error rather than a silent wrap.
pub fn count_history_spaces(t: usize) -> Result<(u64, u64, u64)> {
    let five = BigUint::from(5u32).pow(t as u32) - 1u32;
    let four = BigUint::from(4u32).pow(t as u32) - 1u32;
    let two = BigUint::from(2u32).pow(t as u32) - 1u32;
    let null = &four - 2u32 * &two;
    let observable = &five - &null;
    let narrow = |v: BigUint| v.to_u64().ok_or(Error::CountOverflow { t });
    Ok((narrow(five)?, narrow(observable)?, narrow(null)?))
}
