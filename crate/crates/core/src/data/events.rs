use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kelvins::CdmRecord;
use crate::error::{Error, Result};

/// The CDMs of one conjunction, earliest message first.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub event_id: String,
    pub cdms: Vec<CdmRecord>,
}

impl Event {
    pub fn len(&self) -> usize {
        self.cdms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdms.is_empty()
    }
}

/// Groups records by event id in order of first appearance and sorts each
/// event by decreasing time to TCA. The sort is stable, so ties keep source
/// order.
pub fn group_events(records: Vec<CdmRecord>) -> Vec<Event> {
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut events: Vec<Event> = Vec::new();
    for rec in records {
        let idx = *slot.entry(rec.event_id.clone()).or_insert_with(|| {
            events.push(Event {
                event_id: rec.event_id.clone(),
                cdms: Vec::new(),
            });
            events.len() - 1
        });
        events[idx].cdms.push(rec);
    }
    for ev in &mut events {
        ev.cdms
            .sort_by(|a, b| b.time_to_tca.total_cmp(&a.time_to_tca));
    }
    events
}

pub fn filter_min_length(events: Vec<Event>, min_len: usize) -> Result<Vec<Event>> {
    if min_len == 0 {
        return Err(Error::invalid("min_len must be at least 1"));
    }
    Ok(events.into_iter().filter(|e| e.len() >= min_len).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Event>,
    pub test: Vec<Event>,
    pub seed: u64,
    pub test_fraction: f64,
}

/// Number of test events for `n` events: `⌈fraction·n⌉`, computed so that
/// exact products such as `0.15·100` are not pushed up by rounding error.
pub fn test_count(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    let rounded = raw.round();
    let count = if (raw - rounded).abs() < 1e-9 * n.max(1) as f64 {
        rounded
    } else {
        raw.ceil()
    };
    (count.max(0.0) as usize).min(n)
}

/// Seeded shuffle, then the first `⌈fraction·N⌉` events go to test.
pub fn split_train_test(events: Vec<Event>, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::invalid(format!(
            "test fraction must be in [0, 1], got {test_fraction}"
        )));
    }
    let n = events.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = test_count(n, test_fraction);

    let mut slots: Vec<Option<Event>> = events.into_iter().map(Some).collect();
    let mut take = |i: usize| slots[i].take().expect("permutation visits each index once");
    let test = order[..n_test].iter().map(|&i| take(i)).collect();
    let train = order[n_test..].iter().map(|&i| take(i)).collect();
    Ok(DatasetSplit {
        train,
        test,
        seed,
        test_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, t: f64) -> CdmRecord {
        CdmRecord {
            event_id: id.into(),
            values: vec![t],
            time_to_tca: t,
        }
    }

    fn events_of_sizes(sizes: &[usize]) -> Vec<Event> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| Event {
                event_id: i.to_string(),
                cdms: (0..n).map(|k| rec(&i.to_string(), (n - k) as f64)).collect(),
            })
            .collect()
    }

    #[test]
    fn groups_by_first_appearance() {
        let ev = group_events(vec![rec("A", 1.0), rec("A", 2.0), rec("B", 1.0)]);
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].event_id, "A");
        assert_eq!(ev[0].len(), 2);
        assert_eq!(ev[1].len(), 1);
        assert!(group_events(Vec::new()).is_empty());
    }

    #[test]
    fn sorts_by_decreasing_time_to_tca() {
        let ev = group_events(vec![rec("A", 1.2), rec("A", 4.5), rec("A", 3.0)]);
        let times: Vec<f64> = ev[0].cdms.iter().map(|c| c.time_to_tca).collect();
        let mut oracle = vec![1.2, 4.5, 3.0];
        oracle.sort_by(|a: &f64, b| b.partial_cmp(a).unwrap());
        assert_eq!(times, oracle);
    }

    #[test]
    fn ties_keep_source_order() {
        let mut a = rec("A", 2.0);
        a.values = vec![2.0, 1.0];
        let mut b = rec("A", 2.0);
        b.values = vec![2.0, 2.0];
        let ev = group_events(vec![a, b]);
        assert_eq!(ev[0].cdms[0].values[1], 1.0);
    }

    #[test]
    fn min_length_filter() {
        let ev = filter_min_length(events_of_sizes(&[1, 2, 5]), 2).unwrap();
        let sizes: Vec<_> = ev.iter().map(Event::len).collect();
        assert_eq!(sizes, [2, 5]);
        let all = events_of_sizes(&[1, 2, 5]);
        assert_eq!(filter_min_length(all.clone(), 1).unwrap(), all);
        assert!(filter_min_length(all, 0).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ev = events_of_sizes(&vec![2; 100]);
        let s = split_train_test(ev.clone(), 0.15, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (85, 15));
        assert_eq!(s, split_train_test(ev.clone(), 0.15, 3).unwrap());
        let none = split_train_test(ev.clone(), 0.0, 3).unwrap();
        assert_eq!(none.train.len(), 100);
        assert!(split_train_test(ev, 1.5, 3).is_err());
    }

    #[test]
    fn test_count_rounds_up_fractional_products() {
        assert_eq!(test_count(100, 0.15), 15);
        assert_eq!(test_count(10, 0.15), 2);
        assert_eq!(test_count(11_387, 0.15), 1709);
        assert_eq!(test_count(0, 0.15), 0);
        assert_eq!(test_count(7, 1.0), 7);
    }
}
