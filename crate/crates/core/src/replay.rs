//! Task-tagged experience replay with quota-balanced sampling.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::Matrix;
use crate::tasks::Dataset;

/// Share of a balanced batch drawn from the most recent task and from the
/// older tasks; the remainder is drawn uniformly from the whole buffer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayQuotas {
    pub recent: f64,
    pub older: f64,
}

impl Default for ReplayQuotas {
    fn default() -> Self {
        Self { recent: 0.1, older: 0.8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuotaGroup {
    Recent,
    Older,
    Random,
}

#[derive(Clone, Debug)]
struct Entry {
    x: Vec<f64>,
    y: Vec<f64>,
    task: usize,
}

#[derive(Clone, Debug)]
pub struct ReplayBatch {
    pub data: Dataset,
    pub tasks: Vec<usize>,
    pub groups: Vec<QuotaGroup>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Entry>,
    by_task: BTreeMap<usize, Vec<usize>>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    /// `seed` drives eviction only; sampling takes its own seed.
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            entries: Vec::new(),
            by_task: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn task_count(&self) -> usize {
        self.by_task.len()
    }

    pub fn latest_task(&self) -> Option<usize> {
        self.by_task.keys().next_back().copied()
    }

    pub fn count_for(&self, task: usize) -> usize {
        self.by_task.get(&task).map_or(0, Vec::len)
    }

    /// Appends a task's samples. Over capacity, samples are evicted uniformly
    /// at random from the oldest tasks first, each task keeping at least one
    /// sample while the capacity allows it.
    pub fn add_task(&mut self, samples: &Dataset, task_id: usize) -> Result<()> {
        let expected = self.latest_task().map_or(0, |t| t + 1);
        if task_id != expected {
            return Err(Error::TaskOrder { expected, got: task_id });
        }
        for r in 0..samples.len() {
            self.entries.push(Entry {
                x: samples.x.row(r).to_vec(),
                y: samples.y.row(r).to_vec(),
                task: task_id,
            });
        }
        self.reindex();
        if self.entries.len() > self.capacity {
            self.evict(self.entries.len() - self.capacity, task_id);
        }
        Ok(())
    }

    fn reindex(&mut self) {
        self.by_task.clear();
        for (i, e) in self.entries.iter().enumerate() {
            self.by_task.entry(e.task).or_default().push(i);
        }
    }

    fn evict(&mut self, mut excess: usize, newest: usize) {
        let mut drop = vec![false; self.entries.len()];
        // Older tasks shrink to a single survivor, oldest first.
        let older: Vec<usize> = self.by_task.keys().copied().filter(|&t| t != newest).collect();
        for pass in [1usize, 0] {
            for &t in &older {
                if excess == 0 {
                    break;
                }
                let alive: Vec<usize> = self.by_task[&t].iter().copied().filter(|&i| !drop[i]).collect();
                let removable = alive.len().saturating_sub(pass).min(excess);
                for k in sample_indices(&mut self.rng, alive.len(), removable) {
                    drop[alive[k]] = true;
                }
                excess -= removable;
            }
            if pass == 1 && excess > 0 {
                // Capacity forces the newest task to give up samples before
                // older tasks lose their last one.
                let alive: Vec<usize> = self.by_task[&newest].clone();
                let removable = alive.len().saturating_sub(1).min(excess);
                for k in sample_indices(&mut self.rng, alive.len(), removable) {
                    drop[alive[k]] = true;
                }
                excess -= removable;
            }
        }
        let mut i = 0;
        self.entries.retain(|_| {
            let keep = !drop[i];
            i += 1;
            keep
        });
        self.reindex();
    }

    fn gather(&self, picks: &[(usize, QuotaGroup)], task_id: usize) -> Result<ReplayBatch> {
        let rows_x: Vec<Vec<f64>> = picks.iter().map(|&(i, _)| self.entries[i].x.clone()).collect();
        let rows_y: Vec<Vec<f64>> = picks.iter().map(|&(i, _)| self.entries[i].y.clone()).collect();
        Ok(ReplayBatch {
            data: Dataset {
                x: Matrix::from_rows(&rows_x)?,
                y: Matrix::from_rows(&rows_y)?,
                task_id,
            },
            tasks: picks.iter().map(|&(i, _)| self.entries[i].task).collect(),
            groups: picks.iter().map(|&(_, g)| g).collect(),
        })
    }

    /// Uniform batch over the whole buffer, with replacement only when the
    /// buffer is smaller than the batch.
    pub fn sample_uniform(&self, batch_size: usize, seed: u64) -> Result<ReplayBatch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..self.len()).collect();
        let picks = draw(&mut rng, &all, batch_size, QuotaGroup::Random);
        self.gather(&picks, self.latest_task().unwrap_or(0))
    }

    /// Quota-balanced batch for training task `current_task`: `recent` share
    /// from the latest stored task, `older` share from all earlier tasks and
    /// the rest uniformly. With fewer than three stored tasks the quotas
    /// collapse into one uniform draw.
    pub fn sample_balanced(
        &self,
        batch_size: usize,
        current_task: usize,
        quotas: ReplayQuotas,
        seed: u64,
    ) -> Result<ReplayBatch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if batch_size == 0 {
            return Err(Error::InvalidConfig("replay batch size 0".into()));
        }
        if self.task_count() < 3 {
            return self.sample_uniform(batch_size, seed);
        }
        let latest = self.latest_task().expect("non-empty");
        if latest >= current_task {
            return Err(Error::TaskOrder { expected: latest + 1, got: current_task });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_recent = (quotas.recent * batch_size as f64).floor() as usize;
        let n_older = ((quotas.older * batch_size as f64).floor() as usize).min(batch_size - n_recent);
        let n_random = batch_size - n_recent - n_older;
        let recent = self.by_task[&latest].clone();
        let older: Vec<usize> = self
            .by_task
            .iter()
            .filter(|(&t, _)| t != latest)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let all: Vec<usize> = (0..self.len()).collect();
        let mut picks = draw(&mut rng, &recent, n_recent, QuotaGroup::Recent);
        picks.extend(draw(&mut rng, &older, n_older, QuotaGroup::Older));
        picks.extend(draw(&mut rng, &all, n_random, QuotaGroup::Random));
        self.gather(&picks, current_task)
    }

    /// Every stored sample of `task` as one dataset.
    pub fn task_data(&self, task: usize) -> Option<Dataset> {
        let idx = self.by_task.get(&task)?;
        let picks: Vec<(usize, QuotaGroup)> = idx.iter().map(|&i| (i, QuotaGroup::Random)).collect();
        self.gather(&picks, task).ok().map(|b| b.data)
    }

    /// All stored samples, oldest task first.
    pub fn all_data(&self) -> Option<Dataset> {
        if self.is_empty() {
            return None;
        }
        let picks: Vec<(usize, QuotaGroup)> = (0..self.len()).map(|i| (i, QuotaGroup::Random)).collect();
        self.gather(&picks, self.latest_task().unwrap_or(0)).ok().map(|b| b.data)
    }
}

fn draw(rng: &mut ChaCha8Rng, pool: &[usize], n: usize, group: QuotaGroup) -> Vec<(usize, QuotaGroup)> {
    if n == 0 || pool.is_empty() {
        return Vec::new();
    }
    if n <= pool.len() {
        sample_indices(rng, pool.len(), n)
            .into_iter()
            .map(|k| (pool[k], group))
            .collect()
    } else {
        (0..n).map(|_| (pool[rng.gen_range(0..pool.len())], group)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(n: usize, id: usize) -> Dataset {
        Dataset::new(
            Matrix::from_fn(n, 1, |r, _| (id * 1000 + r) as f64),
            Matrix::from_fn(n, 1, |_, _| id as f64),
            id,
        )
        .unwrap()
    }

    #[test]
    fn grows_and_evicts_oldest_first() {
        let mut b = ReplayBuffer::new(150, 0);
        b.add_task(&task(100, 0), 0).unwrap();
        assert_eq!(b.len(), 100);
        b.add_task(&task(100, 1), 1).unwrap();
        assert_eq!(b.len(), 150);
        assert_eq!(b.count_for(1), 100);
        assert_eq!(b.count_for(0), 50);
    }

    #[test]
    fn eviction_keeps_a_survivor_per_task() {
        let mut b = ReplayBuffer::new(10, 1);
        b.add_task(&task(5, 0), 0).unwrap();
        b.add_task(&task(5, 1), 1).unwrap();
        b.add_task(&task(20, 2), 2).unwrap();
        assert_eq!(b.len(), 10);
        assert_eq!(b.count_for(0), 1);
        assert_eq!(b.count_for(1), 1);
        assert_eq!(b.count_for(2), 8);
    }

    #[test]
    fn rejects_out_of_order_tasks() {
        let mut b = ReplayBuffer::new(10, 1);
        assert!(matches!(b.add_task(&task(2, 1), 1), Err(Error::TaskOrder { expected: 0, got: 1 })));
        b.add_task(&task(2, 0), 0).unwrap();
        assert!(b.add_task(&task(2, 0), 0).is_err());
    }

    #[test]
    fn empty_buffer_is_a_distinct_error() {
        let b = ReplayBuffer::new(10, 0);
        assert!(matches!(b.sample_balanced(4, 1, ReplayQuotas::default(), 0), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn undersized_buffer_samples_with_replacement() {
        let mut b = ReplayBuffer::new(10, 0);
        b.add_task(&task(3, 0), 0).unwrap();
        let batch = b.sample_balanced(8, 1, ReplayQuotas::default(), 4).unwrap();
        assert_eq!(batch.data.len(), 8);
        assert!(batch.tasks.iter().all(|&t| t == 0));
    }

    #[test]
    fn balanced_quota_counts_and_determinism() {
        let mut b = ReplayBuffer::new(1000, 0);
        for t in 0..3 {
            b.add_task(&task(100, t), t).unwrap();
        }
        let batch = b.sample_balanced(100, 3, ReplayQuotas::default(), 11).unwrap();
        let count = |g| batch.groups.iter().filter(|&&x| x == g).count();
        assert_eq!(count(QuotaGroup::Recent), 10);
        assert_eq!(count(QuotaGroup::Older), 80);
        assert_eq!(count(QuotaGroup::Random), 10);
        for (t, g) in batch.tasks.iter().zip(&batch.groups) {
            match g {
                QuotaGroup::Recent => assert_eq!(*t, 2),
                QuotaGroup::Older => assert!(*t < 2),
                QuotaGroup::Random => {}
            }
        }
        let again = b.sample_balanced(100, 3, ReplayQuotas::default(), 11).unwrap();
        assert_eq!(again.data, batch.data);
    }

    #[test]
    fn task_counts_match_multinomial_expectation() {
        // Per draw: 10 from task 2, 80 from tasks 0–1, 10 spread uniformly.
        let mut b = ReplayBuffer::new(1000, 0);
        for t in 0..3 {
            b.add_task(&task(100, t), t).unwrap();
        }
        let mut counts = [0usize; 3];
        let draws = 1000;
        for s in 0..draws {
            let batch = b.sample_balanced(100, 3, ReplayQuotas::default(), s).unwrap();
            for &t in &batch.tasks {
                counts[t] += 1;
            }
        }
        let n = (draws * 100) as f64;
        let expected = [
            (40.0 + 10.0 / 3.0) / 100.0,
            (40.0 + 10.0 / 3.0) / 100.0,
            (10.0 + 10.0 / 3.0) / 100.0,
        ];
        // Only the 10 uniform picks per draw are random between task 2 and the rest.
        let random_items = draws as f64 * 10.0;
        let p2 = 1.0 / 3.0;
        let observed_random_2 = counts[2] as f64 - draws as f64 * 10.0;
        let z = (observed_random_2 - random_items * p2) / (random_items * p2 * (1.0 - p2)).sqrt();
        assert!(z.abs() < 3.0, "z = {z}");
        for (c, e) in counts.iter().zip(expected) {
            assert!((*c as f64 / n - e).abs() < 0.01);
        }
    }
}
