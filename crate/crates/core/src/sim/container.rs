use serde::{Deserialize, Serialize};

use super::{PickState, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredBerry {
    pub berry_id: u32,
    pub stem_length: f64,
    pub t_ms: u64,
}

/// On-board storage with a spring-closed trapdoor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub capacity: usize,
    pub stored: Vec<StoredBerry>,
    pub trapdoor_open: bool,
}

/// What a dispense did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispenseRecord {
    pub released: usize,
    pub open_ms: u64,
    pub close_ms: u64,
}

impl Container {
    pub const MIN_CAPACITY: usize = 7;
    pub const MAX_CAPACITY: usize = 12;

    pub fn new(capacity: usize) -> Result<Self, SimError> {
        if !(Self::MIN_CAPACITY..=Self::MAX_CAPACITY).contains(&capacity) {
            return Err(SimError::Config(format!(
                "container capacity {capacity} outside [{}, {}]",
                Self::MIN_CAPACITY,
                Self::MAX_CAPACITY
            )));
        }
        Ok(Container { capacity, stored: Vec::new(), trapdoor_open: false })
    }

    pub fn is_full(&self) -> bool {
        self.stored.len() >= self.capacity
    }

    pub fn store(&mut self, berry: StoredBerry) -> Result<(), SimError> {
        if self.is_full() {
            return Err(SimError::Sequencing("container is full".into()));
        }
        if self.trapdoor_open {
            return Err(SimError::Sequencing("trapdoor is open".into()));
        }
        self.stored.push(berry);
        Ok(())
    }

    /// Opens the trapdoor, releases everything, and closes it again.
    pub fn dispense(&mut self, current: PickState, open_ms: u64, close_ms: u64) -> Result<DispenseRecord, SimError> {
        if matches!(current, PickState::Cut) {
            return Err(SimError::Sequencing("cannot dispense while cutting".into()));
        }
        if self.trapdoor_open {
            return Err(SimError::Sequencing("trapdoor already open".into()));
        }
        let released = self.stored.len();
        self.stored.clear();
        Ok(DispenseRecord { released, open_ms, close_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn berry(id: u32) -> StoredBerry {
        StoredBerry { berry_id: id, stem_length: 10.0, t_ms: 0 }
    }

    #[test]
    fn capacity_bounds() {
        assert!(Container::new(6).is_err());
        assert!(Container::new(13).is_err());
        assert!(Container::new(7).is_ok());
    }

    #[test]
    fn full_container_dispenses() {
        let mut c = Container::new(7).unwrap();
        for i in 0..7 {
            c.store(berry(i)).unwrap();
        }
        assert!(c.is_full());
        assert!(c.store(berry(8)).is_err());
        let rec = c.dispense(PickState::Dispense, 500, 400).unwrap();
        assert_eq!(rec.released, 7);
        assert!(c.stored.is_empty());
        assert!(!c.trapdoor_open);
    }

    #[test]
    fn empty_dispense_is_noop() {
        let mut c = Container::new(10).unwrap();
        let rec = c.dispense(PickState::Dispense, 500, 400).unwrap();
        assert_eq!(rec.released, 0);
    }

    #[test]
    fn dispense_during_cut_is_rejected() {
        let mut c = Container::new(10).unwrap();
        c.store(berry(1)).unwrap();
        assert!(matches!(c.dispense(PickState::Cut, 500, 400), Err(SimError::Sequencing(_))));
        assert_eq!(c.stored.len(), 1);
    }
}
