use super::SlotDecision;

/// Cumulative compute load each cloudlet has actually served.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeTracker {
    pub served: Vec<f64>,
}

impl ComputeTracker {
    pub fn new(k: usize) -> Self {
        Self {
            served: vec![0.0; k],
        }
    }
}

/// Denies a cloudlet's whole slot when serving it would push the cloudlet's
/// average served load above its running-average capacity. Denied load is not
/// served, but the devices' transmission energy stays charged.
pub fn cloudlet_gate(
    decision: &mut SlotDecision,
    tracker: &mut ComputeTracker,
    t: u64,
    capacity_avg: &[f64],
) {
    let t = t as f64;
    for k in 0..tracker.served.len() {
        let load = decision.load[k];
        if load <= 0.0 {
            continue;
        }
        if (tracker.served[k] + load) / t > capacity_avg[k] {
            decision.denied[k] = true;
        } else {
            tracker.served[k] += load;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision(load: f64) -> SlotDecision {
        SlotDecision {
            routes: vec![Some(0)],
            y: vec![vec![vec![1.0]]],
            offloaded: vec![1],
            energy: vec![0.5],
            load: vec![load],
            sent: vec![1],
            denied: vec![false],
        }
    }

    #[test]
    fn empty_tracker_serves() {
        let mut d = decision(0.5);
        let mut tr = ComputeTracker::new(1);
        cloudlet_gate(&mut d, &mut tr, 1, &[1.0]);
        assert!(!d.denied[0]);
        assert_eq!(tr.served[0], 0.5);
    }

    #[test]
    fn overload_denies_and_keeps_energy() {
        let mut d = decision(2.0);
        let mut tr = ComputeTracker::new(1);
        cloudlet_gate(&mut d, &mut tr, 1, &[1.0]);
        assert!(d.denied[0]);
        assert_eq!(d.energy, vec![0.5]);
        assert_eq!(d.denied_objects(), 1);
        assert!(!d.is_served(0));
        assert_eq!(tr.served[0], 0.0);
    }

    #[test]
    fn crossing_mid_slot_denies_the_whole_slot() {
        // two devices each add 0.6 per slot against capacity 1
        let mut tr = ComputeTracker::new(1);
        let mut denied = Vec::new();
        for t in 1..=3 {
            let mut d = decision(1.2);
            cloudlet_gate(&mut d, &mut tr, t, &[1.0]);
            denied.push(d.denied[0]);
        }
        // t=1: 1.2 > 1 denied; t=2: 1.2/2 served; t=3: 2.4/3 served
        assert_eq!(denied, vec![true, false, false]);
        assert!((tr.served[0] - 2.4).abs() < 1e-12);
    }
}
