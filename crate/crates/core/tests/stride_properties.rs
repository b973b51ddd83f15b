use proptest::prelude::*;
use txsym_core::txn::{stride_recover, AbortReason, Attempt, FaultKind, RecoveryDriver, StrideConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Try(u32),
    Interp(u32),
}

struct Scripted {
    /// Bit i set: the i-th attempt aborts.
    aborts: u64,
    stop_after: usize,
    log: Vec<Step>,
}

impl Scripted {
    fn push(&mut self, s: Step) -> Result<(), ()> {
        self.log.push(s);
        if self.log.len() >= self.stop_after {
            Err(())
        } else {
            Ok(())
        }
    }
}

impl RecoveryDriver for Scripted {
    type Stop = ();
    fn attempt(&mut self, stride: u32) -> Result<Attempt, ()> {
        let n = self.log.iter().filter(|s| matches!(s, Step::Try(_))).count();
        self.push(Step::Try(stride))?;
        Ok(if self.aborts >> n & 1 == 1 { Attempt::Aborted(AbortReason::Capacity) } else { Attempt::Committed })
    }
    fn interpret(&mut self, blocks: u32) -> Result<(), ()> {
        self.push(Step::Interp(blocks))
    }
}

/// Strides `from, from/2, ...` that are still at least `min`.
fn halvings(from: u32, min: u32) -> Vec<Step> {
    std::iter::successors(Some(from), |s| Some(s / 2)).take_while(|s| *s >= min && *s > 0).map(Step::Try).collect()
}

fn expected(reason: AbortReason, smax: u32, smin: u32, aborts: u64) -> Vec<Step> {
    match reason {
        AbortReason::Poison { completed_blocks: 0 } => vec![Step::Interp(1)],
        AbortReason::Poison { completed_blocks: c } if aborts & 1 == 0 => vec![Step::Try(c), Step::Interp(1)],
        AbortReason::Poison { completed_blocks: c } => {
            let mut v = vec![Step::Try(c)];
            v.extend(halvings(std::cmp::max(c / 2, smin), smin));
            v.push(Step::Interp(smin));
            v
        }
        _ => {
            let mut v = halvings(smax / 2, smin);
            v.push(Step::Interp(smin));
            v
        }
    }
}

fn reason(tag: u8, c: u32) -> AbortReason {
    match tag {
        0 => AbortReason::Poison { completed_blocks: c },
        1 => AbortReason::Fault { kind: FaultKind::GuardPoison },
        2 => AbortReason::Capacity,
        _ => AbortReason::Injected { txn: 1, block: c },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn recovery_follows_the_schedule(smax_log in 0u32..7, smin_log in 0u32..7, tag in 0u8..4, c in 0u32..64, aborts in any::<u64>()) {
        let smax = 1u32 << smax_log;
        let smin = 1u32 << smin_log.min(smax_log);
        let c = c % smax;
        let cfg = StrideConfig { stride_max: smax, stride_min: smin, ..StrideConfig::default() };
        let r = reason(tag, c);
        let mut d = Scripted { aborts, stop_after: usize::MAX, log: vec![] };
        stride_recover(r, &cfg, &mut d).unwrap();
        prop_assert_eq!(&d.log, &expected(r, smax, smin, aborts));
        let tries: Vec<u32> = d.log.iter().filter_map(|s| match s { Step::Try(x) => Some(*x), _ => None }).collect();
        prop_assert!(tries.iter().all(|t| *t >= 1 && *t <= smax));
        prop_assert!(tries.len() as u32 <= smax_log + 2);
        prop_assert!(matches!(d.log.last(), Some(Step::Interp(_))));
    }

    #[test]
    fn a_stop_ends_recovery_immediately(tag in 0u8..4, c in 0u32..16, aborts in any::<u64>(), stop in 1usize..8) {
        let cfg = StrideConfig::default();
        let r = reason(tag, c);
        let full = expected(r, cfg.stride_max, cfg.stride_min, aborts);
        let mut d = Scripted { aborts, stop_after: stop, log: vec![] };
        let res = stride_recover(r, &cfg, &mut d);
        prop_assert_eq!(res.is_err(), stop <= full.len());
        prop_assert_eq!(&d.log[..], &full[..stop.min(full.len())]);
    }
}
