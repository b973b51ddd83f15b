//! Multi-threaded exploration: workers run released paths and submit the
//! outcome to one shared manager.

use std::sync::{Condvar, Mutex};

use txsym_core::engine::{Engine, EngineConfig, NoObserver};
use txsym_core::expr::SymExpr;
use txsym_core::isa::Program;
use txsym_core::manager::{explore, resolve, Manager, ManagerConfig, Schedule};
use txsym_core::report::Exploration;
use txsym_core::solver::Solver;

/// Called with every solver query group, from any worker.
pub type QuerySink<'a> = &'a (dyn Fn(&[SymExpr]) + Sync);

pub fn explore_parallel(prog: &Program, ecfg: EngineConfig, mcfg: ManagerConfig, sink: Option<QuerySink<'_>>) -> Exploration {
    let workers = mcfg.worker_count.max(1);
    if workers == 1 && sink.is_none() {
        return explore(prog, ecfg, mcfg);
    }
    let enum_limit = ecfg.enum_limit;
    let engine = Engine::new(prog, ecfg);
    let shared = (Mutex::new(Manager::new(mcfg, engine.root())), Condvar::new());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let mut forward = |g: &[SymExpr]| {
                    if let Some(f) = sink {
                        f(g)
                    }
                };
                let mut solver = Solver::new(enum_limit);
                if sink.is_some() {
                    solver.sink = Some(&mut forward);
                }
                let (lock, cv) = &shared;
                let mut m = lock.lock().unwrap();
                loop {
                    match m.schedule() {
                        Schedule::Run(mut p) => {
                            drop(m);
                            let ev = engine.run(&mut p, &mut solver, &mut NoObserver);
                            let sub = resolve(p, ev, &mut solver);
                            m = lock.lock().unwrap();
                            m.submit(sub);
                            cv.notify_all();
                        }
                        Schedule::Wait => m = cv.wait(m).unwrap(),
                        Schedule::Done => {
                            cv.notify_all();
                            break;
                        }
                    }
                }
            });
        }
    });
    shared.0.into_inner().unwrap().finish()
}
