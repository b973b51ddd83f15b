mod support;

use proptest::collection::vec;
use proptest::prelude::*;
use support::exprgen::{gen, oracle, rebuild};
use support::Stream;
use txsym_core::expr::{Compiled, SymExpr, VarId};

const WIDTHS: [u8; 6] = [1, 8, 16, 32, 33, 64];

fn assignment(a: [u8; 3]) -> impl Fn(VarId) -> u8 {
    move |v: VarId| a[v.0 as usize % 3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn every_form_agrees_with_the_reference(words in vec(any::<u32>(), 1..48), wi in 0usize..6, a in any::<[u8; 3]>()) {
        let w = WIDTHS[wi];
        let e = gen(&mut Stream::new(words), w, 5, 3);
        let f = assignment(a);
        let want = oracle(&e, &f);
        prop_assert_eq!(e.width(), w);
        prop_assert!(want < (1u128 << w));
        prop_assert_eq!(e.eval(&f) as u128, want);

        let s = e.simplify();
        prop_assert_eq!(s.width(), w);
        prop_assert_eq!(s.eval(&f) as u128, want, "simplified {:?}", s);

        let r = rebuild(&e);
        prop_assert_eq!(r.width(), w);
        prop_assert_eq!(r.eval(&f) as u128, want);

        let c = Compiled::new(&[e.clone(), s.clone()]).eval(&f);
        prop_assert_eq!(c, vec![want as u64, want as u64]);

        let closed = e.substitute(&|v| Some(f(v)));
        prop_assert_eq!(closed.as_const().map(|x| x as u128), Some(want));
    }

    #[test]
    fn simplify_never_adds_variables(words in vec(any::<u32>(), 1..48)) {
        let e = gen(&mut Stream::new(words), 8, 5, 3);
        prop_assert!(e.simplify().vars().is_subset(&e.vars()));
    }

    #[test]
    fn smt_rendering_declares_every_variable(words in vec(any::<u32>(), 1..48)) {
        let e = gen(&mut Stream::new(words), 1, 4, 3);
        let q = txsym_core::smt::query(std::slice::from_ref(&e));
        for v in e.vars() {
            let decl = format!("(declare-const v{} (_ BitVec 8))", v.0);
            prop_assert!(q.contains(&decl), "{}", q);
        }
        prop_assert!(q.contains("(check-sat)"));
    }
}

#[test]
fn deep_chain_is_iterative() {
    let mut e = SymExpr::zext(SymExpr::var(VarId(0)), 64);
    for i in 0..150_000u64 {
        e = SymExpr::add(e, SymExpr::zext(SymExpr::var(VarId((i % 2) as u32)), 64));
    }
    assert_eq!(e.eval(&|_| 1), 150_001);
    let s = e.simplify();
    assert_eq!(s.eval(&|_| 2), 300_002);
    drop(s);
    drop(e);
}
