//! Interval operations checked against brute-force enumeration of integer
//! sets within [-8, 8].

use amc_core::intervals::{filter_full, AbstractEnv, Interval};
use amc_core::lang::{parse, Cond, Kind, RelOp, Value};
use proptest::prelude::*;

const R: i64 = 8;

fn iv() -> impl Strategy<Value = Interval> {
    prop_oneof![
        1 => Just(Interval::bottom(Kind::Int)),
        8 => (-R..=R, -R..=R).prop_map(|(a, b)| Interval::int(a.min(b), a.max(b))),
    ]
}

fn members(i: &Interval) -> Vec<i64> {
    (-4 * R..=4 * R).filter(|&v| i.contains(v as f64)).collect()
}

/// Smallest interval holding `vals`.
fn hull(vals: &[i64]) -> Interval {
    match (vals.iter().min(), vals.iter().max()) {
        (Some(&a), Some(&b)) => Interval::int(a, b),
        _ => Interval::bottom(Kind::Int),
    }
}

fn rel() -> impl Strategy<Value = RelOp> {
    prop::sample::select(vec![RelOp::Lt, RelOp::Le, RelOp::Gt, RelOp::Ge, RelOp::Eq, RelOp::Ne])
}

fn env_of(x: &Interval, y: &Interval) -> AbstractEnv {
    let p = parse("int x, y; know (x == y);").unwrap();
    let mut env = AbstractEnv::top(&p.decls);
    env.set(0, *x).unwrap();
    env.set(1, *y).unwrap();
    env
}

fn cond_of(src: &str) -> Cond {
    parse(&format!("int x, y; know ({src});")).unwrap().outcome.unwrap()
}

fn projections(env: &AbstractEnv) -> (Interval, Interval) {
    match env {
        AbstractEnv::Bottom => (Interval::bottom(Kind::Int), Interval::bottom(Kind::Int)),
        AbstractEnv::Vars(_) => (env.get(0).unwrap(), env.get(1).unwrap()),
    }
}

proptest! {
    #[test]
    fn join_is_least_upper_bound(a in iv(), b in iv()) {
        let j = a.join(&b).unwrap();
        let mut union = members(&a);
        union.extend(members(&b));
        prop_assert_eq!(j, hull(&union));
        prop_assert!(a.leq(&j) && b.leq(&j));
    }

    #[test]
    fn meet_is_intersection(a in iv(), b in iv()) {
        let m = a.meet(&b).unwrap();
        let mb = members(&b);
        let inter: Vec<i64> = members(&a).into_iter().filter(|v| mb.contains(v)).collect();
        prop_assert_eq!(members(&m), inter);
    }

    #[test]
    fn leq_is_inclusion(a in iv(), b in iv()) {
        let mb = members(&b);
        prop_assert_eq!(a.leq(&b), members(&a).iter().all(|v| mb.contains(v)));
    }

    #[test]
    fn arithmetic_is_exact_hull(a in iv(), b in iv(), k in -3i64..=3) {
        let (ma, mb) = (members(&a), members(&b));
        let sums: Vec<i64> = ma.iter().flat_map(|x| mb.iter().map(move |y| x + y)).collect();
        let diffs: Vec<i64> = ma.iter().flat_map(|x| mb.iter().map(move |y| x - y)).collect();
        let scaled: Vec<i64> = ma.iter().map(|x| k * x).collect();
        prop_assert_eq!(a.add(&b).unwrap(), hull(&sums));
        prop_assert_eq!(a.sub(&b).unwrap(), hull(&diffs));
        prop_assert_eq!(a.scale(Value::Int(k)).unwrap(), hull(&scaled));
    }

    #[test]
    fn filter_atom_is_exact_projection(x in iv(), y in iv(), op in rel(), positive in any::<bool>()) {
        let c = Cond::Cmp(
            amc_core::lang::Expr::Var(amc_core::lang::VarRef { name: "x".into(), slot: Some(0) }),
            op,
            amc_core::lang::Expr::Var(amc_core::lang::VarRef { name: "y".into(), slot: Some(1) }),
        );
        let env = env_of(&x, &y);
        let out = filter_full(&env, &c, positive).unwrap();
        let holds = |a: i64, b: i64| op.holds(a, b) == positive;
        let pairs: Vec<(i64, i64)> = members(&x)
            .into_iter()
            .flat_map(|a| members(&y).into_iter().map(move |b| (a, b)))
            .filter(|&(a, b)| holds(a, b))
            .collect();
        let (fx, fy) = projections(&out);
        let xs: Vec<i64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<i64> = pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(out.is_bottom(), pairs.is_empty());
        if !pairs.is_empty() {
            prop_assert_eq!(fx, hull(&xs));
            prop_assert_eq!(fy, hull(&ys));
        }
    }

    #[test]
    fn filter_compound_is_sound(x in iv(), y in iv(), c in -R..=R, d in -R..=R, pick in 0usize..4, positive in any::<bool>()) {
        let src = [
            format!("x < y && y <= {c}"),
            format!("x == {c} || y != {d}"),
            format!("x + y >= {c} && x - {d} < y"),
            format!("(x > {c} || x < {d}) && 2 * y != x"),
        ][pick].clone();
        let cond = cond_of(&src);
        let env = env_of(&x, &y);
        let out = filter_full(&env, &cond, positive).unwrap();
        let eval = |a: i64, b: i64| -> bool {
            match pick {
                0 => a < b && b <= c,
                1 => a == c || b != d,
                2 => a + b >= c && a - d < b,
                _ => (a > c || a < d) && 2 * b != a,
            }
        };
        for a in members(&x) {
            for b in members(&y) {
                if eval(a, b) == positive {
                    let (fx, fy) = projections(&out);
                    prop_assert!(fx.contains(a as f64) && fy.contains(b as f64), "{src}: ({a}, {b}) lost");
                }
            }
        }
    }

    #[test]
    fn widening_over_approximates(a in iv(), b in iv()) {
        let w = a.widen(&b).unwrap();
        prop_assert!(a.leq(&w) && b.leq(&w));
    }

    #[test]
    fn narrowing_stays_between(a in iv(), b in iv()) {
        // narrowing is applied to a post-fixpoint a with b below it
        let b = b.meet(&a).unwrap();
        let n = a.narrow(&b).unwrap();
        prop_assert!(n.leq(&a));
        prop_assert!(b.leq(&n));
    }

    #[test]
    fn widening_chain_stabilizes(steps in prop::collection::vec((-R..=R, -R..=R), 1..20)) {
        // Any ascending chain x_0 <= x_1 <= ... fed through widening changes
        // each bound at most once after the first element, so at most two
        // strict increases in total.
        let mut acc = Interval::int(0, 0);
        let mut w = acc;
        let mut changes = 0;
        for (a, b) in steps {
            acc = acc.join(&Interval::int(a.min(b), a.max(b))).unwrap();
            let next = w.widen(&w.join(&acc).unwrap()).unwrap();
            if next != w {
                changes += 1;
            }
            prop_assert!(acc.leq(&next));
            w = next;
        }
        prop_assert!(changes <= 2, "{changes} changes");
    }
}

#[test]
fn widening_with_thresholds_stops_at_threshold() {
    let a = Interval::int(0, 1);
    let w = a.widen_with_thresholds(&Interval::int(-1, 3), &[-4.0, 5.0]).unwrap();
    assert_eq!(w, Interval::int(-4, 5));
}
