// scratch pilot (removed before finalizing)
use quenchxy_core::disorder::goodbox_scan;

fn main() {
    for p in [0.75, 0.85, 0.92, 0.96] {
        let rows = goodbox_scan(2, p, &[8, 16, 32], 400, 7).unwrap();
        for r in &rows {
            println!(
                "p={p} L={}: preGood {}/{} ci ({:.3},{:.3}) good {}/{}",
                r.l, r.pre_good, r.trials, r.pre_good_ci.0, r.pre_good_ci.1, r.good, r.trials
            );
        }
    }
}
