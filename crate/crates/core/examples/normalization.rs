//! Rewriting nested model expressions into `id GIVEN c0 GIVEN c1` form.

use gensql::normalize::{normalize, normalize_with, RandomOrder};
use gensql::parser::{parse, print_query};

fn main() {
    let queries = [
        "GENERATE UNDER RENAME (m GIVEN m.x > 1) AS j GIVEN j.y = 2 GIVEN j.z > 3 LIMIT 10",
        "PROBABILITY OF k.x = 1 AND k.y = 2 UNDER RENAME (m GIVEN m.y = 5) AS k",
        "GENERATE UNDER (m GIVEN m.x = 1) GIVEN m.x = 2 AND m.y = 3 LIMIT 1",
    ];
    for src in queries {
        let q = parse(src).expect("parses");
        let n = normalize(&q);
        println!("{src}\n  => {}", print_query(&n.query));
        for step in &n.trace {
            println!("     {:?}: valuation {} -> {}", step.rule, step.before, step.after);
        }
        for w in &n.warnings {
            println!("     warning at {}: {}", w.span, w.message);
        }
        let orders: Vec<String> = (0..5).map(|seed| print_query(&normalize_with(&q, &mut RandomOrder::new(seed)).query)).collect();
        println!("     same result under 5 random rule orders: {}\n", orders.iter().all(|o| *o == orders[0]));
    }
}
