//! Builds a code table by hand and runs top-k and radius searches on it.
//! Ties in distance keep table order, which the output makes visible.
//!
//! ```bash
//! cargo run --example hamming_search
//! ```

use semhash::index::{hamming_distance, CodeTable};
use semhash::HashCode;

fn code(s: &str) -> HashCode {
    HashCode::from_bools(&s.chars().map(|c| c == '+').collect::<Vec<_>>())
}

fn main() -> semhash::Result<()> {
    let items = [
        ("++++----", 0),
        ("+++-----", 0),
        ("+++++---", 0),
        ("----++++", 1),
        ("---+++++", 1),
        ("+-+-+-+-", 2),
    ];
    let mut table = CodeTable::new(8);
    for (i, (c, label)) in items.iter().enumerate() {
        table.push(&code(c), 100 + i as u32, Some(*label), *label)?;
    }

    let query = code("++++----");
    println!("query {query:?}");
    println!(
        "distance to item 3: {}",
        hamming_distance(&query, &table.code(3))?
    );

    println!("\ntop 4:");
    for h in table.top_k(&query, 4)? {
        println!(
            "  id={} d={} label={:?}",
            h.id,
            h.distance,
            table.label(h.index)
        );
    }
    println!("\nwithin radius 2:");
    for h in table.radius_search(&query, 2)? {
        println!("  id={} d={}", h.id, h.distance);
    }
    println!("\nfull ranking (item 0 excluded, as if it were the query):");
    for h in table.rank_excluding(&query, Some(0))? {
        println!("  id={} d={}", h.id, h.distance);
    }
    Ok(())
}
