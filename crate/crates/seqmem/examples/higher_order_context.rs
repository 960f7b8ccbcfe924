//! Higher-order sequence memory: the same item in two different contexts
//! predicts two different successors.
//!
//! Trains A,B,C,D and X,C,E. Item C appears in both, yet after training,
//! A,B,C predicts D while X,C predicts E — the layer keeps the contexts on
//! distinct cells inside C's columns.
//!
//! Run with: cargo run --example higher_order_context

use seqmem::{Backend, DiscreteBackend, GateMode, Geometry, ItemCode, LearningParams, TemporalMemory, Vocabulary};

fn main() -> seqmem::Result<()> {
    let mut vocab = Vocabulary::new(1024, 6, 3)?;
    let codes: Vec<ItemCode> = ["a", "b", "c", "d", "x", "e"]
        .iter()
        .map(|t| vocab.register(t))
        .collect::<Result<_, _>>()?;
    let (a, b, c, d, x, e) = (codes[0], codes[1], codes[2], codes[3], codes[4], codes[5]);

    let geometry = Geometry { m_columns: 1024, cells_per_column: 8 };
    let tm = TemporalMemory::new(geometry, LearningParams::default(), 11)?;
    let mut backend = DiscreteBackend::new(tm, GateMode::AlwaysOpen);

    for _ in 0..20 {
        for seq in [[a, b, c, d].as_slice(), [x, c, e].as_slice()] {
            backend.reset_context();
            for item in seq {
                backend.present(vocab.encode(*item)?, true)?;
            }
        }
    }

    let mut probe = |label: &str, prefix: &[ItemCode]| -> seqmem::Result<Vec<u32>> {
        backend.reset_context();
        for item in prefix {
            backend.present(vocab.encode(*item)?, false)?;
        }
        let cols = backend.predicted_columns();
        println!("{label} -> predicted columns {cols:?}");
        Ok(cols)
    };

    let after_abc = probe("a,b,c", &[a, b, c])?;
    let after_xc = probe("x,c  ", &[x, c])?;

    println!();
    println!("d's columns: {:?}", vocab.encode(d)?.columns());
    println!("e's columns: {:?}", vocab.encode(e)?.columns());
    assert_eq!(after_abc, vocab.encode(d)?.columns());
    assert_eq!(after_xc, vocab.encode(e)?.columns());
    println!("both predictions are exact: shared item, disjoint contexts");
    Ok(())
}
