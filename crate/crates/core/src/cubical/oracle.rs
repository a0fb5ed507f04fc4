//! Textbook boundary-matrix reduction over Z/2. Cubic time; test-scale only.

use std::cmp::Ordering;

use super::{CubicalFiltration, PersistenceDiagram, PersistencePair};

/// Persistence by left-to-right column reduction of the full boundary matrix.
///
/// Columns follow the same (value, dimension, linear index) order as
/// [`compute_persistence`](super::compute_persistence) but are sorted and
/// reduced here independently of it.
pub fn oracle_persistence(f: &CubicalFiltration) -> PersistenceDiagram {
    let n = f.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        f.value(a)
            .partial_cmp(&f.value(b))
            .unwrap_or(Ordering::Equal)
            .then(f.dim(a).cmp(&f.dim(b)))
            .then(a.cmp(&b))
    });
    let mut position = vec![0usize; n];
    for (i, &c) in order.iter().enumerate() {
        position[c] = i;
    }

    // column j holds the boundary of the j-th cell, as ascending row positions
    let mut columns: Vec<Vec<usize>> = order
        .iter()
        .map(|&c| {
            let mut col: Vec<usize> = f.faces(c).into_iter().map(|face| position[face]).collect();
            col.sort_unstable();
            col
        })
        .collect();

    let mut column_with_low: Vec<Option<usize>> = vec![None; n];
    let mut paired = vec![false; n];
    let mut pairs = Vec::new();

    for j in 0..n {
        while let Some(&low) = columns[j].last() {
            match column_with_low[low] {
                Some(k) => {
                    let other = columns[k].clone();
                    columns[j] = symmetric_difference(&columns[j], &other);
                }
                None => break,
            }
        }
        if let Some(&low) = columns[j].last() {
            column_with_low[low] = Some(j);
            paired[low] = true;
            paired[j] = true;
            let birth_cell = order[low];
            pairs.push(PersistencePair::finite(
                f.dim(birth_cell),
                f.value(birth_cell),
                f.value(order[j]),
            ));
        }
    }

    for (i, &c) in order.iter().enumerate() {
        if !paired[i] && columns[i].is_empty() {
            pairs.push(PersistencePair::essential(f.dim(c), f.value(c)));
        }
    }

    PersistenceDiagram::new(pairs)
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_of_sorted_columns() {
        assert_eq!(symmetric_difference(&[1, 3, 5], &[3, 4]), vec![1, 4, 5]);
        assert_eq!(symmetric_difference(&[2], &[2]), Vec::<usize>::new());
    }
}
