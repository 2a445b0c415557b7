//! Linear sum assignment (Hungarian method) on a small cost matrix, checked
//! against enumeration of all permutations.

use mslab::partition::assignment;

fn main() -> mslab::Result<()> {
    let cost = [
        4.0, 1.0, 3.0, 2.0, //
        2.0, 0.0, 5.0, 3.0, //
        3.0, 2.0, 2.0, 4.0, //
        1.0, 3.0, 4.0, 2.0,
    ];
    let (perm, total) = assignment(&cost, 4)?;
    println!("row i -> column {perm:?}, total cost {total}");

    let mut best = f64::INFINITY;
    let mut p = [0usize, 1, 2, 3];
    permute(&mut p, 0, &mut |q| {
        best = best.min(q.iter().enumerate().map(|(i, &j)| cost[i * 4 + j]).sum());
    });
    println!("exhaustive minimum {best}");
    Ok(())
}

fn permute(p: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}
