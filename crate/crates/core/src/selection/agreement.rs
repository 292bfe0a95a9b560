/// Fraction of nodes on which two labelings agree, maximized over block
/// permutations. Exhaustive for `k <= 8`, greedy on the confusion matrix
/// above that.
pub fn label_agreement(a: &[usize], b: &[usize], k: usize) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 1.0;
    }
    let mut confusion = vec![0usize; k * k];
    for (&x, &y) in a.iter().zip(b) {
        confusion[x * k + y] += 1;
    }
    let best = if k <= 8 {
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0;
        permute(&mut perm, 0, &mut |p| {
            let matched = (0..k).map(|r| confusion[r * k + p[r]]).sum::<usize>();
            best = best.max(matched);
        });
        best
    } else {
        greedy(&confusion, k)
    };
    best as f64 / a.len() as f64
}

fn permute(perm: &mut [usize], i: usize, visit: &mut dyn FnMut(&[usize])) {
    if i == perm.len() {
        visit(perm);
        return;
    }
    for j in i..perm.len() {
        perm.swap(i, j);
        permute(perm, i + 1, visit);
        perm.swap(i, j);
    }
}

fn greedy(confusion: &[usize], k: usize) -> usize {
    let mut cells: Vec<(usize, usize, usize)> = (0..k)
        .flat_map(|r| (0..k).map(move |s| (confusion[r * k + s], r, s)))
        .collect();
    cells.sort_unstable_by(|x, y| y.cmp(x));
    let (mut used_r, mut used_s) = (vec![false; k], vec![false; k]);
    let mut total = 0;
    for (count, r, s) in cells {
        if !used_r[r] && !used_s[s] {
            used_r[r] = true;
            used_s[s] = true;
            total += count;
        }
    }
    total
}
