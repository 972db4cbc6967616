//! Exact Euclidean distance transform (Felzenszwalb–Huttenlocher lower
//! envelope of parabolas, separable in x then y).

const INF: f64 = 1e20;

fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance, in cells², from every cell to the nearest cell where
/// `inside` is false. Everything beyond the raster border counts as
/// outside, so border cells see a distance of at most one cell.
pub fn squared_edt(inside: &[bool], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(inside.len(), width * height);
    // pad by one cell of "outside" on every side
    let (pw, ph) = (width + 2, height + 2);
    let mut grid = vec![0.0f64; pw * ph];
    for j in 0..height {
        for i in 0..width {
            if inside[j * width + i] {
                grid[(j + 1) * pw + i + 1] = INF;
            }
        }
    }
    let n = pw.max(ph);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for j in 0..ph {
        f[..pw].copy_from_slice(&grid[j * pw..(j + 1) * pw]);
        dt1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        grid[j * pw..(j + 1) * pw].copy_from_slice(&out[..pw]);
    }
    for i in 0..pw {
        for j in 0..ph {
            f[j] = grid[j * pw + i];
        }
        dt1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for j in 0..ph {
            grid[j * pw + i] = out[j];
        }
    }
    let mut res = vec![0.0; width * height];
    for j in 0..height {
        for i in 0..width {
            res[j * width + i] = grid[(j + 1) * pw + i + 1];
        }
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(inside: &[bool], w: usize, h: usize) -> Vec<f64> {
        let mut outside: Vec<(i64, i64)> = Vec::new();
        for j in -1..=h as i64 {
            for i in -1..=w as i64 {
                let border = i < 0 || j < 0 || i >= w as i64 || j >= h as i64;
                if border || !inside[j as usize * w + i as usize] {
                    outside.push((i, j));
                }
            }
        }
        let mut res = vec![0.0; w * h];
        for j in 0..h {
            for i in 0..w {
                res[j * w + i] = outside
                    .iter()
                    .map(|&(a, b)| ((a - i as i64).pow(2) + (b - j as i64).pow(2)) as f64)
                    .fold(f64::INFINITY, f64::min);
            }
        }
        res
    }

    #[test]
    fn single_row() {
        let inside = vec![true; 5];
        let d = squared_edt(&inside, 5, 1);
        assert_eq!(d, vec![1.0; 5]);
    }

    #[test]
    fn square_center() {
        let inside = vec![true; 9 * 9];
        let d = squared_edt(&inside, 9, 9);
        assert_eq!(d[4 * 9 + 4], 25.0);
        assert_eq!(d[0], 1.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let mut s = seed;
            let inside: Vec<bool> = (0..w * h).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 33) % 5 != 0
            }).collect();
            prop_assert_eq!(squared_edt(&inside, w, h), brute(&inside, w, h));
        }
    }
}
