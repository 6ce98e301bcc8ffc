//! Hot loops for the per-sample quadratic form `a_i^T * sigma * b_i`.
//!
//! Rows are processed in tiles of eight samples so each row of `sigma` is
//! loaded once per tile instead of once per sample. Within a tile the eight
//! per-sample accumulators advance in lockstep over `k`, so the summation
//! order per sample is identical in the scalar and AVX2 paths and does not
//! depend on how callers chunk the row range.

use alloc::vec;

const TILE: usize = 8;

/// Name of the kernel variant the current CPU dispatches to.
pub fn active_kernel() -> &'static str {
    #[cfg(target_arch = "x86_64")]
    {
        if cpu::avx2_fma_available() {
            return "avx2+fma";
        }
    }
    "scalar"
}

/// Row selector: either a contiguous range offset or an explicit index list.
#[derive(Clone, Copy)]
pub enum RowSel<'a> {
    /// Rows `start..start+out.len()`.
    Range(usize),
    /// Rows `subset[i]` for output slot `i`.
    Subset(&'a [usize]),
}

impl<'a> RowSel<'a> {
    #[inline]
    fn resolve(&self, i: usize) -> usize {
        match self {
            RowSel::Range(start) => start + i,
            RowSel::Subset(idx) => idx[i],
        }
    }
}

/// `out[i] = a_row^T * sigma * b_row` for each selected row pair.
///
/// `a` and `b` are row-major `f32` buffers sharing dimension `d`; `sigma` is
/// a row-major `d x d` `f64` matrix. Accumulation is entirely in `f64`.
pub fn quad_form_scores(
    a: &[f32],
    b: &[f32],
    d: usize,
    sigma: &[f64],
    rows: RowSel<'_>,
    out: &mut [f64],
) {
    debug_assert_eq!(sigma.len(), d * d);
    let n = out.len();
    // Transposed f64 tiles: at[j*TILE + s] = a value of sample s at coord j.
    let mut at = vec![0.0f64; d * TILE];
    let mut bt = vec![0.0f64; d * TILE];

    let mut i0 = 0;
    while i0 < n {
        let lanes = TILE.min(n - i0);
        for s in 0..lanes {
            let r = rows.resolve(i0 + s);
            let ar = &a[r * d..(r + 1) * d];
            let br = &b[r * d..(r + 1) * d];
            for j in 0..d {
                at[j * TILE + s] = ar[j] as f64;
                bt[j * TILE + s] = br[j] as f64;
            }
        }
        // Zero the padded lanes so the uniform kernel stays harmless there.
        for s in lanes..TILE {
            for j in 0..d {
                at[j * TILE + s] = 0.0;
                bt[j * TILE + s] = 0.0;
            }
        }

        let mut acc = [0.0f64; TILE];
        #[cfg(target_arch = "x86_64")]
        {
            if cpu::avx2_fma_available() {
                // Safety: feature presence checked at runtime.
                unsafe { tile_kernel_avx2(&at, &bt, d, sigma, &mut acc) };
            } else {
                tile_kernel_scalar(&at, &bt, d, sigma, &mut acc);
            }
        }
        #[cfg(not(target_arch = "x86_64"))]
        tile_kernel_scalar(&at, &bt, d, sigma, &mut acc);

        out[i0..i0 + lanes].copy_from_slice(&acc[..lanes]);
        i0 += lanes;
    }
}

fn tile_kernel_scalar(at: &[f64], bt: &[f64], d: usize, sigma: &[f64], acc: &mut [f64; TILE]) {
    for j in 0..d {
        let srow = &sigma[j * d..(j + 1) * d];
        let mut y = [0.0f64; TILE];
        for (k, &sjk) in srow.iter().enumerate() {
            let bl = &bt[k * TILE..k * TILE + TILE];
            for s in 0..TILE {
                y[s] += sjk * bl[s];
            }
        }
        let al = &at[j * TILE..j * TILE + TILE];
        for s in 0..TILE {
            acc[s] += al[s] * y[s];
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2", enable = "fma")]
unsafe fn tile_kernel_avx2(at: &[f64], bt: &[f64], d: usize, sigma: &[f64], acc: &mut [f64; TILE]) {
    use core::arch::x86_64::*;
    let mut acc0 = _mm256_setzero_pd();
    let mut acc1 = _mm256_setzero_pd();
    for j in 0..d {
        let srow = sigma.as_ptr().add(j * d);
        // four independent partial sums per half-tile hide the FMA latency
        let mut y0a = _mm256_setzero_pd();
        let mut y0b = _mm256_setzero_pd();
        let mut y0c = _mm256_setzero_pd();
        let mut y0d = _mm256_setzero_pd();
        let mut y1a = _mm256_setzero_pd();
        let mut y1b = _mm256_setzero_pd();
        let mut y1c = _mm256_setzero_pd();
        let mut y1d = _mm256_setzero_pd();
        let mut k = 0;
        while k + 4 <= d {
            let b = bt.as_ptr().add(k * TILE);
            let s0 = _mm256_set1_pd(*srow.add(k));
            y0a = _mm256_fmadd_pd(s0, _mm256_loadu_pd(b), y0a);
            y1a = _mm256_fmadd_pd(s0, _mm256_loadu_pd(b.add(4)), y1a);
            let s1 = _mm256_set1_pd(*srow.add(k + 1));
            y0b = _mm256_fmadd_pd(s1, _mm256_loadu_pd(b.add(8)), y0b);
            y1b = _mm256_fmadd_pd(s1, _mm256_loadu_pd(b.add(12)), y1b);
            let s2 = _mm256_set1_pd(*srow.add(k + 2));
            y0c = _mm256_fmadd_pd(s2, _mm256_loadu_pd(b.add(16)), y0c);
            y1c = _mm256_fmadd_pd(s2, _mm256_loadu_pd(b.add(20)), y1c);
            let s3 = _mm256_set1_pd(*srow.add(k + 3));
            y0d = _mm256_fmadd_pd(s3, _mm256_loadu_pd(b.add(24)), y0d);
            y1d = _mm256_fmadd_pd(s3, _mm256_loadu_pd(b.add(28)), y1d);
            k += 4;
        }
        while k < d {
            let sjk = _mm256_set1_pd(*srow.add(k));
            let bl = bt.as_ptr().add(k * TILE);
            y0a = _mm256_fmadd_pd(sjk, _mm256_loadu_pd(bl), y0a);
            y1a = _mm256_fmadd_pd(sjk, _mm256_loadu_pd(bl.add(4)), y1a);
            k += 1;
        }
        let y0 = _mm256_add_pd(_mm256_add_pd(y0a, y0b), _mm256_add_pd(y0c, y0d));
        let y1 = _mm256_add_pd(_mm256_add_pd(y1a, y1b), _mm256_add_pd(y1c, y1d));
        let al = at.as_ptr().add(j * TILE);
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(al), y0, acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(al.add(4)), y1, acc1);
    }
    _mm256_storeu_pd(acc.as_mut_ptr(), acc0);
    _mm256_storeu_pd(acc.as_mut_ptr().add(4), acc1);
}

#[cfg(target_arch = "x86_64")]
mod cpu {
    use core::sync::atomic::{AtomicU8, Ordering};

    static LEVEL: AtomicU8 = AtomicU8::new(0);

    pub fn avx2_fma_available() -> bool {
        match LEVEL.load(Ordering::Relaxed) {
            1 => false,
            2 => true,
            _ => {
                let ok = detect();
                LEVEL.store(if ok { 2 } else { 1 }, Ordering::Relaxed);
                ok
            }
        }
    }

    #[allow(unreachable_code)]
    fn detect() -> bool {
        #[cfg(all(target_feature = "avx2", target_feature = "fma"))]
        return true;

        use core::arch::x86_64::{__cpuid, __cpuid_count};
        let max_leaf = __cpuid(0).eax;
        if max_leaf < 7 {
            return false;
        }
        let f1 = __cpuid(1);
        let fma = f1.ecx & (1 << 12) != 0;
        let osxsave = f1.ecx & (1 << 27) != 0;
        if !fma || !osxsave {
            return false;
        }
        let f7 = __cpuid_count(7, 0);
        if f7.ebx & (1 << 5) == 0 {
            return false;
        }
        // OS must save XMM+YMM state (XCR0 bits 1 and 2).
        let xcr0 = unsafe { xgetbv0() };
        xcr0 & 0b110 == 0b110
    }

    #[target_feature(enable = "xsave")]
    unsafe fn xgetbv0() -> u64 {
        core::arch::x86_64::_xgetbv(0)
    }
}
