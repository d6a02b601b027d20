//! Thin safe wrappers over the LAPACK routines the library needs, plus a few
//! dense helpers. Matrices handed to LAPACK are copied into column-major
//! buffers unless they are symmetric, in which case the row-major buffer is
//! passed directly.

use ndarray::{s, Array1, Array2, ArrayView2, ShapeBuilder};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = Array2<Complex64>;

fn check(routine: &'static str, info: i32) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

fn col_major<T: Clone>(a: &ArrayView2<T>) -> Vec<T> {
    a.t().iter().cloned().collect()
}

fn from_col_major<T>(rows: usize, cols: usize, data: Vec<T>) -> Array2<T> {
    Array2::from_shape_vec((rows, cols).f(), data).expect("buffer length matches shape")
}

/// Largest `|a_ij - a_ji|`.
pub fn symmetry_defect(a: &ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

pub fn symmetry_defect_c(a: &ArrayView2<Complex64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).norm());
        }
    }
    worst
}

/// Eigenvalues (ascending) and optionally eigenvectors of a symmetric
/// tridiagonal matrix. Vectors come from the MRRR algorithm, stored as
/// contiguous columns.
pub fn eig_tridiagonal(
    diag: &[f64],
    off: &[f64],
    vectors: bool,
) -> Result<(Vec<f64>, Option<Array2<f64>>)> {
    let n = diag.len();
    if n == 0 {
        return Ok((Vec::new(), vectors.then(|| Array2::zeros((0, 0)))));
    }
    assert_eq!(off.len() + 1, n, "off-diagonal length must be n - 1");
    let mut d = diag.to_vec();
    if !vectors {
        let mut e = off.to_vec();
        e.push(0.0);
        let mut info = 0;
        unsafe { lapack::dsterf(n as i32, &mut d, &mut e, &mut info) };
        check("dsterf", info)?;
        return Ok((d, None));
    }
    let mut e = off.to_vec();
    e.push(0.0);
    let mut m = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * n];
    let mut isuppz = vec![0i32; 2 * n];
    let mut tryrac = 1;
    let lwork = 18 * n;
    let liwork = 10 * n;
    let mut work = vec![0.0; lwork];
    let mut iwork = vec![0i32; liwork];
    let mut info = 0;
    unsafe {
        lapack::dstemr(
            b'V',
            b'A',
            n as i32,
            &mut d,
            &mut e,
            0.0,
            0.0,
            0,
            0,
            &mut m,
            &mut w,
            &mut z,
            n as i32,
            &[n as i32],
            &mut isuppz,
            &mut tryrac,
            &mut work,
            lwork as i32,
            &mut iwork,
            liwork as i32,
            &mut info,
        )
    };
    check("dstemr", info)?;
    if m as usize != n {
        return Err(Error::Lapack {
            routine: "dstemr",
            info: -(m + 1),
        });
    }
    Ok((w, Some(from_col_major(n, n, z))))
}

/// Eigenvalues (ascending) and optionally eigenvectors of a dense symmetric
/// matrix. The input is consumed; only its lower triangle is referenced.
pub fn eig_symmetric(a: Array2<f64>, vectors: bool) -> Result<(Vec<f64>, Option<Array2<f64>>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return Ok((Vec::new(), vectors.then(|| Array2::zeros((0, 0)))));
    }
    // A symmetric matrix reads the same in either storage order.
    let mut buf = if a.is_standard_layout() || a.t().is_standard_layout() {
        a.into_raw_vec()
    } else {
        a.iter().cloned().collect()
    };
    let jobz = if vectors { b'V' } else { b'N' };
    let mut w = vec![0.0; n];
    let mut info = 0;
    let mut qwork = [0.0];
    let mut qiwork = [0i32];
    unsafe {
        lapack::dsyevd(
            jobz,
            b'U',
            n as i32,
            &mut buf,
            n as i32,
            &mut w,
            &mut qwork,
            -1,
            &mut qiwork,
            -1,
            &mut info,
        )
    };
    check("dsyevd", info)?;
    let lwork = qwork[0] as usize;
    let liwork = qiwork[0].max(1) as usize;
    let mut work = vec![0.0; lwork.max(1)];
    let mut iwork = vec![0i32; liwork];
    unsafe {
        lapack::dsyevd(
            jobz,
            b'U',
            n as i32,
            &mut buf,
            n as i32,
            &mut w,
            &mut work,
            lwork as i32,
            &mut iwork,
            liwork as i32,
            &mut info,
        )
    };
    check("dsyevd", info)?;
    Ok((w, vectors.then(|| from_col_major(n, n, buf))))
}

pub fn eigvals_symmetric(a: &ArrayView2<f64>) -> Result<Vec<f64>> {
    Ok(eig_symmetric(a.to_owned(), false)?.0)
}

/// Singular values in descending order.
pub fn singular_values(a: &ArrayView2<f64>) -> Result<Vec<f64>> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Ok(Vec::new());
    }
    let mut buf = col_major(a);
    let mut s = vec![0.0; m.min(n)];
    let mut u = [0.0];
    let mut vt = [0.0];
    let mut qwork = [0.0];
    let mut info = 0;
    unsafe {
        lapack::dgesvd(
            b'N', b'N', m as i32, n as i32, &mut buf, m as i32, &mut s, &mut u, 1, &mut vt, 1,
            &mut qwork, -1, &mut info,
        )
    };
    check("dgesvd", info)?;
    let lwork = qwork[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    unsafe {
        lapack::dgesvd(
            b'N',
            b'N',
            m as i32,
            n as i32,
            &mut buf,
            m as i32,
            &mut s,
            &mut u,
            1,
            &mut vt,
            1,
            &mut work,
            lwork as i32,
            &mut info,
        )
    };
    check("dgesvd", info)?;
    Ok(s)
}

pub fn singular_values_c(a: &ArrayView2<Complex64>) -> Result<Vec<f64>> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Ok(Vec::new());
    }
    let mut buf = col_major(a);
    let k = m.min(n);
    let mut s = vec![0.0; k];
    let mut u = [Complex64::new(0.0, 0.0)];
    let mut vt = [Complex64::new(0.0, 0.0)];
    let mut rwork = vec![0.0; 5 * k];
    let mut qwork = [Complex64::new(0.0, 0.0)];
    let mut info = 0;
    unsafe {
        lapack::zgesvd(
            b'N', b'N', m as i32, n as i32, &mut buf, m as i32, &mut s, &mut u, 1, &mut vt, 1,
            &mut qwork, -1, &mut rwork, &mut info,
        )
    };
    check("zgesvd", info)?;
    let lwork = qwork[0].re as usize;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1)];
    unsafe {
        lapack::zgesvd(
            b'N',
            b'N',
            m as i32,
            n as i32,
            &mut buf,
            m as i32,
            &mut s,
            &mut u,
            1,
            &mut vt,
            1,
            &mut work,
            lwork as i32,
            &mut rwork,
            &mut info,
        )
    };
    check("zgesvd", info)?;
    Ok(s)
}

/// Operator (spectral) norm.
pub fn op_norm(a: &ArrayView2<f64>) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

pub fn op_norm_c(a: &ArrayView2<Complex64>) -> Result<f64> {
    Ok(singular_values_c(a)?.first().copied().unwrap_or(0.0))
}

/// Smallest singular value; 1 for the empty matrix so that `I` on a zero
/// dimensional space reads as nonsingular.
pub fn sigma_min_c(a: &ArrayView2<Complex64>) -> Result<f64> {
    Ok(singular_values_c(a)?.last().copied().unwrap_or(1.0))
}

pub fn sigma_min(a: &ArrayView2<f64>) -> Result<f64> {
    Ok(singular_values(a)?.last().copied().unwrap_or(1.0))
}

/// `sigma_max / sigma_min`.
pub fn condition_number_c(a: &ArrayView2<Complex64>) -> Result<f64> {
    let s = singular_values_c(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

pub fn inverse_c(a: &ArrayView2<Complex64>) -> Result<CMatrix> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let mut buf = col_major(a);
    let mut ipiv = vec![0i32; n];
    let mut info = 0;
    unsafe { lapack::zgetrf(n as i32, n as i32, &mut buf, n as i32, &mut ipiv, &mut info) };
    check("zgetrf", info)?;
    let mut work = vec![Complex64::new(0.0, 0.0); 64 * n];
    unsafe {
        lapack::zgetri(
            n as i32,
            &mut buf,
            n as i32,
            &ipiv,
            &mut work,
            (64 * n) as i32,
            &mut info,
        )
    };
    check("zgetri", info)?;
    Ok(from_col_major(n, n, buf))
}

/// Solves `A X = B` for a complex tridiagonal `A` given by its three diagonals.
pub fn solve_tridiagonal_c(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    rhs: &ArrayView2<Complex64>,
) -> Result<CMatrix> {
    let (n, k) = rhs.dim();
    if n == 0 || k == 0 {
        return Ok(Array2::zeros((n, k)));
    }
    let mut dl = sub.to_vec();
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut b = col_major(rhs);
    let mut info = 0;
    unsafe {
        lapack::zgtsv(
            n as i32, k as i32, &mut dl, &mut d, &mut du, &mut b, n as i32, &mut info,
        )
    };
    check("zgtsv", info)?;
    Ok(from_col_major(n, k, b))
}

/// Solves `A X = B` for a dense complex `A`.
pub fn solve_dense_c(a: &ArrayView2<Complex64>, rhs: &ArrayView2<Complex64>) -> Result<CMatrix> {
    let (n, k) = rhs.dim();
    if n == 0 || k == 0 {
        return Ok(Array2::zeros((n, k)));
    }
    let mut abuf = col_major(a);
    let mut b = col_major(rhs);
    let mut ipiv = vec![0i32; n];
    let mut info = 0;
    unsafe {
        lapack::zgesv(
            n as i32, k as i32, &mut abuf, n as i32, &mut ipiv, &mut b, n as i32, &mut info,
        )
    };
    check("zgesv", info)?;
    Ok(from_col_major(n, k, b))
}

/// Orthonormal basis (as columns) of a space containing the column span of `a`.
pub fn orthonormal_columns(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (m, n) = a.dim();
    if n == 0 {
        return Ok(Array2::zeros((m, 0)));
    }
    assert!(n <= m, "more columns than rows");
    let mut buf = col_major(a);
    let mut tau = vec![0.0; n];
    let mut qwork = [0.0];
    let mut info = 0;
    unsafe {
        lapack::dgeqrf(
            m as i32, n as i32, &mut buf, m as i32, &mut tau, &mut qwork, -1, &mut info,
        )
    };
    check("dgeqrf", info)?;
    let lwork = (qwork[0] as usize).max(n);
    let mut work = vec![0.0; lwork];
    unsafe {
        lapack::dgeqrf(
            m as i32,
            n as i32,
            &mut buf,
            m as i32,
            &mut tau,
            &mut work,
            lwork as i32,
            &mut info,
        )
    };
    check("dgeqrf", info)?;
    unsafe {
        lapack::dorgqr(
            m as i32,
            n as i32,
            n as i32,
            &mut buf,
            m as i32,
            &tau,
            &mut work,
            lwork as i32,
            &mut info,
        )
    };
    check("dorgqr", info)?;
    Ok(from_col_major(m, n, buf))
}

/// QR factorization returning `(Q, diag(R))`.
pub fn qr_with_diag(a: &ArrayView2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let (m, n) = a.dim();
    let mut buf = col_major(a);
    let mut tau = vec![0.0; n];
    let lwork = 64 * n.max(1);
    let mut work = vec![0.0; lwork];
    let mut info = 0;
    unsafe {
        lapack::dgeqrf(
            m as i32,
            n as i32,
            &mut buf,
            m as i32,
            &mut tau,
            &mut work,
            lwork as i32,
            &mut info,
        )
    };
    check("dgeqrf", info)?;
    let diag: Vec<f64> = (0..n).map(|j| buf[j * m + j]).collect();
    unsafe {
        lapack::dorgqr(
            m as i32,
            n as i32,
            n as i32,
            &mut buf,
            m as i32,
            &tau,
            &mut work,
            lwork as i32,
            &mut info,
        )
    };
    check("dorgqr", info)?;
    Ok((from_col_major(m, n, buf), diag))
}

/// Symmetric square root of a positive semidefinite matrix. Eigenvalues in
/// `[-tol, 0)` are clamped to zero; anything more negative is an error.
pub fn sqrt_psd(a: &ArrayView2<f64>, tol: f64) -> Result<Array2<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let (w, v) = eig_symmetric(a.to_owned(), true)?;
    let v = v.expect("vectors requested");
    if let Some(&lo) = w.first() {
        if lo < -tol {
            return Err(Error::NotPositiveSemidefinite { min_eig: lo });
        }
    }
    let roots = Array1::from_iter(w.iter().map(|&x| x.max(0.0).sqrt()));
    let scaled = &v * &roots;
    Ok(scaled.dot(&v.t()))
}

pub fn min_eigenvalue(a: &ArrayView2<f64>) -> Result<f64> {
    Ok(eigvals_symmetric(a)?.first().copied().unwrap_or(0.0))
}

pub fn identity_c(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, Complex64::new(1.0, 0.0))
}

pub fn to_complex(a: &ArrayView2<f64>) -> CMatrix {
    a.mapv(|x| Complex64::new(x, 0.0))
}

/// Conjugate transpose.
pub fn adjoint(a: &ArrayView2<Complex64>) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

/// `(M + M^*)/2` and `(M - M^*)/(2i)`, returned as real symmetric matrices when
/// `M` is complex symmetric. The discarded imaginary parts are returned as the
/// third element.
pub fn re_im_parts(m: &ArrayView2<Complex64>) -> (Array2<f64>, Array2<f64>, f64) {
    let adj = adjoint(m);
    let re = (m.to_owned() + &adj).mapv(|z| z * 0.5);
    let im = (m.to_owned() - &adj).mapv(|z| z / Complex64::new(0.0, 2.0));
    let mut leak = 0.0f64;
    for z in re.iter().chain(im.iter()) {
        leak = leak.max(z.im.abs());
    }
    (re.mapv(|z| z.re), im.mapv(|z| z.re), leak)
}

/// Frobenius-free operator norm estimate of a symmetric linear map by power
/// iteration on `x -> A x`; `apply` must be symmetric.
pub fn power_norm_estimate<F>(n: usize, iterations: usize, seed: u64, mut apply: F) -> f64
where
    F: FnMut(&Array2<f64>) -> Array2<f64>,
{
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if n == 0 {
        return 0.0;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let block = 4.min(n);
    let mut x = Array2::from_shape_fn((n, block), |_| StandardNormal.sample(&mut rng));
    let mut estimate = 0.0f64;
    for _ in 0..iterations {
        let q = match orthonormal_columns(&x.view()) {
            Ok(q) => q,
            Err(_) => return f64::NAN,
        };
        let y = apply(&q);
        estimate = 0.0;
        for j in 0..block {
            estimate = estimate.max(y.column(j).dot(&y.column(j)).sqrt());
        }
        if estimate == 0.0 {
            return 0.0;
        }
        x = y;
    }
    estimate
}

/// Top singular values of a linear operator given through `apply` and
/// `apply_t` (its transpose), by block subspace iteration with Rayleigh-Ritz.
pub fn top_singular_values<F, G>(
    n: usize,
    count: usize,
    iterations: usize,
    seed: u64,
    mut apply: F,
    mut apply_t: G,
) -> Result<Vec<f64>>
where
    F: FnMut(&Array2<f64>) -> Array2<f64>,
    G: FnMut(&Array2<f64>) -> Array2<f64>,
{
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if n == 0 || count == 0 {
        return Ok(Vec::new());
    }
    let block = (count + 10).min(n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut q = orthonormal_columns(
        &Array2::from_shape_fn((n, block), |_| StandardNormal.sample(&mut rng)).view(),
    )?;
    for _ in 0..iterations {
        let y = apply(&q);
        let z = apply_t(&y);
        q = orthonormal_columns(&z.view())?;
    }
    let y = apply(&q);
    let mut s = singular_values(&y.view())?;
    s.truncate(count.min(block));
    Ok(s)
}

/// `sum_j w_j v_j v_j^T` over the columns of `vectors`, skipping zero weights.
pub fn weighted_gram(vectors: &ArrayView2<f64>, weights: &[f64]) -> Array2<f64> {
    let n = vectors.nrows();
    let picked: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] != 0.0).collect();
    let mut out = Array2::zeros((n, n));
    if picked.is_empty() {
        return out;
    }
    let sel = vectors.select(ndarray::Axis(1), &picked);
    let w = Array1::from_iter(picked.iter().map(|&j| weights[j]));
    let scaled = &sel * &w;
    ndarray::linalg::general_mat_mul(1.0, &scaled, &sel.t(), 0.0, &mut out);
    out
}

/// Columns of `vectors` whose index lies in `range`, as a view.
pub fn column_block(vectors: &Array2<f64>, range: std::ops::Range<usize>) -> ArrayView2<'_, f64> {
    vectors.slice(s![.., range])
}

/// Serde adapters: real matrices as nested row arrays, complex matrices as
/// nested rows of `[re, im]` pairs.
pub mod serde_matrix {
    use ndarray::Array2;
    use num_complex::Complex64;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn rows<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.outer_iter().map(|r| r.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn from_rows<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        build(rows).map_err(D::Error::custom)
    }

    pub fn complex_rows<S: Serializer>(m: &Array2<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = m
            .outer_iter()
            .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn from_complex_rows<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Array2<Complex64>, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let rows = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|[re, im]| Complex64::new(re, im))
                    .collect()
            })
            .collect();
        build(rows).map_err(D::Error::custom)
    }

    fn build<T: Clone>(rows: Vec<Vec<T>>) -> Result<Array2<T>, String> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err("ragged matrix rows".into());
        }
        let flat: Vec<T> = rows.into_iter().flatten().collect();
        Array2::from_shape_vec((r, c), flat).map_err(|e| e.to_string())
    }
}
