//! Weight-space features: PCA over flattened node models, the system state
//! fed to the selector, and 2-D embeddings for inspection.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// PCA basis over flattened weight vectors. Fitting and projection accumulate
/// in `f64` regardless of the weight scalar type; projections are returned in
/// the caller's type.
///
/// Components are unit-norm and mutually orthogonal within 1e-6. When the
/// centered data has rank below `k` (always the case for `k` equal to the
/// row count, since centering removes one dimension), the missing components
/// are zero vectors and `padded` counts them.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    padded: usize,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Zero-padded component count (rank deficit of the fit).
    pub fn padded(&self) -> usize {
        self.padded
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Eigenvalues of the centered Gram matrix, descending; proportional to
    /// the variance captured by each component.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Coordinates of `v` in the component basis.
    pub fn project<T: Scalar>(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.mean.len() {
            return Err(Error::ShapeMismatch {
                context: "pca projection",
                expected: vec![self.mean.len()],
                got: vec![v.len()],
            });
        }
        let mut out = Vec::with_capacity(self.components.len());
        for comp in &self.components {
            let mut acc = 0.0f64;
            for ((&x, &m), &c) in v.iter().zip(&self.mean).zip(comp) {
                acc += (x.into64() - m) * c;
            }
            out.push(T::from64(acc));
        }
        Ok(out)
    }
}

/// Fits a `k`-component PCA basis to `rows` via the Gram matrix of the
/// centered rows (rows x rows, cheap when rows are few and wide), solved with
/// a cyclic Jacobi eigendecomposition.
pub fn fit_pca<T: Scalar>(rows: &[&[T]], k: usize) -> Result<PcaModel> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::EmptyInput("pca fit"));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::EmptyInput("pca fit row"));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::ShapeMismatch {
            context: "pca fit",
            expected: vec![d],
            got: vec![rows.iter().map(|r| r.len()).find(|&l| l != d).unwrap_or(d)],
        });
    }
    if k == 0 || k > d {
        return Err(Error::InvalidInput {
            context: "pca fit",
            detail: format!("k must be in 1..={d}, got {k}"),
        });
    }

    let inv_n = 1.0 / n as f64;
    let mut mean = vec![0.0f64; d];
    for row in rows {
        for (m, &x) in mean.iter_mut().zip(*row) {
            *m += x.into64();
        }
    }
    for m in mean.iter_mut() {
        *m *= inv_n;
    }
    let mut centered = vec![0.0f64; n * d];
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            centered[i * d + j] = x.into64() - mean[j];
        }
    }

    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0f64;
            let (a, b) = (&centered[i * d..(i + 1) * d], &centered[j * d..(j + 1) * d]);
            for (&x, &y) in a.iter().zip(b) {
                acc += x * y;
            }
            gram[i * n + j] = acc;
            gram[j * n + i] = acc;
        }
    }

    let (eigenvalues, eigenvectors) = jacobi_eigh(gram, n);
    let scale = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let tol = scale * 1e-12 + 1e-30;
    let mut components = Vec::with_capacity(k);
    let mut kept_eigenvalues = Vec::with_capacity(k);
    let mut padded = 0usize;
    for c in 0..k.min(n) {
        let lambda = eigenvalues[c];
        if lambda <= tol {
            break;
        }
        let inv_sqrt = 1.0 / lambda.sqrt();
        let mut comp = vec![0.0f64; d];
        for i in 0..n {
            let u = eigenvectors[i * n + c];
            if u != 0.0 {
                let row = &centered[i * d..(i + 1) * d];
                let a = u * inv_sqrt;
                for (cj, &x) in comp.iter_mut().zip(row) {
                    *cj += a * x;
                }
            }
        }
        components.push(comp);
        kept_eigenvalues.push(lambda);
    }
    while components.len() < k {
        components.push(vec![0.0f64; d]);
        kept_eigenvalues.push(0.0);
        padded += 1;
    }

    Ok(PcaModel {
        mean,
        components,
        eigenvalues: kept_eigenvalues,
        padded,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major `n x n`).
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns of a row-major matrix.
fn jacobi_eigh(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        s
    };
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().max(1e-300);
    for _sweep in 0..100 {
        if off(&a) <= norm * 1e-28 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    a[p * n + j] = c * apj - s * aqj;
                    a[q * n + j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        a[y * n + y]
            .partial_cmp(&a[x * n + x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut eigenvectors = vec![0.0f64; n * n];
    for (new_c, &old_c) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[i * n + new_c] = v[i * n + old_c];
        }
    }
    (eigenvalues, eigenvectors)
}

/// Selector input: the stacked `k`-dimensional projections of every node's
/// model, ascending node id, with the current node's slot holding the
/// circulating model instead of the resident one.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState<T> {
    values: Vec<T>,
    nodes: usize,
    k: usize,
}

impl<T: Scalar> SystemState<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Builds the system state from resident weight vectors and the circulating
/// model at `current`.
pub fn build_state<T: Scalar>(
    pca: &PcaModel,
    residents: &[&[T]],
    circulating: &[T],
    current: usize,
) -> Result<SystemState<T>> {
    let nodes = residents.len();
    if nodes == 0 {
        return Err(Error::EmptyInput("system state residents"));
    }
    if current >= nodes {
        return Err(Error::NodeOutOfRange {
            node: current,
            nodes,
        });
    }
    let k = pca.k();
    let mut values = Vec::with_capacity(nodes * k);
    for (i, resident) in residents.iter().enumerate() {
        let projected = if i == current {
            pca.project(circulating)?
        } else {
            pca.project(resident)?
        };
        values.extend(projected);
    }
    Ok(SystemState { values, nodes, k })
}

/// One node in the 2-D weight embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub node_id: usize,
    pub main_class: u8,
    pub x: f64,
    pub y: f64,
}

/// Projects each node's weight vector onto the top two principal components
/// of the set.
pub fn export_embedding<T: Scalar>(
    rows: &[&[T]],
    main_classes: &[u8],
) -> Result<Vec<EmbeddingRow>> {
    if rows.len() != main_classes.len() {
        return Err(Error::ShapeMismatch {
            context: "embedding",
            expected: vec![rows.len()],
            got: vec![main_classes.len()],
        });
    }
    let pca = fit_pca(rows, 2)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let p = pca.project(row)?;
        out.push(EmbeddingRow {
            node_id: i,
            main_class: main_classes[i],
            x: p[0].into64(),
            y: p[1].into64(),
        });
    }
    Ok(out)
}

/// CSV rendering of an embedding with the `node_id,main_class,x,y` header.
pub fn embedding_csv(rows: &[EmbeddingRow]) -> String {
    let mut out = String::from("node_id,main_class,x,y\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.node_id, r.main_class, r.x, r.y));
    }
    out
}
