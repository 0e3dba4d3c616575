use serde::{Deserialize, Serialize};

/// A named, row-major parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_data(name: &str, shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch for {name}"
        );
        Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of tensors; also used for gradients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        ParamSet { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn data(&self, name: &str) -> &[f64] {
        &self
            .get(name)
            .unwrap_or_else(|| panic!("no tensor {name}"))
            .data
    }

    pub fn data_mut(&mut self, name: &str) -> &mut [f64] {
        &mut self
            .get_mut(name)
            .unwrap_or_else(|| panic!("no tensor {name}"))
            .data
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(&t.name, &t.shape))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// Same names and shapes in the same order.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += k * x`
pub(crate) fn axpy(out: &mut [f64], k: f64, x: &[f64]) {
    debug_assert_eq!(out.len(), x.len());
    for (o, v) in out.iter_mut().zip(x) {
        *o += k * v;
    }
}

/// `(rows × inner) · (inner × cols)`, all row-major.
pub(crate) fn matmul(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let a_row = &a[r * inner..(r + 1) * inner];
        let out_row = &mut out[r * cols..(r + 1) * cols];
        for (k, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                axpy(out_row, av, &b[k * cols..(k + 1) * cols]);
            }
        }
    }
    out
}

/// `aᵀ · b` where `a` is (n × p) and `b` is (n × q); result is (p × q).
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], n: usize, p: usize, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * q];
    for r in 0..n {
        let a_row = &a[r * p..(r + 1) * p];
        let b_row = &b[r * q..(r + 1) * q];
        for (i, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                axpy(&mut out[i * q..(i + 1) * q], av, b_row);
            }
        }
    }
    out
}

/// `a · bᵀ` where `a` is (n × p) and `b` is (m × p); result is (n × m).
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], n: usize, p: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = dot(&a[i * p..(i + 1) * p], &b[j * p..(j + 1) * p]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        // a: 2×3, b: 3×2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![58.0, 64.0, 139.0, 154.0]);
        // aᵀ a = 3×3
        let ata = matmul_tn(&a, &a, 2, 3, 3);
        assert_eq!(
            ata,
            vec![17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]
        );
        // a aᵀ = 2×2
        assert_eq!(matmul_nt(&a, &a, 2, 3, 2), vec![14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn layout_comparison() {
        let p = ParamSet::new(vec![Tensor::zeros("w", &[2, 3])]);
        let g = p.zeros_like();
        assert!(p.same_layout(&g));
        assert_eq!(p.num_params(), 6);
    }
}
