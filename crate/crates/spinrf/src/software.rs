//! Equivalent software network: the same layer shapes as the physical model
//! but with free real-valued weight matrices, ReLU hidden activations and
//! plain biases. Serves as the accuracy baseline the physical simulation is
//! compared against.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Weights, shape [outputs x inputs].
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseLayer {
    fn random<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        // Uniform He-style init; enough for these shallow nets.
        let scale = (2.0 / n_in as f64).sqrt();
        DenseLayer {
            w: Array2::from_shape_fn((n_out, n_in), |_| rng.gen_range(-scale..scale)),
            b: Array1::zeros(n_out),
        }
    }
}

/// One- or two-layer MLP matching the physical architectures.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftwareModel {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer parameter gradients from [`SoftwareModel::backward`].
#[derive(Debug, Clone)]
pub struct SoftwareGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

pub struct SoftwareCache {
    /// Input plus post-activation output of every layer.
    acts: Vec<Array2<f64>>,
}

impl SoftwareModel {
    /// `sizes` = [inputs, hidden..., outputs]; ReLU between layers, linear out.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape("need at least input and output sizes".into()));
        }
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer::random(w[0], w[1], rng))
            .collect();
        Ok(SoftwareModel { layers })
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map(|l| l.b.len()).unwrap_or(0)
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_full(batch)?.1)
    }

    pub fn forward_full(&self, batch: &Array2<f64>) -> Result<(SoftwareCache, Array2<f64>)> {
        if batch.ncols() != self.layers[0].w.ncols() {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                batch.ncols(),
                self.layers[0].w.ncols()
            )));
        }
        let mut acts = vec![batch.clone()];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = acts[li].dot(&layer.w.t());
            for j in 0..layer.b.len() {
                let b = layer.b[j];
                z.column_mut(j).mapv_inplace(|x| x + b);
            }
            if li != last {
                z.mapv_inplace(|x| x.max(0.0));
            }
            acts.push(z);
        }
        let out = acts.last().unwrap().clone();
        Ok((SoftwareCache { acts }, out))
    }

    pub fn backward(
        &self,
        cache: &SoftwareCache,
        out_grads: &Array2<f64>,
    ) -> Result<SoftwareGrads> {
        let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); self.layers.len()];
        let mut g = out_grads.clone();
        for li in (0..self.layers.len()).rev() {
            let input = &cache.acts[li];
            // ReLU mask for hidden layers: the stored activation is the
            // post-ReLU value, so active where it is > 0.
            if li != self.layers.len() - 1 {
                let post = &cache.acts[li + 1];
                g.zip_mut_with(post, |gv, &a| {
                    if a <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            let gw = g.t().dot(input);
            let gb = g.sum_axis(Axis(0));
            if li > 0 {
                g = g.dot(&self.layers[li].w);
            }
            grads[li] = (gw, gb);
        }
        Ok(SoftwareGrads { layers: grads })
    }
}
