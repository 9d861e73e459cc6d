//! Synthetic regression tasks whose inputs and targets share a known latent dimension.
//!
//! Latents `z ~ U[0,1]^{d_z}` are pushed through two frozen random tanh networks: `Φ`
//! lifts them to the inputs in `ℝ^D`, `Ψ` maps them to targets in `ℝ^n`. Both maps are
//! redrawn until their Jacobians are well conditioned at a set of probe latents, so the
//! data manifolds keep dimension `d_z`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::ndstats::Matrix;
use crate::seeds;

const STREAM_MAPS: u64 = 1;
const STREAM_LATENTS: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_EMBED: u64 = 4;

const JACOBIAN_PROBES: usize = 32;
const MIN_SINGULAR_VALUE: f64 = 1e-3;
const MAX_REDRAWS: usize = 64;
const CALIBRATION_POINTS: usize = 4096;
/// Pre-activation gain of the frozen tanh layers.
const GAIN: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldSpec {
    pub latent_dim: usize,
    pub input_dim: usize,
    pub target_dim: usize,
    pub samples: usize,
    pub target_noise_sigma: f64,
    pub embed_layers: usize,
    pub seed: u64,
}

impl Default for ManifoldSpec {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            input_dim: 20,
            target_dim: 2,
            samples: 1000,
            target_noise_sigma: 0.0,
            embed_layers: 2,
            seed: 0,
        }
    }
}

const SPEC_KEYS: [&str; 7] = [
    "latent_dim",
    "input_dim",
    "target_dim",
    "samples",
    "target_noise_sigma",
    "embed_layers",
    "seed",
];

impl ManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.latent_dim == 0 {
            return fail("latent_dim must be at least 1".into());
        }
        if self.input_dim < self.latent_dim {
            return fail(format!(
                "input_dim {} below latent_dim {}",
                self.input_dim, self.latent_dim
            ));
        }
        if self.target_dim < self.latent_dim {
            return fail(format!(
                "target_dim {} cannot carry latent_dim {} injectively",
                self.target_dim, self.latent_dim
            ));
        }
        if self.samples < 10 {
            return fail(format!("samples {} below 10", self.samples));
        }
        if !(self.target_noise_sigma >= 0.0 && self.target_noise_sigma.is_finite()) {
            return fail(format!("noise sigma {} invalid", self.target_noise_sigma));
        }
        if self.embed_layers == 0 {
            return fail("embed_layers must be at least 1".into());
        }
        Ok(())
    }

    /// Reads a `key: value` spec file; omitted keys take the defaults.
    pub fn read(path: &Path) -> Result<Self> {
        let kv = KvFile::read(path)?;
        if let Some(k) = kv.unknown_keys(&SPEC_KEYS).first() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("unknown key {k:?}"),
            });
        }
        let d = Self::default();
        let spec = Self {
            latent_dim: kv.require("latent_dim")?,
            input_dim: kv.require("input_dim")?,
            target_dim: kv.require("target_dim")?,
            samples: kv.require("samples")?,
            target_noise_sigma: kv
                .get("target_noise_sigma")?
                .unwrap_or(d.target_noise_sigma),
            embed_layers: kv.get("embed_layers")?.unwrap_or(d.embed_layers),
            seed: kv.get("seed")?.unwrap_or(d.seed),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "latent_dim: {}", self.latent_dim);
        let _ = writeln!(s, "input_dim: {}", self.input_dim);
        let _ = writeln!(s, "target_dim: {}", self.target_dim);
        let _ = writeln!(s, "samples: {}", self.samples);
        let _ = writeln!(s, "target_noise_sigma: {}", self.target_noise_sigma);
        let _ = writeln!(s, "embed_layers: {}", self.embed_layers);
        let _ = writeln!(s, "seed: {}", self.seed);
        s
    }

    fn width(&self) -> usize {
        (8 * self.latent_dim).max(32)
    }
}

/// A frozen smooth map `ℝ^{d_z} → ℝ^out`: tanh layers, a linear lift, then an affine
/// calibration.
#[derive(Clone, Debug)]
pub struct SmoothMap {
    layers: Vec<(Matrix, Vec<f64>)>,
    lift: Matrix,
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl SmoothMap {
    fn draw(rng: &mut ChaCha8Rng, latent: usize, width: usize, depth: usize, out: usize) -> Self {
        let mut layers = Vec::with_capacity(depth);
        let mut fan_in = latent;
        for _ in 0..depth {
            let sd = GAIN / (fan_in as f64).sqrt();
            let a = Matrix::from_fn(width, fan_in, |_, _| {
                sd * rng.sample::<f64, _>(StandardNormal)
            });
            let c = (0..width)
                .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            layers.push((a, c));
            fan_in = width;
        }
        let sd = 1.0 / (width as f64).sqrt();
        let lift = Matrix::from_fn(out, width, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
        Self {
            layers,
            lift,
            offset: vec![0.0; out],
            scale: vec![1.0; out],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.lift.rows()
    }

    /// Hidden activations for one latent (centered to `[-1, 1]`).
    fn hidden(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(z.iter().map(|v| 2.0 * v - 1.0).collect::<Vec<f64>>());
        for (a, c) in &self.layers {
            let prev = acts.last().unwrap();
            let next = (0..a.rows())
                .map(|o| (c[o] + a.row(o).iter().zip(prev).map(|(w, x)| w * x).sum::<f64>()).tanh())
                .collect();
            acts.push(next);
        }
        acts
    }

    fn eval_row(&self, z: &[f64], out: &mut [f64]) {
        let acts = self.hidden(z);
        let h = acts.last().unwrap();
        for (o, slot) in out.iter_mut().enumerate() {
            let v: f64 = self.lift.row(o).iter().zip(h).map(|(w, x)| w * x).sum();
            *slot = (v - self.offset[o]) * self.scale[o];
        }
    }

    pub fn eval(&self, latents: &Matrix) -> Matrix {
        let out = self.out_dim();
        let mut data = vec![0.0; latents.rows() * out];
        for (z, slot) in latents.iter_rows().zip(data.chunks_exact_mut(out)) {
            self.eval_row(z, slot);
        }
        Matrix::from_raw(latents.rows(), out, data)
    }

    /// out×d_z Jacobian at one latent.
    pub fn jacobian(&self, z: &[f64]) -> Matrix {
        let acts = self.hidden(z);
        // d(centered)/dz = 2·I
        let mut jac = Matrix::from_fn(z.len(), z.len(), |i, j| if i == j { 2.0 } else { 0.0 });
        for ((a, _), h) in self.layers.iter().zip(&acts[1..]) {
            let mut next = a.matmul(&jac).expect("layer shapes agree");
            for (r, hr) in h.iter().enumerate() {
                let g = 1.0 - hr * hr;
                next.row_mut(r).iter_mut().for_each(|v| *v *= g);
            }
            jac = next;
        }
        let mut out = self.lift.matmul(&jac).expect("lift shape agrees");
        for (r, s) in self.scale.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        out
    }

    fn smallest_singular_value(&self, z: &[f64]) -> f64 {
        let j = self.jacobian(z);
        let jtj = j.transpose().matmul(&j).expect("square");
        let k = jtj.rows();
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(k, k, jtj.as_slice()));
        eig.eigenvalues.min().max(0.0).sqrt()
    }

    /// Centers each output coordinate and rescales it: per coordinate to unit variance
    /// when `per_coordinate`, otherwise by one common factor to unit mean variance.
    fn calibrate(&mut self, latents: &Matrix, per_coordinate: bool) {
        let raw = self.eval(latents);
        let mean = raw.column_means();
        let var: Vec<f64> = (0..raw.cols())
            .map(|j| {
                raw.iter_rows()
                    .map(|r| (r[j] - mean[j]).powi(2))
                    .sum::<f64>()
                    / raw.rows() as f64
            })
            .collect();
        self.offset = mean;
        self.scale = if per_coordinate {
            var.iter().map(|v| 1.0 / v.sqrt().max(1e-12)).collect()
        } else {
            let avg = var.iter().sum::<f64>() / var.len() as f64;
            vec![1.0 / avg.sqrt().max(1e-12); var.len()]
        };
    }
}

/// The pair of frozen maps behind one synthetic task.
#[derive(Clone, Debug)]
pub struct ManifoldMaps {
    pub inputs: SmoothMap,
    pub targets: SmoothMap,
}

impl ManifoldMaps {
    pub fn draw(spec: &ManifoldSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeds::rng(seeds::derive(spec.seed, &[STREAM_MAPS]));
        let d = spec.latent_dim;
        let calib = Matrix::from_fn(CALIBRATION_POINTS, d, |_, _| rng.gen::<f64>());
        let probes = Matrix::from_fn(JACOBIAN_PROBES, d, |_, _| rng.gen::<f64>());
        let mut draw_one = |out: usize, per_coordinate: bool, label: &str| -> Result<SmoothMap> {
            for _ in 0..MAX_REDRAWS {
                let mut map = SmoothMap::draw(&mut rng, d, spec.width(), spec.embed_layers, out);
                map.calibrate(&calib, per_coordinate);
                if probes
                    .iter_rows()
                    .all(|z| map.smallest_singular_value(z) >= MIN_SINGULAR_VALUE)
                {
                    return Ok(map);
                }
            }
            Err(Error::Generator(format!(
                "no well-conditioned {label} map after {MAX_REDRAWS} draws"
            )))
        };
        let inputs = draw_one(spec.input_dim, false, "input")?;
        let targets = draw_one(spec.target_dim, true, "target")?;
        Ok(Self { inputs, targets })
    }
}

/// Generates the task together with its latent coordinates.
pub fn gen_manifold_task_with_latents(spec: &ManifoldSpec) -> Result<(Dataset, Matrix)> {
    let maps = ManifoldMaps::draw(spec)?;
    let mut rng = seeds::rng(seeds::derive(spec.seed, &[STREAM_LATENTS]));
    let latents = Matrix::from_fn(spec.samples, spec.latent_dim, |_, _| rng.gen::<f64>());
    let inputs = maps.inputs.eval(&latents);
    let mut targets = maps.targets.eval(&latents);
    let noise = noise_matrix(spec);
    for (t, e) in targets.as_mut_slice().iter_mut().zip(noise.as_slice()) {
        *t += spec.target_noise_sigma * e;
    }
    let ds = Dataset {
        name: format!(
            "manifold_dz{}_D{}_n{}_M{}_s{}",
            spec.latent_dim, spec.input_dim, spec.target_dim, spec.samples, spec.seed
        ),
        inputs,
        targets,
        meta: Some(GroundTruth {
            latent_dim: spec.latent_dim,
            noise_sigma: spec.target_noise_sigma,
            seed: spec.seed,
        }),
    };
    Ok((ds, latents))
}

pub fn gen_manifold_task(spec: &ManifoldSpec) -> Result<Dataset> {
    gen_manifold_task_with_latents(spec).map(|(ds, _)| ds)
}

/// Standard-normal draws added (times σ) to the clean targets.
pub fn noise_matrix(spec: &ManifoldSpec) -> Matrix {
    let mut rng = seeds::rng(seeds::derive(spec.seed, &[STREAM_NOISE]));
    Matrix::from_fn(spec.samples, spec.target_dim, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    })
}

/// `d_out×d` matrix with orthonormal columns (Gram–Schmidt on Gaussian columns).
pub fn random_orthonormal(rng: &mut ChaCha8Rng, d_out: usize, d: usize) -> Matrix {
    assert!(d <= d_out);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d_out).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    Matrix::from_fn(d_out, d, |i, j| cols[j][i])
}

/// `M` points uniform in `[0,1]^d`, isometrically embedded in `ℝ^D`.
///
/// For `d < D` the embedding is a seeded random orthonormal map; for `d = D` the cube is
/// returned as is.
pub fn gen_hypercube(d: usize, big_d: usize, m: usize, seed: u64) -> Result<Matrix> {
    if d == 0 || d > big_d || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "hypercube needs 1 <= d <= D and M >= 1, got d={d}, D={big_d}, M={m}"
        )));
    }
    let mut rng = seeds::rng(seeds::derive(seed, &[STREAM_LATENTS]));
    let cube = Matrix::from_fn(m, d, |_, _| rng.gen::<f64>());
    if d == big_d {
        return Ok(cube);
    }
    let mut erng = seeds::rng(seeds::derive(seed, &[STREAM_EMBED]));
    let q = random_orthonormal(&mut erng, big_d, d);
    cube.matmul(&q.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let ok = ManifoldSpec::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ManifoldSpec {
                latent_dim: 0,
                ..ok
            },
            ManifoldSpec { input_dim: 1, ..ok },
            ManifoldSpec {
                target_dim: 1,
                ..ok
            },
            ManifoldSpec { samples: 9, ..ok },
            ManifoldSpec {
                target_noise_sigma: -1.0,
                ..ok
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = ManifoldSpec {
            latent_dim: 3,
            input_dim: 12,
            target_dim: 4,
            samples: 500,
            target_noise_sigma: 0.25,
            embed_layers: 3,
            seed: 9,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("spec.txt");
        std::fs::write(&p, spec.to_kv()).unwrap();
        assert_eq!(ManifoldSpec::read(&p).unwrap(), spec);
        std::fs::write(
            &p,
            "latent_dim: 1\ninput_dim: 2\ntarget_dim: 1\nsamples: 20\nbogus: 1\n",
        )
        .unwrap();
        assert!(ManifoldSpec::read(&p).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = ManifoldSpec::default();
        let maps = ManifoldMaps::draw(&spec).unwrap();
        let z = [0.3, 0.7];
        let j = maps.inputs.jacobian(&z);
        let h = 1e-6;
        for k in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[k] += h;
            zm[k] -= h;
            let mut fp = vec![0.0; spec.input_dim];
            let mut fm = vec![0.0; spec.input_dim];
            maps.inputs.eval_row(&zp, &mut fp);
            maps.inputs.eval_row(&zm, &mut fm);
            for r in 0..spec.input_dim {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - j.get(r, k)).abs() < 1e-6, "{fd} vs {}", j.get(r, k));
            }
        }
    }

    #[test]
    fn calibrated_scales() {
        let spec = ManifoldSpec {
            samples: 4000,
            ..Default::default()
        };
        let ds = gen_manifold_task(&spec).unwrap();
        let t = &ds.targets;
        let mean = t.column_means();
        for j in 0..t.cols() {
            let var =
                t.iter_rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / t.rows() as f64;
            assert!((var - 1.0).abs() < 0.15, "target variance {var}");
            assert!(mean[j].abs() < 0.1);
        }
    }

    #[test]
    fn orthonormal_columns() {
        let mut rng = seeds::rng(1);
        let q = random_orthonormal(&mut rng, 7, 4);
        let g = q.transpose().matmul(&q).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - want).abs() < 1e-12);
            }
        }
    }
}
