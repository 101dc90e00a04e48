//! Seeded synthetic inputs: random kernel dictionaries, mixture weights, and
//! the two-blob classification dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Normal, StandardNormal};

use crate::kernel::{
    build_dictionary, CeilingPolicy, CombinationWeights, Constraint, KernelDictionary,
    KernelSpec, Sample,
};
use crate::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A linear, polynomial or gaussian kernel with random parameters.
pub fn random_kernel_spec<R: Rng>(rng: &mut R, name: impl Into<String>) -> KernelSpec {
    match rng.random_range(0..3) {
        0 => KernelSpec::linear(name),
        1 => KernelSpec::polynomial(name, rng.random_range(1..=3), rng.random_range(0.0..1.0)),
        _ => KernelSpec::gaussian(name, 10f64.powf(rng.random_range(-1.0..1.0))),
    }
}

/// `m` standard normal points in `d` dimensions.
pub fn random_points<R: Rng>(rng: &mut R, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// `p` mixed kernels on a random sample of size `m` (dimension 1 to 3), with
/// the ceiling taken from the sample.
pub fn random_dictionary<R: Rng>(rng: &mut R, m: usize, p: usize) -> Result<KernelDictionary> {
    let d = rng.random_range(1..=3);
    let sample = Sample::unlabeled(random_points(rng, m, d))?;
    let specs: Vec<KernelSpec> = (0..p)
        .map(|k| random_kernel_spec(rng, format!("k{k}")))
        .collect();
    build_dictionary(&sample, &specs, CeilingPolicy::FromSample)
}

/// Random feasible weights; about one draw in four has a zeroed coordinate.
pub fn random_weights<R: Rng>(rng: &mut R, p: usize, constraint: Constraint) -> CombinationWeights {
    loop {
        let mut raw: Vec<f64> = match constraint {
            Constraint::L1Simplex | Constraint::L2Sphere => {
                (0..p).map(|_| rng.sample::<f64, _>(Exp1)).collect()
            }
            Constraint::L2SphereSigned => (0..p).map(|_| rng.sample(StandardNormal)).collect(),
        };
        if p > 1 && rng.random_bool(0.25) {
            raw[rng.random_range(0..p)] = 0.0;
        }
        let scale = match constraint {
            Constraint::L1Simplex => raw.iter().sum::<f64>(),
            _ => raw.iter().map(|x| x * x).sum::<f64>().sqrt(),
        };
        if scale > 0.0 {
            let values = raw.iter().map(|x| x / scale).collect();
            if let Ok(w) = CombinationWeights::new(values, constraint) {
                return w;
            }
        }
    }
}

pub fn random_vector<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.sample(StandardNormal)).collect()
}

/// Two gaussian blobs in the plane centred at `(1, 1)` (label +1) and
/// `(-1, -1)` (label -1), standard deviation 0.75, labels alternating.
pub fn two_blobs(seed: u64, m: usize) -> Result<Sample> {
    let mut rng = rng(seed);
    let noise = Normal::new(0.0, 0.75).expect("valid standard deviation");
    let mut points = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        points.push(vec![y + rng.sample(noise), y + rng.sample(noise)]);
        labels.push(y);
    }
    Sample::new(points, Some(labels))
}
