//! Synthetic two-object scene dataset: a finite attribute grammar realized
//! as captions, with features produced by a fixed random projection of the
//! scene's one-hot encoding.

use crate::error::{Error, Result};
use crate::harness::dataset::Example;
use crate::numerics::{Rng, Tensor2D};

pub const COUNTS: [&str; 3] = ["one", "two", "three"];
pub const COLORS: [&str; 4] = ["red", "blue", "green", "yellow"];
pub const SHAPES: [&str; 4] = ["square", "circle", "triangle", "star"];
/// Drop-in replacements for the final shape word of the second reference.
pub const SHAPE_SYNONYMS: [&str; 4] = ["block", "disc", "wedge", "gem"];
pub const RELATIONS: [&str; 3] = ["left of", "above", "next to"];

/// One-hot width: count, color, shape per object plus one shared relation.
pub const ONE_HOT_DIM: usize = 2 * (3 + 4 + 4) + 3;

/// Feature noise applied by the standard generator.
pub const NOISE_SIGMA: f64 = 0.01;

/// A two-object scene drawn from the finite grammar: per-object count,
/// color, and shape indices plus the relation between the objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SceneSpec {
    pub count1: usize,
    pub color1: usize,
    pub shape1: usize,
    pub relation: usize,
    pub count2: usize,
    pub color2: usize,
    pub shape2: usize,
}

impl SceneSpec {
    /// Stable identifier built from the attribute words.
    pub fn id(&self) -> String {
        format!(
            "{}-{}-{}-{}-{}-{}-{}",
            COUNTS[self.count1],
            COLORS[self.color1],
            SHAPES[self.shape1],
            RELATIONS[self.relation].replace(' ', "_"),
            COUNTS[self.count2],
            COLORS[self.color2],
            SHAPES[self.shape2]
        )
    }

    /// Concatenated one-hot blocks in declaration order.
    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; ONE_HOT_DIM];
        let blocks = [
            (self.count1, 3),
            (self.color1, 4),
            (self.shape1, 4),
            (self.relation, 3),
            (self.count2, 3),
            (self.color2, 4),
            (self.shape2, 4),
        ];
        let mut offset = 0;
        for (index, width) in blocks {
            v[offset + index] = 1.0;
            offset += width;
        }
        v
    }

    fn shape_word(shape: usize, count: usize, synonym: bool) -> String {
        let stem = if synonym {
            SHAPE_SYNONYMS[shape]
        } else {
            SHAPES[shape]
        };
        if count == 0 {
            stem.to_string()
        } else {
            format!("{stem}s")
        }
    }

    fn caption(&self, synonym_final: bool) -> String {
        format!(
            "{} {} {} {} {} {} {}",
            COUNTS[self.count1],
            COLORS[self.color1],
            Self::shape_word(self.shape1, self.count1, false),
            RELATIONS[self.relation],
            COUNTS[self.count2],
            COLORS[self.color2],
            Self::shape_word(self.shape2, self.count2, synonym_final)
        )
    }

    /// Two references: the canonical realization, and one with the final
    /// shape word replaced by its synonym.
    pub fn captions(&self) -> Vec<String> {
        vec![self.caption(false), self.caption(true)]
    }
}

/// Every scene in the grammar, in lexicographic attribute order.
pub fn all_scenes() -> Vec<SceneSpec> {
    let mut scenes = Vec::new();
    for count1 in 0..3 {
        for color1 in 0..4 {
            for shape1 in 0..4 {
                for relation in 0..3 {
                    for count2 in 0..3 {
                        for color2 in 0..4 {
                            for shape2 in 0..4 {
                                scenes.push(SceneSpec {
                                    count1,
                                    color1,
                                    shape1,
                                    relation,
                                    count2,
                                    color2,
                                    shape2,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    scenes
}

/// The dataset-wide projection from one-hot attributes to feature space,
/// deterministic in (v_dim, seed).
pub fn attribute_projection(v_dim: usize, seed: u64) -> Tensor2D<f64> {
    let mut rng = Rng::with_stream(seed, 0);
    let mut p = Tensor2D::zeros(ONE_HOT_DIM, v_dim);
    for v in p.data_mut() {
        *v = rng.uniform_in(-1.0, 1.0);
    }
    p
}

/// Distinct scenes paired with their examples, in shuffled dataset order.
/// `sigma` scales the additive Gaussian feature noise.
pub fn generate_scenes(
    n: usize,
    v_dim: usize,
    seed: u64,
    sigma: f64,
) -> Result<Vec<(SceneSpec, Example)>> {
    if n < 10 {
        return Err(Error::Validation(format!(
            "synthetic dataset needs at least 10 examples, got {n}"
        )));
    }
    let mut scenes = all_scenes();
    if n > scenes.len() {
        return Err(Error::Validation(format!(
            "requested {n} distinct scenes but the grammar has only {}",
            scenes.len()
        )));
    }
    if v_dim < ONE_HOT_DIM {
        return Err(Error::Validation(format!(
            "v_dim {v_dim} is below the attribute width {ONE_HOT_DIM}; \
             features would not determine the scene"
        )));
    }
    let projection = attribute_projection(v_dim, seed);
    let mut rng = Rng::with_stream(seed, 1);
    rng.shuffle(&mut scenes);
    scenes.truncate(n);

    let mut out = Vec::with_capacity(n);
    for scene in scenes {
        let one_hot = Tensor2D::from_vec(1, ONE_HOT_DIM, scene.one_hot())?;
        let mut features = one_hot.matmul(&projection)?;
        for v in features.data_mut() {
            *v += sigma * rng.gaussian();
        }
        let example = Example {
            id: scene.id(),
            features: features.data().to_vec(),
            captions: scene.captions(),
        };
        out.push((scene, example));
    }
    Ok(out)
}

/// Train/validation/test examples, disjoint by scene.
#[derive(Clone, Debug)]
pub struct SynthSplits {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Generate `n` distinct scenes and split them 80/10/10.
pub fn synth_generate(n: usize, v_dim: usize, seed: u64) -> Result<SynthSplits> {
    let examples: Vec<Example> = generate_scenes(n, v_dim, seed, NOISE_SIGMA)?
        .into_iter()
        .map(|(_, e)| e)
        .collect();
    let n_val = n / 10;
    let n_test = n / 10;
    let n_train = n - n_val - n_test;
    let mut it = examples.into_iter();
    let train: Vec<Example> = it.by_ref().take(n_train).collect();
    let val: Vec<Example> = it.by_ref().take(n_val).collect();
    let test: Vec<Example> = it.collect();
    Ok(SynthSplits { train, val, test })
}
