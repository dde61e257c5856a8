use serde::{Deserialize, Serialize};

use crate::data::{batch_attributes, Attribute};
use crate::error::{Error, Result};
use crate::model::FmVae;
use crate::tensor::{Rng, Tensor};

/// Direction from the low-attribute centroid to the high-attribute centroid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    pub attribute: String,
    pub direction: Vec<f64>,
    pub centroid_low: Vec<f64>,
    pub centroid_high: Vec<f64>,
}

/// Nearest-rank quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Centroid of the latents whose attribute is in the top quartile minus the
/// centroid of those in the bottom quartile. Members are summed in a
/// canonical order so the result does not depend on sample order.
pub fn attribute_vector(
    latents: &Tensor,
    values: &[f64],
    attribute: &str,
) -> Result<AttributeVector> {
    let n = latents.rows();
    if values.len() != n {
        return Err(Error::shape(
            "attribute_vector",
            format!("{n} latents, {} values", values.len()),
        ));
    }
    if n < 8 {
        return Err(Error::invalid(
            "attribute_vector: need at least eight samples",
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Err(Error::invalid(format!(
            "attribute_vector: `{attribute}` is constant"
        )));
    }
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let centroid = |keep: &dyn Fn(f64) -> bool| -> Vec<f64> {
        let mut members: Vec<usize> = (0..n).filter(|&i| keep(values[i])).collect();
        members.sort_by(|&a, &b| {
            values[a].total_cmp(&values[b]).then_with(|| {
                latents
                    .row_slice(a)
                    .iter()
                    .zip(latents.row_slice(b))
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let mut c = vec![0.0; latents.cols()];
        for &i in &members {
            for (acc, v) in c.iter_mut().zip(latents.row_slice(i)) {
                *acc += v;
            }
        }
        c.iter().map(|v| v / members.len() as f64).collect()
    };
    let low = centroid(&|v| v <= q1);
    let high = centroid(&|v| v >= q3);
    Ok(AttributeVector {
        attribute: attribute.to_string(),
        direction: high.iter().zip(&low).map(|(h, l)| h - l).collect(),
        centroid_low: low,
        centroid_high: high,
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(
            "pearson: need two equal-length samples of size ≥ 2",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson: zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub retained: usize,
    pub discarded: usize,
}

/// Minimum number of kept samples for a correlation estimate.
pub const MIN_RETAINED: usize = 100;

/// Pearson correlation between a random scale `s ~ U(-1, 1)` applied to
/// `vector` and the attribute of the decoded point `z_i + s·vector`.
/// Points outside the per-axis range of `latents` are discarded, as are
/// decodes where the attribute is undefined.
pub fn attribute_correlation(
    attr: &dyn Fn(&Tensor) -> Result<Vec<Option<f64>>>,
    latents: &Tensor,
    vector: &[f64],
    n_samples: usize,
    rng: &mut Rng,
) -> Result<Correlation> {
    let (n, d) = (latents.rows(), latents.cols());
    if n == 0 || vector.len() != d {
        return Err(Error::shape(
            "attribute_correlation",
            "vector length must match latent size",
        ));
    }
    let lo: Vec<f64> = (0..d)
        .map(|k| (0..n).map(|i| latents.at(i, k)).fold(f64::MAX, f64::min))
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|k| (0..n).map(|i| latents.at(i, k)).fold(f64::MIN, f64::max))
        .collect();
    let mut scales = Vec::new();
    let mut rows = Vec::new();
    let mut discarded = 0;
    for k in 0..n_samples {
        let s = rng.uniform_range(-1.0, 1.0);
        let z: Vec<f64> = latents
            .row_slice(k % n)
            .iter()
            .zip(vector)
            .map(|(a, v)| a + s * v)
            .collect();
        if z.iter().enumerate().any(|(j, v)| *v < lo[j] || *v > hi[j]) {
            discarded += 1;
            continue;
        }
        scales.push(s);
        rows.push(z);
    }
    if rows.is_empty() {
        return Err(Error::invalid(
            "attribute_correlation: every sample left the latent range",
        ));
    }
    let values = attr(&Tensor::from_rows(&rows)?)?;
    if values.len() != rows.len() {
        return Err(Error::shape(
            "attribute_correlation",
            "attribute function returned the wrong count",
        ));
    }
    let (mut s_kept, mut a_kept) = (Vec::new(), Vec::new());
    for (s, v) in scales.into_iter().zip(values) {
        match v {
            Some(v) => {
                s_kept.push(s);
                a_kept.push(v);
            }
            None => discarded += 1,
        }
    }
    if s_kept.len() < MIN_RETAINED {
        return Err(Error::invalid(format!(
            "attribute_correlation: only {} samples retained, need {MIN_RETAINED}",
            s_kept.len()
        )));
    }
    Ok(Correlation {
        r: pearson(&s_kept, &a_kept)?,
        retained: s_kept.len(),
        discarded,
    })
}

/// Attribute of the model's quantized decode, for [`attribute_correlation`].
pub fn model_attribute(
    model: &FmVae,
    attr: Attribute,
) -> impl Fn(&Tensor) -> Result<Vec<Option<f64>>> + '_ {
    move |z| {
        let x = model.generate(z)?;
        Ok(batch_attributes(&x).iter().map(|r| attr.of(r)).collect())
    }
}
