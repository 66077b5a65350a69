//! Posterior probability on a regular grid over the data, for plotting.

use std::io::Write;

use posterior_ratio::{Dataset, Posterior};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl BoundingBox {
    /// Smallest box holding every row of `sets` (2-D inputs).
    pub fn of(sets: &[&Dataset]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for d in sets {
            for i in 0..d.len() {
                for (a, &v) in d.x(i).iter().enumerate().take(2) {
                    lo[a] = lo[a].min(v);
                    hi[a] = hi[a].max(v);
                }
            }
        }
        Self { lo, hi }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub method: String,
    pub n: usize,
    /// `(x1, x2, p(+1|x))`, `x1` varying slowest.
    pub rows: Vec<[f64; 3]>,
}

impl Mesh {
    pub fn file_name(&self) -> String {
        format!("mesh_{}_n{}.csv", self.method, self.n)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x1", "x2", "p_plus"])?;
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `size` evenly spaced points from `lo` to `hi` inclusive.
fn axis(lo: f64, hi: f64, size: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (size - 1) as f64;
    (0..size).map(move |i| if i + 1 == size { hi } else { lo + step * i as f64 })
}

pub fn posterior_mesh<P: Posterior<f64>>(method: &str, n: usize, model: &P, b: &BoundingBox, size: usize) -> Mesh {
    let mut rows = Vec::with_capacity(size * size);
    for x1 in axis(b.lo[0], b.hi[0], size) {
        for x2 in axis(b.lo[1], b.hi[1], size) {
            // dimension was checked when the model was fitted on 2-D data
            let p = model.posterior(&[x1, x2]).map(|(p, _)| p).unwrap_or(f64::NAN);
            rows.push([x1, x2, p]);
        }
    }
    Mesh {
        method: method.into(),
        n,
        rows,
    }
}
