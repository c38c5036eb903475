use std::collections::HashMap;

use super::StlError;

pub const CHANNELS: [&str; 3] = ["p", "v", "a"];
pub const AXES: [&str; 3] = ["x", "y", "z"];

/// Number of scalar components per UAV: position, velocity, acceleration.
pub const UAV_DIM: usize = 9;

/// Index of `uav` (0-based) channel (`0 = p`, `1 = v`, `2 = a`) axis in the
/// stacked signal vector of a UAV layout.
pub fn uav_index(uav: usize, channel: usize, axis: usize) -> usize {
    uav * UAV_DIM + channel * 3 + axis
}

/// Names of the scalar components of a trace and of the 3-vector groups
/// that `in` and `dist_inf` can refer to.
#[derive(Debug, Clone)]
pub struct SignalLayout {
    names: Vec<String>,
    scalars: HashMap<String, usize>,
    vectors: HashMap<String, [usize; 3]>,
    uavs: usize,
}

impl SignalLayout {
    /// `uav1.p.x, uav1.p.y, ..., uav1.a.z, uav2.p.x, ...`
    pub fn uavs(count: usize) -> Self {
        let mut layout = Self {
            names: Vec::new(),
            scalars: HashMap::new(),
            vectors: HashMap::new(),
            uavs: count,
        };
        for uav in 0..count {
            for (c, ch) in CHANNELS.iter().enumerate() {
                let group = format!("uav{}.{ch}", uav + 1);
                let idx = [0, 1, 2].map(|l| uav_index(uav, c, l));
                for (l, ax) in AXES.iter().enumerate() {
                    let name = format!("{group}.{ax}");
                    layout.scalars.insert(name.clone(), idx[l]);
                    layout.names.push(name);
                }
                layout.vectors.insert(group, idx);
            }
        }
        layout
    }

    /// Plain named scalar signals, no vector groups.
    pub fn scalars<S: AsRef<str>>(names: &[S]) -> Self {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let scalars = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self {
            names,
            scalars,
            vectors: HashMap::new(),
            uavs: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn uav_count(&self) -> usize {
        self.uavs
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn scalar(&self, name: &str) -> Option<usize> {
        self.scalars.get(name).copied()
    }

    pub fn vector(&self, name: &str) -> Option<[usize; 3]> {
        self.vectors.get(name).copied()
    }
}

/// Uniformly sampled vector signal starting at time 0. Row `i` holds the
/// stacked signal at time `i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTrace {
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

impl MultiTrace {
    pub fn new(dt: f64, dim: usize, data: Vec<f64>) -> Result<Self, StlError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StlError::BadSamplePeriod(dt));
        }
        if dim == 0 || data.len() % dim != 0 || data.is_empty() {
            return Err(StlError::DimensionMismatch {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(Self { dt, dim, data })
    }

    pub fn from_rows(dt: f64, rows: &[Vec<f64>]) -> Result<Self, StlError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(StlError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(dt, dim, rows.concat())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, i: usize, component: usize) -> f64 {
        self.data[i * self.dim + component]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Sample index of time `t0`, snapped down to the grid.
    pub fn index_of(&self, t0: f64) -> usize {
        (t0 / self.dt + 1e-9).floor().max(0.0) as usize
    }

    pub fn position(&self, i: usize, uav: usize) -> [f64; 3] {
        [0, 1, 2].map(|l| self.value(i, uav_index(uav, 0, l)))
    }

    /// Keeps the first `len` samples.
    pub fn truncated(&self, len: usize) -> Self {
        let len = len.clamp(1, self.len());
        Self {
            dt: self.dt,
            dim: self.dim,
            data: self.data[..len * self.dim].to_vec(),
        }
    }
}
