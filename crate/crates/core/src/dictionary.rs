//! Angle-pair dictionary and the linear (relaxed) channel synthesis.
//!
//! The angle range `[θ_min, θ_max]` is split into `R` equal intervals and each
//! interval is represented by its midpoint. Atom `(i, j)` is
//! `a_r(θ_i) · a_t(θ_j)^H`, so a real `R × R` gain matrix `W` synthesizes
//! `H = Σ_ij W_ij · D_ij`, which is linear in `W`.
//!
//! Two routes compute the same synthesis: [`relaxed_synthesize`] sums the
//! stored dense atoms, while [`Dictionary::synthesize_batch`] uses the
//! factored form `A_r · W · A_t^H` with the `n × R` grid steering matrices.
//! Training uses the factored route; tests hold the two against each other.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{steering_vector, ArrayConfig, ChannelMatrix, PathParams};
use crate::error::{shape_err, Error, FormatError, Result};
use crate::exec::Exec;
use crate::io_util::ByteReader;

/// Default ceiling on dense dictionary storage (1 GiB).
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

/// Default relative peak threshold for [`extract_paths`].
pub const DEFAULT_REL_THRESHOLD: f64 = 0.1;

/// Uniform partition of an angle interval into `resolution` cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub theta_min: f64,
    pub theta_max: f64,
    pub resolution: usize,
}

impl AngleGrid {
    pub fn new(theta_min: f64, theta_max: f64, resolution: usize) -> Result<Self> {
        let g = AngleGrid {
            theta_min,
            theta_max,
            resolution,
        };
        g.validate()?;
        Ok(g)
    }

    /// Front half-plane `[-π/2, π/2]`, where ULA steering is unambiguous.
    pub fn front(resolution: usize) -> Self {
        AngleGrid {
            theta_min: -FRAC_PI_2,
            theta_max: FRAC_PI_2,
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min.is_finite() && self.theta_max.is_finite())
            || self.theta_min >= self.theta_max
        {
            return Err(Error::InvalidConfig(format!(
                "angle grid needs theta_min < theta_max, got [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        if self.theta_min < -PI || self.theta_max > PI {
            return Err(Error::InvalidConfig(
                "angle grid must lie within [-pi, pi]".into(),
            ));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        (self.theta_max - self.theta_min) / self.resolution as f64
    }

    /// Midpoint of cell `index`.
    pub fn angle(&self, index: usize) -> Result<f64> {
        if index >= self.resolution {
            return Err(Error::IndexOutOfRange {
                index,
                resolution: self.resolution,
            });
        }
        Ok(self.midpoint(index))
    }

    fn midpoint(&self, index: usize) -> f64 {
        self.theta_min + (index as f64 + 0.5) * self.delta()
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.resolution).map(|i| self.midpoint(i)).collect()
    }

    /// Cell whose midpoint is nearest to `theta`; a value exactly on a cell
    /// boundary goes to the lower index.
    pub fn nearest_index(&self, theta: f64) -> Result<usize> {
        if !(theta >= self.theta_min && theta < self.theta_max) {
            return Err(Error::AngleOutOfRange {
                angle: theta,
                min: self.theta_min,
                max: self.theta_max,
            });
        }
        let pos = (theta - self.theta_min) / self.delta();
        let idx = (pos.ceil() as isize - 1).max(0) as usize;
        Ok(idx.min(self.resolution - 1))
    }
}

pub fn grid_angle(index: usize, grid: &AngleGrid) -> Result<f64> {
    grid.angle(index)
}

/// Real `R × R` weights over the dictionary atoms; row = arrival index,
/// column = departure index.
#[derive(Clone, Debug, PartialEq)]
pub struct GainMatrix(pub Array2<f64>);

impl GainMatrix {
    pub fn zeros(resolution: usize) -> Self {
        GainMatrix(Array2::zeros((resolution, resolution)))
    }

    pub fn resolution(&self) -> usize {
        self.0.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|w| w.abs()).sum()
    }

    fn check(&self, resolution: usize) -> Result<()> {
        if self.0.dim() != (resolution, resolution) {
            return Err(shape_err(
                format!("({resolution}, {resolution})"),
                format!("{:?}", self.0.dim()),
            ));
        }
        if self.0.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig(
                "gain matrix has non-finite entries".into(),
            ));
        }
        Ok(())
    }
}

/// Grid steering matrix split into real and imaginary parts, `n × R`.
#[derive(Clone, Debug)]
pub(crate) struct SplitSteering {
    pub re: Array2<f64>,
    pub im: Array2<f64>,
}

impl SplitSteering {
    fn new(angles: &[f64], n: usize, u: f64) -> Self {
        let mut re = Array2::zeros((n, angles.len()));
        let mut im = Array2::zeros((n, angles.len()));
        for (j, &theta) in angles.iter().enumerate() {
            for (k, c) in steering_vector(theta, n, u).iter().enumerate() {
                re[[k, j]] = c.re;
                im[[k, j]] = c.im;
            }
        }
        SplitSteering { re, im }
    }
}

/// Precomputed dense atoms for one `(grid, array)` pair. Immutable after
/// construction.
#[derive(Clone, Debug)]
pub struct Dictionary {
    atoms: Vec<ChannelMatrix>,
    grid: AngleGrid,
    config: ArrayConfig,
    rx: SplitSteering,
    tx: SplitSteering,
}

pub fn build_dictionary(grid: &AngleGrid, config: &ArrayConfig) -> Result<Dictionary> {
    Dictionary::build(grid, config, DEFAULT_MEMORY_BUDGET, Exec::default())
}

impl Dictionary {
    /// Bytes needed for the dense atoms of `R² · n_r · n_t` complex entries.
    pub fn required_bytes(grid: &AngleGrid, config: &ArrayConfig) -> u64 {
        let r = grid.resolution as u64;
        r * r * (config.n_r * config.n_t) as u64 * std::mem::size_of::<Complex64>() as u64
    }

    pub fn build(
        grid: &AngleGrid,
        config: &ArrayConfig,
        memory_budget: u64,
        exec: Exec,
    ) -> Result<Self> {
        grid.validate()?;
        config.validate()?;
        let required = Self::required_bytes(grid, config);
        if required > memory_budget {
            return Err(Error::ResourceLimit {
                required,
                budget: memory_budget,
            });
        }
        let angles = grid.angles();
        let r = grid.resolution;
        let rx_vecs: Vec<_> = angles
            .iter()
            .map(|&t| steering_vector(t, config.n_r, config.u))
            .collect();
        let tx_vecs: Vec<_> = angles
            .iter()
            .map(|&t| steering_vector(t, config.n_t, config.u))
            .collect();
        let atoms = exec.map(r * r, |k| {
            let (ar, at) = (&rx_vecs[k / r], &tx_vecs[k % r]);
            ChannelMatrix::from_array(Array2::from_shape_fn((config.n_r, config.n_t), |(a, b)| {
                ar[a] * at[b].conj()
            }))
        });
        Ok(Dictionary {
            atoms,
            grid: *grid,
            config: *config,
            rx: SplitSteering::new(&angles, config.n_r, config.u),
            tx: SplitSteering::new(&angles, config.n_t, config.u),
        })
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    pub fn resolution(&self) -> usize {
        self.grid.resolution
    }

    pub fn atom(&self, i: usize, j: usize) -> &ChannelMatrix {
        &self.atoms[i * self.grid.resolution + j]
    }

    pub fn atoms(&self) -> &[ChannelMatrix] {
        &self.atoms
    }

    /// Factored synthesis for a batch of flattened gain matrices.
    ///
    /// `gains` is `B × R²` (each row a row-major `W`); the result is `B × 2·n_r·n_t`
    /// in the flat channel layout (real plane then imaginary plane).
    pub fn synthesize_batch(&self, gains: ArrayView2<f64>, exec: Exec) -> Result<Array2<f64>> {
        let r = self.grid.resolution;
        let (n_r, n_t) = (self.config.n_r, self.config.n_t);
        if gains.ncols() != r * r {
            return Err(shape_err(r * r, gains.ncols()));
        }
        let b = gains.nrows();
        let stacked = gains
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * r, r))
            .expect("contiguous");
        // Y = W · conj(A_t)^T for all samples at once: (B·R × R)·(R × n_t)
        let y_re = stacked.dot(&self.tx.re.t());
        let y_im = -stacked.dot(&self.tx.im.t());
        let m = n_r * n_t;
        let mut out = Array2::<f64>::zeros((b, 2 * m));
        let rows: Vec<Vec<f64>> = exec.map(b, |s| {
            let yr = y_re.slice(s![s * r..(s + 1) * r, ..]);
            let yi = y_im.slice(s![s * r..(s + 1) * r, ..]);
            let h_re = self.rx.re.dot(&yr) - self.rx.im.dot(&yi);
            let h_im = self.rx.re.dot(&yi) + self.rx.im.dot(&yr);
            h_re.iter().chain(h_im.iter()).copied().collect()
        });
        for (mut row, v) in out.rows_mut().into_iter().zip(rows) {
            row.assign(&ndarray::ArrayView1::from(&v));
        }
        Ok(out)
    }

    /// Gradient of a real loss with respect to each `W` in a batch, given the
    /// loss gradient with respect to the synthesized channels (flat layout,
    /// `B × 2·n_r·n_t`). Computes `Re(A_r^H · G · A_t)` per sample.
    pub fn gain_gradient_batch(&self, grad_h: ArrayView2<f64>, exec: Exec) -> Result<Array2<f64>> {
        let r = self.grid.resolution;
        let (n_r, n_t) = (self.config.n_r, self.config.n_t);
        let m = n_r * n_t;
        if grad_h.ncols() != 2 * m {
            return Err(shape_err(2 * m, grad_h.ncols()));
        }
        let b = grad_h.nrows();
        let rows: Vec<Array2<f64>> = exec.map(b, |s| {
            let row = grad_h.row(s);
            let g_re = row
                .slice(s![..m])
                .into_shape_with_order((n_r, n_t))
                .unwrap();
            let g_im = row
                .slice(s![m..])
                .into_shape_with_order((n_r, n_t))
                .unwrap();
            // P = G · A_t  (n_r × R)
            let p_re = g_re.dot(&self.tx.re) - g_im.dot(&self.tx.im);
            let p_im = g_re.dot(&self.tx.im) + g_im.dot(&self.tx.re);
            self.rx.re.t().dot(&p_re) + self.rx.im.t().dot(&p_im)
        });
        let mut out = Array2::<f64>::zeros((b, r * r));
        for (mut row, g) in out.rows_mut().into_iter().zip(rows) {
            row.assign(&ndarray::ArrayView1::from(g.as_slice().unwrap()));
        }
        Ok(out)
    }

    /// Writes the dictionary cache file (see `docs/FORMATS.md`).
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.resolution as u32).to_le_bytes())?;
        w.write_all(&(self.config.n_r as u16).to_le_bytes())?;
        w.write_all(&(self.config.n_t as u16).to_le_bytes())?;
        for v in [self.config.u, self.grid.theta_min, self.grid.theta_max] {
            w.write_all(&v.to_le_bytes())?;
        }
        for atom in &self.atoms {
            for c in atom.entries() {
                w.write_all(&c.re.to_le_bytes())?;
            }
            for c in atom.entries() {
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io_util::write_atomic_with(path, |w| self.write_cache(w))
    }

    /// Reads a cache file, checking its key against the requested grid and
    /// array configuration.
    pub fn read_cache<R: Read>(r: R, grid: &AngleGrid, config: &ArrayConfig) -> Result<Self> {
        let mut r = ByteReader::new(r);
        let mut magic = [0u8; 4];
        r.fill(&mut magic, "dictionary header")?;
        if &magic != CACHE_MAGIC {
            return Err(FormatError::BadMagic {
                expected: *CACHE_MAGIC,
                found: magic,
            }
            .into());
        }
        let version = r.u16("dictionary header")?;
        if version != CACHE_VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: version,
                supported: CACHE_VERSION,
            }
            .into());
        }
        let res = r.u32("dictionary header")? as usize;
        let n_r = r.u16("dictionary header")? as usize;
        let n_t = r.u16("dictionary header")? as usize;
        let u = r.f64("dictionary header")?;
        let tmin = r.f64("dictionary header")?;
        let tmax = r.f64("dictionary header")?;
        let key_matches = res == grid.resolution
            && n_r == config.n_r
            && n_t == config.n_t
            && u.to_bits() == config.u.to_bits()
            && tmin.to_bits() == grid.theta_min.to_bits()
            && tmax.to_bits() == grid.theta_max.to_bits();
        if !key_matches {
            return Err(FormatError::Inconsistent(format!(
                "dictionary cache key (R={res}, n_r={n_r}, n_t={n_t}, u={u}, range=[{tmin}, {tmax}]) \
                 does not match the requested configuration"
            ))
            .into());
        }
        let m = n_r * n_t;
        let mut atoms = Vec::with_capacity(res * res);
        let mut buf = vec![0f64; 2 * m];
        for _ in 0..res * res {
            for v in buf.iter_mut() {
                *v = r.f64("dictionary atoms")?;
            }
            atoms.push(ChannelMatrix::from_flat(n_r, n_t, &buf)?);
        }
        let angles = grid.angles();
        Ok(Dictionary {
            atoms,
            grid: *grid,
            config: *config,
            rx: SplitSteering::new(&angles, n_r, config.u),
            tx: SplitSteering::new(&angles, n_t, config.u),
        })
    }

    pub fn load_cache(
        path: impl AsRef<Path>,
        grid: &AngleGrid,
        config: &ArrayConfig,
    ) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_cache(f, grid, config)
    }
}

const CACHE_MAGIC: &[u8; 4] = b"CDIC";
const CACHE_VERSION: u16 = 1;

/// `H = Σ_ij W_ij · D_ij` over the stored dense atoms.
pub fn relaxed_synthesize(w: &GainMatrix, dict: &Dictionary) -> Result<ChannelMatrix> {
    w.check(dict.resolution())?;
    let mut h = ChannelMatrix::zeros(&dict.config);
    let acc: &mut Array2<Complex64> = h.entries_mut();
    for ((i, j), &wij) in w.0.indexed_iter() {
        if wij != 0.0 {
            add_scaled(acc.view_mut(), dict.atom(i, j).entries().view(), wij);
        }
    }
    Ok(h)
}

fn add_scaled(mut acc: ArrayViewMut2<Complex64>, atom: ArrayView2<Complex64>, w: f64) {
    Zip::from(&mut acc).and(&atom).for_each(|a, &d| *a += d * w);
}

/// Places each path's gain in the cell nearest its `(aoa, aod)`; gains landing
/// in the same cell accumulate.
pub fn project_paths(paths: &[PathParams], grid: &AngleGrid) -> Result<GainMatrix> {
    grid.validate()?;
    let mut w = GainMatrix::zeros(grid.resolution);
    for p in paths {
        let i = grid.nearest_index(p.aoa)?;
        let j = grid.nearest_index(p.aod)?;
        w.0[[i, j]] += p.gain;
    }
    Ok(w)
}

/// Reads paths off a gain matrix: every cell that is a strict local maximum
/// of `|W|` over its 8-neighborhood and reaches `rel_threshold · max|W|`
/// becomes one path at that cell's midpoint angles. Sorted by descending
/// `|gain|`.
pub fn extract_paths(
    w: &GainMatrix,
    grid: &AngleGrid,
    rel_threshold: f64,
) -> Result<Vec<PathParams>> {
    w.check(grid.resolution)?;
    if !(rel_threshold > 0.0 && rel_threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "relative threshold must be in (0, 1], got {rel_threshold}"
        )));
    }
    let mag = w.0.mapv(f64::abs);
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(Vec::new());
    }
    let r = grid.resolution as isize;
    let cut = rel_threshold * peak;
    let mut found = Vec::new();
    for ((i, j), &v) in mag.indexed_iter() {
        if v < cut {
            continue;
        }
        let mut is_peak = true;
        'scan: for di in -1isize..=1 {
            for dj in -1isize..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (a, b) = (i as isize + di, j as isize + dj);
                if a < 0 || b < 0 || a >= r || b >= r {
                    continue;
                }
                if mag[[a as usize, b as usize]] >= v {
                    is_peak = false;
                    break 'scan;
                }
            }
        }
        if is_peak {
            found.push(PathParams {
                gain: w.0[[i, j]],
                aoa: grid.midpoint(i),
                aod: grid.midpoint(j),
            });
        }
    }
    found.sort_by(|a, b| b.gain.abs().total_cmp(&a.gain.abs()));
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::synthesize_channel;
    use approx::assert_abs_diff_eq;

    fn max_diff(a: &ChannelMatrix, b: &ChannelMatrix) -> f64 {
        a.entries()
            .iter()
            .zip(b.entries())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn midpoints() {
        let g = AngleGrid::front(64);
        assert_abs_diff_eq!(
            grid_angle(0, &g).unwrap(),
            -FRAC_PI_2 + PI / 128.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            grid_angle(63, &g).unwrap(),
            FRAC_PI_2 - g.delta() / 2.0,
            epsilon = 1e-14
        );
        for r in [2, 3, 7, 64] {
            let g = AngleGrid::new(-0.3, 1.1, r).unwrap();
            let center = (g.theta_min + g.theta_max) / 2.0;
            for i in 0..r {
                let lo = g.angle(i).unwrap();
                let hi = g.angle(r - 1 - i).unwrap();
                assert_abs_diff_eq!(lo + hi, 2.0 * center, epsilon = 1e-14);
            }
        }
        assert!(matches!(
            grid_angle(64, &g),
            Err(Error::IndexOutOfRange {
                index: 64,
                resolution: 64
            })
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(AngleGrid::new(1.0, 1.0, 8).is_err());
        assert!(AngleGrid::new(-1.0, 1.0, 1).is_err());
        assert!(AngleGrid::new(-4.0, 1.0, 8).is_err());
    }

    #[test]
    fn tiny_dictionary_atoms_are_unit_norm() {
        let d = build_dictionary(&AngleGrid::front(2), &ArrayConfig::square(2)).unwrap();
        assert_eq!(d.atoms().len(), 4);
        for a in d.atoms() {
            assert_eq!(a.shape(), (2, 2));
            assert_abs_diff_eq!(a.frobenius_norm(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn atom_equals_unit_path() {
        let grid = AngleGrid::front(8);
        let cfg = ArrayConfig::new(4, 6, PI).unwrap();
        let d = build_dictionary(&grid, &cfg).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let p = PathParams::new(1.0, grid.angle(i).unwrap(), grid.angle(j).unwrap());
                assert!(max_diff(d.atom(i, j), &synthesize_channel(&[p], &cfg)) < 1e-15);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let grid = AngleGrid::front(64);
        let cfg = ArrayConfig::square(16);
        let err = Dictionary::build(&grid, &cfg, 1024, Exec::Sequential).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { budget: 1024, .. }));
    }

    #[test]
    fn zero_and_basis_weights() {
        let grid = AngleGrid::front(6);
        let cfg = ArrayConfig::square(3);
        let d = build_dictionary(&grid, &cfg).unwrap();
        let h = relaxed_synthesize(&GainMatrix::zeros(6), &d).unwrap();
        assert_eq!(h.frobenius_norm_sqr(), 0.0);
        let mut w = GainMatrix::zeros(6);
        w.0[[2, 4]] = 1.0;
        assert_eq!(&relaxed_synthesize(&w, &d).unwrap(), d.atom(2, 4));
        assert!(relaxed_synthesize(&GainMatrix::zeros(5), &d).is_err());
    }

    #[test]
    fn factored_route_matches_dense_atoms() {
        use rand::{Rng, SeedableRng};
        let grid = AngleGrid::front(7);
        let cfg = ArrayConfig::new(3, 5, 2.5).unwrap();
        let d = build_dictionary(&grid, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let batch = Array2::from_shape_fn((4, 49), |_| rng.random_range(-1.0..1.0));
        let flat = d.synthesize_batch(batch.view(), Exec::Sequential).unwrap();
        for (s, row) in batch.rows().into_iter().enumerate() {
            let w = GainMatrix(row.to_owned().into_shape_with_order((7, 7)).unwrap());
            let dense = relaxed_synthesize(&w, &d).unwrap().to_flat();
            for (a, b) in dense.iter().zip(flat.row(s)) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn project_accumulates_and_breaks_ties_low() {
        let grid = AngleGrid::new(0.0, 1.0, 4).unwrap();
        let mid = grid.angle(1).unwrap();
        let w = project_paths(&[PathParams::new(0.5, mid, mid)], &grid).unwrap();
        assert_eq!(w.0[[1, 1]], 0.5);
        assert_eq!(w.l1_norm(), 0.5);

        let w = project_paths(
            &[
                PathParams::new(0.5, 0.3, 0.6),
                PathParams::new(0.25, 0.32, 0.61),
            ],
            &grid,
        )
        .unwrap();
        assert_eq!(w.0[[1, 2]], 0.75);

        // 0.5 sits between cells 1 and 2
        let w = project_paths(&[PathParams::new(1.0, 0.5, 0.25)], &grid).unwrap();
        assert_eq!(w.0[[1, 0]], 1.0);
        assert!(project_paths(&[PathParams::new(1.0, 1.0, 0.2)], &grid).is_err());
        assert!(project_paths(&[PathParams::new(1.0, -0.1, 0.2)], &grid).is_err());
    }

    #[test]
    fn extract_single_spike_and_empty() {
        let grid = AngleGrid::front(16);
        let mut w = GainMatrix::zeros(16);
        assert!(extract_paths(&w, &grid, 0.1).unwrap().is_empty());
        w.0[[3, 11]] = -0.02;
        let p = extract_paths(&w, &grid, 0.1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].gain, -0.02);
        assert_eq!(p[0].aoa, grid.angle(3).unwrap());
        assert_eq!(p[0].aod, grid.angle(11).unwrap());
        assert!(extract_paths(&w, &grid, 0.0).is_err());
        assert!(extract_paths(&w, &grid, 1.5).is_err());
    }

    #[test]
    fn extract_plateau_is_not_a_strict_peak() {
        let grid = AngleGrid::front(8);
        let mut w = GainMatrix::zeros(8);
        w.0[[2, 2]] = 1.0;
        w.0[[2, 3]] = 1.0;
        assert!(extract_paths(&w, &grid, 0.1).unwrap().is_empty());
    }

    #[test]
    fn cache_round_trip_and_key_check() {
        let grid = AngleGrid::front(5);
        let cfg = ArrayConfig::new(3, 2, PI).unwrap();
        let d = build_dictionary(&grid, &cfg).unwrap();
        let mut bytes = Vec::new();
        d.write_cache(&mut bytes).unwrap();
        let back = Dictionary::read_cache(&bytes[..], &grid, &cfg).unwrap();
        assert_eq!(back.atoms(), d.atoms());
        let mut again = Vec::new();
        back.write_cache(&mut again).unwrap();
        assert_eq!(bytes, again);

        let other = AngleGrid::front(6);
        assert!(matches!(
            Dictionary::read_cache(&bytes[..], &other, &cfg),
            Err(Error::Format(FormatError::Inconsistent(_)))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Dictionary::read_cache(&bad[..], &grid, &cfg),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
        assert!(matches!(
            Dictionary::read_cache(&bytes[..bytes.len() - 3], &grid, &cfg),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }
}
