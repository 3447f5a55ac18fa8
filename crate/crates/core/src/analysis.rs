//! Loss surface of the single-path geometric model over `(θ_a, θ_d)`.
//!
//! With the gain fixed to the truth, `values[i][j]` is the squared Frobenius
//! distance between the channel at `(axis[i], axis[j])` and the reference
//! channel. The same axis is used for both angles.

use std::collections::VecDeque;
use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{steering_vector, synthesize_channel, ArrayConfig, PathParams};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const MIN_GRID_POINTS: usize = 8;
pub const DEFAULT_FLATNESS_EPS: f64 = 0.05;
/// Sublevel threshold (fraction of the surface maximum) defining the basin.
pub const BASIN_LEVEL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceGrid {
    /// `values[[i, j]]` is the loss at `(axis[i], axis[j])` = `(θ_a, θ_d)`.
    pub values: Array2<f64>,
    pub axis: Vec<f64>,
    pub reference: PathParams,
    pub config: ArrayConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceOptions {
    pub range: (f64, f64),
    pub grid_points: usize,
    /// Shift the axis by less than half a step so one node equals the true
    /// angle of arrival.
    pub pin_truth: bool,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions {
            range: (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            grid_points: 201,
            pin_truth: true,
        }
    }
}

pub fn loss_surface(
    truth: &PathParams,
    config: &ArrayConfig,
    options: &SurfaceOptions,
) -> Result<SurfaceGrid> {
    loss_surface_with(truth, config, options, Exec::default())
}

pub fn loss_surface_with(
    truth: &PathParams,
    config: &ArrayConfig,
    options: &SurfaceOptions,
    exec: Exec,
) -> Result<SurfaceGrid> {
    config.validate()?;
    truth.validate()?;
    let g = options.grid_points;
    let (lo, hi) = options.range;
    if g < MIN_GRID_POINTS {
        return Err(Error::InvalidConfig(format!(
            "surface needs at least {MIN_GRID_POINTS} grid points, got {g}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidConfig(format!(
            "invalid axis range [{lo}, {hi}]"
        )));
    }
    let step = (hi - lo) / (g - 1) as f64;
    let mut axis: Vec<f64> = (0..g).map(|i| lo + i as f64 * step).collect();
    if options.pin_truth {
        let k = nearest(&axis, truth.aoa);
        let shift = truth.aoa - axis[k];
        axis.iter_mut().for_each(|a| *a += shift);
        axis[k] = truth.aoa;
    }

    let reference = synthesize_channel(&[*truth], config);
    let h = reference.entries();
    let rx: Vec<_> = axis
        .iter()
        .map(|&t| steering_vector(t, config.n_r, config.u))
        .collect();
    let tx: Vec<_> = axis
        .iter()
        .map(|&t| steering_vector(t, config.n_t, config.u).mapv(|c| c.conj()))
        .collect();
    let gain = truth.gain;
    let rows = exec.map(g, |i| {
        let ar: Vec<Complex64> = rx[i].iter().map(|c| c * gain).collect();
        (0..g)
            .map(|j| {
                let at = &tx[j];
                let mut s = 0.0;
                for (k, a) in ar.iter().enumerate() {
                    for (l, b) in at.iter().enumerate() {
                        s += (a * b - h[[k, l]]).norm_sqr();
                    }
                }
                s
            })
            .collect::<Vec<_>>()
    });
    Ok(SurfaceGrid {
        values: Array2::from_shape_vec((g, g), rows.concat()).expect("square"),
        axis,
        reference: *truth,
        config: *config,
    })
}

fn nearest(axis: &[f64], theta: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - theta).abs().total_cmp(&(b.1 - theta).abs()))
        .map(|(i, _)| i)
        .expect("nonempty axis")
}

impl SurfaceGrid {
    pub fn grid_points(&self) -> usize {
        self.axis.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Node closest to the reference angles.
    pub fn truth_node(&self) -> (usize, usize) {
        (
            nearest(&self.axis, self.reference.aoa),
            nearest(&self.axis, self.reference.aod),
        )
    }

    /// First grid node (row-major) attaining the minimum value.
    pub fn global_minimum(&self) -> ((usize, usize), f64) {
        let mut best = ((0, 0), f64::INFINITY);
        for ((i, j), &v) in self.values.indexed_iter() {
            if v < best.1 {
                best = ((i, j), v);
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = self.axis.iter().map(|a| a.to_string()).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn summary(&self, epsilon_rel: f64) -> SurfaceSummary {
        let ((i, j), min_value) = self.global_minimum();
        SurfaceSummary {
            n: self.config.n_r,
            flatness_fraction: flatness_fraction(self, epsilon_rel),
            plateau_fraction: plateau_fraction(self, epsilon_rel),
            argmin_theta_a: self.axis[i],
            argmin_theta_d: self.axis[j],
            min_value,
            max_value: self.max_value(),
            optimality_gap: optimality_gap(self),
        }
    }
}

/// Fraction of nodes whose value is within `epsilon_rel · max` of the
/// surface maximum.
pub fn flatness_fraction(surface: &SurfaceGrid, epsilon_rel: f64) -> f64 {
    let max = surface.max_value();
    let band = epsilon_rel * max.abs();
    let hits = surface.values.iter().filter(|&&v| max - v <= band).count();
    hits as f64 / surface.values.len() as f64
}

/// Fraction of nodes within `epsilon_rel` (relative) of the median value.
/// Away from the main lobe the surface settles near `2g²`, and this measures
/// how much of the grid sits on that plateau.
pub fn plateau_fraction(surface: &SurfaceGrid, epsilon_rel: f64) -> f64 {
    let mut v: Vec<f64> = surface.values.iter().copied().collect();
    let mid = v.len() / 2;
    let (_, &mut median, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let band = epsilon_rel * median.abs();
    let hits = surface
        .values
        .iter()
        .filter(|&&x| (x - median).abs() <= band)
        .count();
    hits as f64 / surface.values.len() as f64
}

/// `min(non-basin local minima) − global minimum`, where the basin is the
/// 4-connected sublevel set `{v ≤ BASIN_LEVEL · max}` containing the truth
/// node and a local minimum is a node strictly below all of its 8
/// neighbours. `None` when every local minimum lies in the basin.
pub fn optimality_gap(surface: &SurfaceGrid) -> Option<f64> {
    let g = surface.grid_points();
    let v = &surface.values;
    let level = BASIN_LEVEL * surface.max_value();
    let mut basin = Array2::from_elem((g, g), false);
    let start = surface.truth_node();
    if v[start] <= level {
        let mut queue = VecDeque::from([start]);
        basin[start] = true;
        while let Some((i, j)) = queue.pop_front() {
            let mut visit = |a: usize, b: usize| {
                if !basin[(a, b)] && v[(a, b)] <= level {
                    basin[(a, b)] = true;
                    queue.push_back((a, b));
                }
            };
            if i > 0 {
                visit(i - 1, j);
            }
            if i + 1 < g {
                visit(i + 1, j);
            }
            if j > 0 {
                visit(i, j - 1);
            }
            if j + 1 < g {
                visit(i, j + 1);
            }
        }
    }
    let (_, global) = surface.global_minimum();
    let mut best: Option<f64> = None;
    for i in 0..g {
        for j in 0..g {
            if basin[(i, j)] {
                continue;
            }
            let x = v[(i, j)];
            let mut is_min = true;
            'n: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= g as i64 || b >= g as i64 {
                        continue;
                    }
                    if v[(a as usize, b as usize)] <= x {
                        is_min = false;
                        break 'n;
                    }
                }
            }
            if is_min {
                best = Some(best.map_or(x, |b: f64| b.min(x)));
            }
        }
    }
    best.map(|b| b - global)
}

/// Summary emitted alongside the surface CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub n: usize,
    pub flatness_fraction: f64,
    pub plateau_fraction: f64,
    pub argmin_theta_a: f64,
    pub argmin_theta_d: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub optimality_gap: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(values: Array2<f64>) -> SurfaceGrid {
        let g = values.nrows();
        SurfaceGrid {
            axis: (0..g).map(|i| i as f64).collect(),
            values,
            reference: PathParams::new(1.0, 0.0, 0.0),
            config: ArrayConfig::square(4),
        }
    }

    #[test]
    fn flatness_of_constant_and_dipped_surfaces() {
        assert_eq!(
            flatness_fraction(&grid_from(Array2::from_elem((8, 8), 2.0)), 0.05),
            1.0
        );
        let mut v = Array2::from_elem((10, 10), 2.0);
        v[(3, 4)] = 0.5;
        v[(7, 7)] = 1.0;
        v[(0, 0)] = 1.85;
        assert_eq!(flatness_fraction(&grid_from(v), 0.05), 97.0 / 100.0);
    }

    #[test]
    fn pinned_truth_node_is_zero_and_global_minimum() {
        let truth = PathParams::new(1.0, 1.0, 1.0);
        let s = loss_surface(&truth, &ArrayConfig::square(16), &SurfaceOptions::default()).unwrap();
        let node = s.truth_node();
        assert_eq!(s.axis[node.0], 1.0);
        assert_eq!(s.values[node], 0.0);
        assert_eq!(s.global_minimum().0, node);
        assert!(s.max_value() <= 4.0);
    }

    #[test]
    fn too_few_points_rejected() {
        let opts = SurfaceOptions {
            grid_points: 7,
            ..Default::default()
        };
        assert!(loss_surface(
            &PathParams::new(1.0, 0.0, 0.0),
            &ArrayConfig::square(4),
            &opts
        )
        .is_err());
    }

    #[test]
    fn gap_reports_spurious_minimum() {
        let mut v = Array2::from_elem((9, 9), 10.0);
        v[(1, 1)] = 0.0;
        v[(6, 6)] = 3.0;
        let mut s = grid_from(v);
        s.reference = PathParams::new(1.0, 1.0, 1.0);
        assert_eq!(optimality_gap(&s), Some(3.0));
        s.values[(6, 6)] = 10.0;
        assert_eq!(optimality_gap(&s), None);
    }
}
