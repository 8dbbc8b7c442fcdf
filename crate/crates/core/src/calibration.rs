//! Choosing the evidence weights alpha_pop and alpha_ind from the crossing
//! of two Kendall-tau curves: agreement of the posterior ranking with the
//! previous stage ("preserve") and with the observed correlations ("align").

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::{hbm_posterior, HbmConfig, NodeEvidence, Observation};
use crate::stats::kendall_tau;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCurve {
    pub alphas: Vec<f64>,
    pub taus: Vec<f64>,
    pub label: String,
}

impl TauCurve {
    /// Piecewise-linear value at `alpha`, clamped to the grid ends.
    pub fn at(&self, alpha: f64) -> f64 {
        let a = &self.alphas;
        if alpha <= a[0] {
            return self.taus[0];
        }
        for i in 1..a.len() {
            if alpha <= a[i] {
                let f = (alpha - a[i - 1]) / (a[i] - a[i - 1]);
                return self.taus[i - 1] + f * (self.taus[i] - self.taus[i - 1]);
            }
        }
        *self.taus.last().expect("non-empty curve")
    }
}

/// `points` log-spaced values from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::arg("alpha grid needs at least two points"));
    }
    if !(min > 0.0 && max > min && max.is_finite()) {
        return Err(Error::arg(format!("alpha grid bounds must satisfy 0 < min < max, got {min}, {max}")));
    }
    let (lo, hi) = (min.ln(), max.ln());
    let step = (hi - lo) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| (lo + step * i as f64).exp()).collect();
    grid[0] = min;
    grid[points - 1] = max;
    Ok(grid)
}

/// 25 points from 0.01 to 100.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, 25).expect("static grid")
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::arg("alpha grid needs at least two points"));
    }
    if grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg("alpha grid must be positive and strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Population,
    Individual,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Population => "population",
            Stage::Individual => "individual",
        }
    }
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn stage_obs(ev: &NodeEvidence, stage: Stage) -> &Observation {
    match stage {
        Stage::Population => &ev.pop,
        Stage::Individual => &ev.ind,
    }
}

/// Preserve and align curves for one stage. For the individual stage the
/// population stage runs at `cfg.alpha_pop`.
pub fn tau_curves(stage: Stage, cases: &[NodeEvidence], grid: &[f64], cfg: &HbmConfig) -> Result<(TauCurve, TauCurve)> {
    check_grid(grid)?;
    let usable: Vec<(&NodeEvidence, Vec<usize>)> = cases
        .iter()
        .map(|ev| {
            let obs = stage_obs(ev, stage);
            (ev, (0..obs.len()).filter(|&i| obs.valid[i]).collect::<Vec<_>>())
        })
        .filter(|(_, idx)| idx.len() >= 2)
        .collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no node has two or more valid neighbors at the {} stage",
            stage.as_str()
        )));
    }

    let mut preserve = Vec::with_capacity(grid.len());
    let mut align = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let mut c = *cfg;
        match stage {
            Stage::Population => c.alpha_pop = alpha,
            Stage::Individual => c.alpha_ind = alpha,
        }
        let (mut sum_p, mut sum_a, mut count) = (0.0, 0.0, 0usize);
        for (ev, idx) in &usable {
            let (pop, ind) = hbm_posterior(&ev.prior, &ev.pop, &ev.ind, &c)?;
            let (before, after) = match stage {
                Stage::Population => (&ev.prior.mean, &pop.mean),
                Stage::Individual => (&pop.mean, &ind.mean),
            };
            let after = pick(after, idx);
            let observed = pick(&stage_obs(ev, stage).value, idx);
            // tau-b is undefined on fully tied rankings; such nodes sit out
            if let (Ok(p), Ok(a)) = (kendall_tau(&pick(before, idx), &after), kendall_tau(&observed, &after)) {
                sum_p += p;
                sum_a += a;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InsufficientData(format!(
                "every ranking is fully tied at alpha = {alpha} ({} stage)",
                stage.as_str()
            )));
        }
        preserve.push(sum_p / count as f64);
        align.push(sum_a / count as f64);
    }
    Ok((
        TauCurve {
            alphas: grid.to_vec(),
            taus: preserve,
            label: format!("{}:preserve", stage.as_str()),
        },
        TauCurve {
            alphas: grid.to_vec(),
            taus: align,
            label: format!("{}:align", stage.as_str()),
        },
    ))
}

/// First crossing of the two curves, linearly interpolated between grid
/// points; exact grid points where the curves meet are returned as is.
pub fn find_intersection(preserve: &TauCurve, align: &TauCurve) -> Result<Option<f64>> {
    if preserve.alphas != align.alphas
        || preserve.taus.len() != preserve.alphas.len()
        || align.taus.len() != align.alphas.len()
    {
        return Err(Error::arg("curves must share the same alpha grid"));
    }
    let a = &preserve.alphas;
    let d: Vec<f64> = preserve.taus.iter().zip(&align.taus).map(|(p, q)| p - q).collect();
    for i in 0..d.len() {
        if d[i] == 0.0 {
            return Ok(Some(a[i]));
        }
        if i + 1 < d.len() && d[i + 1] != 0.0 && (d[i] > 0.0) != (d[i + 1] > 0.0) {
            let f = d[i] / (d[i] - d[i + 1]);
            return Ok(Some(a[i] + f * (a[i + 1] - a[i])));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub alpha_pop: f64,
    pub alpha_ind: f64,
    pub curves: Vec<TauCurve>,
}

fn crossing(stage: Stage, preserve: TauCurve, align: TauCurve) -> Result<(f64, TauCurve, TauCurve)> {
    match find_intersection(&preserve, &align)? {
        Some(a) => Ok((a, preserve, align)),
        None => Err(Error::NoIntersection {
            stage: stage.as_str().to_string(),
            preserve: Box::new(preserve),
            align: Box::new(align),
        }),
    }
}

/// Population stage first; its crossing is then frozen while the
/// individual stage is swept.
pub fn calibrate(cases: &[NodeEvidence], grid: &[f64], cfg: &HbmConfig) -> Result<Calibration> {
    let (p, a) = tau_curves(Stage::Population, cases, grid, cfg)?;
    let (alpha_pop, p, a) = crossing(Stage::Population, p, a)?;
    let frozen = HbmConfig { alpha_pop, ..*cfg };
    let (ip, ia) = tau_curves(Stage::Individual, cases, grid, &frozen)?;
    let (alpha_ind, ip, ia) = crossing(Stage::Individual, ip, ia)?;
    Ok(Calibration {
        alpha_pop,
        alpha_ind,
        curves: vec![p, a, ip, ia],
    })
}

/// CSV with columns alpha, tau_preserve, tau_align, stage. `curves` holds
/// (preserve, align) pairs.
pub fn write_curves_csv(curves: &[TauCurve], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["alpha", "tau_preserve", "tau_align", "stage"])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for pair in curves.chunks(2) {
        let [p, a] = pair else {
            return Err(Error::arg("curves must come in preserve/align pairs"));
        };
        let stage = p.label.split(':').next().unwrap_or("");
        for i in 0..p.alphas.len() {
            w.write_record([
                p.alphas[i].to_string(),
                p.taus[i].to_string(),
                a.taus[i].to_string(),
                stage.to_string(),
            ])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::adversarial_cases;
    use proptest::prelude::*;

    fn curve(alphas: &[f64], taus: &[f64]) -> TauCurve {
        TauCurve {
            alphas: alphas.to_vec(),
            taus: taus.to_vec(),
            label: String::new(),
        }
    }

    #[test]
    fn intersection_examples() {
        let a = find_intersection(&curve(&[1.0, 2.0], &[1.0, 0.4]), &curve(&[1.0, 2.0], &[0.0, 0.8]))
            .unwrap()
            .unwrap();
        assert!((a - (1.0 + 1.0 / 1.4)).abs() < 1e-15);
        assert_eq!(
            find_intersection(&curve(&[1.0, 2.0], &[1.0, 0.9]), &curve(&[1.0, 2.0], &[0.0, 0.1])).unwrap(),
            None
        );
        assert_eq!(
            find_intersection(&curve(&[1.0, 2.0, 3.0], &[1.0, 0.5, 0.2]), &curve(&[1.0, 2.0, 3.0], &[0.0, 0.5, 0.9]))
                .unwrap(),
            Some(2.0)
        );
        assert!(find_intersection(&curve(&[1.0, 2.0], &[1.0, 0.4]), &curve(&[1.0, 3.0], &[0.0, 0.8])).is_err());
    }

    #[test]
    fn grid_checks() {
        let g = default_grid();
        assert_eq!(g.len(), 25);
        assert_eq!((g[0], g[24]), (0.01, 100.0));
        assert!((g[12] - 1.0).abs() < 1e-12);
        assert!(log_grid(1.0, 2.0, 1).is_err());
        assert!(log_grid(0.0, 2.0, 5).is_err());
        let cases = adversarial_cases(3, 5, 1);
        assert!(tau_curves(Stage::Population, &cases, &[1.0], &HbmConfig::default()).is_err());
    }

    #[test]
    fn adversarial_fixture_is_monotone_and_calibrates() {
        let cases = adversarial_cases(6, 8, 11);
        let grid = default_grid();
        let cfg = HbmConfig::default();
        let (p, a) = tau_curves(Stage::Population, &cases, &grid, &cfg).unwrap();
        assert!(p.taus.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.taus.windows(2).all(|w| w[1] >= w[0]));
        assert!(p.taus[0] > 0.99 && a.taus[24] > 0.99);

        let cal = calibrate(&cases, &grid, &cfg).unwrap();
        assert!(cal.alpha_pop > grid[0] && cal.alpha_pop < grid[24]);
        assert!(cal.alpha_ind > grid[0] && cal.alpha_ind < grid[24]);
        assert_eq!(cal, calibrate(&cases, &grid, &cfg).unwrap());

        let mut buf = Vec::new();
        write_curves_csv(&cal.curves, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 25);
        assert!(text.starts_with("alpha,tau_preserve,tau_align,stage\n"));
    }

    #[test]
    fn insufficient_neighbors_error() {
        let mut cases = adversarial_cases(2, 4, 3);
        for c in &mut cases {
            for v in c.pop.valid.iter_mut().skip(1) {
                *v = false;
            }
        }
        assert!(matches!(
            tau_curves(Stage::Population, &cases, &default_grid(), &HbmConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest! {
        #[test]
        fn tau_ignores_monotone_transforms(
            a in proptest::collection::vec(-5.0f64..5.0, 3..10),
            gamma in 0.1f64..3.0,
        ) {
            let b: Vec<f64> = a.iter().rev().map(|x| x * 0.7 + 0.1).collect();
            let sa: Vec<f64> = a.iter().map(|x| crate::stats::squash(*x, gamma).unwrap()).collect();
            let sb: Vec<f64> = b.iter().map(|x| crate::stats::squash(*x, gamma).unwrap()).collect();
            if let (Ok(t1), Ok(t2)) = (kendall_tau(&a, &b), kendall_tau(&sa, &sb)) {
                prop_assert_eq!(t1, t2);
            }
        }

        #[test]
        fn crossing_lies_inside_grid(d0 in 0.01f64..1.0, d1 in -1.0f64..-0.01, lo in 0.1f64..5.0, w in 0.1f64..5.0) {
            let grid = [lo, lo + w];
            let a = find_intersection(&curve(&grid, &[d0, d1]), &curve(&grid, &[0.0, 0.0])).unwrap().unwrap();
            prop_assert!(a > grid[0] && a < grid[1]);
        }
    }
}
