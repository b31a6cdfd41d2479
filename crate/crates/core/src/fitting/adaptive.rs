use std::time::Instant;

use crate::cloud::PointCloud;
use crate::error::Result;
use crate::lr::LRSurface;

use super::accuracy::{compute_accuracy_with, point_tolerance, AccuracyReport};
use super::config::FitConfig;
use super::lsq::{effective_weights, initial_fit, least_squares_fit_weighted};
use super::mba::mba_update_weighted;
use super::refine::select_refinements;

/// Accuracy after one approximation step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 for the initial tensor-product fit.
    pub iteration: usize,
    pub method: &'static str,
    pub inserted_lines: usize,
    pub num_coefs: usize,
    pub num_elements: usize,
    pub max_dist: f64,
    pub avg_dist: f64,
    pub out_of_tol: usize,
    pub seconds: f64,
}

impl IterationRecord {
    fn new(iteration: usize, method: &'static str, inserted: usize, rep: &AccuracyReport, t0: Instant) -> Self {
        IterationRecord {
            iteration,
            method,
            inserted_lines: inserted,
            num_coefs: rep.num_coefs,
            num_elements: rep.num_elements,
            max_dist: rep.max_dist,
            avg_dist: rep.avg_dist,
            out_of_tol: rep.out_of_tol,
            seconds: t0.elapsed().as_secs_f64(),
        }
    }

    /// Timings are left out so that identical runs give identical files.
    pub const CSV_HEADER: &'static str = "iteration,method,inserted_lines,coefs,elements,max_dist,avg_dist,out_of_tol";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:?},{:?},{}",
            self.iteration,
            self.method,
            self.inserted_lines,
            self.num_coefs,
            self.num_elements,
            self.max_dist,
            self.avg_dist,
            self.out_of_tol
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub surface: LRSurface,
    pub report: AccuracyReport,
    pub history: Vec<IterationRecord>,
}

/// Iterative refinement: fit, measure, refine where the tolerance is not
/// met, re-approximate (least squares first, then MBA), repeat.
pub fn adaptive_fit(cloud: &PointCloud, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let t0 = Instant::now();
    let weights = effective_weights(cloud, config.significant_weight);
    let mut surf = initial_fit(cloud, config)?;
    let accuracy = |s: &LRSurface| compute_accuracy_with(s, cloud, &config.threshold, config.significant_tol);
    let (mut report, _) = accuracy(&surf);
    let mut history = vec![IterationRecord::new(0, "lsq", 0, &report, t0)];
    log::info!(
        "initial fit: {} coefs, max {:.4}, out of tol {}",
        report.num_coefs,
        report.max_dist,
        report.out_of_tol
    );

    for it in 1..=config.max_iterations {
        if report.out_of_tol == 0 {
            break;
        }
        let lines = select_refinements(&surf, &report, config);
        if lines.is_empty() {
            log::info!("iteration {it}: no admissible refinement");
            break;
        }
        let inserted = surf.insert_meshlines(&lines)?;
        let method = if it <= config.ls_iterations {
            surf = least_squares_fit_weighted(&surf, cloud, &weights, config)?;
            "lsq"
        } else {
            for _ in 0..config.mba_passes_per_iteration {
                surf = mba_update_weighted(&surf, cloud, &weights);
            }
            "mba"
        };
        report = accuracy(&surf).0;
        log::info!(
            "iteration {it} ({method}): {inserted} lines, {} coefs, max {:.4}, out of tol {}",
            report.num_coefs,
            report.max_dist,
            report.out_of_tol
        );
        history.push(IterationRecord::new(it, method, inserted, &report, t0));
    }

    let (_, res) = accuracy(&surf);
    let significant_missed = cloud.points.iter().enumerate().any(|(k, p)| {
        p.significant
            && res.residuals[k]
                .is_some_and(|r| r.abs() > point_tolerance(p, &config.threshold, config.significant_tol))
    });
    if significant_missed {
        let boosted: Vec<f64> = cloud
            .points
            .iter()
            .map(|p| p.weight * if p.significant { config.significant_final_weight } else { 1.0 })
            .collect();
        surf = mba_update_weighted(&surf, cloud, &boosted);
        report = accuracy(&surf).0;
        history.push(IterationRecord::new(history.len(), "mba-significant", 0, &report, t0));
    }
    Ok(FitResult {
        surface: surf,
        report,
        history,
    })
}
