use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::calibrate::Calibration;
use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::ppo::Regime;

/// Version of the structured result files.
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// `1 - n_method / n_baseline`.
///
/// Defined as 1.0 when the baseline never reached the target, and
/// undefined (`None`) when the method itself did not.
pub fn sample_reduction(n_method: f64, method_reached: bool, n_baseline: f64, baseline_reached: bool) -> Option<f64> {
    if !method_reached {
        None
    } else if !baseline_reached {
        Some(1.0)
    } else {
        Some(1.0 - n_method / n_baseline)
    }
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// One (seed, regime) run of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub regime: Regime,
    /// `None` when the run failed; see `error`.
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
    /// Content hash of the expert dataset the run was pretrained on.
    pub expert_hash: Option<u64>,
}

/// Ledger row of one regime: the run with the (lower) median `n_tot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: Regime,
    pub completed: usize,
    pub reached: usize,
    pub representative_seed: u64,
    pub n_exp: u64,
    pub n_rol: u64,
    pub n_fro: u64,
    pub n_fine: u64,
    pub n_tot: u64,
    pub reached_target: bool,
}

impl RegimeSummary {
    fn from_cells(regime: Regime, cells: &[CellResult]) -> Option<Self> {
        let mut runs: Vec<(u64, &RunMetrics)> = cells
            .iter()
            .filter(|c| c.regime == regime)
            .filter_map(|c| c.metrics.as_ref().map(|m| (c.seed, m)))
            .collect();
        if runs.is_empty() {
            return None;
        }
        runs.sort_by_key(|&(seed, m)| (m.n_tot, seed));
        let (seed, m) = runs[(runs.len() - 1) / 2];
        Some(Self {
            regime,
            completed: runs.len(),
            reached: runs.iter().filter(|(_, m)| m.reached_target).count(),
            representative_seed: seed,
            n_exp: m.n_exp,
            n_rol: m.n_rol,
            n_fro: m.n_fro,
            n_fine: m.n_fine,
            n_tot: m.n_tot,
            reached_target: m.reached_target,
        })
    }
}

/// Reduction of one seed's run against the same seed's baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReduction {
    pub seed: u64,
    pub value: Option<f64>,
    /// Both runs reached the target.
    pub converged: bool,
}

/// Sample reduction of `method` against `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub method: Regime,
    pub baseline: Regime,
    /// From the two summary rows.
    pub value: Option<f64>,
    pub per_seed: Vec<SeedReduction>,
    /// Mean over seeds, a failed baseline counting as 100%.
    pub mean_with_convention: Option<f64>,
    /// Mean over seeds where both runs reached the target.
    pub mean_converged_only: Option<f64>,
}

/// Seed-averaged evaluation value at one fine-tuning step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
    /// Runs that were still training at this step.
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCurve {
    pub regime: Regime,
    pub points: Vec<CurvePoint>,
}

/// Everything a comparison produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub format_version: u32,
    pub env: EnvId,
    pub target_return: f64,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub expert_quality: f64,
    /// `None` when the quality was set explicitly.
    pub calibration: Option<Calibration>,
    pub n_exp: u64,
    pub n_rol: u64,
    pub cells: Vec<CellResult>,
    pub summaries: Vec<RegimeSummary>,
    pub reductions: Vec<Reduction>,
    pub curves: Vec<RegimeCurve>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn seed_averaged_curve(runs: &[&RunMetrics]) -> Vec<CurvePoint> {
    let mut steps: Vec<u64> = runs.iter().flat_map(|m| m.eval_curve.iter().map(|p| p.step)).collect();
    steps.sort_unstable();
    steps.dedup();
    steps
        .into_iter()
        .map(|step| {
            let vals: Vec<f64> =
                runs.iter().filter_map(|m| m.eval_curve.iter().find(|p| p.step == step).map(|p| p.mean)).collect();
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / vals.len() as f64;
            CurvePoint { step, mean: mu, std: var.sqrt(), runs: vals.len() }
        })
        .collect()
}

impl ComparisonReport {
    /// Builds summaries, reductions and curves from completed cells.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        env: EnvId,
        target_return: f64,
        budget: u64,
        seeds: Vec<u64>,
        expert_quality: f64,
        calibration: Option<Calibration>,
        n_exp: u64,
        n_rol: u64,
        mut cells: Vec<CellResult>,
    ) -> Self {
        cells.sort_by_key(|c| (Regime::ALL.iter().position(|r| *r == c.regime), c.seed));
        let regimes: Vec<Regime> = Regime::ALL.into_iter().filter(|r| cells.iter().any(|c| c.regime == *r)).collect();
        let summaries: Vec<RegimeSummary> =
            regimes.iter().filter_map(|&r| RegimeSummary::from_cells(r, &cells)).collect();
        let metrics_of = |regime: Regime, seed: u64| {
            cells.iter().find(|c| c.regime == regime && c.seed == seed).and_then(|c| c.metrics.as_ref())
        };
        let mut reductions = Vec::new();
        for a in &summaries {
            for b in &summaries {
                if a.regime == b.regime {
                    continue;
                }
                let per_seed: Vec<SeedReduction> = seeds
                    .iter()
                    .filter_map(|&seed| {
                        let (ma, mb) = (metrics_of(a.regime, seed)?, metrics_of(b.regime, seed)?);
                        Some(SeedReduction {
                            seed,
                            value: sample_reduction(
                                ma.n_tot as f64,
                                ma.reached_target,
                                mb.n_tot as f64,
                                mb.reached_target,
                            ),
                            converged: ma.reached_target && mb.reached_target,
                        })
                    })
                    .collect();
                let with_convention: Vec<f64> = per_seed.iter().filter_map(|s| s.value).collect();
                let converged: Vec<f64> = per_seed.iter().filter(|s| s.converged).filter_map(|s| s.value).collect();
                reductions.push(Reduction {
                    method: a.regime,
                    baseline: b.regime,
                    value: sample_reduction(a.n_tot as f64, a.reached_target, b.n_tot as f64, b.reached_target),
                    per_seed,
                    mean_with_convention: mean(&with_convention),
                    mean_converged_only: mean(&converged),
                });
            }
        }
        let curves = regimes
            .iter()
            .map(|&regime| {
                let runs: Vec<&RunMetrics> =
                    cells.iter().filter(|c| c.regime == regime).filter_map(|c| c.metrics.as_ref()).collect();
                RegimeCurve { regime, points: seed_averaged_curve(&runs) }
            })
            .collect();
        Self {
            format_version: REPORT_FORMAT_VERSION,
            env,
            target_return,
            budget,
            seeds,
            expert_quality,
            calibration,
            n_exp,
            n_rol,
            cells,
            summaries,
            reductions,
            curves,
        }
    }

    pub fn summary(&self, regime: Regime) -> Option<&RegimeSummary> {
        self.summaries.iter().find(|s| s.regime == regime)
    }

    pub fn reduction(&self, method: Regime, baseline: Regime) -> Option<&Reduction> {
        self.reductions.iter().find(|r| r.method == method && r.baseline == baseline)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.metrics.is_none())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Report(format!(
                "unsupported format_version {} (expected {REPORT_FORMAT_VERSION})",
                report.format_version
            )));
        }
        Ok(report)
    }

    /// Plain-text comparison table, one row per regime.
    pub fn table(&self) -> String {
        fn pct(v: Option<f64>) -> String {
            v.map_or_else(|| "-".to_string(), |v| format!("{:.1}%", 100.0 * v))
        }
        let baselines: Vec<Regime> = self.summaries.iter().map(|s| s.regime).filter(|r| *r != Regime::Acp).collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} | target {} | budget {} | seeds {:?} | expert quality {:.4}",
            self.env, self.target_return, self.budget, self.seeds, self.expert_quality
        );
        let mut header = format!(
            "{:<6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
            "regime", "n_exp", "n_rol", "n_fro", "n_fine", "n_tot", "reached"
        );
        for b in &baselines {
            let _ = write!(header, " {:>9}", format!("vs {b}"));
        }
        let _ = writeln!(out, "{header}");
        for s in &self.summaries {
            let mark = if s.reached_target { "" } else { "*" };
            let mut row = format!(
                "{:<6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
                s.regime.as_str(),
                s.n_exp,
                s.n_rol,
                s.n_fro,
                s.n_fine,
                format!("{}{mark}", s.n_tot),
                format!("{}/{}", s.reached, s.completed)
            );
            for &b in &baselines {
                let cell =
                    if b == s.regime { "".to_string() } else { pct(self.reduction(s.regime, b).and_then(|r| r.value)) };
                let _ = write!(row, " {cell:>9}");
            }
            let _ = writeln!(out, "{row}");
        }
        if self.summary(Regime::Acp).is_some() {
            let _ = writeln!(out);
            for &b in baselines.iter() {
                if let Some(r) = self.reduction(Regime::Acp, b) {
                    let _ = writeln!(
                        out,
                        "ACP vs {b}: seed mean {} (failed baseline counted as 100%), {} (converged seeds only)",
                        pct(r.mean_with_convention),
                        pct(r.mean_converged_only)
                    );
                }
            }
        }
        for c in self.failures() {
            let _ = writeln!(
                out,
                "failed: {} seed {}: {}",
                c.regime,
                c.seed,
                c.error.as_deref().unwrap_or("unknown error")
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Rows show the run with the median n_tot; n_tot = n_exp + n_rol + n_fro + n_fine. \
             * marks a run that missed the target (n_tot = budget + pretraining steps)."
        );
        let calibration = match &self.calibration {
            Some(c) => format!("{} probes, {} environment steps", c.probes, c.env_steps),
            None => "quality set explicitly".to_string(),
        };
        let _ =
            writeln!(out, "Expert calibration ({calibration}) and evaluation episodes are excluded from every n_tot.");
        out
    }
}

/// Output files [`emit_report`] can write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// `comparison.txt`
    Table,
    /// `comparison.json`
    Json,
    /// `curve_<regime>.csv` with columns `step,mean,std`.
    Csv,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Table, ReportFormat::Json, ReportFormat::Csv];
}

/// Comma-separated `step,mean,std` table.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("step,mean,std\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.step, p.mean, p.std);
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    std::fs::write(path, contents).map_err(|e| Error::Report(format!("cannot write {}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

/// Writes the requested formats into `dir`, creating it if needed.
pub fn emit_report(report: &ComparisonReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Report(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Table => written.push(write_file(&dir.join("comparison.txt"), &report.table())?),
            ReportFormat::Json => written.push(write_file(&dir.join("comparison.json"), &report.to_json()?)?),
            ReportFormat::Csv => {
                for c in &report.curves {
                    let name = format!("curve_{}.csv", c.regime.as_str().to_ascii_lowercase());
                    written.push(write_file(&dir.join(name), &curve_csv(&c.points))?);
                }
            }
        }
    }
    Ok(written)
}
