//! Detection scoring: per-sample Pearson correlation between the change
//! in an uncertainty heatmap and either the change in reconstructions
//! (adversarial detection) or a ground-truth region mask (atypical-feature
//! detection), aggregated over samples and repeated runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Inn,
    McDrop,
    ProbOut,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Inn => "inn",
            Method::McDrop => "mcdrop",
            Method::ProbOut => "probout",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Denoise,
    Ct,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Denoise => "denoise",
            Task::Ct => "ct",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    AdvDetect,
    ArtDetect,
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Experiment::AdvDetect => "advdetect",
            Experiment::ArtDetect => "artdetect",
        })
    }
}

/// Pearson correlation coefficient. Errors with
/// [`Error::DegenerateSample`] when either input has zero variance.
pub fn pearson(a: &Tensor, b: &Tensor) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape("pearson", a.shape(), b.shape()));
    }
    let n = a.len() as f64;
    let ma = a.mean();
    let mb = b.mean();
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    let _ = n;
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateSample);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Adversarial detection score: correlation between the pixel-wise change
/// of the uncertainty heatmap and the change of the reconstructions.
pub fn advdetect_score(
    u_clean: &Tensor,
    u_adv: &Tensor,
    rec_clean: &Tensor,
    rec_adv: &Tensor,
) -> Result<f64> {
    let du = u_clean.sub(u_adv)?.abs();
    let drec = rec_clean.sub(rec_adv)?.abs();
    pearson(&du, &drec)
}

/// Atypical-feature detection score: correlation between the heatmap
/// change and the binary ground-truth mask of the altered region.
pub fn artdetect_score(u_clean: &Tensor, u_ood: &Tensor, mask: &Tensor) -> Result<f64> {
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::contract("artdetect mask must be binary"));
    }
    let du = u_clean.sub(u_ood)?.abs();
    pearson(&du, mask)
}

/// Pooled-pixel sufficient statistics of one sample's (heatmap change,
/// reference) pair; these combine across samples for the secondary
/// pooled-correlation column.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PairStats {
    pub n: u64,
    pub sa: f64,
    pub sb: f64,
    pub saa: f64,
    pub sbb: f64,
    pub sab: f64,
}

impl PairStats {
    pub fn from_pair(a: &Tensor, b: &Tensor) -> Result<PairStats> {
        if !a.same_shape(b) {
            return Err(Error::shape("pair stats", a.shape(), b.shape()));
        }
        let mut s = PairStats {
            n: a.len() as u64,
            ..Default::default()
        };
        for (&x, &y) in a.data().iter().zip(b.data()) {
            s.sa += x;
            s.sb += y;
            s.saa += x * x;
            s.sbb += y * y;
            s.sab += x * y;
        }
        Ok(s)
    }

    pub fn merge(&mut self, other: &PairStats) {
        self.n += other.n;
        self.sa += other.sa;
        self.sb += other.sb;
        self.saa += other.saa;
        self.sbb += other.sbb;
        self.sab += other.sab;
    }

    pub fn pearson(&self) -> Option<f64> {
        let n = self.n as f64;
        if self.n == 0 {
            return None;
        }
        let caa = self.saa - self.sa * self.sa / n;
        let cbb = self.sbb - self.sb * self.sb / n;
        let cab = self.sab - self.sa * self.sb / n;
        if caa <= 0.0 || cbb <= 0.0 {
            return None;
        }
        Some((cab / (caa * cbb).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Per-sample detection outcome: heatmaps, reconstructions, the optional
/// ground-truth mask, and the resulting correlation (None when the sample
/// was degenerate).
#[derive(Debug, Clone)]
pub struct DetectionRecord {
    pub sample_id: usize,
    pub method: Method,
    pub task: Task,
    pub experiment: Experiment,
    pub run: usize,
    pub u_clean: Tensor,
    pub u_perturbed: Tensor,
    pub rec_clean: Tensor,
    pub rec_perturbed: Tensor,
    pub mask: Option<Tensor>,
    pub pearson_r: Option<f64>,
}

impl DetectionRecord {
    /// Score the record according to its experiment, filling `pearson_r`
    /// and returning the lightweight row used for aggregation.
    pub fn score(&mut self) -> Result<ScoreRow> {
        let (r, stats) = match self.experiment {
            Experiment::AdvDetect => {
                let r = advdetect_score(
                    &self.u_clean,
                    &self.u_perturbed,
                    &self.rec_clean,
                    &self.rec_perturbed,
                );
                let du = self.u_clean.sub(&self.u_perturbed)?.abs();
                let drec = self.rec_clean.sub(&self.rec_perturbed)?.abs();
                (r, PairStats::from_pair(&du, &drec)?)
            }
            Experiment::ArtDetect => {
                let mask = self
                    .mask
                    .as_ref()
                    .ok_or_else(|| Error::contract("artdetect record lacks a mask"))?;
                let r = artdetect_score(&self.u_clean, &self.u_perturbed, mask);
                let du = self.u_clean.sub(&self.u_perturbed)?.abs();
                (r, PairStats::from_pair(&du, mask)?)
            }
        };
        let r = match r {
            Ok(v) => Some(v),
            Err(Error::DegenerateSample) => None,
            Err(e) => return Err(e),
        };
        self.pearson_r = r;
        Ok(ScoreRow {
            method: self.method,
            task: self.task,
            experiment: self.experiment,
            run: self.run,
            sample_id: self.sample_id,
            r,
            stats,
        })
    }
}

/// One CSV row: (method, task, experiment, run, sample_id, r).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub method: Method,
    pub task: Task,
    pub experiment: Experiment,
    pub run: usize,
    pub sample_id: usize,
    /// None marks a degenerate (zero-variance) sample, excluded from means.
    pub r: Option<f64>,
    pub stats: PairStats,
}

impl ScoreRow {
    pub fn csv_header() -> &'static str {
        "method,task,experiment,run,sample_id,r"
    }

    pub fn to_csv(&self) -> String {
        let r = match self.r {
            Some(v) => format!("{v}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{r}",
            self.method, self.task, self.experiment, self.run, self.sample_id
        )
    }
}

/// Aggregated table entry for one (task, experiment, method) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub task: Task,
    pub experiment: Experiment,
    /// Mean over samples within each run.
    pub run_means: Vec<f64>,
    /// Mean of the run means.
    pub mean_r: f64,
    /// Population standard deviation across runs.
    pub std_r: f64,
    /// Pooled-pixel correlation per run (secondary diagnostic column).
    pub pooled_run_r: Vec<f64>,
    pub degenerate_count: usize,
}

/// Reduce score rows into per-cell summaries. The output is sorted by
/// (task, experiment, method) and is independent of the input order.
pub fn aggregate(rows: &[ScoreRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::config("no detection records to aggregate"));
    }
    let mut sorted: Vec<&ScoreRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.task, r.experiment, r.method, r.run, r.sample_id));

    let mut out: Vec<SummaryRow> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let key = (sorted[i].task, sorted[i].experiment, sorted[i].method);
        let mut j = i;
        while j < sorted.len()
            && (sorted[j].task, sorted[j].experiment, sorted[j].method) == key
        {
            j += 1;
        }
        let cell = &sorted[i..j];

        let mut run_means = Vec::new();
        let mut pooled_run_r = Vec::new();
        let mut degenerate = 0usize;
        let mut k = 0;
        while k < cell.len() {
            let run = cell[k].run;
            let mut kk = k;
            let mut sum = 0.0;
            let mut cnt = 0usize;
            let mut pooled = PairStats::default();
            while kk < cell.len() && cell[kk].run == run {
                match cell[kk].r {
                    Some(v) => {
                        sum += v;
                        cnt += 1;
                    }
                    None => degenerate += 1,
                }
                pooled.merge(&cell[kk].stats);
                kk += 1;
            }
            if cnt == 0 {
                return Err(Error::Numerical(format!(
                    "every sample of {key:?} run {run} was degenerate"
                )));
            }
            run_means.push(sum / cnt as f64);
            pooled_run_r.push(pooled.pearson().unwrap_or(0.0));
            k = kk;
        }

        let mean_r = run_means.iter().sum::<f64>() / run_means.len() as f64;
        let var = run_means
            .iter()
            .map(|v| (v - mean_r) * (v - mean_r))
            .sum::<f64>()
            / run_means.len() as f64;
        out.push(SummaryRow {
            method: key.2,
            task: key.0,
            experiment: key.1,
            run_means,
            mean_r,
            std_r: var.sqrt(),
            pooled_run_r,
            degenerate_count: degenerate,
        });
        i = j;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: Vec<f64>) -> Tensor {
        Tensor::from_vec(v)
    }

    #[test]
    fn perfect_and_anti_correlation() {
        let a = t(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pearson(&a, &a).unwrap(), 1.0);
        let b = a.scale(-1.0);
        assert_eq!(pearson(&a, &b).unwrap(), -1.0);
    }

    #[test]
    fn constant_input_is_degenerate() {
        let a = t(vec![1.0, 2.0, 3.0]);
        let c = Tensor::full(&[3], 0.5);
        assert!(matches!(pearson(&a, &c), Err(Error::DegenerateSample)));
        assert!(matches!(pearson(&c, &a), Err(Error::DegenerateSample)));
    }

    #[test]
    fn affine_invariance() {
        let a = t(vec![0.3, 0.9, 0.1, 0.5, 0.7]);
        let b = t(vec![1.0, 0.2, 0.4, 0.8, 0.6]);
        let r0 = pearson(&a, &b).unwrap();
        let r1 = pearson(&a.scale(3.5).map(|v| v + 2.0), &b).unwrap();
        assert!((r0 - r1).abs() < 1e-12);
    }

    #[test]
    fn advdetect_examples() {
        let u_c = t(vec![0.1, 0.2, 0.3, 0.4]);
        let u_a = t(vec![0.2, 0.4, 0.6, 0.8]);
        // identical (nonconstant) changes => r = 1
        let r = advdetect_score(&u_c, &u_a, &u_c, &u_a).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        // positive multiple of the change => still 1 by affine invariance
        let rec_c = t(vec![0.0; 4]);
        let rec_a = t(vec![0.3, 0.6, 0.9, 1.2]);
        let r = advdetect_score(&u_c, &u_a, &rec_c, &rec_a).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_noise_has_near_zero_correlation() {
        use crate::rng::{derive_seed, rng_from_seed};
        use rand::Rng;
        let n = 128 * 128;
        for s in 0..20u64 {
            let mut r1 = rng_from_seed(derive_seed(1, s));
            let mut r2 = rng_from_seed(derive_seed(2, s));
            let a = Tensor::new(vec![n], (0..n).map(|_| r1.gen::<f64>()).collect()).unwrap();
            let b = Tensor::new(vec![n], (0..n).map(|_| r2.gen::<f64>()).collect()).unwrap();
            let r = pearson(&a, &b).unwrap();
            assert!(r.abs() < 0.05, "seed {s}: r = {r}");
        }
    }

    #[test]
    fn artdetect_examples() {
        let mask = t(vec![0.0, 1.0, 0.0, 1.0]);
        let u_c = t(vec![0.0; 4]);
        let u_mask = mask.clone();
        assert!((artdetect_score(&u_c, &u_mask, &mask).unwrap() - 1.0).abs() < 1e-12);
        let u_inv = t(vec![1.0, 0.0, 1.0, 0.0]);
        assert!((artdetect_score(&u_c, &u_inv, &mask).unwrap() + 1.0).abs() < 1e-12);
        // constant |du| is degenerate
        let u_flat = Tensor::full(&[4], 0.7);
        assert!(matches!(
            artdetect_score(&u_c, &u_flat, &mask),
            Err(Error::DegenerateSample)
        ));
        // all-zero mask is degenerate too
        let zero_mask = Tensor::zeros(&[4]);
        assert!(matches!(
            artdetect_score(&u_c, &u_mask, &zero_mask),
            Err(Error::DegenerateSample)
        ));
        // non-binary mask violates the contract
        let bad = t(vec![0.0, 0.5, 1.0, 0.0]);
        assert!(matches!(
            artdetect_score(&u_c, &u_mask, &bad),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn scores_are_invariant_under_simultaneous_permutation() {
        use crate::rng::rng_from_seed;
        use rand::seq::SliceRandom;
        use rand::Rng;
        let n = 64;
        let mut rng = rng_from_seed(5);
        let vecs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let r0 = advdetect_score(
            &t(vecs[0].clone()),
            &t(vecs[1].clone()),
            &t(vecs[2].clone()),
            &t(vecs[3].clone()),
        )
        .unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let apply = |v: &[f64]| -> Tensor { t(perm.iter().map(|&i| v[i]).collect()) };
        let r1 = advdetect_score(
            &apply(&vecs[0]),
            &apply(&vecs[1]),
            &apply(&vecs[2]),
            &apply(&vecs[3]),
        )
        .unwrap();
        assert!((r0 - r1).abs() < 1e-12);
    }

    fn row(method: Method, run: usize, sample_id: usize, r: Option<f64>) -> ScoreRow {
        ScoreRow {
            method,
            task: Task::Denoise,
            experiment: Experiment::AdvDetect,
            run,
            sample_id,
            r,
            stats: PairStats::default(),
        }
    }

    #[test]
    fn aggregation_matches_hand_arithmetic() {
        // three runs with per-run means 0.5, 0.6, 0.7
        let rows = vec![
            row(Method::Inn, 0, 0, Some(0.4)),
            row(Method::Inn, 0, 1, Some(0.6)),
            row(Method::Inn, 1, 0, Some(0.6)),
            row(Method::Inn, 1, 1, Some(0.6)),
            row(Method::Inn, 2, 0, Some(0.8)),
            row(Method::Inn, 2, 1, Some(0.6)),
        ];
        let summary = aggregate(&rows).unwrap();
        assert_eq!(summary.len(), 1);
        let s = &summary[0];
        assert!((s.mean_r - 0.6).abs() < 1e-12);
        let expected_std = (2.0 / 300.0f64).sqrt(); // population std of {.5,.6,.7}
        assert!((s.std_r - expected_std).abs() < 1e-10, "std {}", s.std_r);
        assert_eq!(s.degenerate_count, 0);
    }

    #[test]
    fn single_run_has_zero_std_and_degenerates_are_counted() {
        let rows = vec![
            row(Method::McDrop, 0, 0, Some(0.5)),
            row(Method::McDrop, 0, 1, None),
            row(Method::McDrop, 0, 2, Some(0.7)),
        ];
        let s = aggregate(&rows).unwrap();
        assert_eq!(s[0].std_r, 0.0);
        assert!((s[0].mean_r - 0.6).abs() < 1e-12);
        assert_eq!(s[0].degenerate_count, 1);
    }

    #[test]
    fn aggregation_is_order_independent() {
        let mut rows = vec![
            row(Method::Inn, 0, 0, Some(0.2)),
            row(Method::McDrop, 0, 0, Some(0.1)),
            row(Method::Inn, 1, 1, Some(0.9)),
            row(Method::Inn, 0, 1, Some(0.4)),
            row(Method::Inn, 1, 0, Some(0.3)),
        ];
        let a = aggregate(&rows).unwrap();
        rows.reverse();
        let b = aggregate(&rows).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn empty_aggregation_is_an_error() {
        assert!(aggregate(&[]).is_err());
    }
}
