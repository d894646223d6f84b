//! Overlap with Don't-Care masking, per-instance accuracy, method ranks and
//! the Friedman / Iman-Davenport / Nemenyi statistics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::{DetectionResult, Error, LabeledInterval, Result};

/// Instances count as detected when their overlap is strictly above this.
pub const ACCURACY_OVERLAP: f64 = 0.6;

/// A frame-level indicator over `0..length`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryTimeline {
    length: usize,
    active: BTreeSet<usize>,
}

impl BinaryTimeline {
    pub fn new(length: usize) -> Self {
        Self {
            length,
            active: BTreeSet::new(),
        }
    }

    /// Union of end-inclusive intervals.
    pub fn from_intervals<I>(length: usize, intervals: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut t = Self::new(length);
        for (b, e) in intervals {
            t.insert(b, e)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, begin: usize, end: usize) -> Result<()> {
        if begin > end || end >= self.length {
            return Err(Error::OutOfRange {
                index: end.max(begin),
                valid: format!("interval within 0..{}", self.length),
            });
        }
        self.active.extend(begin..=end);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn active(&self) -> &BTreeSet<usize> {
        &self.active
    }

    pub fn is_active(&self, t: usize) -> bool {
        self.active.contains(&t)
    }

    /// Maximal runs of active frames as end-inclusive intervals.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &t in &self.active {
            match out.last_mut() {
                Some(last) if last.1 + 1 == t => last.1 = t,
                _ => out.push((t, t)),
            }
        }
        out
    }
}

/// Frames ignored around every boundary of `truth`: a begin `b` masks
/// `b-dc..b+dc-1` and an end `e` masks `e-dc+1..e+dc`, clipped to the timeline.
pub fn dont_care_mask(truth: &BinaryTimeline, dont_care: usize) -> BTreeSet<usize> {
    let mut masked = BTreeSet::new();
    if dont_care == 0 {
        return masked;
    }
    let n = truth.length as i64;
    let dc = dont_care as i64;
    let mut add = |lo: i64, hi: i64| {
        for t in lo.max(0)..=hi.min(n - 1) {
            masked.insert(t as usize);
        }
    };
    for (b, e) in truth.intervals() {
        let (b, e) = (b as i64, e as i64);
        add(b - dc, b + dc - 1);
        add(e - dc + 1, e + dc);
    }
    masked
}

fn jaccard(g: &BTreeSet<usize>, p: &BTreeSet<usize>, masked: &BTreeSet<usize>) -> f64 {
    let g: BTreeSet<_> = g.difference(masked).collect();
    let p: BTreeSet<_> = p.difference(masked).collect();
    let union = g.union(&p).count();
    if union == 0 {
        return 1.0;
    }
    g.intersection(&p).count() as f64 / union as f64
}

/// `|g ∩ p| / |g ∪ p|` after removing the Don't-Care frames of `g` from both.
pub fn overlap(truth: &BinaryTimeline, predicted: &BinaryTimeline, dont_care: usize) -> Result<f64> {
    if truth.length != predicted.length {
        return Err(Error::DimensionMismatch {
            expected: truth.length,
            got: predicted.length,
        });
    }
    let masked = dont_care_mask(truth, dont_care);
    Ok(jaccard(&truth.active, &predicted.active, &masked))
}

fn check_interval(length: usize, begin: usize, end: usize, what: &str) -> Result<()> {
    if begin > end || end >= length {
        return Err(Error::invalid(format!(
            "{what} [{begin}, {end}] does not fit a {length}-frame timeline"
        )));
    }
    Ok(())
}

/// Overlap of each (instance, detection) pair, each instance masked on its own.
pub fn pairwise_overlaps(
    detections: &[DetectionResult],
    labels: &[LabeledInterval],
    length: usize,
    dont_care: usize,
) -> Result<Vec<Vec<f64>>> {
    for d in detections {
        check_interval(length, d.begin, d.end, "detection")?;
    }
    let mut out = Vec::with_capacity(labels.len());
    for l in labels {
        check_interval(length, l.begin, l.end, "label")?;
        let truth = BinaryTimeline::from_intervals(length, [(l.begin, l.end)])?;
        let masked = dont_care_mask(&truth, dont_care);
        let row = detections
            .iter()
            .map(|d| {
                let p: BTreeSet<usize> = (d.begin..=d.end).collect();
                jaccard(&truth.active, &p, &masked)
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Ground-truth instances matched one-to-one with detections, greedily by
/// descending overlap. Returns `(instance, detection, overlap)` triples.
pub fn match_instances(
    detections: &[DetectionResult],
    labels: &[LabeledInterval],
    length: usize,
    dont_care: usize,
) -> Result<Vec<(usize, usize, f64)>> {
    let table = pairwise_overlaps(detections, labels, length, dont_care)?;
    let mut pairs: Vec<(usize, usize, f64)> = table
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &o)| (i, j, o)))
        .filter(|&(_, _, o)| o > ACCURACY_OVERLAP)
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_i = vec![false; labels.len()];
    let mut used_j = vec![false; detections.len()];
    let mut matched = Vec::new();
    for (i, j, o) in pairs {
        if !used_i[i] && !used_j[j] {
            used_i[i] = true;
            used_j[j] = true;
            matched.push((i, j, o));
        }
    }
    matched.sort_by_key(|m| m.0);
    Ok(matched)
}

/// Fraction of instances detected with overlap above 0.6. Pass detections
/// and labels of a single class.
pub fn accuracy(
    detections: &[DetectionResult],
    labels: &[LabeledInterval],
    length: usize,
    dont_care: usize,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("no ground-truth instances"));
    }
    let matched = match_instances(detections, labels, length, dont_care)?;
    Ok(matched.len() as f64 / labels.len() as f64)
}

/// Per-experiment ranks of `h` methods over `U` experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    methods: Vec<String>,
    experiments: Vec<String>,
    ranks: Vec<Vec<f64>>,
    mean_ranks: Vec<f64>,
}

impl RankTable {
    /// From explicit ranks; each row must sum to `h(h+1)/2`.
    pub fn from_ranks(methods: Vec<String>, experiments: Vec<String>, ranks: Vec<Vec<f64>>) -> Result<Self> {
        let h = methods.len();
        if h == 0 || ranks.is_empty() {
            return Err(Error::Empty("rank table"));
        }
        if experiments.len() != ranks.len() {
            return Err(Error::DimensionMismatch {
                expected: ranks.len(),
                got: experiments.len(),
            });
        }
        let expected = (h * (h + 1)) as f64 / 2.0;
        for (name, row) in experiments.iter().zip(&ranks) {
            if row.len() != h {
                return Err(Error::DimensionMismatch {
                    expected: h,
                    got: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - expected).abs() > 1e-9 || row.iter().any(|&r| !(1.0..=h as f64).contains(&r)) {
                return Err(Error::invalid(format!(
                    "experiment {name:?}: ranks {row:?} are not a ranking"
                )));
            }
        }
        let u = ranks.len() as f64;
        let mean_ranks = (0..h).map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / u).collect();
        Ok(Self {
            methods,
            experiments,
            ranks,
            mean_ranks,
        })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn experiments(&self) -> &[String] {
        &self.experiments
    }

    pub fn ranks(&self) -> &[Vec<f64>] {
        &self.ranks
    }

    pub fn mean_ranks(&self) -> &[f64] {
        &self.mean_ranks
    }

    /// `h`
    pub fn method_count(&self) -> usize {
        self.methods.len()
    }

    /// `U`
    pub fn experiment_count(&self) -> usize {
        self.ranks.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("experiment");
        for m in &self.methods {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        for (name, row) in self.experiments.iter().zip(&self.ranks) {
            out.push_str(name);
            for r in row {
                let _ = write!(out, ",{r}");
            }
            out.push('\n');
        }
        out.push_str("mean");
        for r in &self.mean_ranks {
            let _ = write!(out, ",{r:.6}");
        }
        out.push('\n');
        out
    }

    /// Reads the layout written by [`RankTable::to_csv`]. `#` comments and the
    /// trailing `mean` row are skipped; mean ranks are recomputed.
    pub fn from_csv(file: &str, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (n, header) = lines.next().ok_or_else(|| Error::parse(file, 1, "empty rank table"))?;
        let mut fields = header.split(',');
        if fields.next() != Some("experiment") {
            return Err(Error::parse(file, n, "expected `experiment,<methods>` header"));
        }
        let methods: Vec<String> = fields.map(str::to_string).collect();
        let (mut experiments, mut ranks) = (Vec::new(), Vec::new());
        for (n, line) in lines {
            let mut fields = line.split(',');
            let name = fields.next().unwrap_or_default();
            if name == "mean" {
                continue;
            }
            let row = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(file, n, format!("bad rank {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            experiments.push(name.to_string());
            ranks.push(row);
        }
        Self::from_ranks(methods, experiments, ranks)
    }
}

/// Ranks each row of `scores` (1 = best), averaging ranks over ties.
pub fn rank_methods(
    methods: Vec<String>,
    experiments: Vec<String>,
    scores: &[Vec<f64>],
    higher_is_better: bool,
) -> Result<RankTable> {
    let mut ranks = Vec::with_capacity(scores.len());
    for row in scores {
        if row.len() != methods.len() {
            return Err(Error::DimensionMismatch {
                expected: methods.len(),
                got: row.len(),
            });
        }
        if row.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| {
            let c = row[a].total_cmp(&row[b]);
            if higher_is_better {
                c.reverse()
            } else {
                c
            }
        });
        let mut r = vec![0.0; row.len()];
        let mut i = 0;
        while i < order.len() {
            let mut k = i;
            while k + 1 < order.len() && row[order[k + 1]] == row[order[i]] {
                k += 1;
            }
            let avg = (i + k) as f64 / 2.0 + 1.0;
            for &o in &order[i..=k] {
                r[o] = avg;
            }
            i = k + 1;
        }
        ranks.push(r);
    }
    RankTable::from_ranks(methods, experiments, ranks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi_square: f64,
    pub f_f: f64,
    pub df1: f64,
    pub df2: f64,
    /// Upper tail of `F(df1, df2)` at `f_f`; `None` when `f_f` is not finite.
    pub p_value: Option<f64>,
}

/// Friedman statistic from mean ranks.
pub fn friedman_chi_square(mean_ranks: &[f64], experiments: usize) -> Result<f64> {
    let h = mean_ranks.len();
    if h < 2 || experiments < 2 {
        return Err(Error::invalid(format!(
            "Friedman test needs at least 2 methods and 2 experiments, got {h} and {experiments}"
        )));
    }
    let (h, u) = (h as f64, experiments as f64);
    let sum_sq: f64 = mean_ranks.iter().map(|v| v * v).sum();
    Ok(12.0 * u / (h * (h + 1.0)) * (sum_sq - h * (h + 1.0).powi(2) / 4.0))
}

/// Iman-Davenport correction of a Friedman statistic.
pub fn iman_davenport(chi_square: f64, methods: usize, experiments: usize) -> Result<f64> {
    if methods < 2 || experiments < 2 {
        return Err(Error::invalid(
            "Iman-Davenport needs at least 2 methods and 2 experiments",
        ));
    }
    let (h, u) = (methods as f64, experiments as f64);
    let denom = u * (h - 1.0) - chi_square;
    if denom <= 0.0 {
        // all experiments rank the methods identically
        return Ok(f64::INFINITY);
    }
    Ok((u - 1.0) * chi_square / denom)
}

pub fn friedman(table: &RankTable) -> Result<FriedmanResult> {
    let (h, u) = (table.method_count(), table.experiment_count());
    let chi_square = friedman_chi_square(&table.mean_ranks, u)?;
    let f_f = iman_davenport(chi_square, h, u)?;
    let df1 = (h - 1) as f64;
    let df2 = ((h - 1) * (u - 1)) as f64;
    let p_value = if f_f.is_finite() {
        let dist = FisherSnedecor::new(df1, df2).map_err(|e| Error::invalid(e.to_string()))?;
        Some(dist.sf(f_f.max(0.0)))
    } else {
        None
    };
    Ok(FriedmanResult {
        chi_square,
        f_f,
        df1,
        df2,
        p_value,
    })
}

/// Nemenyi critical difference between mean ranks.
pub fn nemenyi_cd(methods: usize, experiments: usize, q_alpha: f64) -> Result<f64> {
    if methods < 2 || experiments < 1 || !q_alpha.is_finite() || q_alpha < 0.0 {
        return Err(Error::invalid(format!(
            "critical difference needs h >= 2, U >= 1 and q >= 0 (got {methods}, {experiments}, {q_alpha})"
        )));
    }
    let (h, u) = (methods as f64, experiments as f64);
    Ok(q_alpha * (h * (h + 1.0) / (6.0 * u)).sqrt())
}

const Q_ALPHA_005: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_ALPHA_010: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];
const Q_ALPHA_025: [f64; 9] = [1.150, 1.590, 1.850, 2.033, 2.174, 2.287, 2.382, 2.463, 2.534];

/// Two-tailed Nemenyi `q_α` (studentized range over √2) for `h` in `2..=10`
/// and `α` in {0.05, 0.10, 0.25}.
pub fn q_alpha(methods: usize, alpha: f64) -> Result<f64> {
    let row = if (alpha - 0.05).abs() < 1e-12 {
        &Q_ALPHA_005
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_ALPHA_010
    } else if (alpha - 0.25).abs() < 1e-12 {
        &Q_ALPHA_025
    } else {
        return Err(Error::invalid(format!(
            "no q table for alpha {alpha}; use 0.05, 0.10 or 0.25"
        )));
    };
    if !(2..=10).contains(&methods) {
        return Err(Error::OutOfRange {
            index: methods,
            valid: "2..=10 methods".into(),
        });
    }
    Ok(row[methods - 2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub class: String,
    pub method: String,
    pub dont_care: usize,
    pub overlap: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "class,method,dont_care,overlap,accuracy";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                r.class, r.method, r.dont_care, r.overlap, r.accuracy
            );
        }
        out
    }

    pub fn methods(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.method) {
                seen.push(r.method.clone());
            }
        }
        seen
    }

    /// Accuracies per `(class, dont_care)` experiment, one column per method
    /// in first-appearance order. Experiments missing a method are skipped.
    pub fn accuracy_matrix(&self) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
        let methods = self.methods();
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &self.rows {
            let k = (r.class.clone(), r.dont_care);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let mut names = Vec::new();
        let mut scores = Vec::new();
        for (class, dc) in keys {
            let row: Option<Vec<f64>> = methods
                .iter()
                .map(|m| {
                    self.rows
                        .iter()
                        .find(|r| r.class == class && r.dont_care == dc && &r.method == m)
                        .map(|r| r.accuracy)
                })
                .collect();
            if let Some(row) = row {
                names.push(format!("{class}@dc{dc}"));
                scores.push(row);
            }
        }
        (methods, names, scores)
    }

    pub fn rank_table(&self) -> Result<RankTable> {
        let (methods, names, scores) = self.accuracy_matrix();
        rank_methods(methods, names, &scores, true)
    }
}

/// Friedman and Nemenyi figures as an indented `key: value` block.
pub fn summary_block(table: &RankTable) -> Result<String> {
    let mut out = String::from("statistics:\n");
    let _ = writeln!(out, "  methods: {}", table.method_count());
    let _ = writeln!(out, "  experiments: {}", table.experiment_count());
    out.push_str("  mean_ranks:\n");
    for (m, r) in table.methods.iter().zip(&table.mean_ranks) {
        let _ = writeln!(out, "    {m}: {r:.4}");
    }
    if table.experiment_count() >= 2 && table.method_count() >= 2 {
        let f = friedman(table)?;
        let _ = writeln!(out, "  friedman_chi_square: {:.4}", f.chi_square);
        let _ = writeln!(out, "  iman_davenport_f: {:.4}", f.f_f);
        let _ = writeln!(out, "  f_degrees_of_freedom: [{}, {}]", f.df1, f.df2);
        match f.p_value {
            Some(p) => {
                let _ = writeln!(out, "  p_value: {p:.6}");
            }
            None => out.push_str("  p_value: null\n"),
        }
    }
    if (2..=10).contains(&table.method_count()) {
        out.push_str("  critical_difference:\n");
        for alpha in [0.05, 0.10, 0.25] {
            let q = q_alpha(table.method_count(), alpha)?;
            let cd = nemenyi_cd(table.method_count(), table.experiment_count(), q)?;
            let _ = writeln!(out, "    alpha_{alpha:.2}: {cd:.4}");
        }
    }
    Ok(out)
}
