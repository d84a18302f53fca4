//! Class-wise visual prototypes and the losses that distill them into the
//! generator's outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor, Var};

/// Mean training feature of each seen class.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualPrototypeTable {
    prototypes: BTreeMap<usize, Vec<f64>>,
    counts: BTreeMap<usize, usize>,
    dim: usize,
}

impl VisualPrototypeTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, class: usize) -> Option<&[f64]> {
        self.prototypes.get(&class).map(|v| v.as_slice())
    }

    pub fn count(&self, class: usize) -> Option<usize> {
        self.counts.get(&class).copied()
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.prototypes.keys().copied()
    }

    /// Prototype rows for a batch of labels, B×d.
    pub fn gather(&self, labels: &[usize]) -> Result<Tensor> {
        let mut out = Array2::zeros((labels.len(), self.dim));
        for (i, &c) in labels.iter().enumerate() {
            let p = self
                .get(c)
                .ok_or_else(|| Error::Usage(format!("class {c} has no visual prototype")))?;
            out.row_mut(i).assign(&ArrayView1::from(p));
        }
        Ok(out)
    }

    /// Plain-text export: one line per class, `class v_1 ... v_d`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (c, v) in &self.prototypes {
            write!(s, "{c}").unwrap();
            for x in v {
                write!(s, " {x:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// v^c = mean of the rows labelled c, for every class in `seen_classes`.
pub fn mine_prototypes(features: &Tensor, labels: &[usize], seen_classes: &[usize]) -> Result<VisualPrototypeTable> {
    if features.nrows() != labels.len() {
        return Err(Error::Config(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let d = features.ncols();
    let mut sums: BTreeMap<usize, Vec<f64>> = seen_classes.iter().map(|&c| (c, vec![0.0; d])).collect();
    let mut counts: BTreeMap<usize, usize> = seen_classes.iter().map(|&c| (c, 0)).collect();
    for (row, &y) in features.rows().into_iter().zip(labels) {
        if let Some(acc) = sums.get_mut(&y) {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
            *counts.get_mut(&y).unwrap() += 1;
        }
    }
    for (&c, &n) in &counts {
        if n == 0 {
            return Err(Error::Config(format!("seen class {c} has no training samples")));
        }
    }
    let mut prototypes = BTreeMap::new();
    for (c, mut acc) in sums {
        let n = counts[&c] as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numeric(format!(
                "visual prototype of class {c} has norm {norm} ({} samples); cosine distillation is undefined",
                counts[&c]
            )));
        }
        prototypes.insert(c, acc);
    }
    Ok(VisualPrototypeTable {
        prototypes,
        counts,
        dim: d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CueVariant {
    /// Mean cosine distance to the class prototype.
    #[default]
    CosinePd,
    /// KL(softmax(v) ‖ softmax(x)) over feature coordinates.
    Kl,
    /// Mean absolute coordinate difference.
    L1,
}

impl FromStr for CueVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pd" | "cosine" | "cosine-pd" => Ok(CueVariant::CosinePd),
            "kl" => Ok(CueVariant::Kl),
            "l1" => Ok(CueVariant::L1),
            other => Err(Error::Config(format!("unknown cue loss '{other}' (pd, kl, l1)"))),
        }
    }
}

impl std::fmt::Display for CueVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CueVariant::CosinePd => "pd",
            CueVariant::Kl => "kl",
            CueVariant::L1 => "l1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueConfig {
    pub lambda_pd: f64,
    pub variant: CueVariant,
}

impl CueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_pd >= 0.0 && self.lambda_pd.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("lambda_pd must be >= 0, got {}", self.lambda_pd)))
        }
    }
}

fn check_batch(tape: &Tape, x: Var, labels: &[usize], table: &VisualPrototypeTable) -> Result<Tensor> {
    let (rows, cols) = tape.value(x).dim();
    if rows != labels.len() || cols != table.dim() || rows == 0 {
        return Err(Error::Usage(format!(
            "cue loss batch {:?} with {} labels against prototypes of width {}",
            (rows, cols),
            labels.len(),
            table.dim()
        )));
    }
    table.gather(labels)
}

/// (1/B)·Σ (1 − cos(x_i, v^{c_i})). A zero-norm row counts as orthogonal.
pub fn pd_loss_on_tape(tape: &mut Tape, x: Var, labels: &[usize], table: &VisualPrototypeTable) -> Result<Var> {
    let protos = check_batch(tape, x, labels, table)?;
    let zero_rows = tape
        .value(x)
        .rows()
        .into_iter()
        .filter(|r| r.iter().all(|v| *v == 0.0))
        .count();
    if zero_rows > 0 {
        log::warn!("{zero_rows} zero-norm synthesized feature(s); treating as orthogonal to their prototype");
    }
    let inv_pnorm = protos
        .rows()
        .into_iter()
        .map(|r| 1.0 / r.dot(&r).sqrt())
        .collect::<Vec<_>>();
    let inv_pnorm = tape.constant(Array2::from_shape_vec((labels.len(), 1), inv_pnorm).expect("column"));
    let v = tape.constant(protos);
    let xv = tape.mul(x, v);
    let dot = tape.sum_cols(xv);
    let xn = tape.row_norms(x);
    let inv_xn = tape.safe_recip(xn);
    let scaled = tape.mul(dot, inv_xn);
    let cos = tape.mul(scaled, inv_pnorm);
    let cos = tape.clamp_value(cos, -1.0, 1.0);
    let one_minus = tape.neg(cos);
    let terms = tape.add_scalar(one_minus, 1.0);
    Ok(tape.mean_all(terms))
}

/// Mean over rows of KL(softmax(v) ‖ softmax(x)), temperature 1.
pub fn kl_loss_on_tape(tape: &mut Tape, x: Var, labels: &[usize], table: &VisualPrototypeTable) -> Result<Var> {
    let protos = check_batch(tape, x, labels, table)?;
    let log_p = crate::nn::softmax::log_softmax_rows(&protos);
    let p = log_p.mapv(f64::exp);
    let log_p = tape.constant(log_p);
    let p = tape.constant(p);
    let log_q = tape.log_softmax_rows(x);
    let diff = tape.sub(log_p, log_q);
    let weighted = tape.mul(p, diff);
    let per_row = tape.sum_cols(weighted);
    let per_row = tape.clamp_value(per_row, 0.0, f64::INFINITY);
    Ok(tape.mean_all(per_row))
}

/// Mean over rows and coordinates of |x − v|.
pub fn l1_loss_on_tape(tape: &mut Tape, x: Var, labels: &[usize], table: &VisualPrototypeTable) -> Result<Var> {
    let protos = check_batch(tape, x, labels, table)?;
    let v = tape.constant(protos);
    let diff = tape.sub(x, v);
    let a = tape.abs(diff);
    Ok(tape.mean_all(a))
}

pub fn cue_loss_on_tape(
    tape: &mut Tape,
    variant: CueVariant,
    x: Var,
    labels: &[usize],
    table: &VisualPrototypeTable,
) -> Result<Var> {
    match variant {
        CueVariant::CosinePd => pd_loss_on_tape(tape, x, labels, table),
        CueVariant::Kl => kl_loss_on_tape(tape, x, labels, table),
        CueVariant::L1 => l1_loss_on_tape(tape, x, labels, table),
    }
}

/// Value and gradient w.r.t. the batch rows of a cue loss.
pub fn cue_loss(variant: CueVariant, x: &Tensor, labels: &[usize], table: &VisualPrototypeTable) -> Result<(f64, Tensor)> {
    let mut tape = Tape::new();
    let xv = tape.var(x.clone());
    let loss = cue_loss_on_tape(&mut tape, variant, xv, labels, table)?;
    let g = tape.grad(loss, &[xv])?[0];
    Ok((tape.scalar(loss), tape.value(g).clone()))
}

pub fn pd_loss(x: &Tensor, labels: &[usize], table: &VisualPrototypeTable) -> Result<(f64, Tensor)> {
    cue_loss(CueVariant::CosinePd, x, labels, table)
}

pub fn kl_variant_loss(x: &Tensor, labels: &[usize], table: &VisualPrototypeTable) -> Result<(f64, Tensor)> {
    cue_loss(CueVariant::Kl, x, labels, table)
}

pub fn l1_variant_loss(x: &Tensor, labels: &[usize], table: &VisualPrototypeTable) -> Result<(f64, Tensor)> {
    cue_loss(CueVariant::L1, x, labels, table)
}

/// L_adv + λ·L_cue on the tape.
pub fn generator_total_on_tape(tape: &mut Tape, adv: Var, cue: Var, config: &CueConfig) -> Var {
    let weighted = tape.scale(cue, config.lambda_pd);
    tape.add(adv, weighted)
}

pub fn generator_total_loss(adv: f64, cue: f64, config: &CueConfig) -> f64 {
    adv + config.lambda_pd * cue
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table(rows: &[(usize, Vec<f64>)]) -> VisualPrototypeTable {
        let d = rows[0].1.len();
        let mut x = Array2::zeros((rows.len(), d));
        let mut labels = vec![];
        for (i, (c, v)) in rows.iter().enumerate() {
            x.row_mut(i).assign(&ArrayView1::from(v.as_slice()));
            labels.push(*c);
        }
        let classes: Vec<usize> = rows.iter().map(|r| r.0).collect();
        mine_prototypes(&x, &labels, &classes).unwrap()
    }

    #[test]
    fn single_sample_prototype_is_the_sample() {
        let t = table(&[(3, vec![1.0, -2.0]), (7, vec![0.5, 0.5])]);
        assert_eq!(t.get(3).unwrap(), &[1.0, -2.0]);
        assert_eq!(t.count(7), Some(1));
    }

    #[test]
    fn midpoint_prototype() {
        let x = array![[0.0, 0.0], [2.0, 4.0]];
        let t = mine_prototypes(&x, &[0, 0], &[0]).unwrap();
        assert_eq!(t.get(0).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn missing_and_zero_norm_classes() {
        let x = array![[1.0, 1.0], [-1.0, -1.0]];
        assert!(matches!(mine_prototypes(&x, &[0, 0], &[0, 1]), Err(Error::Config(_))));
        assert!(matches!(mine_prototypes(&x, &[0, 0], &[0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn pd_exact_cases() {
        let t = table(&[(0, vec![1.0, 2.0, -1.0])]);
        let aligned = pd_loss(&array![[3.0, 6.0, -3.0]], &[0], &t).unwrap().0;
        let anti = pd_loss(&array![[-0.5, -1.0, 0.5]], &[0], &t).unwrap().0;
        let ortho = pd_loss(&array![[2.0, -1.0, 0.0]], &[0], &t).unwrap().0;
        assert!(aligned.abs() < 1e-12);
        assert!((anti - 2.0).abs() < 1e-12);
        assert!((ortho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pd_zero_row_counts_as_orthogonal() {
        let t = table(&[(0, vec![1.0, 0.0])]);
        let (v, g) = pd_loss(&array![[0.0, 0.0]], &[0], &t).unwrap();
        assert_eq!(v, 1.0);
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn kl_cases() {
        let t = table(&[(0, vec![1.0, 0.0])]);
        assert!(kl_variant_loss(&array![[1.0, 0.0]], &[0], &t).unwrap().0.abs() < 1e-15);
        let v = kl_variant_loss(&array![[0.0, 1.0]], &[0], &t).unwrap().0;
        // p = softmax([1, 0]), q = reversed: KL = (p0 − p1)·ln(p0/p1) = tanh(1/2)·1
        let p0 = 1f64.exp() / (1f64.exp() + 1.0);
        let expected = (p0 - (1.0 - p0)) * (p0 / (1.0 - p0)).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.46212).abs() < 1e-5);
    }

    #[test]
    fn l1_cases() {
        let t = table(&[(0, vec![1.0, -3.0])]);
        assert_eq!(l1_variant_loss(&array![[1.0, -3.0]], &[0], &t).unwrap().0, 0.0);
        assert_eq!(l1_variant_loss(&array![[0.0, 0.0]], &[0], &t).unwrap().0, 2.0);
    }

    #[test]
    fn total_loss_arithmetic() {
        let c = CueConfig { lambda_pd: 20.0, variant: CueVariant::CosinePd };
        assert!((generator_total_loss(1.5, 0.2, &c) - 5.5).abs() < 1e-12);
        let off = CueConfig { lambda_pd: 0.0, ..c };
        assert_eq!(generator_total_loss(1.5, 0.2, &off), 1.5);
    }

    #[test]
    fn prototype_text_export() {
        let t = table(&[(2, vec![0.5, -1.0]), (0, vec![3.5, 1.0])]);
        assert_eq!(t.to_text(), "0 3.5 1.0\n2 0.5 -1.0\n");
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("kl".parse::<CueVariant>().unwrap(), CueVariant::Kl);
        assert_eq!("pd".parse::<CueVariant>().unwrap(), CueVariant::CosinePd);
        assert!("mse".parse::<CueVariant>().is_err());
    }
}
