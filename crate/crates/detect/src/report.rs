//! JSON and CSV reports. CSV tables mirror the paper's layouts: accuracy in
//! percent with two decimals, error counts by kind.

use std::path::Path;

use gme_core::pipeline::{ArmSummary, EpochRecord, EvalReport, RunReport};
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::format::write_atomic;

pub fn arm_name(se: bool) -> &'static str {
    if se {
        "CNN-SE"
    } else {
        "CNN"
    }
}

pub fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Row labels of the error table.
pub const FN_ROW: &str = "entangled predict non-entangled";
pub const FP_ROW: &str = "non-entangled predict entangled";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalJson {
    pub qubits: usize,
    pub arm: String,
    pub accuracy: f64,
    pub total: usize,
    pub correct: usize,
    pub fn_count: usize,
    pub fp_count: usize,
    pub entangled_total: usize,
    pub entangled_correct: usize,
    pub not_detected_total: usize,
    pub not_detected_correct: usize,
}

impl EvalJson {
    pub fn new(qubits: usize, se: bool, r: &EvalReport) -> Self {
        Self {
            qubits,
            arm: arm_name(se).to_string(),
            accuracy: r.accuracy(),
            total: r.total,
            correct: r.correct,
            fn_count: r.fn_count,
            fp_count: r.fp_count,
            entangled_total: r.entangled_total,
            entangled_correct: r.entangled_correct,
            not_detected_total: r.not_detected_total,
            not_detected_correct: r.not_detected_correct,
        }
    }
}

#[derive(Serialize)]
struct EvalRow<'a> {
    qubits: usize,
    arm: &'a str,
    accuracy_pct: String,
    #[serde(rename = "fn")]
    fn_count: usize,
    #[serde(rename = "fp")]
    fp_count: usize,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

fn raw_csv(records: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

pub fn json_bytes<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

pub fn eval_csv(rows: &[EvalJson]) -> CliResult<Vec<u8>> {
    csv_bytes(rows.iter().map(|r| EvalRow {
        qubits: r.qubits,
        arm: &r.arm,
        accuracy_pct: pct(r.accuracy),
        fn_count: r.fn_count,
        fp_count: r.fp_count,
    }))
}

pub fn history_csv(history: &[EpochRecord]) -> CliResult<Vec<u8>> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        loss: f64,
        data_loss: f64,
        accuracy: f64,
    }
    csv_bytes(history.iter().map(|h| Row {
        epoch: h.epoch + 1,
        loss: h.loss,
        data_loss: h.data_loss,
        accuracy: h.accuracy,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunJson {
    pub seed: u64,
    pub arm: String,
    pub eval: EvalJson,
    pub history: Vec<(usize, f64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmJson {
    pub arm: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub runs: Vec<RunJson>,
}

impl ArmJson {
    pub fn new(qubits: usize, s: &ArmSummary) -> Self {
        Self {
            arm: arm_name(s.se).to_string(),
            mean_accuracy: s.mean,
            std_accuracy: s.std,
            runs: s.runs.iter().map(|r| run_json(qubits, r)).collect(),
        }
    }
}

pub fn run_json(qubits: usize, r: &RunReport) -> RunJson {
    RunJson {
        seed: r.seed,
        arm: arm_name(r.se).to_string(),
        eval: EvalJson::new(qubits, r.se, &r.eval),
        history: r.history.iter().map(|h| (h.epoch + 1, h.loss, h.data_loss, h.accuracy)).collect(),
    }
}

/// Accuracy table: one row per qubit count, mean (std) per arm and the SE delta.
pub fn table1_csv(qubits: usize, arms: &[ArmSummary]) -> CliResult<Vec<u8>> {
    let mut header = vec!["qubits".to_string()];
    let mut row = vec![qubits.to_string()];
    for a in arms {
        header.push(arm_name(a.se).to_string());
        header.push(format!("{}_std", arm_name(a.se)));
        row.push(pct(a.mean));
        row.push(pct(a.std));
    }
    let cnn = arms.iter().find(|a| !a.se);
    let se = arms.iter().find(|a| a.se);
    if let (Some(c), Some(s)) = (cnn, se) {
        header.push("delta".to_string());
        row.push(format!("{:+.2}", 100.0 * (s.mean - c.mean)));
    }
    raw_csv(&[header, row])
}

/// Error table: rows are the two error kinds, one column per arm, counts
/// summed over the runs of that arm.
pub fn table2_csv(qubits: usize, arms: &[ArmSummary]) -> CliResult<Vec<u8>> {
    let mut header = vec!["error".to_string()];
    let mut fn_row = vec![FN_ROW.to_string()];
    let mut fp_row = vec![FP_ROW.to_string()];
    for a in arms {
        header.push(format!("{qubits}q {}", arm_name(a.se)));
        fn_row.push(a.runs.iter().map(|r| r.eval.fn_count).sum::<usize>().to_string());
        fp_row.push(a.runs.iter().map(|r| r.eval.fp_count).sum::<usize>().to_string());
    }
    raw_csv(&[header, fn_row, fp_row])
}

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gme_core::Label;
    use proptest::prelude::*;

    fn report(fn_count: usize, fp_count: usize, correct_each: usize) -> EvalReport {
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..fn_count {
            truth.push(Label::Entangled);
            pred.push(Label::NotDetected);
        }
        for _ in 0..fp_count {
            truth.push(Label::NotDetected);
            pred.push(Label::Entangled);
        }
        for _ in 0..correct_each {
            truth.extend([Label::Entangled, Label::NotDetected]);
            pred.extend([Label::Entangled, Label::NotDetected]);
        }
        EvalReport::from_predictions(&truth, &pred).unwrap()
    }

    #[test]
    fn percent_style() {
        assert_eq!(pct(0.98333333), "98.33");
        assert_eq!(pct(1.0), "100.00");
    }

    #[test]
    fn eval_csv_schema() {
        // 114 of 117 correct
        let rows = [EvalJson::new(4, true, &report(1, 2, 57))];
        let text = String::from_utf8(eval_csv(&rows).unwrap()).unwrap();
        assert_eq!(text, "qubits,arm,accuracy_pct,fn,fp\n4,CNN-SE,97.44,1,2\n");
    }

    #[test]
    fn error_table_layout() {
        let arms = [
            ArmSummary {
                se: false,
                mean: 0.9,
                std: 0.0,
                runs: vec![RunReport {
                    seed: 1,
                    se: false,
                    eval: report(3, 4, 10),
                    history: vec![],
                }],
            },
            ArmSummary {
                se: true,
                mean: 0.95,
                std: 0.0,
                runs: vec![RunReport {
                    seed: 1,
                    se: true,
                    eval: report(1, 0, 10),
                    history: vec![],
                }],
            },
        ];
        let t2 = String::from_utf8(table2_csv(5, &arms).unwrap()).unwrap();
        assert_eq!(
            t2,
            format!("error,5q CNN,5q CNN-SE\n{FN_ROW},3,1\n{FP_ROW},4,0\n")
        );
        let t1 = String::from_utf8(table1_csv(5, &arms).unwrap()).unwrap();
        assert_eq!(t1, "qubits,CNN,CNN_std,CNN-SE,CNN-SE_std,delta\n5,90.00,0.00,95.00,0.00,+5.00\n");
    }

    proptest! {
        #[test]
        fn tables_account_for_every_sample(f in 0usize..50, p in 0usize..50, c in 0usize..50) {
            let r = report(f, p, c);
            prop_assert!(r.is_consistent());
            let j = EvalJson::new(3, false, &r);
            prop_assert_eq!(j.fn_count + j.fp_count + j.correct, j.total);
        }
    }
}
