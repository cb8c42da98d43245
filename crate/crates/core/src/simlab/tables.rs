use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DgpKind, DgpSpec, PSource};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableId {
    #[serde(rename = "1")]
    T1,
    #[serde(rename = "2")]
    T2,
    #[serde(rename = "3")]
    T3,
    B1,
    B2,
    B3,
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "1" => Ok(TableId::T1),
            "2" => Ok(TableId::T2),
            "3" => Ok(TableId::T3),
            "B1" => Ok(TableId::B1),
            "B2" => Ok(TableId::B2),
            "B3" => Ok(TableId::B3),
            _ => Err(Error::InvalidParameter(format!("unknown table {s:?}"))),
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableId::T1 => "1",
            TableId::T2 => "2",
            TableId::T3 => "3",
            TableId::B1 => "B1",
            TableId::B2 => "B2",
            TableId::B3 => "B3",
        })
    }
}

/// Percentage with the parenthesized figure next to it: an average final
/// margin (tables 1, B1-B3) or the average percentage of data used
/// (table 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassReference {
    pub percent: f64,
    pub paren: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyReference {
    pub correct: Option<ClassReference>,
    pub incorrect: Option<ClassReference>,
    pub no_call: Option<ClassReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyCell {
    pub spec: DgpSpec,
    pub delta: Option<f64>,
    pub reference: AccuracyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmseReference {
    pub percent: f64,
    /// The reference only states an upper bound.
    pub upper_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseCell {
    pub kind: DgpKind,
    pub checkpoint: usize,
    pub reference: RmseReference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum TableSpec {
    Accuracy {
        id: TableId,
        title: &'static str,
        cells: Vec<AccuracyCell>,
    },
    Rmse {
        id: TableId,
        title: &'static str,
        categories: usize,
        rounds: usize,
        n: u64,
        cells: Vec<RmseCell>,
    },
}

type Row = (usize, usize, u64, Option<(f64, f64)>, Option<(f64, f64)>, Option<(f64, f64)>);

fn class(v: Option<(f64, f64)>) -> Option<ClassReference> {
    v.map(|(percent, paren)| ClassReference {
        percent,
        paren: Some(paren),
    })
}

fn accuracy_cells(kind: DgpKind, rows: &[Row]) -> Vec<AccuracyCell> {
    rows.iter()
        .map(|&(c, k, n, a, b, d)| AccuracyCell {
            spec: DgpSpec::new(kind, c, k, n),
            delta: None,
            reference: AccuracyReference {
                correct: class(a),
                incorrect: class(b),
                no_call: class(d),
            },
        })
        .collect()
}

const B1: [Row; 16] = [
    (3, 25, 100, Some((95.8, 1158.0)), Some((0.4, 91.0)), Some((3.8, 120.0))),
    (3, 25, 1000, Some((99.2, 11894.0)), Some((0.2, 255.0)), Some((0.6, 399.0))),
    (3, 25, 5000, Some((98.62, 54870.0)), Some((0.92, 454.0)), Some((0.46, 1108.0))),
    (3, 25, 50000, Some((100.0, 549287.0)), None, None),
    (3, 50, 100, Some((95.75, 2384.0)), Some((0.75, 104.0)), Some((3.5, 125.0))),
    (3, 50, 1000, Some((99.0, 23425.0)), None, Some((1.0, 346.0))),
    (3, 50, 5000, Some((99.5, 114905.0)), None, Some((0.5, 1581.0))),
    (3, 50, 50000, Some((100.0, 1139338.0)), None, None),
    (5, 25, 100, Some((93.75, 744.0)), Some((2.25, 27.0)), Some((4.0, 81.0))),
    (5, 25, 1000, Some((98.25, 7395.0)), Some((0.25, 38.0)), Some((1.5, 368.0))),
    (5, 25, 5000, Some((98.75, 38799.0)), Some((0.25, 330.0)), Some((1.0, 788.0))),
    (5, 25, 50000, Some((99.75, 373575.0)), None, Some((0.25, 2292.0))),
    (5, 50, 100, Some((94.5, 1584.0)), Some((1.5, 73.0)), Some((4.0, 168.0))),
    (5, 50, 1000, Some((98.25, 14388.0)), Some((0.5, 516.0)), Some((1.25, 378.0))),
    (5, 50, 5000, Some((99.5, 71562.0)), Some((0.25, 1461.0)), Some((0.25, 858.0))),
    (5, 50, 50000, Some((100.0, 730428.0)), None, None),
];

const B2: [Row; 16] = [
    (3, 25, 100, Some((72.6, 626.0)), Some((8.0, 204.0)), Some((19.4, 370.0))),
    (3, 25, 1000, Some((89.6, 9374.0)), Some((2.8, 2174.0)), Some((7.6, 2866.0))),
    (3, 25, 5000, Some((89.6, 54572.0)), Some((3.2, 5723.0)), Some((7.2, 8492.0))),
    (3, 25, 50000, Some((98.2, 551259.0)), Some((1.0, 20745.0)), Some((0.8, 40335.0))),
    (3, 50, 100, Some((77.5, 1227.0)), Some((6.75, 355.0)), Some((15.75, 480.0))),
    (3, 50, 1000, Some((88.0, 18912.0)), Some((4.0, 3189.0)), Some((8.0, 3772.0))),
    (3, 50, 5000, Some((93.25, 100611.0)), Some((3.75, 7688.0)), Some((3.0, 15393.0))),
    (3, 50, 50000, Some((96.75, 1098195.0)), Some((1.0, 41312.0)), Some((2.25, 96337.0))),
    (5, 25, 100, Some((62.75, 298.0)), Some((13.75, 146.0)), Some((23.5, 153.0))),
    (5, 25, 1000, Some((77.5, 5681.0)), Some((8.75, 1067.0)), Some((13.75, 1758.0))),
    (5, 25, 5000, Some((85.75, 33422.0)), Some((5.5, 4861.0)), Some((8.75, 7226.0))),
    (5, 25, 50000, Some((93.0, 371349.0)), Some((2.0, 32987.0)), Some((5.0, 50911.0))),
    (5, 50, 100, Some((70.0, 605.0)), Some((8.25, 205.0)), Some((21.75, 314.0))),
    (5, 50, 1000, Some((84.75, 10986.0)), Some((4.75, 1286.0)), Some((10.5, 2891.0))),
    (5, 50, 5000, Some((91.75, 67476.0)), Some((3.25, 6624.0)), Some((5.0, 12241.0))),
    (5, 50, 50000, Some((95.5, 720905.0)), Some((2.25, 71467.0)), Some((2.25, 77728.0))),
];

const B3: [Row; 16] = [
    (3, 25, 100, Some((43.0, 230.0)), Some((23.0, 123.0)), Some((34.0, 163.0))),
    (3, 25, 1000, Some((49.8, 3558.0)), Some((20.2, 1948.0)), Some((30.0, 2425.0))),
    (3, 25, 5000, Some((58.2, 22490.0)), Some((15.0, 10192.0)), Some((26.8, 14920.0))),
    (3, 25, 50000, Some((73.8, 323688.0)), Some((8.8, 100474.0)), Some((17.4, 187450.0))),
    (3, 50, 100, Some((43.2, 414.0)), Some((18.0, 258.0)), Some((38.8, 297.0))),
    (3, 50, 1000, Some((56.2, 6696.0)), Some((13.4, 3131.0)), Some((30.4, 4367.0))),
    (3, 50, 5000, Some((64.6, 45409.0)), Some((7.2, 16465.0)), Some((28.2, 27686.0))),
    (3, 50, 50000, Some((79.4, 700278.0)), Some((5.2, 141302.0)), Some((15.4, 270719.0))),
    (5, 25, 100, Some((40.0, 91.0)), Some((26.0, 64.0)), Some((34.0, 47.0))),
    (5, 25, 1000, Some((42.6, 1323.0)), Some((26.2, 772.0)), Some((31.2, 755.0))),
    (5, 25, 5000, Some((51.0, 8658.0)), Some((24.0, 5588.0)), Some((25.0, 5423.0))),
    (5, 25, 50000, Some((65.6, 154765.0)), Some((10.6, 80310.0)), Some((23.8, 81664.0))),
    (5, 50, 100, Some((42.4, 154.0)), Some((22.0, 106.0)), Some((35.6, 110.0))),
    (5, 50, 1000, Some((45.0, 2439.0)), Some((23.2, 1423.0)), Some((31.8, 1536.0))),
    (5, 50, 5000, Some((55.8, 18972.0)), Some((14.2, 9671.0)), Some((30.0, 10822.0))),
    (5, 50, 50000, Some((70.0, 305700.0)), Some((8.8, 79016.0)), Some((21.2, 184868.0))),
];

/// (δ, correct, data used, incorrect, data used, no call)
type GapRow = (f64, f64, f64, Option<(f64, f64)>, Option<f64>);

const T2: [(DgpKind, [GapRow; 4]); 3] = [
    (
        DgpKind::Dgp1,
        [
            (0.01, 96.0, 14.0, Some((4.0, 13.0)), None),
            (0.05, 100.0, 12.0, None, None),
            (0.10, 100.0, 12.0, None, None),
            (0.25, 100.0, 12.0, None, None),
        ],
    ),
    (
        DgpKind::Dgp2,
        [
            (0.01, 64.5, 22.0, Some((30.5, 14.0)), Some(5.0)),
            (0.05, 76.0, 22.0, Some((22.5, 14.0)), Some(1.5)),
            (0.10, 89.5, 16.0, Some((10.0, 14.0)), Some(0.5)),
            (0.25, 100.0, 12.0, None, None),
        ],
    ),
    (
        DgpKind::Dgp3,
        [
            (0.01, 48.0, 26.0, Some((34.0, 14.0)), Some(18.0)),
            (0.05, 63.5, 24.0, Some((21.0, 13.0)), Some(15.5)),
            (0.10, 68.0, 22.0, Some((16.5, 15.0)), Some(15.5)),
            (0.25, 74.5, 16.0, Some((8.5, 13.0)), Some(17.0)),
        ],
    ),
];

/// (checkpoint, DGP1, DGP2, DGP3); a negative DGP1 entry marks "below |v|".
const T3: [(usize, f64, f64, f64); 5] = [
    (5, 0.06, 1.95, 4.38),
    (15, -0.01, 0.95, 2.21),
    (25, -0.01, 0.63, 1.46),
    (35, -0.01, 0.41, 0.92),
    (45, -0.01, 0.22, 0.51),
];

/// Layout and reference values of a replication table.
pub fn table(id: TableId) -> TableSpec {
    let detail = |kind| accuracy_cells(kind, match kind {
        DgpKind::Dgp1 => &B1,
        DgpKind::Dgp2 => &B2,
        DgpKind::Dgp3 => &B3,
    });
    let title = "Accuracy of predicting the category with maximum count (average final margin)";
    match id {
        TableId::T1 => TableSpec::Accuracy {
            id,
            title,
            cells: [DgpKind::Dgp1, DgpKind::Dgp2, DgpKind::Dgp3]
                .into_iter()
                .flat_map(|k| detail(k).into_iter().filter(|c| c.spec.categories == 5 && c.spec.rounds == 50))
                .collect(),
        },
        TableId::B1 => TableSpec::Accuracy { id, title, cells: detail(DgpKind::Dgp1) },
        TableId::B2 => TableSpec::Accuracy { id, title, cells: detail(DgpKind::Dgp2) },
        TableId::B3 => TableSpec::Accuracy { id, title, cells: detail(DgpKind::Dgp3) },
        TableId::T2 => TableSpec::Accuracy {
            id,
            title: "Accuracy of predicting the category with maximum count by gap between the top two (percentage of data used)",
            cells: T2
                .iter()
                .flat_map(|(kind, rows)| {
                    rows.iter().map(move |&(delta, ok, used, bad, none)| AccuracyCell {
                        spec: DgpSpec::new(*kind, 3, 25, 5000).with_p(PSource::DeltaGap(delta)),
                        delta: Some(delta),
                        reference: AccuracyReference {
                            correct: Some(ClassReference { percent: ok, paren: Some(used) }),
                            incorrect: class(bad),
                            no_call: none.map(|percent| ClassReference { percent, paren: None }),
                        },
                    })
                })
                .collect(),
        },
        TableId::T3 => TableSpec::Rmse {
            id,
            title: "RMSE (%) of predicted final cumulative proportions",
            categories: 5,
            rounds: 50,
            n: 50_000,
            cells: T3
                .iter()
                .flat_map(|&(checkpoint, a, b, c)| {
                    [(DgpKind::Dgp1, a), (DgpKind::Dgp2, b), (DgpKind::Dgp3, c)]
                        .into_iter()
                        .map(move |(kind, v)| RmseCell {
                            kind,
                            checkpoint,
                            reference: RmseReference {
                                percent: v.abs(),
                                upper_bound: v < 0.0,
                            },
                        })
                })
                .collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        for id in [TableId::B1, TableId::B2, TableId::B3] {
            match table(id) {
                TableSpec::Accuracy { cells, .. } => assert_eq!(cells.len(), 16),
                _ => panic!(),
            }
        }
        match table(TableId::T1) {
            TableSpec::Accuracy { cells, .. } => {
                assert_eq!(cells.len(), 12);
                assert!(cells.iter().all(|c| c.spec.categories == 5 && c.spec.rounds == 50));
            }
            _ => panic!(),
        }
        match table(TableId::T2) {
            TableSpec::Accuracy { cells, .. } => assert_eq!(cells.len(), 12),
            _ => panic!(),
        }
        match table(TableId::T3) {
            TableSpec::Rmse { cells, .. } => assert_eq!(cells.len(), 15),
            _ => panic!(),
        }
    }

    #[test]
    fn reference_rows_sum_to_hundred() {
        for id in [TableId::T1, TableId::T2, TableId::B1, TableId::B2, TableId::B3] {
            let TableSpec::Accuracy { cells, .. } = table(id) else { panic!() };
            for c in cells {
                let r = c.reference;
                let total: f64 = [r.correct, r.incorrect, r.no_call]
                    .iter()
                    .flatten()
                    .map(|v| v.percent)
                    .sum();
                assert!((total - 100.0).abs() < 0.05, "{id} {:?}", c.spec);
            }
        }
    }

    #[test]
    fn parse_ids() {
        assert_eq!("b2".parse::<TableId>().unwrap(), TableId::B2);
        assert_eq!("3".parse::<TableId>().unwrap().to_string(), "3");
        assert!("7".parse::<TableId>().is_err());
    }
}
