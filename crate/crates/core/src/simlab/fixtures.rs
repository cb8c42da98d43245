use serde::Serialize;

use super::{generate_dataset, DgpKind, DgpSpec, PSource};
use crate::error::Result;
use crate::stochastics::RngStream;
use crate::vst::BatchSeries;

/// Synthetic count series with known outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fixture {
    pub name: &'static str,
    pub p: Vec<f64>,
    pub series: BatchSeries,
    pub winners: Vec<usize>,
}

/// Three categories at (0.7, 0.2, 0.1), no perturbation, 25 rounds of 5000.
pub fn landslide_fixture(rng: &mut RngStream) -> Result<Fixture> {
    let spec = DgpSpec::new(DgpKind::Dgp1, 3, 25, 5000).with_p(PSource::Fixed(vec![0.7, 0.2, 0.1]));
    let ds = generate_dataset(&spec, rng)?;
    Ok(Fixture {
        name: "landslide",
        winners: ds.winners(),
        p: ds.p,
        series: ds.series,
    })
}

/// Correlated-perturbation rounds at (0.45, 0.45, 0.10), with the first
/// two columns swapped in some rounds so that the final lead is as small
/// as a greedy pass (largest round differences first) can make it.
pub fn near_tie_fixture(rng: &mut RngStream) -> Result<Fixture> {
    let spec =
        DgpSpec::new(DgpKind::Dgp3, 3, 25, 5000).with_p(PSource::Fixed(vec![0.45, 0.45, 0.10]));
    let ds = generate_dataset(&spec, rng)?;
    let rounds = ds.series.rounds();
    let diff = |j: usize| rounds[j].counts[0] as i64 - rounds[j].counts[1] as i64;
    let mut order: Vec<usize> = (0..rounds.len()).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(diff(j).abs()));
    let mut swap = vec![false; rounds.len()];
    let mut lead = 0i64;
    for j in order {
        let d = diff(j);
        if (lead - d).abs() < (lead + d).abs() {
            swap[j] = true;
            lead -= d;
        } else {
            lead += d;
        }
    }
    let mut out = BatchSeries::new(3)?;
    for (b, &s) in rounds.iter().zip(&swap) {
        let mut counts = b.counts.clone();
        if s {
            counts.swap(0, 1);
        }
        out.push_checked(b.n, counts)?;
    }
    let winners = super::top_categories(&out.cumulative(out.len()));
    Ok(Fixture {
        name: "near_tie",
        p: ds.p,
        series: out,
        winners,
    })
}
