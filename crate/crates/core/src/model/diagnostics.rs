use crate::error::{Error, Result};

/// Minimum chain length accepted by [`gelman_rubin`].
pub const MIN_CHAIN_LEN: usize = 10;

/// Potential scale reduction factor of one scalar summary.
///
/// With `m` chains of common length `L` (longer chains are truncated),
/// `W` the mean within-chain variance and `B` = `L` × the variance of the
/// chain means, `R̂ = √(((L−1)/L · W + B/L) / W)`. Identical constant
/// chains give 1; constant but distinct chains give `+∞`.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "R-hat needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if len < MIN_CHAIN_LEN {
        return Err(Error::InvalidParameter(format!(
            "R-hat needs chains of length >= {MIN_CHAIN_LEN}, shortest has {len}"
        )));
    }
    let m = chains.len() as f64;
    let l = len as f64;
    let mut means = Vec::with_capacity(chains.len());
    let mut within = 0.0;
    for chain in chains {
        let xs = &chain[..len];
        let mean = xs.iter().sum::<f64>() / l;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (l - 1.0);
        means.push(mean);
        within += var;
    }
    let w = within / m;
    let grand = means.iter().sum::<f64>() / m;
    let b = l * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);

    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((((l - 1.0) / l * w + b / l) / w).sqrt())
}
