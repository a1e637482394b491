//! Flat `key = value` configuration files layered onto hyperparameters.

use crate::error::{Error, Result};
use crate::model::{Covariance, Hyperparameters, Mean};

/// Keys accepted by [`apply_setting`].
pub const KEYS: [&str; 12] = [
    "q",
    "alpha",
    "alpha0",
    "sigma_theta",
    "mu_eta",
    "sigma_eta",
    "aux_dishes",
    "waic_fraction",
    "iterations",
    "burn_in",
    "thin",
    "seed",
];

/// Parse `key = value` lines. Blank lines, `#`/`;` comments and `[section]`
/// headers are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: k + 1, msg: format!("expected key = value, got '{line}'") })?;
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Parse { line: k + 1, msg: format!("unknown key '{key}'") });
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidHyper(format!("{key}: cannot parse '{value}'")))
}

fn numbers(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| number(key, v.trim())).collect()
}

/// Set one hyperparameter from its text form. Covariances take a scalar
/// `c` for `c I`; `mu_eta` takes a scalar or a comma-separated vector.
pub fn apply_setting(hyper: &mut Hyperparameters, key: &str, value: &str) -> Result<()> {
    match key {
        "q" => hyper.q = number(key, value)?,
        "alpha" => hyper.alpha = number(key, value)?,
        "alpha0" => hyper.alpha0 = Some(number(key, value)?),
        "sigma_theta" => hyper.sigma_theta = Covariance::ScaledIdentity(number(key, value)?),
        "sigma_eta" => hyper.sigma_eta = Covariance::ScaledIdentity(number(key, value)?),
        "mu_eta" => {
            let v = numbers(key, value)?;
            hyper.mu_eta = if v.len() == 1 { Mean::Constant(v[0]) } else { Mean::Vector(v) };
        }
        "aux_dishes" => hyper.aux_dishes = number(key, value)?,
        "waic_fraction" => hyper.waic_fraction = number(key, value)?,
        "iterations" => hyper.mcmc.iterations = number(key, value)?,
        "burn_in" => hyper.mcmc.burn_in = number(key, value)?,
        "thin" => hyper.mcmc.thin = number(key, value)?,
        "seed" => hyper.mcmc.seed = number(key, value)?,
        other => return Err(Error::InvalidHyper(format!("unknown key '{other}'"))),
    }
    Ok(())
}

/// Split a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    parse_config(s)?
        .pop()
        .ok_or_else(|| Error::arg(format!("expected key=value, got '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_hyperparameters, Variant};

    #[test]
    fn file_layers_onto_defaults() {
        let text = "# run\n[mcmc]\niterations = 200\nburn_in=100\n\nalpha = 0.5\nmu_eta = 1, 2, 3\nsigma_eta = 2\n";
        let mut h = default_hyperparameters(Variant::Htrpm);
        for (k, v) in parse_config(text).unwrap() {
            apply_setting(&mut h, &k, &v).unwrap();
        }
        assert_eq!((h.mcmc.iterations, h.mcmc.burn_in), (200, 100));
        assert_eq!(h.alpha, 0.5);
        assert_eq!(h.mu_eta, Mean::Vector(vec![1.0, 2.0, 3.0]));
        assert_eq!(h.sigma_eta, Covariance::ScaledIdentity(2.0));
    }

    #[test]
    fn bad_lines_are_reported() {
        assert!(matches!(parse_config("alpha 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("\nbeta = 1\n"), Err(Error::Parse { line: 2, .. })));
        let mut h = default_hyperparameters(Variant::Dp);
        assert!(apply_setting(&mut h, "thin", "x").is_err());
        assert_eq!(parse_override("seed=4").unwrap(), ("seed".into(), "4".into()));
        assert!(parse_override("seed").is_err());
    }
}
