//! Build a `TargetModel` from a `TargetSpec`, including CSV design
//! matrices.

use std::path::Path;

use sdi_core::target::{
    make_gaussian_target, make_grid_target, make_logistic_target_with_prior, split_gaussian_target,
    temper, PriorPlacement, TargetModel,
};
use sdi_core::Matrix;

use crate::config::TargetSpec;
use crate::{CliError, CliResult};

pub fn build_model(spec: &TargetSpec, base_dir: &Path) -> CliResult<TargetModel> {
    match spec.kind.as_str() {
        "gaussian" => build_gaussian(spec),
        "logistic" => build_logistic(spec, base_dir),
        "custom-grid" => build_grid(spec),
        other => Err(CliError::Config(format!(
            "unknown target.kind {other:?} (expected gaussian|logistic|custom-grid)"
        ))),
    }
}

fn require<'a, T>(field: &'static str, v: &'a Option<T>) -> CliResult<&'a T> {
    v.as_ref()
        .ok_or_else(|| CliError::Config(format!("target.{field} is required for this kind")))
}

fn build_gaussian(spec: &TargetSpec) -> CliResult<TargetModel> {
    let mu = require("mu", &spec.mu)?.clone();
    let sigma = Matrix::from_rows(require("sigma", &spec.sigma)?).map_err(CliError::Run)?;
    match spec.sites {
        Some(n) if n >= 1 => {
            let mut fact = split_gaussian_target(mu, sigma, n)?;
            if let Some(k) = spec.k_temper {
                fact = temper(&fact, k)?;
            }
            Ok(TargetModel::Factorized(fact))
        }
        Some(_) => Err(CliError::Config("target.sites must be at least 1".into())),
        None => Ok(TargetModel::Density(make_gaussian_target(mu, sigma)?)),
    }
}

fn build_logistic(spec: &TargetSpec, base_dir: &Path) -> CliResult<TargetModel> {
    let x: Vec<Vec<f64>> = match (&spec.x, &spec.x_csv) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "target.x and target.x_csv are mutually exclusive".into(),
            ))
        }
        (Some(rows), None) => rows.clone(),
        (None, Some(path)) => load_design_csv(&base_dir.join(path))?,
        (None, None) => {
            return Err(CliError::Config(
                "target.x or target.x_csv is required for logistic targets".into(),
            ))
        }
    };
    let y = require("y", &spec.y)?.clone();
    let prior = spec.prior_precision.unwrap_or(0.0);
    let placement = if spec.prior_site.unwrap_or(false) {
        PriorPlacement::ExactSite
    } else {
        PriorPlacement::Spread
    };
    let mut fact = make_logistic_target_with_prior(&x, &y, prior, placement)?;
    if let Some(k) = spec.k_temper {
        fact = temper(&fact, k)?;
    }
    Ok(TargetModel::Factorized(fact))
}

fn build_grid(spec: &TargetSpec) -> CliResult<TargetModel> {
    let grid = require("grid", &spec.grid)?;
    let psi = require("psi", &spec.psi)?;
    Ok(TargetModel::Density(make_grid_target(grid, psi)?))
}

/// One design row per line, comma-separated floats, no header.
fn load_design_csv(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| {
            CliError::Config(format!(
                "{}:{}: bad design value: {e}",
                path.display(),
                lineno + 1
            ))
        })?);
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!(
            "{}: empty design matrix",
            path.display()
        )));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_density_and_split() {
        let spec = TargetSpec {
            kind: "gaussian".into(),
            mu: Some(vec![0.5]),
            sigma: Some(vec![vec![2.0]]),
            ..Default::default()
        };
        let model = build_model(&spec, Path::new(".")).unwrap();
        assert!(model.factorized().is_none());

        let spec = TargetSpec {
            sites: Some(4),
            ..spec
        };
        let model = build_model(&spec, Path::new(".")).unwrap();
        assert_eq!(model.factorized().unwrap().n_sites(), 4);
    }

    #[test]
    fn missing_field_names_it() {
        let spec = TargetSpec {
            kind: "gaussian".into(),
            ..Default::default()
        };
        let err = build_model(&spec, Path::new(".")).unwrap_err();
        assert!(format!("{err}").contains("target.mu"));
    }

    #[test]
    fn csv_design_loads() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.csv"), "1.0,0.5\n-0.25,2.0\n").unwrap();
        let spec = TargetSpec {
            kind: "logistic".into(),
            x_csv: Some("x.csv".into()),
            y: Some(vec![1.0, -1.0]),
            prior_precision: Some(1.0),
            ..Default::default()
        };
        let model = build_model(&spec, dir.path()).unwrap();
        let fact = model.factorized().unwrap();
        assert_eq!(fact.n_sites(), 2);
        assert_eq!(fact.dim(), 2);
    }

    #[test]
    fn csv_bad_value_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.csv"), "1.0\noops\n").unwrap();
        let spec = TargetSpec {
            kind: "logistic".into(),
            x_csv: Some("x.csv".into()),
            y: Some(vec![1.0, -1.0]),
            ..Default::default()
        };
        let err = build_model(&spec, dir.path()).unwrap_err();
        assert!(format!("{err}").contains(":2:"));
    }
}
