//! On-disk dataset format: a JSON manifest pointing at headerless CSV
//! matrices, one row per sample.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::check_binary;
use super::MultiViewDataset;
use crate::error::{DclError, Result};
use crate::numerics::Matrix;

/// Paths are resolved relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub views: Vec<PathBuf>,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_indicator: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_indicator: Option<PathBuf>,
}

pub fn read_csv_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| DclError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DclError::Parse {
            what: "CSV",
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| DclError::Parse {
                    what: "CSV",
                    path: path.to_path_buf(),
                    message: format!("entry ({i}, {j}) = {field:?} is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|e| DclError::Parse {
        what: "CSV",
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_csv_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 8);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|x| format!("{x}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DclError::io(path, e))
}

fn validation_for(path: &Path, message: String) -> DclError {
    DclError::validation(path.display().to_string(), message)
}

/// Loads and validates a dataset. Missing indicator files default to
/// all-ones; zero-fill is applied on load.
pub fn load_dataset(manifest_path: &Path) -> Result<MultiViewDataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| DclError::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DclError::Parse {
        what: "manifest",
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if manifest.views.is_empty() {
        return Err(validation_for(manifest_path, "manifest lists no views".into()));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };

    let labels_path = resolve(&manifest.labels);
    let labels = read_csv_matrix(&labels_path)?;
    check_binary(&labels, "labels").map_err(|e| relabel(e, &labels_path))?;
    let n = labels.rows();

    let mut views = Vec::with_capacity(manifest.views.len());
    for p in &manifest.views {
        let path = resolve(p);
        let x = read_csv_matrix(&path)?;
        if x.rows() != n {
            return Err(validation_for(
                &path,
                format!("{} rows but the label file has {n}", x.rows()),
            ));
        }
        if !x.is_finite() {
            return Err(validation_for(&path, "non-finite feature value".into()));
        }
        views.push(x);
    }

    let read_indicator = |p: &Option<PathBuf>, cols: usize, what: &str| -> Result<Matrix> {
        match p {
            None => Ok(Matrix::ones(n, cols)),
            Some(p) => {
                let path = resolve(p);
                let m = read_csv_matrix(&path)?;
                if m.shape() != (n, cols) {
                    return Err(validation_for(
                        &path,
                        format!("{what} has shape {:?}, expected {:?}", m.shape(), (n, cols)),
                    ));
                }
                check_binary(&m, what).map_err(|e| relabel(e, &path))?;
                Ok(m)
            }
        }
    };
    let v = read_indicator(&manifest.view_indicator, views.len(), "view_indicator")?;
    let w = read_indicator(&manifest.label_indicator, labels.cols(), "label_indicator")?;

    let ds = MultiViewDataset::new(views, labels, v, w)?;
    let name = manifest.name.unwrap_or_else(|| {
        manifest_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(ds.with_name(name))
}

fn relabel(err: DclError, path: &Path) -> DclError {
    match err {
        DclError::Validation { message, .. } => validation_for(path, message),
        other => other,
    }
}

/// Writes `view_<m>.csv`, `labels.csv`, the two indicator files and
/// `manifest.json` into `dir`; returns the manifest path.
pub fn save_dataset(dataset: &MultiViewDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| DclError::io(dir, e))?;
    let mut views = Vec::new();
    for (m, x) in dataset.views().iter().enumerate() {
        let file = PathBuf::from(format!("view_{m}.csv"));
        write_csv_matrix(&dir.join(&file), x)?;
        views.push(file);
    }
    write_csv_matrix(&dir.join("labels.csv"), dataset.labels())?;
    write_csv_matrix(&dir.join("view_indicator.csv"), dataset.view_indicator())?;
    write_csv_matrix(&dir.join("label_indicator.csv"), dataset.label_indicator())?;
    let manifest = Manifest {
        name: (!dataset.name.is_empty()).then(|| dataset.name.clone()),
        views,
        labels: "labels.csv".into(),
        view_indicator: Some("view_indicator.csv".into()),
        label_indicator: Some("label_indicator.csv".into()),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| DclError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn rows(n: usize, cols: usize, f: impl Fn(usize, usize) -> String) -> String {
        (0..n)
            .map(|i| (0..cols).map(|j| f(i, j)).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn defaults_indicators_to_ones() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", &rows(10, 4, |i, j| format!("{}.5", i + j)));
        write(dir.path(), "b.csv", &rows(10, 2, |i, _| format!("{i}")));
        write(dir.path(), "y.csv", &rows(10, 3, |i, j| format!("{}", (i + j) % 2)));
        write(
            dir.path(),
            "m.json",
            r#"{"views": ["a.csv", "b.csv"], "labels": "y.csv"}"#,
        );
        let ds = load_dataset(&dir.path().join("m.json")).unwrap();
        assert_eq!(ds.view_indicator(), &Matrix::ones(10, 2));
        assert_eq!(ds.label_indicator(), &Matrix::ones(10, 3));
        assert_eq!(ds.name, "m");
    }

    #[test]
    fn row_mismatch_names_the_view_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "short.csv", &rows(9, 2, |_, _| "1".into()));
        write(dir.path(), "y.csv", &rows(10, 3, |_, _| "1".into()));
        write(dir.path(), "m.json", r#"{"views": ["short.csv"], "labels": "y.csv"}"#);
        let err = load_dataset(&dir.path().join("m.json")).unwrap_err();
        assert!(matches!(err, DclError::Validation { .. }));
        assert!(err.to_string().contains("short.csv"), "{err}");
    }

    #[test]
    fn fractional_label_reports_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", &rows(3, 2, |_, _| "1".into()));
        write(dir.path(), "y.csv", "1,0\n0,0.5\n1,1\n");
        write(dir.path(), "m.json", r#"{"views": ["a.csv"], "labels": "y.csv"}"#);
        let err = load_dataset(&dir.path().join("m.json")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(1, 1)") && msg.contains("y.csv"), "{msg}");
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let err = load_dataset(Path::new("/nonexistent/manifest.json")).unwrap_err();
        assert!(matches!(err, DclError::Io { .. }));
    }

    #[test]
    fn save_then_load_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_fn(4, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let ds = MultiViewDataset::complete(vec![x], Matrix::from_fn(4, 2, |i, _| (i % 2) as f64))
            .unwrap()
            .with_name("toy");
        let path = save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }
}
