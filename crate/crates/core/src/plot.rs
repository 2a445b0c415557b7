//! Gnuplot scripts for existing report files. Nothing here computes; the
//! scripts only render CSV produced elsewhere.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// What a CSV file holds, judged from its header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    /// `x1,x2,label,mass` grid export.
    Partition,
    /// `model,selector,median,q1,q3,...` summary.
    Summary,
}

pub fn detect_kind(header: &[String]) -> Result<ReportKind> {
    let has = |c: &str| header.iter().any(|h| h == c);
    if has("x1") && has("x2") && has("label") && has("mass") {
        Ok(ReportKind::Partition)
    } else if has("model") && has("selector") && has("median") && has("q1") && has("q3") {
        Ok(ReportKind::Summary)
    } else {
        Err(Error::InvalidArgument(format!(
            "cannot plot a CSV with columns {}",
            header.join(",")
        )))
    }
}

/// Colored cells of a bivariate partition, one color per label.
pub fn partition_script(data_file: &str, image: &str, title: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set terminal pngcairo size 800,800\n\
         set output '{image}'\n\
         set title '{title}'\n\
         set size ratio -1\n\
         set key off\n\
         set palette maxcolors 12\n\
         unset colorbox\n\
         plot '{data_file}' every ::1 using 1:2:3 with points pt 5 ps 0.6 lc palette\n"
    )
}

/// Median with the interquartile range as an error bar, one panel per model.
pub fn summary_script(data_file: &str, image: &str, models: &[String]) -> String {
    let mut s = format!(
        "set datafile separator ','\n\
         set terminal pngcairo size {w},500\n\
         set output '{image}'\n\
         set multiplot layout 1,{n}\n\
         set yrange [0:*]\n\
         set xtics rotate by -45\n\
         set key off\n",
        w = 400 * models.len().max(1),
        n = models.len().max(1),
    );
    for m in models {
        s.push_str(&format!(
            "set title '{m}'\n\
             plot '{data_file}' every ::1 using ($0):(strcol(1) eq '{m}' ? $3 : NaN):4:5:xtic(2) \
             with yerrorbars pt 7\n"
        ));
    }
    s.push_str("unset multiplot\n");
    s
}

/// Reads `input`, checks it has data, copies it into `out_dir` and writes a
/// matching `.gp` script. Returns the script path.
pub fn emit(input: &Path, out_dir: &Path) -> Result<PathBuf> {
    let mut reader = csv::Reader::from_path(input)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let kind = detect_kind(&header)?;
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no data rows", input.display())));
    }
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report")
        .to_string();
    std::fs::create_dir_all(out_dir)?;
    let data_name = format!("{stem}.csv");
    let data_path = out_dir.join(&data_name);
    if std::fs::canonicalize(input).ok() != std::fs::canonicalize(&data_path).ok() {
        std::fs::copy(input, &data_path)?;
    }
    let image = format!("{stem}.png");
    let script = match kind {
        ReportKind::Partition => partition_script(&data_name, &image, &stem),
        ReportKind::Summary => {
            let col = header.iter().position(|h| h == "model").expect("checked");
            let mut models: Vec<String> = Vec::new();
            for r in &records {
                let m = r[col].to_string();
                if !models.contains(&m) {
                    models.push(m);
                }
            }
            summary_script(&data_name, &image, &models)
        }
    };
    let script_path = out_dir.join(format!("{stem}.gp"));
    std::fs::write(&script_path, script)?;
    Ok(script_path)
}
