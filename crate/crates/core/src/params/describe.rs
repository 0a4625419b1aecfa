use std::fmt::Write;

use super::{GlobalConfig, ParameterTable};
use crate::models::{Registry, RegistryError};

/// Renders parameter information for `"global"` or a registered model.
pub fn describe(target: &str, global: &GlobalConfig, registry: &Registry) -> Result<String, RegistryError> {
    let mut out = String::new();
    if target == "global" {
        out.push_str("Global parameters\n\n");
        render_table(&mut out, global.parameters());
        return Ok(out);
    }

    let m = registry.get(target)?.manifest();
    let _ = writeln!(out, "{} - {}", m.name, m.long_name);
    let _ = writeln!(out, "type: {}", m.model_type.as_str());
    let _ = writeln!(out, "citation: {}", m.citation);
    if let Some(notes) = &m.notes {
        let _ = writeln!(out, "notes: {notes}");
    }
    if let Some(space) = m.preferred_color_space {
        let _ = writeln!(out, "preferred color space: {space}");
    }
    if let Some(s) = m.preferred_smoothing {
        let _ = writeln!(out, "preferred smoothing: size {}, std {}", s.size, s.std);
    }
    if !m.model_files.is_empty() {
        let _ = writeln!(out, "model files:");
        for asset in &m.model_files {
            let _ = writeln!(out, "  {} ({})", asset.relative_path, asset.url);
        }
    }
    out.push('\n');
    if m.parameters.is_empty() {
        out.push_str("No model-specific parameters.\n");
    } else {
        out.push_str("Model parameters\n\n");
        render_table(&mut out, &m.parameters);
    }
    Ok(out)
}

fn render_table(out: &mut String, table: &ParameterTable) {
    let header = ["Parameter", "Default", "Valid Values", "Description"];
    let rows: Vec<[String; 4]> = table
        .iter()
        .map(|(name, spec)| {
            [name.clone(), spec.default.to_string(), spec.valid_values.clone(), spec.description.clone()]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |out: &mut String, cells: [&str; 4]| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:<w1$}  {:<w2$}  {}",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        );
    };
    line(out, header);
    for row in &rows {
        line(out, [&row[0], &row[1], &row[2], &row[3]]);
    }
}
