//! Fixed-width result table in the column order of the published results.

use super::MetricsReport;

const COLUMNS: [&str; 11] = [
    "Datasets",
    "Generator Dimension",
    "Discriminator Dimension",
    "Number of Clients",
    "QED",
    "Diversity",
    "Validity",
    "Uniqueness",
    "Novelty",
    "LogP",
    "Similarity",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub dataset: String,
    pub generator_dims: String,
    pub discriminator_dims: String,
    pub clients: usize,
    pub report: MetricsReport,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl TableRow {
    fn cells(&self) -> [String; 11] {
        let r = &self.report;
        [
            self.dataset.clone(),
            self.generator_dims.clone(),
            self.discriminator_dims.clone(),
            self.clients.to_string(),
            opt(r.qed, 2),
            opt(r.int_div_1, 2),
            format!("{:.1}", r.validity),
            format!("{:.1}", r.uniqueness),
            format!("{:.1}", r.novelty),
            opt(r.logp_normalized, 2),
            opt(r.snn, 4),
        ]
    }
}

fn line(cells: &[String]) -> String {
    let mut s = String::from("|");
    for (c, name) in cells.iter().zip(COLUMNS) {
        s.push_str(&format!(" {c:<w$} |", w = name.len()));
    }
    s
}

/// Header row and separator; every column is as wide as its title.
pub fn table_header() -> String {
    let names: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
    let mut sep = String::from("|");
    for c in COLUMNS {
        sep.push_str(&"-".repeat(c.len() + 2));
        sep.push('|');
    }
    format!("{}\n{}\n", line(&names), sep)
}

pub fn render_table(rows: &[TableRow]) -> String {
    let mut out = table_header();
    for r in rows {
        out.push_str(&line(&r.cells()));
        out.push('\n');
    }
    out
}
