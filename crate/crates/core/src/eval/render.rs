//! Report rendering: fixed-width tables in the shape of the published
//! per-class result tables, and the machine-readable key/value layout.

use crate::data::ClassLabel;
use crate::eval::{percent_1dp, Metric, MetricsReport};
use alloc::format;
use alloc::string::String;

fn cell(metric: Metric) -> String {
    match metric {
        Metric::Defined(v) => format!("{:.1}", percent_1dp(v)),
        Metric::Undefined => String::from("n/a"),
    }
}

/// Three fixed-width tables: accuracy, per-class sensitivity, per-class
/// PPV.
pub fn render_tables(report: &MetricsReport, model_name: &str) -> String {
    let headings: [&str; 3] = [
        ClassLabel::Normal.heading(),
        ClassLabel::Pneumonia.heading(),
        ClassLabel::Covid19.heading(),
    ];
    let mut out = String::new();

    out.push_str("Accuracy (%)\n");
    out.push_str(&format!("{:<14} {:>10}\n", "Architecture", "Acc. (%)"));
    out.push_str(&format!(
        "{:<14} {:>10}\n",
        model_name,
        format!("{:.1}", percent_1dp(report.accuracy))
    ));
    out.push('\n');

    for (title, row) in [
        ("Sensitivity (%)", &report.sensitivity),
        ("Positive Predictive Value (%)", &report.ppv),
    ] {
        out.push_str(title);
        out.push('\n');
        out.push_str(&format!(
            "{:<14} {:>8} {:>12} {:>9}\n",
            "Architecture", headings[0], headings[1], headings[2]
        ));
        out.push_str(&format!(
            "{:<14} {:>8} {:>12} {:>9}\n",
            model_name,
            cell(row[0]),
            cell(row[1]),
            cell(row[2])
        ));
        out.push('\n');
    }
    out
}

/// Machine-readable layout, one `key [subkey] value` triple per line:
///
/// ```text
/// samples 300
/// accuracy 93.3
/// sensitivity normal 95.0
/// ...
/// gate covid19_ppv pass
/// ```
pub fn render_key_values(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("samples {}\n", report.samples));
    out.push_str(&format!("accuracy {:.1}\n", percent_1dp(report.accuracy)));
    for (key, row) in [("sensitivity", &report.sensitivity), ("ppv", &report.ppv)] {
        for (ci, metric) in row.iter().enumerate() {
            let class = ClassLabel::from_index(ci).expect("index < 3");
            out.push_str(&format!("{key} {class} {}\n", cell(*metric)));
        }
    }
    for gate in &report.gates {
        out.push_str(&format!(
            "gate {} {}\n",
            gate.name,
            if gate.passed { "pass" } else { "fail" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{metrics, ConfusionMatrix};

    #[test]
    fn tables_contain_published_row_values() {
        let cm = ConfusionMatrix::from_counts([[95, 5, 0], [5, 94, 1], [5, 4, 91]]);
        let report = metrics(&cm).unwrap();
        let text = render_tables(&report, "cxrnet");
        assert!(text.contains("Sensitivity (%)"));
        assert!(text.contains("Positive Predictive Value (%)"));
        assert!(text.contains("Normal"));
        assert!(text.contains("Non-COVID19"));
        assert!(text.contains("COVID-19"));
        let sens_line = text
            .lines()
            .skip_while(|l| !l.starts_with("Sensitivity"))
            .nth(2)
            .unwrap();
        assert_eq!(
            sens_line.split_whitespace().collect::<alloc::vec::Vec<_>>(),
            ["cxrnet", "95.0", "94.0", "91.0"]
        );
        let ppv_line = text
            .lines()
            .skip_while(|l| !l.starts_with("Positive"))
            .nth(2)
            .unwrap();
        assert_eq!(
            ppv_line.split_whitespace().collect::<alloc::vec::Vec<_>>(),
            ["cxrnet", "90.5", "91.3", "98.9"]
        );
        assert!(text.contains("93.3"));
    }

    #[test]
    fn key_values_cover_all_metrics_and_gates() {
        let cm = ConfusionMatrix::from_counts([[95, 5, 0], [5, 94, 1], [5, 4, 91]]);
        let report = metrics(&cm).unwrap();
        let text = render_key_values(&report);
        assert!(text.contains("samples 300\n"));
        assert!(text.contains("accuracy 93.3\n"));
        assert!(text.contains("sensitivity covid19 91.0\n"));
        assert!(text.contains("ppv covid19 98.9\n"));
        assert!(text.contains("gate covid19_sensitivity pass\n"));
        assert!(text.contains("gate covid19_ppv pass\n"));
    }

    #[test]
    fn undefined_metrics_render_as_na() {
        let cm = ConfusionMatrix::from_counts([[10, 0, 0], [0, 10, 0], [5, 5, 0]]);
        let report = metrics(&cm).unwrap();
        let text = render_key_values(&report);
        assert!(text.contains("ppv covid19 n/a\n"));
        assert!(text.contains("gate covid19_ppv fail\n"));
    }
}
