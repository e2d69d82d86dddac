use std::fmt::Write;
use std::str::FromStr;

use super::{F1Summary, KeywordTable};
use crate::error::{Error, Result};

/// Row shown for a class without any surviving keyword.
pub const EMPTY_MARKER: &str = "— no stable keywords —";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(Error::validation(format!("unknown format {s:?}"))),
        }
    }
}

fn sf_percent(sf: f64) -> u32 {
    (sf * 100.0).round() as u32
}

/// Render a keyword table. Scores have four decimals and selection frequency
/// is an integer percentage; JSON keeps the full records.
pub fn render_keyword_table(table: &KeywordTable, format: Format) -> Result<String> {
    let mut out = String::new();
    match format {
        Format::Tsv => {
            out.push_str("class\tword\tscore\tsf_percent\n");
            for class in &table.classes {
                if class.keywords.is_empty() {
                    let _ = writeln!(out, "{}\t{EMPTY_MARKER}\t\t", class.class);
                }
                for r in &class.keywords {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{:.4}\t{}",
                        class.class,
                        r.word,
                        r.mean_score,
                        sf_percent(r.selection_frequency)
                    );
                }
            }
        }
        Format::Json => {
            out = serde_json::to_string_pretty(&table.classes)?;
            out.push('\n');
        }
        Format::Markdown => {
            for (i, class) in table.classes.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "### --- {} ---\n", class.class);
                out.push_str("| Word | Score | SF(%) |\n|:-----|------:|------:|\n");
                if class.keywords.is_empty() {
                    let _ = writeln!(out, "| {EMPTY_MARKER} | | |");
                }
                for r in &class.keywords {
                    let _ = writeln!(
                        out,
                        "| {} | {:.4} | {} |",
                        r.word,
                        r.mean_score,
                        sf_percent(r.selection_frequency)
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Tab-separated F1 table: one row per class, then the micro average.
/// Support is the mean validation-set count.
pub fn render_f1_summary(summary: &F1Summary) -> String {
    let mut out = String::from("Class\tF1(M)\tSD\tSupport(M)\n");
    for c in &summary.per_class {
        let _ = writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{:.1}",
            c.class, c.f1_mean, c.f1_sd, c.support_mean
        );
    }
    let _ = writeln!(
        out,
        "Micro AVG\t{:.4}\t{:.4}\t-",
        summary.micro_f1_mean, summary.micro_f1_sd
    );
    let _ = writeln!(
        out,
        "# rounds_used={} rounds_failed={}",
        summary.rounds_used, summary.rounds_failed
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSpace;
    use crate::pipeline::AggregateRecord;
    use crate::report::{ClassF1, ClassKeywords};

    fn question() -> AggregateRecord {
        AggregateRecord {
            class: "ID".into(),
            word: "question".into(),
            mean_score: 0.5874,
            selection_frequency: 1.0,
            rounds_selected: 100,
            instance_count: 300,
            doc_frequency: 50,
        }
    }

    #[test]
    fn tsv_row_and_empty_class() {
        let space = LabelSpace::new(["ID", "SP"]).unwrap();
        let t = KeywordTable::new(&[question()], &space, 15);
        let tsv = render_keyword_table(&t, Format::Tsv).unwrap();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[1], "ID\tquestion\t0.5874\t100");
        assert_eq!(lines[2], "SP\t— no stable keywords —\t\t");
    }

    #[test]
    fn markdown_mirrors_table_layout() {
        let space = LabelSpace::new(["ID", "SP"]).unwrap();
        let t = KeywordTable::new(&[question()], &space, 15);
        let md = render_keyword_table(&t, Format::Markdown).unwrap();
        assert!(md.contains("| Word | Score | SF(%) |"));
        assert!(md.contains("| question | 0.5874 | 100 |"));
        assert!(md.contains("| — no stable keywords — | | |"));
    }

    #[test]
    fn json_round_trips_records() {
        let space = LabelSpace::new(["ID"]).unwrap();
        let mut r = question();
        r.mean_score = 0.1 + 0.2; // not representable in four decimals
        r.selection_frequency = 2.0 / 3.0;
        let t = KeywordTable::new(&[r.clone()], &space, 15);
        let json = render_keyword_table(&t, Format::Json).unwrap();
        let back: Vec<ClassKeywords> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[0].keywords, vec![r]);
    }

    #[test]
    fn f1_table_layout() {
        let s = F1Summary {
            per_class: vec![ClassF1 {
                class: "LY".into(),
                f1_mean: 0.8292,
                f1_sd: 0.0866,
                support_mean: 172.0,
            }],
            micro_f1_mean: 0.651,
            micro_f1_sd: 0.0672,
            rounds_used: 100,
            rounds_failed: 0,
        };
        let text = render_f1_summary(&s);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Class\tF1(M)\tSD\tSupport(M)");
        assert_eq!(lines[1], "LY\t0.8292\t0.0866\t172.0");
        assert_eq!(lines[2], "Micro AVG\t0.6510\t0.0672\t-");
    }
}
