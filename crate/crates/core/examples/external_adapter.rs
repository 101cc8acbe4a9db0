//! Bring surprisals from an outside model: read a token-level TSV with
//! subword pieces and metadata lines, check coverage, and aggregate.

use lm_psych::alignment;
use lm_psych::backend::{load_external, ExternalOptions, ScoringRequest, SurprisalBackend};
use lm_psych::experiment::{Experiment, Factor, Item, Mode};
use lm_psych::pipeline::score_experiment;

const TSV: &str = "\
# meta: model=toy-subword
# meta: bos=prepended
sentence_id\ttoken_index\ttoken\tstart\tend\tsurprisal_bits
toy/1/plural\t0\tThe\t0\t3\t3.5
toy/1/plural\t1\tkeys\t4\t8\t9.25
toy/1/plural\t2\tare\t9\t12\t1.75
toy/1/singular\t0\tThe\t0\t3\t3.5
toy/1/singular\t1\tkey\t4\t7\t8.0
toy/1/singular\t2\t##s\t7\t8\t2.5
toy/1/singular\t3\tis\t9\t11\t6.0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cells = [
        ("plural".to_string(), vec!["The keys".to_string(), "are".to_string()]),
        ("singular".to_string(), vec!["The keys".to_string(), "is".to_string()]),
    ];
    let items = vec![Item { id: 1, cells: cells.into() }];
    let exp = Experiment::new(
        "toy",
        Mode::Word,
        vec![Factor::new("agreement", &["plural", "singular"])],
        vec!["Subject".into(), "Verb".into()],
        items,
        Vec::new(),
    )?;

    let backend = load_external(TSV.as_bytes(), &ExternalOptions::new("toy-subword", Mode::Word))?;
    backend.check_coverage(&ScoringRequest::for_experiment(&exp))?;
    let scores = score_experiment(&exp, &backend, 1)?;
    let table = alignment::aggregate(&exp, &scores)?;
    print!("{}", table.to_csv());
    print!("{}", table.details_tsv());
    Ok(())
}
