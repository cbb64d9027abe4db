use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::process::ExitCode;

use hb_core::compiler::{compile_dataset, SentenceRecord, VariationPolicy};
use hb_core::generation::{
    cluster_styles, fgb_by_axis, gen_bias_report, ingest_style_vectors, resolve_clusters, ClusterSpec, Distance,
    Linkage, StyleGrid, StyleRecord,
};
use hb_core::harness::{
    mock_offense, mock_perplexity, mock_responses, mock_style_manifest, mock_style_vector_for, validate_schema,
    MockProfile, SchemaContext, SchemaKind,
};
use hb_core::likelihood::{
    distribution_summary, pairwise_significance_by_axis, read_perplexities, GroupBy, PerplexityScore, SigOptions,
};
use hb_core::mitigation::{tag_pairs, BiasProjectionConfig};
use hb_core::offense::{
    offense_by_descriptor, offense_by_template, offensive_fraction, read_corpus, read_offense, reservoir_sample,
    BucketEdges, CorpusFormat, FrequencyCounter, OffenseScore,
};
use hb_core::registry::Axis;
use hb_core::{jsonl, Error, Result};
use serde::Serialize;

use crate::io::{self, num};
use crate::*;

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Validate(a) => validate(cli, a),
        Command::Compile(a) => compile(cli, a).map(ok),
        Command::Likelihood(a) => likelihood(a, out).map(ok),
        Command::Genbias(a) => genbias(a, out).map(ok),
        Command::ClusterStyles(a) => cluster(a, out).map(ok),
        Command::TagBias(a) => tag_bias(a, out).map(ok),
        Command::Offense(a) => offense(a, out).map(ok),
        Command::CorpusFreq(a) => corpus_freq(cli, a).map(ok),
        Command::MockScore(a) => mock_score(cli, a).map(ok),
    }
}

fn ok(_: ()) -> ExitCode {
    ExitCode::SUCCESS
}

fn validate(cli: &Cli, a: &ValidateArgs) -> Result<ExitCode> {
    let Some(file) = &a.file else {
        let reg = match io::registry(cli.data_dir.as_deref()) {
            Ok(reg) => reg,
            // rows that cannot be loaded are findings, not tool errors
            Err(Error::Validation(msg)) => {
                let mut w = io::output(cli.out.as_deref())?;
                writeln!(w, "{msg}")?;
                w.flush()?;
                return Ok(ExitCode::FAILURE);
            }
            Err(e) => return Err(e),
        };
        let report = reg.validate();
        let mut w = io::output(cli.out.as_deref())?;
        write!(w, "{report}")?;
        w.flush()?;
        return Ok(if report.is_valid() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        });
    };
    let kind: SchemaKind = a
        .kind
        .as_deref()
        .ok_or_else(|| Error::Argument("--kind is required with --file".into()))?
        .parse()?;
    let sentences = a.sentences.as_deref().map(io::sentences).transpose()?;
    let response_ids: Option<HashSet<String>> = a
        .responses
        .as_deref()
        .map(|p| Ok::<_, Error>(io::responses(p)?.into_iter().map(|r| r.response_id).collect()))
        .transpose()?;
    let style_count = a.manifest.as_deref().map(io::manifest).transpose()?.map(|m| m.len());
    let ctx = SchemaContext {
        sentences: sentences.as_ref(),
        response_ids: response_ids.as_ref(),
        style_count,
    };
    let report = validate_schema(io::open(file)?, kind, &ctx)?;
    let mut w = io::output(cli.out.as_deref())?;
    for v in &report.violations {
        writeln!(w, "{}:{v}", file.display())?;
    }
    writeln!(
        w,
        "{} {} record(s), {} violation(s)",
        report.kind,
        report.records,
        report.violations.len()
    )?;
    w.flush()?;
    Ok(if report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn compile(cli: &Cli, a: &CompileArgs) -> Result<()> {
    let reg = io::registry(cli.data_dir.as_deref())?;
    let policy = match a.variants {
        VariantsArg::None => VariationPolicy::None,
        VariantsArg::All => VariationPolicy::All,
        VariantsArg::Sampled => VariationPolicy::Sampled {
            seed: cli.seed.unwrap_or(0),
        },
    };
    let mut w = io::output(cli.out.as_deref())?;
    let mut n = 0usize;
    for record in compile_dataset(&reg, policy)? {
        jsonl::write_record(&mut w, &record?)?;
        n += 1;
    }
    w.flush()?;
    log::info!("wrote {n} sentence(s)");
    Ok(())
}

#[derive(Serialize)]
struct SigRow {
    axis: Axis,
    template_id: String,
    percent_significant: f64,
    significant_pairs: usize,
    pair_count: usize,
    eligible_descriptors: usize,
    low_ppl_descriptors: String,
    high_ppl_descriptors: String,
}

#[derive(Serialize)]
struct SummaryRow {
    axis: String,
    template_id: String,
    count: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

fn likelihood(a: &LikelihoodArgs, out: Option<&std::path::Path>) -> Result<()> {
    let index = io::sentences(&a.sentences)?;
    let table = read_perplexities(io::open(&a.scores)?, &io::name(&a.scores), &index)?;
    let opts = SigOptions {
        min_len: a.min_len,
        max_len: a.max_len,
        alpha: a.alpha,
    };
    let join = |v: &[hb_core::likelihood::RankedDescriptor]| {
        v.iter().map(|r| r.descriptor.as_str()).collect::<Vec<_>>().join("; ")
    };
    let rows: Vec<SigRow> = pairwise_significance_by_axis(&table, &a.template, opts)?
        .into_iter()
        .map(|r| SigRow {
            axis: r.axis,
            percent_significant: r.percent_significant,
            significant_pairs: r.significant_pairs,
            pair_count: r.pair_count,
            eligible_descriptors: r.eligible_descriptors,
            low_ppl_descriptors: join(&r.low_ppl_descriptors),
            high_ppl_descriptors: join(&r.high_ppl_descriptors),
            template_id: r.template_id,
        })
        .collect();
    io::write_csv(io::output(out)?, &rows)?;

    if let Some(path) = &a.summary {
        let by = match a.summary_by {
            SummaryBy::Axis => GroupBy::Axis,
            SummaryBy::Template => GroupBy::Template,
            SummaryBy::AxisTemplate => GroupBy::AxisTemplate,
        };
        let rows: Vec<SummaryRow> = distribution_summary(&table, by)?
            .into_iter()
            .map(|g| SummaryRow {
                axis: g.axis.map(|x| x.to_string()).unwrap_or_default(),
                template_id: g.template_id.unwrap_or_default(),
                count: g.summary.count,
                min: g.summary.min,
                q1: g.summary.q1,
                median: g.summary.median,
                q3: g.summary.q3,
                max: g.summary.max,
            })
            .collect();
        io::write_csv(io::output(Some(path))?, &rows)?;
    }
    Ok(())
}

fn load_grid(g: &GridArgs) -> Result<(StyleGrid, Vec<hb_core::generation::ResponseRecord>)> {
    let index = io::sentences(&g.sentences)?;
    let responses = io::responses(&g.responses)?;
    let styles: Vec<StyleRecord> = jsonl::read_records(io::open(&g.styles)?, &io::name(&g.styles))?;
    let manifest = match &g.manifest {
        Some(p) => io::manifest(p)?,
        None => {
            let n = styles.first().map_or(0, |s| s.probs.len());
            (0..n).map(|i| format!("style_{i}")).collect()
        }
    };
    let grid = ingest_style_vectors(styles, &responses, &index, manifest)?;
    Ok((grid, responses))
}

fn genbias(a: &GenbiasArgs, out: Option<&std::path::Path>) -> Result<()> {
    let (grid, _) = load_grid(&a.grid)?;
    let specs = match &a.clusters {
        Some(p) => ClusterSpec::read(io::open(p)?)?,
        None => ClusterSpec::shipped(),
    };
    let clusters = resolve_clusters(&specs, grid.manifest())?;
    let axis = a.axis.as_deref().map(str::parse::<Axis>).transpose()?;
    let report = gen_bias_report(&grid, &clusters, axis)?;
    let dir = io::out_dir(out)?;

    let mut header = vec!["label".to_string(), "fgb".to_string()];
    let mut row = vec![a.label.clone(), num(report.fgb_x1000)];
    for (name, c) in &report.per_cluster {
        header.push(format!("{name}_pgb"));
        header.push(format!("{name}_scgb"));
        row.push(num(c.pgb_x1000));
        row.push(num(c.scgb_x1000));
    }
    io::write_table(io::output(Some(&dir.join("genbias.csv")))?, &header, &[row])?;

    let rows: Vec<Vec<String>> = fgb_by_axis(&grid)?
        .into_iter()
        .map(|(axis, fgb)| vec![a.label.clone(), axis.to_string(), num(fgb)])
        .collect();
    let header = ["label", "axis", "fgb"].map(String::from);
    io::write_table(io::output(Some(&dir.join("genbias_by_axis.csv")))?, &header, &rows)?;
    Ok(())
}

fn cluster(a: &ClusterArgs, out: Option<&std::path::Path>) -> Result<()> {
    let (grid, _) = load_grid(&a.grid)?;
    let tree = cluster_styles(&grid, Linkage::Average, Distance::Pearson)?;
    let mut w = io::output(out)?;
    match (&a.around, a.height) {
        (Some(style), Some(h)) => {
            for s in tree.flat_cluster_around(style, h)? {
                writeln!(w, "{s}")?;
            }
        }
        _ => {
            serde_json::to_writer_pretty(&mut w, &tree)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn tag_bias(a: &TagBiasArgs, out: Option<&std::path::Path>) -> Result<()> {
    let (grid, responses) = load_grid(&a.grid)?;
    let config = BiasProjectionConfig::new(a.alpha, a.beta)?;
    let pairs = tag_pairs(&grid, &responses, config)?;
    let mut w = io::output(out)?;
    for p in &pairs {
        jsonl::write_record(&mut w, p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BucketRow {
    template_id: String,
    lower: f64,
    upper: f64,
    descriptors: String,
}

#[derive(Serialize)]
struct FractionRow<'a> {
    label: &'a str,
    threshold: f64,
    offensive_fraction: f64,
}

fn offense(a: &OffenseArgs, out: Option<&std::path::Path>) -> Result<()> {
    let index = io::sentences(&a.sentences)?;
    let responses = a
        .responses
        .as_deref()
        .map(io::responses)
        .transpose()?
        .unwrap_or_default();
    let table = read_offense(io::open(&a.scores)?, &io::name(&a.scores), &index, &responses)?;
    let custom = a.edges.as_deref().map(str::parse::<BucketEdges>).transpose()?;
    let templates: Vec<String> = if a.template.is_empty() {
        let set: std::collections::BTreeSet<&str> = table.entries().iter().map(|e| &*e.template_id).collect();
        set.into_iter().map(String::from).collect()
    } else {
        a.template.clone()
    };
    let mut bucket_rows = Vec::new();
    for t in &templates {
        let edges = custom.clone().unwrap_or_else(|| BucketEdges::default_for(t));
        for b in offense_by_descriptor(&table, t, &edges)? {
            bucket_rows.push(BucketRow {
                template_id: t.clone(),
                lower: b.lower,
                upper: b.upper,
                descriptors: b
                    .descriptors
                    .iter()
                    .map(|d| d.display_name())
                    .collect::<Vec<_>>()
                    .join("; "),
            });
        }
    }
    let dir = io::out_dir(out)?;
    io::write_csv(io::output(Some(&dir.join("offense_by_descriptor.csv")))?, &bucket_rows)?;
    io::write_csv(
        io::output(Some(&dir.join("offense_by_template.csv")))?,
        &offense_by_template(&table)?,
    )?;
    let fraction = FractionRow {
        label: &a.label,
        threshold: a.threshold,
        offensive_fraction: offensive_fraction(&table, a.threshold)?,
    };
    io::write_csv(io::output(Some(&dir.join("offensive_fraction.csv")))?, &[fraction])?;
    Ok(())
}

fn corpus_freq(cli: &Cli, a: &CorpusFreqArgs) -> Result<()> {
    let reg = io::registry(cli.data_dir.as_deref())?;
    let descriptors: Vec<String> = reg
        .descriptors()
        .iter()
        .map(|d| d.text.clone())
        .filter(|t| !t.contains(char::is_whitespace))
        .collect();
    let format = match a.format {
        CorpusFormatArg::Text => CorpusFormat::Text,
        CorpusFormatArg::Jsonl => CorpusFormat::Jsonl,
    };
    let examples = read_corpus(io::open(&a.corpus)?, format, &io::name(&a.corpus));
    let mut counter = FrequencyCounter::new(&descriptors)?;
    if a.sample == 0 {
        for ex in examples {
            counter.add_example(&ex?);
        }
    } else {
        let sample = reservoir_sample(examples, a.sample, cli.seed.unwrap_or(0));
        for ex in sample {
            counter.add_example(&ex?);
        }
    }
    io::write_csv(io::output(cli.out.as_deref())?, &counter.finish().rows)?;
    Ok(())
}

fn mock_score(cli: &Cli, a: &MockScoreArgs) -> Result<()> {
    let mut profile: MockProfile = match &a.profile {
        Some(p) => serde_json::from_reader(io::open(p)?)?,
        None => MockProfile::default(),
    };
    if let Some(seed) = cli.seed {
        profile.seed = seed;
    }
    profile.validate()?;
    let source = io::name(&a.sentences);
    let mut w = io::output(cli.out.as_deref())?;
    let manifest = mock_style_manifest();
    let reg = match a.emit {
        Emit::Offense => Some(io::registry(cli.data_dir.as_deref())?),
        _ => None,
    };
    // Given responses are scored against the sentences they reference.
    let given = a.responses.as_deref().map(io::responses).transpose()?;
    let mut by_sentence: BTreeMap<String, Vec<hb_core::generation::ResponseRecord>> = BTreeMap::new();
    if let Some(rs) = given {
        for r in rs {
            by_sentence.entry(r.sentence_id.clone()).or_default().push(r);
        }
    }
    let use_given = a.responses.is_some();
    jsonl::for_each_record(io::open(&a.sentences)?, &source, |_, r: SentenceRecord| {
        match a.emit {
            Emit::Ppl => {
                let score = PerplexityScore {
                    sentence_id: r.id.clone(),
                    perplexity: mock_perplexity(&r, &profile),
                };
                jsonl::write_record(&mut w, &score)?;
            }
            Emit::Responses => {
                for resp in mock_responses(&r, &profile, a.per_sentence) {
                    jsonl::write_record(&mut w, &resp)?;
                }
            }
            Emit::Styles => {
                let responses = if use_given {
                    by_sentence.remove(&r.id).unwrap_or_default()
                } else {
                    mock_responses(&r, &profile, a.per_sentence)
                };
                for resp in responses {
                    let probs = mock_style_vector_for(&resp.response_id, &r, &profile, manifest.len())?;
                    jsonl::write_record(
                        &mut w,
                        &StyleRecord {
                            response_id: resp.response_id,
                            probs,
                        },
                    )?;
                }
            }
            Emit::Offense => {
                let reg = reg.as_ref().expect("loaded above");
                let template = reg
                    .template(&r.template_id)
                    .ok_or_else(|| Error::Lookup(format!("template {:?} is not in the registry", r.template_id)))?;
                let score = OffenseScore {
                    id: r.id.clone(),
                    prob_offensive: mock_offense(&r, template.stance, &profile),
                };
                jsonl::write_record(&mut w, &score)?;
            }
        }
        Ok(())
    })?;
    if !by_sentence.is_empty() {
        return Err(Error::Join {
            offenders: by_sentence.into_keys().collect(),
        });
    }
    if a.emit == Emit::Styles {
        if let Some(path) = &a.manifest_out {
            let mut m = io::output(Some(path))?;
            serde_json::to_writer_pretty(&mut m, &manifest)?;
            writeln!(m)?;
            m.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}
