use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use uidscope::classifier::{self, TrainConfig};
use uidscope::eval;
use uidscope::features::{self, FeatureConfig, FeatureMatrix};
use uidscope::fsutil;
use uidscope::pipeline;
use uidscope::surprisal_io::{self, DatasetManifest, SurprisalSequence};
use uidscope::synth::{AuthorProfile, CorpusBuilder};

use crate::{Average, Cli, Command, GlobalOpts, SpanOpts, SynthCorpus};

struct Console {
    quiet: bool,
}

impl Console {
    fn warn(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            let _ = writeln!(std::io::stderr(), "warning: {msg}");
        }
    }

    fn say(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            // A closed pipe (e.g. `| head`) must not abort a run whose artifacts are still being written.
            let _ = writeln!(std::io::stdout(), "{msg}");
        }
    }
}

fn feature_config(global: &GlobalOpts, spans: &SpanOpts) -> Result<FeatureConfig> {
    let cfg = FeatureConfig {
        span_length: spans.span_length,
        span_mode: spans.span_mode,
        seed: global.seed,
        strict_short_docs: global.strict_short_docs,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let console = Console {
        quiet: cli.global.quiet,
    };
    let global = &cli.global;
    match cli.command {
        Command::Featurize { input, output, spans } => {
            featurize(&console, feature_config(global, &spans)?, &input, &output)
        }
        Command::Train {
            manifest,
            split,
            model_out,
            max_iter,
            l2,
            tol,
            no_standardize,
            spans,
        } => {
            let train_cfg = TrainConfig {
                max_iterations: max_iter,
                l2_strength: l2,
                convergence_tol: tol,
                seed: global.seed,
                standardize: !no_standardize,
            };
            train_cfg.validate()?;
            train(
                &console,
                feature_config(global, &spans)?,
                train_cfg,
                &manifest,
                &split,
                &model_out,
            )
        }
        Command::Evaluate {
            manifest,
            split,
            model,
            report_out,
            average,
        } => evaluate(&console, global, &manifest, &split, &model, &report_out, average),
        Command::Predict { input, model, output } => predict(&console, global, &input, &model, &output),
        Command::Explain {
            input,
            doc_id,
            span_length,
            output,
        } => {
            if span_length < 2 {
                bail!("span length must be at least 2, got {span_length}");
            }
            explain(&console, &input, &doc_id, span_length, output.as_deref())
        }
        Command::Combine { report, output } => combine(&console, &report, &output),
        Command::Distribution {
            manifest,
            split,
            output,
        } => distribution(&console, &manifest, &split, &output),
        Command::Synth {
            output_dir,
            corpus,
            train_per_author,
            test_per_author,
        } => synth(
            &console,
            global.seed,
            &output_dir,
            corpus,
            train_per_author,
            test_per_author,
        ),
    }
}

fn read_documents(console: &Console, input: &Path) -> Result<Vec<SurprisalSequence>> {
    let parsed = surprisal_io::parse_surprisal_file(input)?;
    for reject in &parsed.rejects {
        console.warn(format!("{}: {reject}", input.display()));
    }
    Ok(parsed.documents)
}

fn report_skips(console: &Console, matrix: &FeatureMatrix) {
    for skip in &matrix.skipped {
        console.warn(format!("skipped {}: {}", skip.doc_id, skip.reason));
    }
}

fn featurize(console: &Console, cfg: FeatureConfig, input: &Path, output: &Path) -> Result<()> {
    let docs = read_documents(console, input)?;
    let matrix = features::featurize_corpus(&docs, &cfg);
    report_skips(console, &matrix);
    features::write_feature_file(output, &matrix.rows)?;
    console.say(format!(
        "featurized {} of {} documents ({} features each) -> {}",
        matrix.n_rows(),
        docs.len(),
        cfg.feature_dim(),
        output.display()
    ));
    Ok(())
}

fn train(
    console: &Console,
    feature_cfg: FeatureConfig,
    train_cfg: TrainConfig,
    manifest_path: &Path,
    split: &str,
    model_out: &Path,
) -> Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let loaded = pipeline::load_split_features(&manifest, split, &feature_cfg)
        .with_context(|| format!("loading split `{split}`"))?;
    loaded.warnings.iter().for_each(|w| console.warn(w));
    let n_docs = loaded.matrix.n_rows();
    let fit = match pipeline::fit_matrix(loaded.matrix, &manifest.label_set, &feature_cfg, &train_cfg) {
        Err(uidscope::Error::TooFewClasses(n)) => bail!("need ≥ 2 classes, found {n} in split `{split}`"),
        Err(uidscope::Error::NoDocuments) => bail!("no documents in split `{split}`"),
        other => other?,
    };
    fit.summary.warnings.iter().for_each(|w| console.warn(w));
    classifier::save_model(&fit.model, model_out)?;
    console.say(format!(
        "trained on {n_docs} documents, classes [{}], {} iterations, final loss {:.6}, {} -> {}",
        fit.model.classes.join(", "),
        fit.summary.iterations,
        fit.summary.final_loss,
        if fit.summary.converged {
            "converged"
        } else {
            "not converged"
        },
        model_out.display()
    ));
    Ok(())
}

fn evaluate(
    console: &Console,
    global: &GlobalOpts,
    manifest_path: &Path,
    split: &str,
    model_path: &Path,
    report_out: &[PathBuf],
    average: Average,
) -> Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let model = classifier::load_model(model_path)?;
    let cfg = model.feature_config(global.seed, global.strict_short_docs);
    let loaded =
        pipeline::load_split_features(&manifest, split, &cfg).with_context(|| format!("loading split `{split}`"))?;
    loaded.warnings.iter().for_each(|w| console.warn(w));
    if loaded.matrix.rows.is_empty() {
        bail!("no documents in split `{split}`");
    }
    if let Some(dim) = loaded.matrix.dim() {
        if dim != model.feature_dim {
            bail!(
                "feature dimension mismatch: model expects {} features, split `{split}` has {dim}",
                model.feature_dim
            );
        }
    }
    let evaluation = pipeline::evaluate_matrix(&model, loaded.matrix, &manifest.label_set)?;
    for path in report_out {
        eval::write_report(&evaluation.report, path)?;
    }
    let r = &evaluation.report;
    for name in &r.classes {
        let m = &r.per_class[name];
        console.say(format!(
            "{name:>16}  precision {:.4}  recall {:.4}  f1 {:.4}  support {}",
            m.precision, m.recall, m.f1, m.support
        ));
    }
    match average {
        Average::Unweighted => console.say(format!("average F1: {:.4} ({} documents)", r.average_f1, r.n_docs)),
        Average::Weighted => console.say(format!("weighted F1: {:.4} ({} documents)", r.weighted_f1, r.n_docs)),
    }
    Ok(())
}

fn predict(console: &Console, global: &GlobalOpts, input: &Path, model_path: &Path, output: &Path) -> Result<()> {
    let model = classifier::load_model(model_path)?;
    let contents = fsutil::read_to_string(input)?;
    let rows = if features::looks_like_feature_file(&contents) {
        features::parse_feature_str(&contents, input)?
    } else {
        let parsed = surprisal_io::parse_surprisal_str(&contents, input)?;
        for reject in &parsed.rejects {
            console.warn(format!("{}: {reject}", input.display()));
        }
        let cfg = model.feature_config(global.seed, global.strict_short_docs);
        let matrix = features::featurize_corpus(&parsed.documents, &cfg);
        report_skips(console, &matrix);
        matrix.rows
    };
    let predictions = pipeline::predict_rows(&model, &rows)?;
    let mut text = String::new();
    for p in &predictions {
        text.push_str(&serde_json::to_string(p)?);
        text.push('\n');
    }
    fsutil::write_atomic(output, text.as_bytes())?;
    console.say(format!(
        "predicted {} documents -> {}",
        predictions.len(),
        output.display()
    ));
    Ok(())
}

fn explain(console: &Console, input: &Path, doc_id: &str, span_length: usize, output: Option<&Path>) -> Result<()> {
    let docs = read_documents(console, input)?;
    let Some(doc) = docs.iter().find(|d| d.doc_id == doc_id) else {
        bail!("document `{doc_id}` not found in {}", input.display());
    };
    let values = doc.surprisals();
    let spans = features::extreme_spans(&values, span_length)?;
    let mut lines = vec![format!(
        "document {doc_id}: {} tokens, mean surprisal {:.4} nats, UID variance {:.4}",
        values.len(),
        features::surprisal_mean(&values)?,
        features::uid_variance(&values)?
    )];
    if spans.padded {
        lines.push(format!(
            "document is shorter than the span length {span_length}; both spans are the whole document padded with its mean"
        ));
    }
    for (title, offset, span) in [
        ("max-UID span (least uniform)", spans.max_offset, &spans.max_span),
        ("min-UID span (most uniform)", spans.min_offset, &spans.min_span),
    ] {
        lines.push(format!(
            "{title}: offset {offset}, window variance {:.4}",
            features::uid_variance(span)?
        ));
        let real = span_length.min(values.len() - offset);
        for i in offset..offset + real {
            let t = &doc.tokens[i];
            lines.push(format!("  {i:>6}  {:>10.4}  {:?}", t.surprisal, t.token));
        }
    }
    console.say(lines.join("\n"));
    if let Some(path) = output {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "token", "surprisal"])?;
        for (i, t) in doc.tokens.iter().enumerate() {
            w.write_record([i.to_string(), t.token.clone(), t.surprisal.to_string()])?;
        }
        fsutil::write_atomic(path, &w.into_inner().context("flushing CSV")?)?;
    }
    Ok(())
}

fn combine(console: &Console, reports: &[PathBuf], output: &Path) -> Result<()> {
    let mut loaded = Vec::with_capacity(reports.len());
    for path in reports {
        let report = eval::read_report(path).with_context(|| format!("reading report {}", path.display()))?;
        let name = path
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        loaded.push((name, report));
    }
    let summary = eval::average_over_testbeds(&loaded)?;
    let is_csv = output.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let text = if is_csv {
        summary.to_csv()?
    } else {
        serde_json::to_string_pretty(&summary)? + "\n"
    };
    fsutil::write_atomic(output, text.as_bytes())?;
    for t in summary.testbeds.iter().chain(std::iter::once(&summary.mean)) {
        console.say(format!(
            "{:>16}  average F1 {:.4}  weighted F1 {:.4}  accuracy {:.4}  n={}",
            t.testbed, t.average_f1, t.weighted_f1, t.accuracy, t.n_docs
        ));
    }
    Ok(())
}

fn distribution(console: &Console, manifest_path: &Path, split: &str, output: &Path) -> Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let corpus = surprisal_io::load_corpus(&manifest, split)?;
    for (file, reject) in &corpus.rejects {
        console.warn(format!("{}: {reject}", file.display()));
    }
    if corpus.documents.is_empty() {
        bail!("no documents in split `{split}`");
    }
    let groups = eval::group_by_label(&corpus.documents)?;
    let summary = eval::uid_distribution_summary(&groups)?;
    fsutil::write_atomic(output, summary.to_csv()?.as_bytes())?;
    for a in &summary.authors {
        console.say(format!(
            "{:>16}  mean {:.4}  std {:.4}  median {:.4}  [{:.4}, {:.4}]  n={}",
            a.label, a.mean, a.std, a.median, a.min, a.max, a.n_docs
        ));
    }
    Ok(())
}

fn synth(
    console: &Console,
    seed: u64,
    dir: &Path,
    corpus: SynthCorpus,
    train_per_author: usize,
    test_per_author: usize,
) -> Result<()> {
    let authors = match corpus {
        SynthCorpus::Dispersion => vec![AuthorProfile::machine_like(), AuthorProfile::human_like()],
        SynthCorpus::Bursty => {
            let (smooth, bursty) = AuthorProfile::bursty_pair();
            vec![smooth, bursty]
        }
    };
    let builder = CorpusBuilder::new(authors);
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let train = builder.try_generate(train_per_author, seed, "train")?;
    let test = builder.try_generate(test_per_author, seed.wrapping_add(1), "test")?;
    surprisal_io::write_surprisal_file(&dir.join("train.jsonl"), &train)?;
    surprisal_io::write_surprisal_file(&dir.join("test.jsonl"), &test)?;
    let manifest = DatasetManifest {
        name: format!(
            "synthetic-{}",
            match corpus {
                SynthCorpus::Dispersion => "dispersion",
                SynthCorpus::Bursty => "bursty",
            }
        ),
        label_set: builder.label_set(),
        splits: [
            ("train".to_string(), vec![PathBuf::from("train.jsonl")]),
            ("test".to_string(), vec![PathBuf::from("test.jsonl")]),
        ]
        .into_iter()
        .collect(),
    };
    manifest.save(&dir.join("manifest.json"))?;
    console.say(format!(
        "wrote {} train and {} test documents to {}",
        train.len(),
        test.len(),
        dir.display()
    ));
    Ok(())
}
