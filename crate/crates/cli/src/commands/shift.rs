use anyhow::Result;

use rrseg::corpus::{load_corpus, Part};
use rrseg::encoders::encode_corpus;
use rrseg::experiments::RunManifest;
use rrseg::lsp::{
    build_shift_dataset_with, cached_shift_embeddings, eval_shift, positive_rate, train_pair_shift,
    train_siamese_shift, PairGranularity, ShiftDoc, ShiftModel, ShiftSchedule,
};

use super::{close_run, open_run, print_json, Data};
use crate::args::{EncodeArgs, ShiftEmbedArgs, ShiftKind, TrainLspArgs};
use crate::error::CliError;
use crate::inputs::load_shift_model;
use crate::Context;

pub fn encode(ctx: &Context, a: EncodeArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus)?;
    let encoder = ctx.config.encoder(&a.encoder)?.build()?;
    let id = encoder.encoder_id();
    let dir = a
        .out
        .unwrap_or_else(|| ctx.cache_dir.join("emb").join(&rrseg::util::sha256_hex(id.as_bytes())[..16]));
    let (archive, stats) = encode_corpus(encoder.as_ref(), &docs, &dir)?;
    print_json(&serde_json::json!({
        "archive": dir,
        "encoder_id": archive.encoder_id(),
        "dim": archive.dim(),
        "encoded": stats.encoded,
        "skipped": stats.skipped,
    }))
}

pub fn train_lsp(ctx: &Context, a: TrainLspArgs) -> Result<()> {
    let data = Data::load(ctx, &a.data)?;
    let train = data.part(Part::Train);
    let val = data.part(Part::Val);
    let granularity = if a.fine { PairGranularity::Fine } else { PairGranularity::Main };
    let pairs = build_shift_dataset_with(&train, granularity)?;
    let mut schedule = match a.model {
        ShiftKind::Siamese => ShiftSchedule::siamese(),
        ShiftKind::Pair => ShiftSchedule::pair(),
    };
    schedule.seed = a.seed;
    if let Some(v) = a.epochs {
        schedule.epochs = v;
    }
    if let Some(v) = a.lr {
        schedule.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        schedule.batch_size = v;
    }
    if a.positive_weight.is_some() {
        schedule.positive_weight = a.positive_weight;
    }
    let spec = ctx.config.encoder(&a.encoder)?;
    let mut manifest = RunManifest::new(
        "train-lsp",
        &serde_json::json!({
            "model": format!("{:?}", a.model).to_lowercase(),
            "encoder": spec,
            "schedule": schedule,
            "fine": a.fine,
        }),
        vec![a.seed],
    );
    data.describe(&mut manifest)?;
    let run = open_run(ctx, a.out.as_deref(), &manifest)?;
    log::info!("{} training pairs, {:.3} positive", pairs.len(), positive_rate(&pairs));

    let model_dir = run.join("model");
    let (model, val_docs): (Box<dyn ShiftModel>, Vec<ShiftDoc>) = match a.model {
        ShiftKind::Siamese => {
            let encoder = spec.build()?;
            let model = train_siamese_shift(encoder.as_ref(), &pairs, &schedule)?;
            model.save(&model_dir)?;
            let docs = val
                .iter()
                .map(|d| Ok(ShiftDoc::from_record(d, Some(encoder.encode(&d.texts())?))))
                .collect::<Result<_>>()?;
            (Box::new(model), docs)
        }
        ShiftKind::Pair => {
            let model = train_pair_shift(spec.token_encoder()?, &pairs, &schedule)?;
            model.save(&model_dir)?;
            (Box::new(model), val.iter().map(|d| ShiftDoc::from_record(d, None)).collect())
        }
    };
    let report = if val_docs.is_empty() {
        None
    } else {
        Some(eval_shift(&model, &val_docs)?)
    };
    let summary = serde_json::json!({
        "model_id": model.model_id(),
        "pairs": pairs.len(),
        "positive_rate": positive_rate(&pairs),
        "val_shift_f1": report.as_ref().and_then(|r| r.f1(rrseg::lsp::SHIFT)),
        "val_macro_f1": report.as_ref().map(|r| r.macro_f1),
    });
    if let Some(r) = &report {
        rrseg::util::write_json(&run.join("shift_report.json"), r)?;
    }
    rrseg::util::write_json(&run.join("summary.json"), &summary)?;
    close_run(&run, &mut manifest, &["model", "shift_report.json", "summary.json"])?;
    print_json(&serde_json::json!({ "run": run, "summary": summary }))
}

pub fn shift_embed(ctx: &Context, a: ShiftEmbedArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus)?;
    let model = load_shift_model(&a.shift_model)?;
    let frozen = match &a.shift_encoder {
        Some(name) => Some(ctx.config.encoder(name)?.build()?),
        None if model.model_id().starts_with("siamese:") => {
            return Err(CliError::Config("a siamese shift model needs --shift-encoder".into()).into())
        }
        None => None,
    };
    let shift_docs: Vec<ShiftDoc> = docs
        .iter()
        .map(|d| {
            let emb = frozen.as_ref().map(|e| e.encode(&d.texts())).transpose()?;
            Ok(ShiftDoc::from_record(d, emb))
        })
        .collect::<Result<_>>()?;
    let id = model.model_id();
    let dir = a
        .out
        .unwrap_or_else(|| ctx.cache_dir.join("shift").join(&rrseg::util::sha256_hex(id.as_bytes())[..16]));
    let embs = cached_shift_embeddings(&model, &shift_docs, &dir)?;
    print_json(&serde_json::json!({
        "archive": dir,
        "model_id": id,
        "documents": embs.len(),
        "pairs": embs.iter().map(|m| m.nrows()).sum::<usize>(),
    }))
}
