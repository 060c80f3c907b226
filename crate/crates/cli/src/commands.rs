use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use avis_core::codec::PassBucket;
use avis_core::data_io::{
    export_frames, read_vraw, synth_blobs, synth_gauss_ar1, write_vraw, SynthSpec,
};
use avis_core::prior::{read_params, write_params, TrainConfig};
use avis_core::{
    efficiency_report, lipschitz_empirical, psnr, run, ssim, sweep_case, sweep_run, sweep_run_with,
    verify_bound as check_bound, write_metrics_csv, BoundReport, Codec, ContextCache, Degradation,
    GaussArPrior, LatentSeq, LearnedPrior, LinearOperator, Measurement, MetricsRow, Retention,
    RunConfig, RunMode, Schedule, SweepConfig, TaskKind, VectorField, Video, VideoShape,
};

use crate::manifest::Manifest;
use crate::{
    record, ArArgs, BenchArgs, CodecArgs, CodecChoice, DegradeArgs, Geometry, MetricsArgs,
    PriorChoice, RestoreArgs, SamplerArgs, SynthArgs, SynthChoice, TaskArgs, TrainArgs, VerifyArgs,
};

/// Exit status of `verify-bound --prior learned`: the run completed but the
/// constants are only empirical.
const EXIT_EMPIRICAL: u8 = 3;

fn open_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Runs `body` between the two manifest writes. Failures leave
/// `status=failed` behind.
fn guarded(m: &Manifest, body: impl FnOnce() -> Result<ExitCode>) -> Result<ExitCode> {
    m.start()?;
    match body() {
        Ok(code) => {
            m.finish(if code == ExitCode::SUCCESS {
                "ok"
            } else {
                "nonzero"
            })?;
            Ok(code)
        }
        Err(e) => {
            m.finish("failed")?;
            Err(e)
        }
    }
}

fn make_codec(c: &CodecArgs) -> Result<Codec> {
    Ok(match c.codec {
        CodecChoice::Identity => Codec::identity(),
        CodecChoice::Pool => Codec::pool_interp(c.codec_spatial, c.codec_temporal)?,
    })
}

/// Fills in the codec-dependent default frame count: 9 latent frames either way.
fn resolve_frames(g: &mut Geometry, c: &CodecArgs) {
    if g.frames.is_none() {
        g.frames = Some(match c.codec {
            CodecChoice::Identity => 9,
            CodecChoice::Pool => 1 + 8 * c.codec_temporal,
        });
    }
}

fn pixel_shape(g: &Geometry) -> VideoShape {
    VideoShape::new(g.frames.unwrap_or(9), g.height, g.width, g.channels)
}

pub fn build_operator(task: &TaskArgs, input: VideoShape) -> Result<Degradation<f64>> {
    Ok(match task.task {
        TaskKind::Identity => Degradation::identity(input),
        TaskKind::SuperResolution => Degradation::super_resolution(input, task.scale)?,
        TaskKind::Inpaint => {
            Degradation::inpaint(input, task.keep, task.mask_seed, task.shared_mask)?
        }
        TaskKind::GaussianBlur => {
            Degradation::gaussian_blur(input, task.blur_size, task.blur_sigma)?
        }
        TaskKind::TemporalAverage => Degradation::temporal_average(input, task.window)?,
        TaskKind::SpatioTemporalAverage => {
            Degradation::spatio_temporal_average(input, task.scale, task.window)?
        }
    })
}

/// Clean shape behind a measurement of shape `y`.
fn clean_shape_of(task: &TaskArgs, y: VideoShape) -> VideoShape {
    let f = match task.task {
        TaskKind::SuperResolution | TaskKind::SpatioTemporalAverage => task.scale,
        _ => 1,
    };
    VideoShape::new(y.frames, y.height * f, y.width * f, y.channels)
}

fn record_task(m: &mut Manifest, t: &TaskArgs) {
    record!(
        m,
        t,
        task,
        scale,
        keep,
        mask_seed,
        shared_mask,
        blur_size,
        blur_sigma,
        window,
        noise_sigma,
        noise_seed
    );
}

fn record_sampler(m: &mut Manifest, s: &SamplerArgs) {
    record!(
        m,
        s,
        t0,
        steps,
        gamma,
        cg_iters,
        prerestore_iters,
        chunk_len,
        chunks,
        seed,
        params
    );
    m.put("prior", prior_name(s.prior));
}

fn record_codec(m: &mut Manifest, c: &CodecArgs) {
    m.put(
        "codec",
        if c.codec == CodecChoice::Identity {
            "identity"
        } else {
            "pool"
        },
    );
    record!(m, c, codec_spatial, codec_temporal);
}

fn record_geometry(m: &mut Manifest, g: &Geometry) {
    record!(m, g, frames, height, width, channels);
}

fn record_ar(m: &mut Manifest, a: &ArArgs) {
    record!(m, a, rho, sigma_p, mu0);
}

fn prior_name(p: PriorChoice) -> &'static str {
    match p {
        PriorChoice::Gauss => "gauss",
        PriorChoice::Learned => "learned",
    }
}

pub fn synth(a: SynthArgs) -> Result<ExitCode> {
    let mut a = a;
    open_out_dir(&a.out_dir)?;
    let mut m = Manifest::new(&a.out_dir, "synth");
    m.put("out_dir", &a.out_dir);
    m.put(
        "kind",
        if a.kind == SynthChoice::Blobs {
            "blobs"
        } else {
            "gauss-ar1"
        },
    );
    if a.geometry.frames.is_none() {
        a.geometry.frames = Some(9);
    }
    record_geometry(&mut m, &a.geometry);
    record_ar(&mut m, &a.ar);
    record!(m, a, count, speed, chunk_len, seed, export_frames);
    guarded(&m, || {
        let shape = pixel_shape(&a.geometry);
        let clip: Video<f64> = match a.kind {
            SynthChoice::Blobs => synth_blobs(&SynthSpec::blobs(shape, a.seed, a.count, a.speed))?,
            SynthChoice::GaussAr1 => synth_gauss_ar1(
                &SynthSpec::gauss_ar1(shape, a.seed, a.ar.rho, a.ar.sigma_p, a.ar.mu0),
                a.chunk_len,
            )?
            .into_video(),
        };
        write_vraw(&clip, a.out_dir.join("clip.vraw"))?;
        if a.export_frames {
            export_frames(&clip, a.out_dir.join("frames"))?;
        }
        println!(
            "wrote {} clip {}",
            shape,
            a.out_dir.join("clip.vraw").display()
        );
        Ok(ExitCode::SUCCESS)
    })
}

pub fn degrade(a: DegradeArgs) -> Result<ExitCode> {
    open_out_dir(&a.out_dir)?;
    let mut m = Manifest::new(&a.out_dir, "degrade");
    record!(m, a, out_dir, input);
    record_task(&mut m, &a.task);
    guarded(&m, || {
        let clean: Video<f64> = read_vraw(&a.input)?;
        let op = build_operator(&a.task, clean.shape())?;
        let y = op.degrade(&clean, a.task.noise_sigma, a.task.noise_seed)?;
        write_vraw(&y.payload, a.out_dir.join("measurement.vraw"))?;
        if let Some(mask) = op.mask_video() {
            write_vraw(&mask, a.out_dir.join("mask.vraw"))?;
        }
        println!("{} -> {}", clean.shape(), y.payload.shape());
        Ok(ExitCode::SUCCESS)
    })
}

/// Measurement, operator and (when known) clean reference for a run.
struct Problem {
    op: Degradation<f64>,
    y: Measurement<f64>,
    reference: Option<Video<f64>>,
    name: String,
}

/// Synthesizes an AR(1) Gaussian latent clip and decodes it to pixels.
fn default_clip(
    g: &Geometry,
    ar: &ArArgs,
    codec: &CodecArgs,
    chunk_len: usize,
    seed: u64,
) -> Result<Video<f64>> {
    let scratch = make_codec(codec)?;
    let latent = scratch.latent_shape(pixel_shape(g))?;
    let spec = SynthSpec::gauss_ar1(latent, seed, ar.rho, ar.sigma_p, ar.mu0);
    let z = synth_gauss_ar1::<f64>(&spec, chunk_len)?;
    Ok(scratch.decode(&z, PassBucket::Other)?)
}

struct Source<'a> {
    input: Option<&'a Path>,
    degrade_first: bool,
    reference: Option<&'a Path>,
    data_seed: u64,
}

fn load_problem(
    src: &Source,
    task: &TaskArgs,
    sampler: &SamplerArgs,
    codec: &CodecArgs,
    g: &Geometry,
    ar: &ArArgs,
) -> Result<Problem> {
    let (y_full, clean, name) = match src.input {
        None => {
            let clean = default_clip(g, ar, codec, sampler.chunk_len, src.data_seed)?;
            let op = build_operator(task, clean.shape())?;
            let y = op.degrade(&clean, task.noise_sigma, task.noise_seed)?;
            (
                y.payload,
                Some(clean),
                format!("gauss_ar1_{}", src.data_seed),
            )
        }
        Some(path) => {
            let v: Video<f64> = read_vraw(path)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if src.degrade_first {
                let op = build_operator(task, v.shape())?;
                let y = op.degrade(&v, task.noise_sigma, task.noise_seed)?;
                (y.payload, Some(v), name)
            } else {
                (v, None, name)
            }
        }
    };
    let mut reference = match src.reference {
        Some(p) => Some(read_vraw::<f64>(p)?),
        None => clean,
    };
    let mut y = y_full;
    if let Some(n) = sampler.chunks {
        // Every operator keeps the frame axis and is causal in time, so
        // cutting the measurement equals measuring the cut clip.
        let c = make_codec(codec)?;
        let latent = c.latent_shape(clean_shape_of(task, y.shape()))?;
        let keep_latent = n * sampler.chunk_len;
        ensure!(
            keep_latent <= latent.frames,
            "--chunks {n} needs {keep_latent} latent frames, input has {}",
            latent.frames
        );
        let keep = c.pixel_shape(latent.with_frames(keep_latent)).frames;
        y = y.slice_frames(0, keep);
        reference = reference.map(|r| r.slice_frames(0, keep.min(r.frames())));
    }
    let op = build_operator(task, clean_shape_of(task, y.shape()))?;
    ensure!(
        op.output_shape() == y.shape(),
        "measurement shape {} does not match task {} (expected {})",
        y.shape(),
        task.task,
        op.output_shape()
    );
    if let Some(r) = &reference {
        ensure!(
            r.shape() == op.input_shape(),
            "reference shape {} != {}",
            r.shape(),
            op.input_shape()
        );
    }
    Ok(Problem {
        op,
        y: Measurement::noiseless(y),
        reference,
        name,
    })
}

fn make_prior(
    s: &SamplerArgs,
    ar: &ArArgs,
    codec: &Codec,
    op: &Degradation<f64>,
) -> Result<Box<dyn VectorField<f64>>> {
    let latent = codec.latent_shape(op.input_shape())?;
    let chunk = latent.with_frames(s.chunk_len);
    Ok(match s.prior {
        PriorChoice::Gauss => Box::new(GaussArPrior::new(ar.rho, ar.sigma_p, ar.mu0, chunk)?),
        PriorChoice::Learned => {
            let path = s
                .params
                .as_ref()
                .context("--prior learned needs --params")?;
            let p = read_params(path)?;
            ensure!(
                p.shape() == chunk,
                "learned prior was trained on {} chunks, run needs {}",
                p.shape(),
                chunk
            );
            Box::new(p)
        }
    })
}

fn run_config(mode: RunMode, s: &SamplerArgs) -> Result<RunConfig<f64>> {
    let mut cfg = RunConfig::new(mode, s.seed);
    cfg.schedule = Schedule::linear(s.t0, s.steps)?;
    cfg.gamma = s.gamma;
    cfg.guidance_iters = s.cg_iters;
    cfg.prerestore_iters = s.prerestore_iters;
    cfg.chunk_len = s.chunk_len;
    Ok(cfg)
}

fn resolve_mode(mode: RunMode, period: Option<usize>) -> Result<RunMode> {
    match (mode, period) {
        (RunMode::FlashPeriodic { .. }, Some(p)) => Ok(RunMode::FlashPeriodic { period: p }),
        (m, Some(_)) => bail!("--period only applies to flash_periodic (mode is {m})"),
        (m, None) => Ok(m),
    }
}

pub fn restore(a: RestoreArgs) -> Result<ExitCode> {
    let mut a = a;
    open_out_dir(&a.out_dir)?;
    resolve_frames(&mut a.geometry, &a.codec);
    let mode = resolve_mode(a.mode, a.period)?;
    let mut m = Manifest::new(&a.out_dir, "restore");
    record!(m, a, out_dir, input, degrade_first, reference);
    m.put("mode", mode);
    record_sampler(&mut m, &a.sampler);
    record_task(&mut m, &a.task);
    record_codec(&mut m, &a.codec);
    record_geometry(&mut m, &a.geometry);
    record_ar(&mut m, &a.ar);
    record!(m, a, data_seed, export_frames);
    guarded(&m, || {
        let src = Source {
            input: a.input.as_deref(),
            degrade_first: a.degrade_first,
            reference: a.reference.as_deref(),
            data_seed: a.data_seed,
        };
        let p = load_problem(&src, &a.task, &a.sampler, &a.codec, &a.geometry, &a.ar)?;
        let codec = make_codec(&a.codec)?;
        let prior = make_prior(&a.sampler, &a.ar, &codec, &p.op)?;
        let cfg = run_config(mode, &a.sampler)?;
        let out = run(&cfg, prior.as_ref(), &codec, &p.op, &p.y)?;

        write_vraw(&out.video, a.out_dir.join("restored.vraw"))?;
        write_vraw(&out.x_init, a.out_dir.join("x_init.vraw"))?;
        out.trace.write_csv(a.out_dir.join("trace.csv"))?;
        if a.export_frames {
            export_frames(&out.video, a.out_dir.join("frames"))?;
        }
        print!(
            "mode={} chunks={} guidance_calls={} first_display_step={}",
            mode,
            out.trace.num_chunks,
            out.trace.guidance_calls(),
            out.trace.first_display_step().unwrap_or(0)
        );
        if let Some(r) = &p.reference {
            let row = MetricsRow::new(&p.name, a.task.task.name(), &out.video, r, &out.trace)?;
            let init = psnr(&out.x_init, r)?;
            print!(" psnr={:.3} psnr_init={:.3}", row.psnr_db, init);
            write_metrics_csv(std::slice::from_ref(&row), a.out_dir.join("metrics.csv"))?;
        }
        println!();
        Ok(ExitCode::SUCCESS)
    })
}

pub fn train_prior(a: TrainArgs) -> Result<ExitCode> {
    open_out_dir(&a.out_dir)?;
    let mut m = Manifest::new(&a.out_dir, "train-prior");
    record!(m, a, out_dir, height, width, channels, chunk_len, chunks, sequences);
    record_ar(&mut m, &a.ar);
    record!(m, a, hidden, lr, batch_size, epochs, seed);
    guarded(&m, || {
        let chunk = VideoShape::new(a.chunk_len, a.height, a.width, a.channels);
        let seq_shape = chunk.with_frames(a.chunk_len * a.chunks);
        let mut data = Vec::with_capacity(a.sequences * a.chunks);
        for s in 0..a.sequences as u64 {
            let spec = SynthSpec::gauss_ar1(
                seq_shape,
                a.seed.wrapping_add(s),
                a.ar.rho,
                a.ar.sigma_p,
                a.ar.mu0,
            );
            let z: LatentSeq<f64> = synth_gauss_ar1(&spec, a.chunk_len)?;
            let mut ctx = ContextCache::empty(Retention::All);
            for n in 1..=z.num_chunks() {
                let d = z.chunk_data(n).to_vec();
                data.push((d.clone(), ctx.clone()));
                ctx = ctx.push(&avis_core::Chunk::new(n, 0.0, chunk, d)?)?;
            }
        }
        let mut prior = LearnedPrior::new(chunk, a.hidden, a.seed)?;
        let report = prior.train(
            &data,
            &TrainConfig {
                lr: a.lr,
                batch_size: a.batch_size,
                epochs: a.epochs,
                seed: a.seed,
            },
        )?;
        write_params(&prior, a.out_dir.join("params.lprm"))?;
        let mut w = csv::Writer::from_path(a.out_dir.join("loss.csv"))?;
        w.write_record(["epoch", "loss"])?;
        for (e, l) in report.loss_history.iter().enumerate() {
            w.write_record([(e + 1).to_string(), l.to_string()])?;
        }
        w.flush()?;
        println!(
            "params={} examples={} loss {:.6} -> {:.6}",
            prior.num_params(),
            data.len(),
            report.loss_history.first().copied().unwrap_or(f64::NAN),
            report.loss_history.last().copied().unwrap_or(f64::NAN)
        );
        Ok(ExitCode::SUCCESS)
    })
}

pub fn verify_bound(a: VerifyArgs) -> Result<ExitCode> {
    open_out_dir(&a.out_dir)?;
    let mut m = Manifest::new(&a.out_dir, "verify-bound");
    record!(m, a, out_dir, seeds, t0, steps, params, rho, sigma_p, mu0, max_chunk, trials);
    m.put("prior", prior_name(a.prior));
    guarded(&m, || {
        let schedule = Schedule::linear(a.t0, a.steps)?;
        let mut cfg = SweepConfig {
            rho: a.rho,
            sigma_p: a.sigma_p,
            mu0: a.mu0,
            max_chunk: a.max_chunk,
            ..SweepConfig::default()
        };
        let learned = match a.prior {
            PriorChoice::Gauss => None,
            PriorChoice::Learned => {
                let path = a
                    .params
                    .as_ref()
                    .context("--prior learned needs --params")?;
                let p = read_params(path)?;
                cfg.shape = p.shape();
                Some(p)
            }
        };
        let mut w = csv::Writer::from_path(a.out_dir.join("bound.csv"))?;
        w.write_record([
            "seed",
            "chunk",
            "eps0",
            "delta",
            "eps_final",
            "big_lambda",
            "big_b",
            "slack",
            "satisfied",
        ])?;
        let mut worst: Option<(u64, f64)> = None;
        let mut violations = Vec::new();
        for seed in 0..a.seeds {
            let report: BoundReport<f64> = match &learned {
                None => sweep_run(&cfg, &schedule, seed)?,
                Some(p) => {
                    let case = sweep_case(&cfg, seed);
                    let lip = lipschitz_empirical(p, &schedule, case.chunk, a.trials, seed)?;
                    sweep_run_with(p, &cfg, &schedule, &case, lip, seed)?
                }
            };
            let v = check_bound(&report);
            w.write_record([
                seed.to_string(),
                report.chunk.to_string(),
                report.eps0.to_string(),
                report.delta.to_string(),
                report.eps_final().to_string(),
                report.coefficients.big_lambda.to_string(),
                report.coefficients.big_b.to_string(),
                v.slack.to_string(),
                v.satisfied.to_string(),
            ])?;
            if worst.is_none_or(|(_, s)| v.slack < s) {
                worst = Some((seed, v.slack));
            }
            if !v.satisfied {
                violations.push(seed);
            }
        }
        w.flush()?;
        let (ws, wv) = worst.expect("at least one seed");
        println!(
            "{}/{} runs satisfy the bound; worst slack {wv:.3e} (seed {ws})",
            a.seeds - violations.len() as u64,
            a.seeds
        );
        if learned.is_some() {
            eprintln!(
                "warning: learned prior uses sampled Lipschitz constants; \
                 the bound is an empirical-lower-bound only check"
            );
            return Ok(ExitCode::from(EXIT_EMPIRICAL));
        }
        if let Some(first) = violations.first() {
            eprintln!(
                "bound violated at seed {first} ({} violations)",
                violations.len()
            );
            return Ok(ExitCode::FAILURE);
        }
        Ok(ExitCode::SUCCESS)
    })
}

pub fn bench(a: BenchArgs) -> Result<ExitCode> {
    let mut a = a;
    open_out_dir(&a.out_dir)?;
    resolve_frames(&mut a.geometry, &a.codec);
    let task: TaskArgs = a.task.clone().into();
    let mut m = Manifest::new(&a.out_dir, "bench");
    record!(m, a, out_dir, modes);
    record_sampler(&mut m, &a.sampler);
    record_task(&mut m, &task);
    record_codec(&mut m, &a.codec);
    record_geometry(&mut m, &a.geometry);
    record_ar(&mut m, &a.ar);
    record!(m, a, data_seed);
    guarded(&m, || {
        let src = Source {
            input: None,
            degrade_first: false,
            reference: None,
            data_seed: a.data_seed,
        };
        let p = load_problem(&src, &task, &a.sampler, &a.codec, &a.geometry, &a.ar)?;
        let mut traces = Vec::with_capacity(a.modes.len());
        let mut quality = Vec::with_capacity(a.modes.len());
        for &mode in &a.modes {
            let codec = make_codec(&a.codec)?;
            let prior = make_prior(&a.sampler, &a.ar, &codec, &p.op)?;
            let out = run(
                &run_config(mode, &a.sampler)?,
                prior.as_ref(),
                &codec,
                &p.op,
                &p.y,
            )?;
            quality.push(match &p.reference {
                Some(r) => Some(psnr(&out.video, r)?),
                None => None,
            });
            traces.push(out.trace);
        }
        let rows = efficiency_report(&traces)?;
        let avis = rows
            .iter()
            .find(|r| r.mode == "avis")
            .map(|r| r.guidance_passes);
        let mut w = csv::Writer::from_path(a.out_dir.join("bench.csv"))?;
        w.write_record([
            "mode",
            "chunks",
            "steps",
            "latency_steps",
            "guidance_calls",
            "prerestore_passes",
            "guidance_passes",
            "display_passes",
            "total_reverse_steps",
            "frames_per_step",
            "wall_nanos",
            "guidance_pass_ratio_vs_avis",
            "psnr_db",
        ])?;
        for ((row, mode), q) in rows.iter().zip(&a.modes).zip(&quality) {
            let ratio = match avis {
                Some(d) if d > 0 => (row.guidance_passes as f64 / d as f64).to_string(),
                _ => String::new(),
            };
            w.write_record([
                mode.to_string(),
                row.chunks.to_string(),
                row.steps.to_string(),
                row.latency_steps.to_string(),
                row.guidance_calls.to_string(),
                row.prerestore_passes.to_string(),
                row.guidance_passes.to_string(),
                row.display_passes.to_string(),
                row.total_reverse_steps.to_string(),
                row.frames_per_step.to_string(),
                row.wall_nanos.to_string(),
                ratio.clone(),
                q.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
            println!(
                "{mode:<18} latency={} guidance_calls={} guidance_passes={} ratio={}",
                row.latency_steps,
                row.guidance_calls,
                row.guidance_passes,
                if ratio.is_empty() { "-" } else { &ratio }
            );
        }
        w.flush()?;
        Ok(ExitCode::SUCCESS)
    })
}

pub fn metrics(a: MetricsArgs) -> Result<ExitCode> {
    open_out_dir(&a.out_dir)?;
    let mut m = Manifest::new(&a.out_dir, "metrics");
    record!(m, a, out_dir, restored, reference, video);
    guarded(&m, || {
        let x: Video<f64> = read_vraw(&a.restored)?;
        let r: Video<f64> = read_vraw(&a.reference)?;
        let p = psnr(&x, &r)?;
        let s = match ssim(&x, &r) {
            Ok(s) => Some(s),
            Err(avis_core::Error::Shape(_)) if x.shape() == r.shape() => None,
            Err(e) => return Err(e.into()),
        };
        let mut w = csv::Writer::from_path(a.out_dir.join("quality.csv"))?;
        w.write_record(["video", "psnr_db", "ssim"])?;
        let s_txt = s.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([a.video.clone(), p.to_string(), s_txt.clone()])?;
        w.flush()?;
        println!(
            "psnr={p:.4} ssim={}",
            if s_txt.is_empty() { "n/a" } else { &s_txt }
        );
        Ok(ExitCode::SUCCESS)
    })
}
