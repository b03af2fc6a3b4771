//! The four subcommands. Each writes its human-readable output to `out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use mtsfm::ambiguity::{aaf, acf, default_delay_grid, default_doppler_grid, thumbtack_metrics};
use mtsfm::mimo::{beampattern, correlation_matrix_gbf, pslr};
use mtsfm::optimizer::{objective, rms_constraint, run_campaign, CampaignSummary, SynthesisConfig};
use mtsfm::waveform::{aligned_sample_rate, sample_waveform, spectrogram, spectrum};

use crate::archive::{RunArchive, Timestamps, TrialSelector};
use crate::export::{decibels, Table};
use crate::{CliError, CliResult};

/// Largest disagreement `eval` tolerates between stored and recomputed values.
pub const VERIFY_TOLERANCE: f64 = 1e-9;

/// Delay lags of the exported ambiguity surface must divide the sample count.
const DELAY_ALIGNMENT: usize = 400;

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn emit(out: &mut dyn Write, text: std::fmt::Arguments) -> CliResult<()> {
    out.write_fmt(text)
        .map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))
}

/// Runs a campaign on `jobs` threads (all cores when `None`) and writes the archive.
pub fn synth(
    config: &SynthesisConfig,
    jobs: Option<usize>,
    output: &Path,
    out: &mut dyn Write,
) -> CliResult<RunArchive> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    let template = config
        .template()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let started_utc = now();
    let campaign = pool.install(|| run_campaign(config, &template))?;
    let stamps = Timestamps {
        started_utc,
        finished_utc: now(),
    };
    let archive = RunArchive::new(config.clone(), campaign, stamps);
    archive.save(output)?;
    let s = archive.summary.as_ref().expect("campaigns always carry a summary");
    emit(out, format_args!("wrote {}\n", output.display()))?;
    write_summary(out, s)?;
    for f in &archive.failures {
        emit(out, format_args!("trial {} failed: {}\n", f.trial_index, f.error))?;
    }
    Ok(archive)
}

fn write_summary(out: &mut dyn Write, s: &CampaignSummary) -> CliResult<()> {
    emit(
        out,
        format_args!(
            "trials: {} requested, {} finished, {} converged, {} failed\n",
            s.trials_requested, s.succeeded, s.converged, s.failed
        ),
    )?;
    emit(
        out,
        format_args!(
            "PSLR dB: median {:.4}  min {:.4}  max {:.4}  (best trial {})\n",
            s.median_pslr_db, s.min_pslr_db, s.max_pslr_db, s.best_trial
        ),
    )
}

/// Recomputes one trial's beampattern, PSLR, objective and constraint
/// residuals, checks them against the archive and exports the beampattern.
pub fn eval(
    archive_path: &Path,
    selector: TrialSelector,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let archive = RunArchive::load(archive_path)?;
    let trial = archive.select(selector)?;
    let config = &archive.config;
    let template = config.template()?;
    let idx = &trial.final_indices;
    let r = correlation_matrix_gbf(idx)?;
    let pattern = beampattern(&r, template.grid())?;
    let recomputed_pslr = pslr(&pattern, &template, config.pslr_guard)?;
    let recomputed_objective = objective(idx, &template)?;
    let residuals = rms_constraint(idx, &trial.initial_indices, config.delta)?;

    let mut problems = Vec::new();
    if !((recomputed_pslr - trial.pslr_db).abs() <= VERIFY_TOLERANCE) {
        problems.push(format!(
            "PSLR stored {} dB, recomputed {} dB",
            trial.pslr_db, recomputed_pslr
        ));
    }
    let scale = trial.final_objective.abs().max(1.0);
    if !((recomputed_objective - trial.final_objective).abs() <= VERIFY_TOLERANCE * scale) {
        problems.push(format!(
            "objective stored {}, recomputed {}",
            trial.final_objective, recomputed_objective
        ));
    }
    let residuals_match = residuals.len() == trial.constraint_residuals.len()
        && residuals
            .iter()
            .zip(&trial.constraint_residuals)
            .all(|(a, b)| (a - b).abs() <= VERIFY_TOLERANCE);
    if !residuals_match {
        problems.push("constraint residuals differ".into());
    }
    if !problems.is_empty() {
        return Err(CliError::Runtime(format!(
            "trial {} failed verification: {}",
            trial.trial_index,
            problems.join("; ")
        )));
    }

    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("trial{}_beampattern.csv", trial.trial_index)));
    let peak = pattern.iter().cloned().fold(0.0, f64::max);
    let mut table = Table::new(
        "mtsfm beampattern v1",
        &[
            ("u", "sine of angle, dimensionless"),
            ("power", "linear power density"),
            ("power_db", "dB relative to pattern peak"),
            ("desired", "template power density"),
        ],
    );
    table.comment(format!("trial {} pslr_db {}", trial.trial_index, trial.pslr_db));
    for ((u, p), d) in template.grid().values().iter().zip(&pattern).zip(template.values()) {
        table.row(&[*u, *p, decibels(*p, peak), *d]);
    }
    table.write(&path)?;
    emit(
        out,
        format_args!(
            "trial {} verified: PSLR {:.6} dB, objective {:.6e}; wrote {}\n",
            trial.trial_index,
            recomputed_pslr,
            recomputed_objective,
            path.display()
        ),
    )
}

/// Exports spectrum, spectrogram, ambiguity surface and autocorrelation data
/// for one waveform of one trial. Returns the written paths.
pub fn analyze(
    archive_path: &Path,
    selector: TrialSelector,
    waveform: usize,
    output_dir: &Path,
    out: &mut dyn Write,
) -> CliResult<Vec<PathBuf>> {
    let archive = RunArchive::load(archive_path)?;
    let trial = archive.select(selector)?;
    let idx = &trial.final_indices;
    if waveform >= idx.waveforms() {
        return Err(CliError::Usage(format!(
            "waveform {waveform} is out of range (trial has {} waveforms)",
            idx.waveforms()
        )));
    }
    std::fs::create_dir_all(output_dir).map_err(|e| crate::io_error(output_dir, e))?;
    let row = idx.row(waveform);
    let duration = idx.duration();
    let fs = aligned_sample_rate(row, duration, DELAY_ALIGNMENT);
    let w = sample_waveform(row, duration, idx.waveforms(), fs)?;
    let stem = format!("trial{}_waveform{waveform}", trial.trial_index);
    let path = |name: &str| output_dir.join(format!("{stem}_{name}.csv"));
    let mut written = Vec::new();

    let sp = spectrum(&w, (16 * w.len()).next_power_of_two())?;
    let mut table = Table::new(
        "mtsfm spectrum v1",
        &[
            ("frequency_hz", "Hz"),
            ("energy", "energy per bin; column sums to the waveform energy"),
            ("power_db", "dB relative to the peak bin"),
        ],
    );
    table.comment(format!("waveform energy {}", w.energy()));
    for ((f, e), p) in sp.frequency.iter().zip(&sp.energy).zip(&sp.power_db) {
        table.row(&[*f, *e, p.max(-300.0)]);
    }
    table.write(&path("spectrum"))?;
    written.push(path("spectrum"));

    let window = (w.len() / 8).max(16).min(w.len());
    let sg = spectrogram(&w, window, (window / 4).max(1))?;
    let peak = sg.magnitude.iter().cloned().fold(0.0, f64::max);
    let mut table = Table::new(
        "mtsfm spectrogram v1",
        &[
            ("time_s", "s"),
            ("frequency_hz", "Hz"),
            ("magnitude_db", "dB relative to the strongest cell"),
        ],
    );
    for (i, t) in sg.times.iter().enumerate() {
        for (f, m) in sg.frequencies.iter().zip(sg.frame(i)) {
            table.row(&[*t, *f, decibels(m * m, peak * peak)]);
        }
    }
    table.write(&path("spectrogram"))?;
    written.push(path("spectrogram"));

    let tau = default_delay_grid(&w)?;
    let nu = default_doppler_grid(idx.harmonics(), duration);
    let surface = aaf(&w, &tau, &nu)?;
    let origin = surface.energy;
    let mut table = Table::new(
        "mtsfm ambiguity v1",
        &[
            ("tau_s", "delay, s"),
            ("nu_hz", "Doppler, Hz"),
            ("magnitude_db", "dB relative to |chi(0,0)|"),
        ],
    );
    for (i, t) in tau.iter().enumerate() {
        for (j, v) in nu.iter().enumerate() {
            table.row(&[*t, *v, decibels(surface.get(i, j).norm_sqr(), origin * origin)]);
        }
    }
    table.write(&path("aaf"))?;
    written.push(path("aaf"));

    let r = acf(&w, &tau)?;
    let mut table = Table::new(
        "mtsfm autocorrelation v1",
        &[
            ("tau_s", "delay, s"),
            ("real", "waveform energy units"),
            ("imag", "waveform energy units"),
            ("magnitude", "waveform energy units"),
            ("magnitude_db", "dB relative to R(0)"),
        ],
    );
    for (t, v) in tau.iter().zip(&r) {
        table.row(&[*t, v.re, v.im, v.norm(), decibels(v.norm_sqr(), origin * origin)]);
    }
    table.write(&path("acf"))?;
    written.push(path("acf"));

    emit(
        out,
        format_args!(
            "trial {} waveform {waveform}: {} samples at {} Hz, energy {:.12}\n",
            trial.trial_index,
            w.len(),
            w.sample_rate,
            w.energy()
        ),
    )?;
    match thumbtack_metrics(&surface) {
        Ok(m) => emit(
            out,
            format_args!(
                "mainlobe: delay {:.6e} s, Doppler {:.6e} Hz; pedestal peak {:.2} dB, mean {:.2} dB; ACF pedestal mean {}\n",
                m.delay_width,
                m.doppler_width,
                m.pedestal_peak_db,
                m.pedestal_mean_db,
                m.acf_pedestal_mean_db
                    .map_or("n/a".to_string(), |v| format!("{v:.2} dB"))
            ),
        )?,
        Err(e) => emit(out, format_args!("thumbtack metrics unavailable: {e}\n"))?,
    }
    for p in &written {
        emit(out, format_args!("wrote {}\n", p.display()))?;
    }
    Ok(written)
}

/// Prints the per-trial table and campaign statistics; optionally writes the
/// statistics as JSON.
pub fn report(archive_path: &Path, summary_path: Option<&Path>, out: &mut dyn Write) -> CliResult<CampaignSummary> {
    let archive = RunArchive::load(archive_path)?;
    let failed = archive.failures.len();
    let summary = CampaignSummary::from_trials(&archive.trials, archive.config.trials, failed)
        .ok_or_else(|| CliError::Runtime(format!("{}: archive holds no finished trials", archive_path.display())))?;
    emit(
        out,
        format_args!(
            "{:>6}  {:>22}  {:>10}  {:>10}  {:>9}  {}\n",
            "trial", "final_objective", "pslr_db", "iterations", "converged", "stop"
        ),
    )?;
    for t in &archive.trials {
        emit(
            out,
            format_args!(
                "{:>6}  {:>22.15e}  {:>10.4}  {:>10}  {:>9}  {:?}\n",
                t.trial_index, t.final_objective, t.pslr_db, t.iterations, t.converged, t.stop_reason
            ),
        )?;
    }
    for f in &archive.failures {
        emit(out, format_args!("{:>6}  failed: {}\n", f.trial_index, f.error))?;
    }
    write_summary(out, &summary)?;
    if let Some(path) = summary_path {
        let mut text = serde_json::to_string_pretty(&summary).expect("summary values are finite");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| crate::io_error(path, e))?;
        emit(out, format_args!("wrote {}\n", path.display()))?;
    }
    Ok(summary)
}
