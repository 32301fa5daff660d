//! Per-kind experiment pipelines: seeded cells, ledger records, summary
//! CSV emission. Summaries are deterministic byte-for-byte at a fixed
//! (config, master seed); wall-clock timings go to a separate telemetry
//! file so they never perturb the summaries.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use homog_core::env::{validate_hypotheses, EnvMode, ReactionSpec};
use homog_core::homog::{geq_limit_run, sandwich_run, ScaledExperiment};
use homog_core::noise::derive_seed;
use homog_core::stats::wilson_half_width;
use homog_core::subadd::{estimate_limit, validate_process, AdditiveUniform, SeedPolicy};
use homog_core::ttime::calibrate;
use homog_core::wulff::{
    assemble_shape, check_convexity, check_direction_lipschitz, check_speed_bounds,
    estimate_speed_table, DirectionalSpeedTable, GSet, SpeedTableParams, WulffShape,
};
use homog_core::CoreError;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::ledger::RunLedger;

/// Worst outcome of a pipeline, mapped to the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Pass,          // 0
    AssertionFail, // 1
    Anomaly,       // 3
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::AssertionFail => 1,
            Outcome::Anomaly => 3,
        }
    }
}

fn classify(err: &CoreError) -> Outcome {
    match err {
        CoreError::Anomaly(_)
        | CoreError::FrontAtBoundary { .. }
        | CoreError::Deadline(_)
        | CoreError::Cfl(_) => Outcome::Anomaly,
        _ => Outcome::AssertionFail,
    }
}

pub struct Runner {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
    ledger: RunLedger,
    timings: Vec<(String, f64)>,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let out_dir = PathBuf::from(&cfg.out_dir);
        fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating output dir {}", out_dir.display()))?;
        let ledger = RunLedger::create(&out_dir.join("ledger.jsonl"), &cfg.hash())?;
        Ok(Self { cfg, out_dir, ledger, timings: Vec::new() })
    }

    pub fn run(&mut self) -> Result<Outcome> {
        let kind = self.cfg.kind;
        let outcome = match kind {
            ExperimentKind::ValidateEnv => self.run_validate_env()?,
            ExperimentKind::SpeedTable => self.run_speed_table()?.0,
            ExperimentKind::WulffShape => self.run_wulff_shape()?.0,
            ExperimentKind::SubaddSynthetic => self.run_subadd()?,
            ExperimentKind::Sandwich => self.run_sandwich()?,
            ExperimentKind::GeqLimit => self.run_geq_limit()?,
            ExperimentKind::FullPipeline => self.run_full_pipeline()?,
        };
        self.write_timings()?;
        self.ledger.flush()?;
        Ok(outcome)
    }

    fn record_timing(&mut self, label: &str, start: Instant) {
        self.timings.push((label.to_string(), start.elapsed().as_secs_f64()));
    }

    fn write_timings(&self) -> Result<()> {
        let mut text = String::from("stage,seconds\n");
        for (label, secs) in &self.timings {
            text.push_str(&format!("{label},{secs:.3}\n"));
        }
        fs::write(self.out_dir.join("timings.csv"), text)?;
        Ok(())
    }

    fn write_csv(&self, name: &str, content: &str) -> Result<()> {
        let mut f = fs::File::create(self.out_dir.join(name))?;
        f.write_all(content.as_bytes())?;
        Ok(())
    }

    fn run_validate_env(&mut self) -> Result<Outcome> {
        let spec = self.cfg.env.to_spec();
        let reaction = self.cfg.reaction.as_ref().map(|r| r.to_spec());
        let report = validate_hypotheses(&spec, reaction.as_ref());
        println!("{report}");
        let mut csv = String::from("name,pass,margin,note\n");
        for c in &report.checks {
            self.ledger.append("hypothesis", None, c)?;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                c.name.replace(',', ";"),
                c.pass,
                c.margin,
                c.note.replace(',', ";")
            ));
        }
        self.write_csv("validate_env.csv", &csv)?;
        Ok(if report.passed() { Outcome::Pass } else { Outcome::AssertionFail })
    }

    /// Builds the speed table (with optional calibration), writes the CSV,
    /// and runs the table-level checks.
    fn run_speed_table(&mut self) -> Result<(Outcome, DirectionalSpeedTable, f64)> {
        let spec = self.cfg.env.to_spec();
        spec.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        let reaction =
            self.cfg.reaction.as_ref().map(|r| r.to_spec()).unwrap_or(ReactionSpec::LOGISTIC);
        let block = self.cfg.speed_table.clone().expect("checked block");

        let start = Instant::now();
        let m_bound = if block.calibration_seeds > 0 {
            let cal = match calibrate(
                &spec,
                reaction,
                block.h,
                block.calibration_horizon,
                block.calibration_seeds,
                derive_seed(self.cfg.master_seed, &[0xCA11]),
            ) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("calibration failed: {e}");
                    return Ok((classify(&e), empty_table(), 0.0));
                }
            };
            self.ledger.append("calibration", None, &cal)?;
            cal.m_emp
        } else {
            spec.m_guess()
        };
        self.record_timing("calibration", start);

        let start = Instant::now();
        let params = SpeedTableParams {
            directions: block.directions,
            radius: block.radius,
            samples: block.samples,
            h: block.h,
            m_bound,
        };
        let table = match estimate_speed_table(&spec, reaction, &params, self.cfg.master_seed) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("speed table failed: {e}");
                return Ok((classify(&e), empty_table(), m_bound));
            }
        };
        self.record_timing("speed_table", start);

        let mut csv = String::from("k,e_x,e_y,tau_bar,ci,w\n");
        for k in 0..table.dirs.len() {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                k, table.dirs[k][0], table.dirs[k][1], table.tau_bar[k], table.ci[k], table.w[k]
            ));
            #[derive(Serialize)]
            struct Row {
                k: usize,
                e: [f64; 2],
                tau_bar: f64,
                ci: f64,
                w: f64,
            }
            self.ledger.append(
                "speed",
                None,
                &Row { k, e: table.dirs[k], tau_bar: table.tau_bar[k], ci: table.ci[k], w: table.w[k] },
            )?;
        }
        self.write_csv("speed_table.csv", &csv)?;

        let bounds = check_speed_bounds(&table, m_bound);
        let lip = check_direction_lipschitz(&table, m_bound);
        self.ledger.append("check", None, &bounds)?;
        self.ledger.append("check", None, &lip)?;
        println!("speed table: w in [{:.4}, {:.4}], max CI {:.4}", table.w.iter().cloned().fold(f64::INFINITY, f64::min), table.w.iter().cloned().fold(0.0, f64::max), table.max_ci());
        let ok = bounds.pass && lip.pass;
        Ok((if ok { Outcome::Pass } else { Outcome::AssertionFail }, table, m_bound))
    }

    fn run_wulff_shape(&mut self) -> Result<(Outcome, Option<WulffShape>)> {
        let (outcome, table, m_bound) = self.run_speed_table()?;
        if table.dirs.is_empty() {
            return Ok((outcome, None));
        }
        let _ = m_bound;
        let shape = match assemble_shape(&table) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("shape assembly failed: {e}");
                return Ok((Outcome::AssertionFail, None));
            }
        };
        let convex = check_convexity(&shape, &table, self.cfg.speed_table.as_ref().unwrap().h);
        self.ledger.append("check", None, &convex)?;
        println!("convexity: pass = {}, margin = {:+.4}", convex.pass, convex.margin);

        let mut csv = String::from("x,y\n");
        for v in shape.vertices.iter().chain(shape.vertices.first()) {
            csv.push_str(&format!("{},{}\n", v[0], v[1]));
        }
        self.write_csv("shape_polygon.csv", &csv)?;
        let out = if convex.pass { outcome } else { Outcome::AssertionFail };
        Ok((out, Some(shape)))
    }

    fn run_subadd(&mut self) -> Result<Outcome> {
        let block = self.cfg.subadd.clone().expect("checked block");
        let p = AdditiveUniform { lo: block.increment_lo, hi: block.increment_hi };
        let start = Instant::now();
        let report = validate_process(&p, block.validation_samples, self.cfg.master_seed)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        for c in &report.checks {
            self.ledger.append("process_check", None, c)?;
        }
        let est = estimate_limit(
            &p,
            &block.n_grid,
            block.samples_per_n,
            self.cfg.master_seed,
            SeedPolicy::FreshPerN,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        self.record_timing("subadd", start);
        self.ledger.append("estimate", None, &est)?;

        let mut csv = String::from("n,mean,sd,samples\n");
        for (i, &n) in est.n_grid.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{}\n", n, est.means[i], est.sds[i], est.samples_per_n));
        }
        csv.push_str(&format!(
            "limit,{},{},{}\n",
            est.limit, est.ci_half_width, est.sd_ratio
        ));
        self.write_csv("subadd.csv", &csv)?;
        println!(
            "subadditive estimate: limit = {:.4} +- {:.4}, sd ratio {:.3}",
            est.limit, est.ci_half_width, est.sd_ratio
        );
        Ok(if report.passed() { Outcome::Pass } else { Outcome::AssertionFail })
    }

    fn run_sandwich(&mut self) -> Result<Outcome> {
        let (shape_outcome, shape) = self.run_wulff_shape()?;
        let Some(shape) = shape else { return Ok(shape_outcome) };
        let spec = self.cfg.env.to_spec();
        let reaction =
            self.cfg.reaction.as_ref().map(|r| r.to_spec()).unwrap_or(ReactionSpec::LOGISTIC);
        let block = self.cfg.sandwich.clone().expect("checked block");
        let exp = ScaledExperiment {
            g: GSet::Ball { center: [0.0, 0.0], radius: block.g_radius },
            theta: block.theta,
            theta_prime: block.theta_prime,
            delta: block.delta,
            rho_coeff: block.rho_coeff,
            shift_lambda: block.shift_lambda,
            h: block.h,
        };
        self.ledger.append("scaled_experiment", None, &exp)?;

        let mut outcome = shape_outcome;
        let mut csv = String::from("eps,t,delta,pass_inner,pass_outer,min_margin_inner,min_margin_outer,seeds\n");
        let mut frac_csv = String::from("eps,rows,passing,fraction,wilson_half_width\n");
        for (ei, &eps) in block.epsilons.iter().enumerate() {
            let start = Instant::now();
            let mut per_t: Vec<(usize, usize, f64, f64)> =
                vec![(0, 0, f64::INFINITY, f64::INFINITY); block.times.len()];
            let mut rows = 0;
            let mut passing = 0;
            for i in 0..block.seeds {
                let seed = derive_seed(self.cfg.master_seed, &[0x5A4D, eps.to_bits(), i as u64]);
                match sandwich_run(&spec, reaction, &exp, &shape, eps, ei, seed, &block.times) {
                    Ok(results) => {
                        for (ti, r) in results.iter().enumerate() {
                            self.ledger.append("sandwich_cell", Some(seed), r)?;
                            per_t[ti].0 += r.inner as usize + 0;
                            per_t[ti].1 += r.outer as usize + 0;
                            per_t[ti].2 = per_t[ti].2.min(r.margin_inner);
                            per_t[ti].3 = per_t[ti].3.min(r.margin_outer);
                            rows += 1;
                            if r.inner && r.outer {
                                passing += 1;
                            }
                        }
                    }
                    Err(e) => {
                        eprintln!("sandwich cell (eps={eps}, seed {i}) failed: {e}");
                        outcome = outcome.max(classify(&e));
                    }
                }
            }
            for (ti, &t) in block.times.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    eps,
                    t,
                    block.delta,
                    per_t[ti].0,
                    per_t[ti].1,
                    per_t[ti].2,
                    per_t[ti].3,
                    block.seeds
                ));
            }
            let frac = if rows > 0 { passing as f64 / rows as f64 } else { f64::NAN };
            frac_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                eps,
                rows,
                passing,
                frac,
                wilson_half_width(passing, rows.max(1))
            ));
            self.record_timing(&format!("sandwich_eps_{eps}"), start);
            println!("sandwich eps = {eps}: {passing}/{rows} rows pass");
        }
        self.write_csv("sandwich.csv", &csv)?;
        self.write_csv("sandwich_fractions.csv", &frac_csv)?;
        Ok(outcome)
    }

    fn run_geq_limit(&mut self) -> Result<Outcome> {
        let (shape_outcome, shape) = self.run_wulff_shape()?;
        let Some(shape) = shape else { return Ok(shape_outcome) };
        let spec = self.cfg.env.to_spec();
        let block = self.cfg.geq_limit.clone().expect("checked block");
        let exp = ScaledExperiment {
            g: GSet::Ball { center: [0.0, 0.0], radius: 1.0 },
            theta: 0.5,
            theta_prime: 0.5,
            delta: 0.25,
            rho_coeff: block.rho_coeff,
            shift_lambda: block.shift_lambda,
            h: block.h,
        };
        let bump_r = block.bump_radius;
        let u0 = move |p: [f64; 2]| -> f64 {
            let r2 = (p[0] * p[0] + p[1] * p[1]) / (bump_r * bump_r);
            if r2 >= 1.0 {
                0.0
            } else {
                (1.0 - r2).powi(2)
            }
        };
        let probes: Vec<(f64, [f64; 2])> = vec![
            (0.5, [0.0, 0.0]),
            (0.5, [1.5, 0.0]),
            (0.5, [0.0, -2.5]),
            (1.0, [0.0, 0.0]),
            (1.0, [2.0, 1.0]),
            (1.0, [-3.0, 0.0]),
            (2.0, [0.0, 0.0]),
            (2.0, [2.0, 2.0]),
            (2.0, [-4.0, 0.0]),
        ];
        let start = Instant::now();
        let mut outcome = shape_outcome;
        let mut csv = String::from("seed,max_error,pass\n");
        let mut passing = 0;
        for i in 0..block.seeds {
            let seed = derive_seed(self.cfg.master_seed, &[0x6E01, i as u64]);
            match geq_limit_run(&spec, &exp, &shape, block.epsilon, 0, seed, &u0, bump_r, &probes)
            {
                Ok(res) => {
                    let max_err = res.iter().map(|r| r.error).fold(0.0f64, f64::max);
                    for r in &res {
                        self.ledger.append("geq_probe", Some(seed), r)?;
                    }
                    let pass = max_err <= block.probe_tolerance;
                    passing += pass as usize;
                    csv.push_str(&format!("{seed},{max_err},{pass}\n"));
                }
                Err(e) => {
                    eprintln!("scaled limit cell (seed {i}) failed: {e}");
                    outcome = outcome.max(classify(&e));
                    csv.push_str(&format!("{seed},NaN,false\n"));
                }
            }
        }
        self.record_timing("geq_limit", start);
        csv.push_str(&format!("passing,{passing},{}\n", block.seeds));
        self.write_csv("geq_limit.csv", &csv)?;
        println!("scaled limit probes: {passing}/{} seeds pass", block.seeds);
        Ok(outcome)
    }

    fn run_full_pipeline(&mut self) -> Result<Outcome> {
        let v = self.run_validate_env()?;
        let rest = match self.cfg.env.mode {
            EnvMode::Kpp => self.run_sandwich()?,
            EnvMode::Geq => self.run_geq_limit()?,
        };
        Ok(v.max(rest))
    }
}

fn empty_table() -> DirectionalSpeedTable {
    DirectionalSpeedTable {
        dirs: Vec::new(),
        tau_bar: Vec::new(),
        ci: Vec::new(),
        w: Vec::new(),
        n_grid: Vec::new(),
        per_direction: Vec::new(),
        samples: 0,
        radius: 0,
    }
}

/// `validate` subcommand: parse, then run hypothesis validation only.
pub fn validate_only(path: &Path) -> Result<Outcome> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg = ExperimentConfig::parse(&text)?;
    let spec = cfg.env.to_spec();
    let reaction = cfg.reaction.as_ref().map(|r| r.to_spec());
    let report = validate_hypotheses(&spec, reaction.as_ref());
    println!("{report}");
    Ok(if report.passed() { Outcome::Pass } else { Outcome::AssertionFail })
}
