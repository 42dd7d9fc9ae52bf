use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rffcast::config::{parse_table, period_days, HyperParams, COMPETITION_TABLE};
use rffcast::events::{counts_in_window, load_events, write_events};
use rffcast::geometry::{RegionMask, StudyRegion};
use rffcast::metrics::{score, Selection};
use rffcast::pipeline::{rolling, train, write_predictions, write_selection_wkt, EvalSettings, Featurizer};
use rffcast::rff::approximation_report;
use rffcast::search::{
    ablate, bayes_opt, build_cv_plan, grid_search, merge, pei_distribution_report, write_results, BaselineSettings,
    BoBounds, BoConfig, CvPlan, DatasetSpan, SearchSpace,
};
use rffcast::synth::{simulate_hawkes, simulate_poisson, Background, GaussianBump, SynthSpec};
use rffcast::{seeds, Event};

use crate::{svg, Cli, Command, Common, Folds, Process, SearchMode, Window};

/// Study region file: a bounding box, the area used for PAI and an optional
/// mask polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
    #[serde(default)]
    pub total_area_sqft: Option<f64>,
    #[serde(default)]
    pub mask: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Serialize)]
struct ForecastSummary {
    start_date: NaiveDate,
    start_day: f64,
    period_days: f64,
    n_cells: usize,
    n_selected: usize,
    selected_area_sqft: f64,
    config_hash: String,
}

#[derive(Debug, Serialize)]
struct RollingRow {
    window: usize,
    start_date: NaiveDate,
    end_date: NaiveDate,
    n: u64,
    n_star: u64,
    total: u64,
    hit_rate: f64,
    pai: f64,
    pei: f64,
}

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Forecast { window, truth } => forecast(c, window, truth.as_deref()),
        Command::Score { window, selection } => score_cmd(c, window, selection),
        Command::Search { mode, folds, n_init, n_iter, parallelism } => {
            search(c, *mode, folds, *n_init, *n_iter, *parallelism)
        }
        Command::Rolling { window } => rolling_cmd(c, window),
        Command::Ablate { folds, baseline_bandwidth_ft, baseline_window_days } => ablate_cmd(
            c,
            folds,
            BaselineSettings { bandwidth_ft: *baseline_bandwidth_ft, window_days: *baseline_window_days },
        ),
        Command::Simulate { process, spec } => simulate(c, *process, spec.as_deref()),
        Command::RffCheck { d, pairs, seeds } => rff_check(c, d, *pairs, *seeds),
        Command::ImportTable { table } => import_table(c, table.as_deref()),
    }
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| anyhow!("--{flag} is required for this command"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn out_dir(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(&c.out)
}

fn parse_period(text: &str) -> Result<f64> {
    if let Some(days) = period_days(text) {
        return Ok(days);
    }
    match text.parse::<f64>() {
        Ok(d) if d > 0.0 => Ok(d),
        _ => bail!("period {text:?} is neither a positive number of days nor one of 1w, 2w, 1m, 2m, 3m"),
    }
}

fn day(epoch: NaiveDate, date: NaiveDate) -> f64 {
    (date - epoch).num_days() as f64
}

fn events_from(c: &Common, path: &Path) -> Result<Vec<Event>> {
    let epoch = *required(&c.epoch, "epoch")?;
    load_events(path, c.category.as_deref(), epoch).with_context(|| format!("loading {}", path.display()))
}

fn events(c: &Common) -> Result<Vec<Event>> {
    events_from(c, required(&c.events, "events")?)
}

/// Configuration from `--config` (or the default), with the RFF seed
/// re-derived from `--seed` when one is given.
fn hyper(c: &Common, must_exist: bool) -> Result<HyperParams> {
    let mut h = match &c.config {
        Some(p) => HyperParams::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None if must_exist => bail!("--config is required for this command"),
        None => HyperParams::default(),
    };
    if let Some(master) = c.seed {
        h.seed = seeds::derive(master, "rff");
    }
    Ok(h)
}

fn region_file(c: &Common, events: &[Event]) -> Result<RegionFile> {
    if let Some(path) = &c.region {
        return read_json(path);
    }
    if events.is_empty() {
        bail!("cannot infer a study region from zero events; pass --region");
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&Event) -> f64| events.iter().map(get).fold(init, f);
    Ok(RegionFile {
        min_x: fold(f64::min, f64::MAX, |e| e.x_ft),
        min_y: fold(f64::min, f64::MAX, |e| e.y_ft),
        max_x: fold(f64::max, f64::MIN, |e| e.x_ft),
        max_y: fold(f64::max, f64::MIN, |e| e.y_ft),
        total_area_sqft: None,
        mask: None,
    })
}

/// Evaluation settings and the events inside the region. Events outside are
/// an error unless `--allow-out-of-bounds` drops them.
fn prepare(c: &Common, events: Vec<Event>) -> Result<(EvalSettings, RegionFile, Vec<Event>)> {
    let rf = region_file(c, &events)?;
    let region = match rf.total_area_sqft {
        Some(a) => StudyRegion::new(rf.min_x, rf.min_y, rf.max_x, rf.max_y, a)?,
        None => StudyRegion::from_bounds(rf.min_x, rf.min_y, rf.max_x, rf.max_y)?,
    };
    let (inside, outside): (Vec<Event>, Vec<Event>) = events.into_iter().partition(|e| region.contains(e.x_ft, e.y_ft));
    if let Some(first) = outside.first() {
        if !c.allow_out_of_bounds {
            bail!(rffcast::Error::OutOfBounds { x: first.x_ft, y: first.y_ft });
        }
        log::warn!("dropped {} events outside the study region", outside.len());
    }
    let mut settings = EvalSettings::new(region);
    // Without a mask, rotated corner cells wholly outside the bounding box are inactive.
    let outline = rf.mask.clone().unwrap_or_else(|| {
        vec![(rf.min_x, rf.min_y), (rf.max_x, rf.min_y), (rf.max_x, rf.max_y), (rf.min_x, rf.max_y)]
    });
    settings.mask = Some(RegionMask::new(outline)?);
    settings.max_train_periods = c.max_train_periods;
    Ok((settings, rf, inside))
}

fn span(c: &Common, events: &[Event]) -> Result<DatasetSpan> {
    let epoch = *required(&c.epoch, "epoch")?;
    let days = events.iter().map(|e| e.t_days.floor() as i64);
    let start = days.clone().min().ok_or_else(|| anyhow!("no events"))?;
    let end = days.max().expect("non-empty") + 1;
    Ok(DatasetSpan { epoch, start_day: start, end_day: end })
}

fn plan(c: &Common, folds: &Folds, events: &[Event]) -> Result<CvPlan> {
    Ok(build_cv_plan(&span(c, events)?, parse_period(&folds.period)?, folds.start_doy)?)
}

fn forecast(c: &Common, window: &Window, truth: Option<&Path>) -> Result<()> {
    let epoch = *required(&c.epoch, "epoch")?;
    let (settings, rf, events) = prepare(c, events(c)?)?;
    let hyper = hyper(c, true)?;
    let start = day(epoch, window.start);
    let period = parse_period(&window.period)?;
    let model = train(&events, start, period, &hyper, &settings)?;
    let fc = model.forecast(&events, start)?;
    let out = out_dir(c)?;
    let grid = &model.featurizer.grid;
    write_predictions(&model, &fc, create(&out.join("predictions.csv"))?)?;
    write_selection_wkt(grid, &fc.selection, create(&out.join("selection.csv"))?)?;
    write_json(&out.join("model.json"), &model.artifact())?;
    write_json(&out.join("region.json"), &rf)?;
    write_json(
        &out.join("forecast.json"),
        &ForecastSummary {
            start_date: window.start,
            start_day: start,
            period_days: period,
            n_cells: grid.n_cells(),
            n_selected: fc.selection.k(),
            selected_area_sqft: fc.selection.total_area_sqft,
            config_hash: hyper.config_hash(),
        },
    )?;
    let counts = match truth {
        Some(path) => {
            let truth = events_from(c, path)?;
            let counts = counts_in_window(&truth, grid, start, start + period);
            let report = score(&fc.selection, &counts, Some(&model.featurizer.active), settings.region_area_sqft)?;
            write_json(&out.join("score.json"), &report)?;
            println!("PEI {:.4}  PAI {:.4}  hit rate {:.4}", report.pei, report.pai, report.hit_rate);
            Some(counts)
        }
        None => None,
    };
    fs::write(out.join("map.svg"), svg::forecast_map(grid, &fc.selection.chosen, counts.as_deref()))?;
    println!("selected {} of {} cells; artifacts in {}", fc.selection.k(), grid.n_cells(), out.display());
    Ok(())
}

fn score_cmd(c: &Common, window: &Window, selection: &Path) -> Result<()> {
    let epoch = *required(&c.epoch, "epoch")?;
    required(&c.region, "region")?;
    let (settings, _, events) = prepare(c, events(c)?)?;
    let hyper = hyper(c, true)?;
    let f = Featurizer::new(&hyper, &settings)?;
    let mut rdr = csv::Reader::from_path(selection).with_context(|| format!("reading {}", selection.display()))?;
    #[derive(Deserialize)]
    struct Row {
        flat_id: usize,
    }
    let mut chosen = rdr.deserialize::<Row>().map(|r| r.map(|r| r.flat_id)).collect::<Result<Vec<_>, _>>()?;
    chosen.sort_unstable();
    if let Some(bad) = chosen.iter().find(|&&id| id >= f.grid.n_cells()) {
        bail!("selected cell {bad} is not on the grid of this configuration");
    }
    let start = day(epoch, window.start);
    let counts = counts_in_window(&events, &f.grid, start, start + parse_period(&window.period)?);
    let sel = Selection {
        total_area_sqft: chosen.len() as f64 * f.grid.cell_area(),
        chosen,
        coverage_param: hyper.coverage_param,
    };
    let report = score(&sel, &counts, Some(&f.active), settings.region_area_sqft)?;
    write_json(&out_dir(c)?.join("score.json"), &report)?;
    println!("n {}  n* {}  PEI {:.4}  PAI {:.4}  hit rate {:.4}", report.n, report.n_star, report.pei, report.pai, report.hit_rate);
    Ok(())
}

fn search(c: &Common, mode: SearchMode, folds: &Folds, n_init: usize, n_iter: usize, parallelism: Option<usize>) -> Result<()> {
    let (settings, _, events) = prepare(c, events(c)?)?;
    let base = hyper(c, false)?;
    let space_path = required(&c.space, "space")?;
    let space = SearchSpace::from_json(&fs::read_to_string(space_path)?)
        .with_context(|| format!("parsing {}", space_path.display()))?;
    let plan = plan(c, folds, &events)?;
    let threads = parallelism.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let bo_config = BoConfig::new(n_init, n_iter, seeds::derive(c.seed.unwrap_or(0), "bo"));
    let results = match mode {
        SearchMode::Grid => grid_search(&space, &base, &events, &plan, &settings, threads)?,
        SearchMode::Bo => bayes_opt(&BoBounds::from_space(&space)?, &base, &events, &plan, &settings, &bo_config)?,
        SearchMode::Merged => {
            let grid = grid_search(&space, &base, &events, &plan, &settings, threads)?;
            let (bounds, fixed) = BoBounds::envelope(&space, &base)?;
            let bo = bayes_opt(&bounds, &fixed, &events, &plan, &settings, &bo_config)?;
            merge(vec![grid, bo])
        }
    };
    let out = out_dir(c)?;
    write_results(&results, create(&out.join("results.csv"))?)?;
    write_json(&out.join("plan.json"), &plan)?;
    write_json(&out.join("best.json"), &results[0].hyper)?;
    if results.len() >= 2 {
        let dist = pei_distribution_report(&results)?;
        write_json(&out.join("distribution.json"), &dist)?;
        println!(
            "{} candidates; best mean PEI {:.4}; {:.0}% scored zero",
            dist.n,
            dist.max_pei,
            100.0 * dist.fraction_zero
        );
    }
    Ok(())
}

fn rolling_cmd(c: &Common, window: &Window) -> Result<()> {
    let epoch = *required(&c.epoch, "epoch")?;
    let (settings, _, events) = prepare(c, events(c)?)?;
    let hyper = hyper(c, true)?;
    let start = day(epoch, window.start);
    let period = parse_period(&window.period)?;
    let data_end = span(c, &events)?.end_day as f64;
    let windows = rolling(&events, start, period, c.windows, data_end, &hyper, &settings)?;
    let out = out_dir(c)?;
    let date = |d: f64| epoch + chrono::Duration::days(d as i64);
    let mut wtr = csv::Writer::from_writer(create(&out.join("rolling.csv"))?);
    for w in &windows {
        wtr.serialize(RollingRow {
            window: w.window,
            start_date: date(w.start_day),
            end_date: date(w.end_day),
            n: w.report.n,
            n_star: w.report.n_star,
            total: w.report.total,
            hit_rate: w.report.hit_rate,
            pai: w.report.pai,
            pei: w.report.pei,
        })?;
    }
    wtr.flush()?;
    write_json(&out.join("rolling.json"), &windows)?;
    let mean = rffcast::stats::mean(&windows.iter().map(|w| w.report.pei).collect::<Vec<_>>());
    println!("{} windows; mean PEI {mean:.4}", windows.len());
    Ok(())
}

fn ablate_cmd(c: &Common, folds: &Folds, baseline: BaselineSettings) -> Result<()> {
    let (settings, _, events) = prepare(c, events(c)?)?;
    let hyper = hyper(c, true)?;
    let plan = plan(c, folds, &events)?;
    let rows = ablate(&hyper, &baseline, &events, &plan, &settings);
    let out = out_dir(c)?;
    let mut wtr = csv::Writer::from_writer(create(&out.join("ablation.csv"))?);
    let mut header = vec!["variant".to_string(), "mean_pei".to_string()];
    header.extend((1..=plan.folds.len()).map(|k| format!("fold_{k}")));
    header.push("infeasible".into());
    wtr.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.variant.clone(), r.result.mean_pei.to_string()];
        rec.extend(r.result.fold_peis.iter().map(|p| p.to_string()));
        rec.push(r.result.infeasible.clone().unwrap_or_default());
        wtr.write_record(&rec)?;
        println!("{:<16} mean PEI {:.4}", r.variant, r.result.mean_pei);
    }
    wtr.flush()?;
    write_json(&out.join("ablation.json"), &rows)?;
    Ok(())
}

fn default_spec() -> SynthSpec {
    let region = StudyRegion::from_bounds(0.0, 0.0, 20_000.0, 20_000.0).expect("valid box");
    let bump = |x, y, rate, s| GaussianBump { rate_per_day: rate, x_ft: x, y_ft: y, sigma_ft: s };
    let mut spec = SynthSpec::poisson(
        region,
        3.0 * 365.0,
        Background::Mixture {
            uniform_per_day: 2.0,
            bumps: vec![
                bump(5_000.0, 6_000.0, 1.5, 500.0),
                bump(14_000.0, 12_000.0, 1.0, 900.0),
                bump(9_000.0, 16_000.0, 0.8, 400.0),
            ],
        },
        0,
    );
    spec.branching_ratio = 0.5;
    spec.trigger_sigma_ft = 250.0;
    spec.trigger_tau_days = 4.0;
    spec
}

fn simulate(c: &Common, process: Process, spec_path: Option<&Path>) -> Result<()> {
    let epoch = *required(&c.epoch, "epoch")?;
    let mut spec = match spec_path {
        Some(p) => read_json(p)?,
        None => default_spec(),
    };
    if let Some(master) = c.seed {
        spec.seed = seeds::derive(master, "synth");
    }
    let events = match process {
        Process::Poisson => simulate_poisson(&spec)?.0,
        Process::Hawkes => simulate_hawkes(&spec)?,
    };
    let out = out_dir(c)?;
    write_events(create(&out.join("events.csv"))?, &events, epoch)?;
    write_json(&out.join("truth.json"), &spec)?;
    println!("{} events written to {}", events.len(), out.join("events.csv").display());
    Ok(())
}

fn rff_check(c: &Common, d_values: &[usize], pairs: usize, n_seeds: usize) -> Result<()> {
    let mut hyper = hyper(c, false)?;
    hyper.d = hyper.d.max(1);
    let cfg = hyper.rff_config().expect("d is positive");
    let rows = approximation_report(&cfg, pairs, d_values, n_seeds)?;
    let out = out_dir(c)?;
    let mut wtr = csv::Writer::from_writer(create(&out.join("rff_check.csv"))?);
    for r in &rows {
        wtr.serialize(r)?;
        println!("d {:>5}  mean |error| {:.5}  max {:.5}", r.d, r.mean_abs_err, r.max_abs_err);
    }
    wtr.flush()?;
    write_json(&out.join("rff_check.json"), &rows)?;
    let curve: Vec<(usize, f64)> = rows.iter().map(|r| (r.d, r.mean_abs_err)).collect();
    fs::write(out.join("rff_check.svg"), svg::error_curve(&curve))?;
    Ok(())
}

fn import_table(c: &Common, table: Option<&Path>) -> Result<()> {
    let rows = match table {
        Some(p) => parse_table(fs::File::open(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => parse_table(COMPETITION_TABLE.as_bytes())?,
    };
    let out = out_dir(c)?;
    for r in &rows {
        let name = format!("{}_{}.json", r.crime_type.replace(|ch: char| !ch.is_ascii_alphanumeric(), "_"), r.forecast_period);
        write_json(&out.join(name), &r.hyper)?;
    }
    println!("wrote {} configurations to {}", rows.len(), out.display());
    Ok(())
}
