use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use radio_route::adversary::{AdversaryType, Balance, InjectionTrace};
use radio_route::fixtures::figure1_one_link;
use radio_route::harness::{
    check_trace, default_interval, gossip_spec, parse_gossip, parse_tours, regression_matrix,
    run_gossip_check, run_instability, run_ogf_scenario, run_sls, InstabilityAlgorithm,
    InstabilityConfig, OgfConfig, OgfReport, Summary, Topology,
};
use radio_route::ogf::compute_window_bound;
use radio_route::sim::Metrics;
use radio_route::{Network, Tour};

use crate::{Algorithm, Command, Common};

pub enum Status {
    Ok,
    Violated,
}

impl Status {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Status::Ok
        } else {
            Status::Violated
        }
    }
}

pub fn run(command: Command) -> Result<Status> {
    match command {
        Command::Sls {
            common,
            tours,
            figure1,
        } => sls(&common, tours.as_deref(), figure1),
        Command::Instability {
            common,
            n,
            t,
            intervals,
            algorithm,
        } => instability(&common, n, t, intervals, algorithm),
        Command::Ogf {
            common,
            trace,
            matrix,
        } => {
            if matrix {
                ogf_matrix(&common)
            } else {
                ogf(&common, trace.as_deref())
            }
        }
        Command::VerifyTrace { common, trace } => verify_trace(&common, &trace),
        Command::GossipCheck { common } => gossip_check(&common),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_network(common: &Common) -> Result<Network> {
    let spec = common.network.as_deref().context("--network is required")?;
    match spec.strip_prefix("gen:") {
        Some(gen) => Ok(gen.parse::<Topology>()?.build(common.seed)?),
        None => Network::parse(&read(Path::new(spec))?).with_context(|| format!("parsing {spec}")),
    }
}

fn adversary(common: &Common) -> Result<AdversaryType> {
    let spec = common.adv.as_deref().context("--adv is required")?;
    spec.parse()
        .with_context(|| format!("parsing adversary `{spec}`"))
}

fn out_dir(common: &Common) -> Result<Option<&PathBuf>> {
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(common.out.as_ref())
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_metrics(dir: &Path, metrics: &Metrics) -> Result<()> {
    let mut rounds = Vec::new();
    metrics.write_rounds_csv(&mut rounds)?;
    write_file(dir, "rounds.csv", &rounds)?;
    let mut deliveries = Vec::new();
    metrics.write_deliveries_csv(&mut deliveries)?;
    write_file(dir, "deliveries.csv", &deliveries)
}

fn emit_summary(out: Option<&PathBuf>, summary: &Summary) -> Result<()> {
    let row = summary.to_csv_row();
    println!("{}", Summary::HEADER);
    println!("{row}");
    if let Some(dir) = out {
        write_file(
            dir,
            "summary.csv",
            format!("{}\n{row}\n", Summary::HEADER).as_bytes(),
        )?;
    }
    Ok(())
}

fn sls(common: &Common, tours: Option<&Path>, figure1: bool) -> Result<Status> {
    let (net, tours): (Network, Vec<Tour>) = match (tours, figure1) {
        (_, true) => figure1_one_link(),
        (Some(path), false) => (load_network(common)?, parse_tours(&read(path)?)?),
        (None, false) => bail!("give --tours <file> or --figure1"),
    };
    let report = run_sls(&net, &tours)?;
    if report.tours == 0 {
        println!("empty instance: no tours, optimal schedule length 0 (vacuous)");
    } else {
        let edges: Vec<String> = report
            .conflict_edges
            .iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .collect();
        println!("tours: {}", report.tours);
        println!("conflict edges: {}", edges.join(" "));
        println!("chromatic number: {}", report.chromatic);
    }
    println!("optimal schedule length: {}", report.optimal.length());
    println!("equal: {}", report.agrees());
    let out = out_dir(common)?;
    if let Some(dir) = out {
        let mut csv = String::from("tour_id,round\n");
        for (id, round) in report.optimal.assignment() {
            csv.push_str(&format!("{id},{round}\n"));
        }
        write_file(dir, "schedule.csv", csv.as_bytes())?;
    }
    emit_summary(
        out,
        &Summary {
            scenario: "sls".into(),
            seed: common.seed,
            n: net.node_count(),
            adversary: None,
            u: None,
            max_latency: Some(report.optimal.length()),
            max_queue: 0,
            verdict: if report.agrees() { "equal" } else { "unequal" }.into(),
        },
    )?;
    Ok(Status::from_ok(report.agrees()))
}

fn instability(
    common: &Common,
    n: usize,
    t: Option<u64>,
    intervals: u64,
    algorithm: Algorithm,
) -> Result<Status> {
    let adv = adversary(common)?;
    adv.require(Balance::Unbalanced)?;
    let t = match t {
        Some(t) => t,
        None => default_interval(&adv)?,
    };
    let algorithm = match algorithm {
        Algorithm::RoundRobin => InstabilityAlgorithm::RoundRobin,
        Algorithm::Ogf => {
            let gossip = parse_gossip(&common.gossip, n)?;
            InstabilityAlgorithm::Ogf {
                gossip,
                window: common.window.unwrap_or(2 * gossip.rounds()),
            }
        }
    };
    let report = run_instability(&InstabilityConfig {
        adversary: adv,
        n,
        interval: t,
        intervals,
        algorithm,
    })?;
    let last = report.final_point();
    println!("adversary {adv}, clique of {n} nodes, interval {t}, {intervals} intervals");
    println!("injected tours: {}", report.injected);
    println!(
        "backlog at round {}: {} packets, {} undelivered hops; lower bound {}",
        last.round, last.backlog, last.undelivered_hops, last.bound
    );
    println!(
        "bound met at every interval boundary: {}",
        report.meets_bound()
    );
    println!("verdict: {}", report.verdict);
    let out = out_dir(common)?;
    if let Some(dir) = out {
        write_metrics(dir, &report.metrics)?;
        let mut csv = String::from("interval,round,backlog,undelivered_hops,bound\n");
        for p in &report.boundaries {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p.interval, p.round, p.backlog, p.undelivered_hops, p.bound
            ));
        }
        write_file(dir, "boundaries.csv", csv.as_bytes())?;
    }
    emit_summary(
        out,
        &Summary {
            scenario: "instability".into(),
            seed: common.seed,
            n,
            adversary: Some(adv),
            u: None,
            max_latency: report.metrics.max_latency(),
            max_queue: report.metrics.max_queue(),
            verdict: report.verdict.trend.to_string(),
        },
    )?;
    Ok(Status::from_ok(report.meets_bound()))
}

fn ogf_report_lines(report: &OgfReport) -> Vec<String> {
    let mut lines = vec![
        format!(
            "u = {}, S_n = {} ({}), window = {}, latency bound = {}",
            report.u,
            report.gossip.rounds(),
            gossip_spec(&report.gossip),
            report.run.window,
            report.latency_bound
        ),
        format!(
            "injected {}, delivered {}, pending {}",
            report.injected,
            report.run.metrics.deliveries.len(),
            report.run.metrics.pending.len()
        ),
    ];
    let windows: Vec<String> = report
        .run
        .windows
        .iter()
        .filter(|w| w.old_tours > 0)
        .map(|w| format!("{}:(L'={},delta={})", w.window, w.longest, w.delta))
        .collect();
    lines.push(format!("windows with old tours: {}", windows.join(" ")));
    let max_latency = report
        .max_latency()
        .map_or_else(|| "none".to_string(), |l| l.to_string());
    lines.push(format!(
        "max queue {}, max latency {max_latency}",
        report.run.metrics.max_queue()
    ));
    lines.push(format!(
        "late deliveries {}, stale tours {}, color clashes {}, plans agree {}",
        report.late.len(),
        report.stale.len(),
        report.run.clashes.len(),
        report.run.plans_agree
    ));
    lines
}

fn write_ogf_outputs(dir: &Path, report: &OgfReport, adv: &AdversaryType) -> Result<()> {
    write_metrics(dir, &report.run.metrics)?;
    write_file(dir, "trace.txt", report.trace.to_text(adv).as_bytes())?;
    let mut csv = String::from("window,start,old_tours,longest,delta,colors,phase2_length\n");
    for w in &report.run.windows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            w.window, w.start, w.old_tours, w.longest, w.delta, w.colors, w.phase2_length
        ));
    }
    write_file(dir, "windows.csv", csv.as_bytes())
}

fn ogf_summary(report: &OgfReport, seed: u64, n: usize, adv: AdversaryType) -> Summary {
    Summary {
        scenario: "ogf".into(),
        seed,
        n,
        adversary: Some(adv),
        u: Some(report.u),
        max_latency: report.max_latency(),
        max_queue: report.run.metrics.max_queue(),
        verdict: if report.ok() { "ok" } else { "violated" }.into(),
    }
}

fn ogf(common: &Common, trace: Option<&Path>) -> Result<Status> {
    let net = load_network(common)?;
    let adv = adversary(common)?;
    adv.require(Balance::Balanced)?;
    let gossip = parse_gossip(&common.gossip, net.node_count())?;
    let trace = match trace {
        Some(path) => {
            let (trace_adv, trace) = InjectionTrace::parse(&read(path)?)?;
            if trace_adv != adv {
                bail!("trace was written for {trace_adv}, not {adv}");
            }
            Some(trace)
        }
        None => None,
    };
    let u = compute_window_bound(&adv, gossip.rounds())?;
    let horizon = common.horizon.unwrap_or(10 * u);
    let report = run_ogf_scenario(&OgfConfig {
        network: net.clone(),
        adversary: adv,
        gossip,
        window_override: common.window,
        seed: common.seed,
        horizon,
        trace,
    })?;
    for line in ogf_report_lines(&report) {
        println!("{line}");
    }
    let out = out_dir(common)?;
    if let Some(dir) = out {
        write_ogf_outputs(dir, &report, &adv)?;
    }
    emit_summary(
        out,
        &ogf_summary(&report, common.seed, net.node_count(), adv),
    )?;
    Ok(Status::from_ok(report.ok()))
}

fn ogf_matrix(common: &Common) -> Result<Status> {
    let cases = regression_matrix();
    let out = out_dir(common)?;
    // Each case runs on its own thread and writes only its own directory.
    let results: Vec<Result<(String, Summary, bool)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cases
            .iter()
            .enumerate()
            .map(|(i, case)| {
                scope.spawn(move || -> Result<(String, Summary, bool)> {
                    let config = case.config(10)?;
                    let n = config.network.node_count();
                    let report = run_ogf_scenario(&config)?;
                    if let Some(dir) = out {
                        let sub = dir.join(format!("case{i:02}"));
                        fs::create_dir_all(&sub)?;
                        write_ogf_outputs(&sub, &report, &case.adversary)?;
                    }
                    let summary = ogf_summary(&report, case.seed, n, case.adversary);
                    Ok((case.label(), summary, report.ok()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("matrix worker panicked"))
            .collect()
    });
    let mut all_ok = true;
    let mut table = format!("{}\n", Summary::HEADER);
    for result in results {
        let (label, summary, ok) = result?;
        all_ok &= ok;
        println!("{} {label}", if ok { "ok      " } else { "VIOLATED" });
        table.push_str(&summary.to_csv_row());
        table.push('\n');
    }
    print!("{table}");
    if let Some(dir) = out {
        write_file(dir, "summary.csv", table.as_bytes())?;
    }
    std::io::stdout().flush()?;
    Ok(Status::from_ok(all_ok))
}

fn verify_trace(common: &Common, path: &Path) -> Result<Status> {
    let net = load_network(common)?;
    let (trace_adv, trace) = InjectionTrace::parse(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    let adv = match &common.adv {
        Some(_) => adversary(common)?,
        None => trace_adv,
    };
    match check_trace(&net, &trace, &adv)? {
        Ok(()) => {
            println!("ok: {} tours admissible for {adv}", trace.len());
            Ok(Status::Ok)
        }
        Err(violation) => {
            println!("violation: {violation}");
            Ok(Status::Violated)
        }
    }
}

fn gossip_check(common: &Common) -> Result<Status> {
    let net = load_network(common)?;
    let check = run_gossip_check(&net)?;
    match check.complete_after {
        Some(sweeps) => println!(
            "complete: every rumor reached all {} nodes after sweep {sweeps} of {}",
            check.n, check.sweeps
        ),
        None => println!("incomplete after {} sweeps", check.sweeps),
    }
    Ok(Status::from_ok(check.complete()))
}
