//! Command-line surface: `construct`, `verify`, `sweep`, `oracle`.
//!
//! Exit codes are exhaustive: 0 success / all checks pass, 1 verification
//! failure, 2 usage or input error. All file outputs are deterministic for
//! identical inputs (stable key ordering, fixed 17-significant-digit
//! numerics in CSV).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::families::{
    CylinderParams, FamilySpec, MetricInstance, PParams, QbParams, WarpedParams,
};
use crate::fd::finite_difference_oracle;
use crate::verify::{CheckSelection, SampleGrid, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "riccidegen",
    version,
    about = "Construct and numerically verify three-dimensional Ricci-degenerate \
             metric families"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Construct a family instance from a JSON parameter file.
    Construct(ConstructArgs),
    /// Run verification checks against a serialized instance.
    Verify(VerifyArgs),
    /// Sweep family constants over ranges and tabulate residuals as CSV.
    Sweep(SweepArgs),
    /// Compare jet partials against the finite-difference oracle.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
pub struct ConstructArgs {
    /// soliton-cylinder | qb-vstatic | qb-cpm | p-cpm | warped
    #[arg(long)]
    pub family: String,
    /// JSON parameter document for the family.
    #[arg(long)]
    pub params: PathBuf,
    /// Output path for the serialized instance.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Serialized instance file.
    #[arg(long)]
    pub instance: PathBuf,
    /// `all` or a comma-separated list of check groups.
    #[arg(long, default_value = "all")]
    pub checks: String,
    /// Grid as AxBxC with at least 3 points per axis.
    #[arg(long, default_value = "7x7x7")]
    pub grid: String,
    /// Output path for the JSON report.
    #[arg(long)]
    pub report: PathBuf,
    /// Override the default residual tolerance τ = 1e-7 (must be > 0).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub family: String,
    /// JSON document with `base` parameters and per-constant `ranges`.
    #[arg(long)]
    pub param_ranges: PathBuf,
    #[arg(long, default_value = "7x7x7")]
    pub grid: String,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Chart point as `x,y,z`.
    #[arg(long)]
    pub point: String,
    /// Finite-difference step.
    #[arg(long, default_value = "1e-4")]
    pub step: f64,
}

/// Entry point used by the binary: parses arguments and maps every outcome
/// onto the exit-code contract.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage text; exit 2 for usage problems,
            // 0 for --help/--version.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Construct(args) => construct(&args),
        Command::Verify(args) => verify_cmd(&args),
        Command::Sweep(args) => sweep(&args),
        Command::Oracle(args) => oracle(&args),
    }
}

fn parse_family(family: &str, params_json: &str) -> Result<FamilySpec> {
    let fail = |e: serde_json::Error| {
        Error::InvalidParams(format!("malformed parameter document: {e}"))
    };
    match family {
        "soliton-cylinder" => {
            let p: CylinderParams = serde_json::from_str(params_json).map_err(fail)?;
            Ok(FamilySpec::SolitonCylinder(p))
        }
        "qb-vstatic" => {
            let p: QbParams = serde_json::from_str(params_json).map_err(fail)?;
            if p.kappa.is_none() {
                return Err(Error::InvalidParams(
                    "qb-vstatic requires the field `kappa`".to_string(),
                ));
            }
            Ok(FamilySpec::Qb(p))
        }
        "qb-cpm" => {
            let p: QbParams = serde_json::from_str(params_json).map_err(fail)?;
            if p.kappa.is_some() {
                return Err(Error::InvalidParams(
                    "qb-cpm does not take `kappa` (use qb-vstatic)".to_string(),
                ));
            }
            Ok(FamilySpec::Qb(p))
        }
        "p-cpm" => {
            let p: PParams = serde_json::from_str(params_json).map_err(fail)?;
            Ok(FamilySpec::P(p))
        }
        "warped" => {
            let p: WarpedParams = serde_json::from_str(params_json).map_err(fail)?;
            Ok(FamilySpec::Warped(p))
        }
        other => Err(Error::Usage(format!(
            "unknown family `{other}`; valid families: soliton-cylinder, qb-vstatic, \
             qb-cpm, p-cpm, warped"
        ))),
    }
}

fn construct(args: &ConstructArgs) -> Result<i32> {
    let params_json = std::fs::read_to_string(&args.params)?;
    let family = parse_family(&args.family, &params_json)?;
    let instance = family.build()?;
    std::fs::write(&args.out, instance.to_json()?)?;

    let chart = &instance.chart;
    println!("family: {}", instance.family.cli_name());
    println!(
        "chart: x1 [{:.6}, {:.6}]  x2 [{:.6}, {:.6}]  x3 [{:.6}, {:.6}]",
        chart.lo[0], chart.hi[0], chart.lo[1], chart.hi[1], chart.lo[2], chart.hi[2]
    );
    if instance.provenance.guard_notes.is_empty() {
        println!("guards: none fired");
    } else {
        for note in &instance.provenance.guard_notes {
            println!("guard: {note}");
        }
    }
    println!("ode drift: {:.17e}", instance.provenance.drift);
    if instance.provenance.accuracy_flagged {
        println!("warning: step-halving check flagged the integration accuracy");
    }
    println!("wrote {}", args.out.display());
    Ok(EXIT_OK)
}

fn parse_grid(spec: &str) -> Result<[usize; 3]> {
    let parts: Vec<_> = spec.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::Usage(format!(
            "grid must be AxBxC (e.g. 7x7x7), got `{spec}`"
        )));
    }
    let mut counts = [0usize; 3];
    for (a, part) in parts.iter().enumerate() {
        counts[a] = part
            .parse()
            .map_err(|_| Error::Usage(format!("bad grid count `{part}`")))?;
    }
    if counts.iter().any(|&c| c < 3) {
        return Err(Error::Usage(format!(
            "grid counts must be at least 3 per axis, got {counts:?}"
        )));
    }
    Ok(counts)
}

fn load_instance(path: &Path) -> Result<MetricInstance> {
    let json = std::fs::read_to_string(path)?;
    MetricInstance::from_json(&json)
}

fn verify_cmd(args: &VerifyArgs) -> Result<i32> {
    let selection = CheckSelection::parse(&args.checks)?;
    let counts = parse_grid(&args.grid)?;
    if let Some(tol) = args.tolerance {
        if !(tol > 0.0) {
            return Err(Error::Usage(format!(
                "tolerance override must be positive, got {tol}"
            )));
        }
    }
    let instance = load_instance(&args.instance)?;
    let grid = SampleGrid::new(&instance.chart, counts)?;
    let mut suite = Suite::new(&instance, grid)?;
    if let Some(tol) = args.tolerance {
        suite.set_tolerance(tol);
    }
    let report = suite.run(&selection)?;
    std::fs::write(&args.report, report.to_json()?)?;

    for check in &report.checks {
        println!(
            "{:<32} {:>12.5e}  (tol {:>9.3e})  {}",
            check.name,
            check.max_residual,
            check.tolerance,
            match check.verdict {
                crate::verify::Verdict::Pass => "pass",
                crate::verify::Verdict::Fail =>
                    if check.mandatory {
                        "FAIL"
                    } else {
                        "fail (informative)"
                    },
                crate::verify::Verdict::Inconclusive => "INCONCLUSIVE",
            }
        );
    }
    println!(
        "overall: {}",
        if report.overall_pass { "pass" } else { "FAIL" }
    );
    println!("wrote {}", args.report.display());
    Ok(if report.overall_pass {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAIL
    })
}

#[derive(Debug, serde::Deserialize)]
struct SweepDocument {
    base: serde_json::Value,
    ranges: BTreeMap<String, SweepRange>,
}

#[derive(Debug, serde::Deserialize)]
struct SweepRange {
    start: f64,
    stop: f64,
    count: usize,
}

impl SweepRange {
    fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count)
            .map(|k| {
                self.start + (self.stop - self.start) * k as f64 / (self.count - 1) as f64
            })
            .collect()
    }
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn sweep(args: &SweepArgs) -> Result<i32> {
    let counts = parse_grid(&args.grid)?;
    let doc: SweepDocument = serde_json::from_str(&std::fs::read_to_string(
        &args.param_ranges,
    )?)
    .map_err(|e| Error::Usage(format!("malformed param-ranges document: {e}")))?;
    if doc.ranges.is_empty() || doc.ranges.values().any(|r| r.count == 0) {
        return Err(Error::Usage(
            "param-ranges must contain at least one range with count ≥ 1".to_string(),
        ));
    }

    // Cartesian product in BTreeMap (name-sorted) order.
    let names: Vec<&String> = doc.ranges.keys().collect();
    let value_lists: Vec<Vec<f64>> = doc.ranges.values().map(|r| r.values()).collect();
    let mut tuples: Vec<Vec<f64>> = vec![Vec::new()];
    for list in &value_lists {
        let mut next = Vec::with_capacity(tuples.len() * list.len());
        for t in &tuples {
            for v in list {
                let mut t2 = t.clone();
                t2.push(*v);
                next.push(t2);
            }
        }
        tuples = next;
    }

    let mut csv = String::new();
    csv.push_str("family,");
    for n in &names {
        csv.push_str(n);
        csv.push(',');
    }
    csv.push_str("chart_x1,chart_x2,chart_x3,max_eq_residual,min_eigen_gap,cotton_witness,guard_note\n");

    for tuple in &tuples {
        let mut params = doc.base.clone();
        let obj = params.as_object_mut().ok_or_else(|| {
            Error::Usage("param-ranges `base` must be a JSON object".to_string())
        })?;
        for (name, value) in names.iter().zip(tuple) {
            obj.insert(
                (*name).clone(),
                serde_json::Value::from(*value),
            );
        }
        let params_json = serde_json::to_string(&params)?;
        let row = sweep_row(&args.family, &params_json, counts);
        csv.push_str(&args.family);
        csv.push(',');
        for v in tuple {
            csv.push_str(&format!("{v:.17e},"));
        }
        match row {
            Ok((lengths, eq, gap, cotton, note)) => {
                csv.push_str(&format!(
                    "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
                    lengths[0],
                    lengths[1],
                    lengths[2],
                    eq,
                    gap,
                    cotton,
                    csv_quote(&note)
                ));
            }
            Err(err) => {
                let note = match &err {
                    Error::EmptyGuardInterval { name, .. } => {
                        format!("guard: {name} ({err})")
                    }
                    _ => format!("{err}"),
                };
                csv.push_str(&format!(
                    "0,0,0,nan,nan,nan,{}\n",
                    csv_quote(&note)
                ));
            }
        }
    }
    std::fs::write(&args.out, csv)?;
    println!("wrote {} rows to {}", tuples.len(), args.out.display());
    Ok(EXIT_OK)
}

type SweepRow = ([f64; 3], f64, f64, f64, String);

fn sweep_row(family: &str, params_json: &str, counts: [usize; 3]) -> Result<SweepRow> {
    let spec = parse_family(family, params_json)?;
    let instance = spec.build()?;
    let grid = SampleGrid::new(&instance.chart, counts)?;
    let suite = Suite::new(&instance, grid)?;
    let eq = suite.equation_residual().max_residual;
    let mut min_gap = f64::INFINITY;
    let mut cotton_max = 0.0f64;
    for d in suite.point_data() {
        min_gap = min_gap.min((d.eigen.values[0] - d.eigen.values[1]).abs());
        cotton_max =
            cotton_max.max(crate::tensor::rank3_g_norm(&d.jets.cotton(), d.ginv));
    }
    let note = instance.provenance.guard_notes.join("; ");
    let lengths = instance.chart.lengths();
    Ok((lengths, eq, min_gap, cotton_max, note))
}

fn oracle(args: &OracleArgs) -> Result<i32> {
    let instance = load_instance(&args.instance)?;
    let parts: Vec<_> = args.point.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Usage(format!(
            "point must be `x,y,z`, got `{}`",
            args.point
        )));
    }
    let mut point = [0.0; 3];
    for (a, part) in parts.iter().enumerate() {
        point[a] = part
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("bad coordinate `{part}`")))?;
    }
    if !(args.step > 0.0) {
        return Err(Error::Usage(format!("step must be positive, got {}", args.step)));
    }
    if !instance.chart.contains(point) {
        return Err(Error::OutsideDomain { point });
    }

    let fields = [
        ("g11", instance.metric.components[0].clone()),
        ("g22", instance.metric.components[1].clone()),
        ("g33", instance.metric.components[2].clone()),
        ("f", instance.potential()),
    ];
    let mut worst = 0.0f64;
    println!(
        "{:<10} {:>24} {:>24} {:>12}",
        "quantity", "jet", "central difference", "rel dev"
    );
    for (name, field) in &fields {
        let jet = field.jet(point)?;
        let fd = finite_difference_oracle(field, point, args.step)?;
        for a in 0..3 {
            let j = jet.d1(a);
            let dev = (j - fd.grad[a]).abs() / (1.0 + j.abs());
            worst = worst.max(dev);
            println!(
                "d{}({:<4})  {:>24.16e} {:>24.16e} {:>12.3e}",
                a + 1,
                name,
                j,
                fd.grad[a],
                dev
            );
        }
        for a in 0..3 {
            for b in a..3 {
                let j = jet.d2(a, b);
                let dev = (j - fd.hess[a][b]).abs() / (1.0 + j.abs());
                worst = worst.max(dev);
                println!(
                    "d{}d{}({:<4}) {:>23.16e} {:>24.16e} {:>12.3e}",
                    a + 1,
                    b + 1,
                    name,
                    j,
                    fd.hess[a][b],
                    dev
                );
            }
        }
    }
    println!("max relative deviation: {worst:.3e}");
    Ok(if worst <= 1e-5 { EXIT_OK } else { EXIT_VERIFY_FAIL })
}
