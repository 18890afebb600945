use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use pacbayes::certify::{
    grid_search, pareto_front, reference_star, write_certificates, write_pareto, write_reference, Certifier, ParetoPoint,
    CSV_SCHEMA_VERSION,
};
use pacbayes::curvature::{diag_fisher, landscape_probe, BlockHessian, LANDSCAPE_SCHEMA_VERSION};
use pacbayes::data::{collapse_classes, load_cifar_bin, load_idx, BlobSpec, Dataset, MinMax, Split};
use pacbayes::nnet::io::{load_record, read_params, save_record, write_params};
use pacbayes::nnet::{train as train_net, NetSpec, TrainRecord};
use pacbayes::posterior::{Family, SkfacCurvature};
use serde_json::json;

use crate::config::{self, DataSource, RunConfig};
use crate::manifest::Manifest;
use crate::store::{read_block, write_block};
use crate::{CliError, RunArgs};

pub const OUT_ENV: &str = "PACBAYES_OUT";

const TRAIN_DIR: &str = "train";
const CURVATURE_DIR: &str = "curvature";
const CERTIFY_DIR: &str = "certify";
const PROBE_DIR: &str = "probe";

fn out_dir(args: &RunArgs, cfg: &RunConfig) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if cfg.out_dir.is_relative() => PathBuf::from(root).join(&cfg.out_dir),
        _ => cfg.out_dir.clone(),
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn input_error(e: pacbayes::Error) -> CliError {
    match e {
        pacbayes::Error::Io { .. } => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn require(path: &Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
    path.clone().ok_or_else(|| CliError::Usage(format!("data.{key} is required for this source")))
}

/// Train and test splits as configured.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    let d = &cfg.data;
    let (mut train, mut test) = match d.source {
        DataSource::Blobs => BlobSpec { d: d.dim, k: d.classes, separation: d.separation, seed: cfg.seed }
            .train_test(d.n_train, d.n_test)
            .map_err(|e| CliError::Usage(e.to_string()))?,
        DataSource::Idx => {
            let train =
                load_idx(&require(&d.train_images, "train_images")?, &require(&d.train_labels, "train_labels")?).map_err(input_error)?;
            let test = load_idx(&require(&d.test_images, "test_images")?, &require(&d.test_labels, "test_labels")?).map_err(input_error)?;
            (train, test.with_split(Split::Test))
        }
        DataSource::Cifar => {
            if d.train_batches.is_empty() || d.test_batches.is_empty() {
                return Err(CliError::Usage("data.train_batches and data.test_batches are required for cifar".into()));
            }
            let train = load_cifar_bin(&d.train_batches).map_err(input_error)?;
            let test = load_cifar_bin(&d.test_batches).map_err(input_error)?;
            (train, test.with_split(Split::Test))
        }
    };
    if d.source != DataSource::Blobs {
        if d.n_train > 0 {
            train = train.head(d.n_train);
        }
        if d.n_test > 0 {
            test = test.head(d.n_test);
        }
    }
    if d.collapse > 0 {
        train = collapse_classes(&train, d.collapse)?;
        test = collapse_classes(&test, d.collapse)?;
    }
    if d.scale {
        let mm = MinMax::fit(&train);
        train = mm.apply(&train)?;
        test = mm.apply(&test)?;
    }
    Ok((train, test))
}

fn net_spec(cfg: &RunConfig, train: &Dataset) -> Result<NetSpec, CliError> {
    let mut widths = vec![train.dim()];
    widths.extend(&cfg.net.hidden);
    widths.push(train.classes());
    Ok(NetSpec::new(widths, cfg.net.head)?)
}

fn load_run(args: &RunArgs) -> Result<(RunConfig, PathBuf, Manifest, TrainRecord, Dataset, Dataset), CliError> {
    let cfg = config::load(args.config.as_deref(), &args.set)?;
    let out = out_dir(args, &cfg);
    let manifest = Manifest::load(&out)?;
    let record = load_record(&out.join(TRAIN_DIR)).map_err(input_error)?;
    let (train, test) = load_data(&cfg)?;
    if train.dim() != record.spec.input_dim() {
        return Err(CliError::Usage(format!(
            "the data has {} features but the trained network expects {}",
            train.dim(),
            record.spec.input_dim()
        )));
    }
    Ok((cfg, out, manifest, record, train, test))
}

pub fn train(args: &RunArgs) -> Result<(), CliError> {
    let cfg = config::load(args.config.as_deref(), &args.set)?;
    let (train_set, test_set) = load_data(&cfg)?;
    let spec = net_spec(&cfg, &train_set)?;
    let out = out_dir(args, &cfg);
    eprintln!(
        "training {:?} on {} examples ({} classes), {} epochs",
        spec.widths(),
        train_set.len(),
        train_set.classes(),
        cfg.train.epochs
    );
    let record = train_net(&spec, &train_set, Some(&test_set), &cfg.train, cfg.seed)?;
    create_dir(&out)?;
    // Cached curvature belongs to the previous weights.
    let _ = fs::remove_dir_all(out.join(CURVATURE_DIR));
    let mut manifest = Manifest::new(cfg.seed);
    let config_path = out.join("config.toml");
    fs::write(&config_path, config::render(&cfg)).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", config_path.display())))?;
    manifest.add_file(&out, &config_path)?;
    for p in save_record(&out.join(TRAIN_DIR), &record)? {
        manifest.add_file(&out, &p)?;
    }
    manifest.summary.insert("train_error".into(), json!(record.train_error));
    manifest.summary.insert("test_error".into(), json!(record.test_error));
    manifest.summary.insert("num_params".into(), json!(spec.num_params()));
    let path = manifest.save(&out)?;
    eprintln!("train error {:.4}, test error {:.4}", record.train_error, record.test_error.unwrap_or(f64::NAN));
    println!("{}", path.display());
    Ok(())
}

fn fisher_for(out: &Path, manifest: &mut Manifest, record: &TrainRecord, train: &Dataset, seed: u64) -> Result<Vec<f64>, CliError> {
    let path = out.join(CURVATURE_DIR).join("fisher.bin");
    if path.exists() {
        return Ok(read_params(&path, &record.spec)?.into_values());
    }
    eprintln!("computing the diagonal Fisher on {} examples", train.len());
    let f = diag_fisher(&record.spec, &record.theta_star, train.x().view(), seed)?;
    create_dir(&out.join(CURVATURE_DIR))?;
    write_params(&path, &f.h)?;
    manifest.add_file(out, &path)?;
    Ok(f.h.into_values())
}

fn skfac_for(out: &Path, manifest: &mut Manifest, record: &TrainRecord, train: &Dataset) -> Result<SkfacCurvature, CliError> {
    let dir = out.join(CURVATURE_DIR);
    let paths: Vec<PathBuf> = (0..record.spec.num_layers()).map(|l| dir.join(format!("block_{l}.bin"))).collect();
    if paths.iter().all(|p| p.exists()) {
        let blocks = paths.iter().map(|p| read_block(p)).collect::<Result<Vec<BlockHessian>, _>>()?;
        return Ok(SkfacCurvature::new(&record.spec, blocks)?);
    }
    eprintln!("computing block Hessians on {} examples", train.len());
    let curv = SkfacCurvature::compute(&record.spec, &record.theta_star, train.x().view())?;
    create_dir(&dir)?;
    for (b, p) in curv.blocks().iter().zip(&paths) {
        write_block(p, b)?;
        manifest.add_file(out, p)?;
    }
    Ok(curv)
}

pub fn certify(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, out, mut manifest, record, train, _test) = load_run(args)?;
    let families = &cfg.certify.families;
    let fisher = if families.iter().any(|f| matches!(f, Family::ClosedDiag | Family::ClosedJoint)) {
        Some(fisher_for(&out, &mut manifest, &record, &train, cfg.seed)?)
    } else {
        None
    };
    let skfac = if families.contains(&Family::SkfacBlock) { Some(skfac_for(&out, &mut manifest, &record, &train)?) } else { None };
    let ctx = Certifier {
        spec: &record.spec,
        theta_star: &record.theta_star,
        theta0: &record.theta0,
        train: &train,
        params: cfg.certify.bound,
        fisher: fisher.as_deref(),
        skfac: skfac.as_ref(),
        vi: cfg.vi.clone(),
        seed: cfg.seed,
    };

    let dir = out.join(CERTIFY_DIR);
    let _ = fs::remove_dir_all(&dir);
    manifest.forget(&format!("{CERTIFY_DIR}/"));
    create_dir(&dir)?;
    let mut all = Vec::new();
    let mut failures = Vec::new();
    let mut written = Vec::new();
    for &family in families {
        let grid = cfg.build_grid(family);
        eprintln!("{family}: {} cells, m = {}", grid.len(), cfg.certify.bound.m);
        let res = grid_search(family, &grid, &ctx);
        for f in &res.failures {
            eprintln!("  {family} beta={} lambda={} failed: {}", f.beta, f.lambda, f.message);
        }
        if let Some(best) = res.certificates.iter().filter(|c| c.certified()).min_by(|a, b| a.bound_value.total_cmp(&b.bound_value)) {
            eprintln!(
                "  best bound {:.4} at beta={} lambda={} (risk {:.4}, KL {:.1})",
                best.bound_value, best.beta, best.lambda, best.emp_risk, best.kl_nats
            );
        }
        let points: Vec<ParetoPoint> = res.certificates.iter().map(ParetoPoint::from_certificate).collect();
        let path = dir.join(format!("pareto_{family}.csv"));
        write_pareto(create_file(&path)?, &pareto_front(&points))?;
        written.push(path);
        manifest.summary.insert(format!("{family}.cells"), json!(res.certificates.len()));
        manifest.summary.insert(format!("{family}.failures"), json!(res.failures.len()));
        all.extend(res.certificates);
        failures.extend(res.failures);
    }
    let path = dir.join("certificates.csv");
    write_certificates(create_file(&path)?, &all)?;
    written.insert(0, path);

    let path = dir.join("failures.csv");
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["schema_version", "family", "beta", "lambda", "message"]).map_err(csv_err)?;
    for f in &failures {
        w.write_record([CSV_SCHEMA_VERSION.to_string(), f.family.to_string(), f.beta.to_string(), f.lambda.to_string(), f.message.clone()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    drop(w);
    written.push(path);

    if let Ok(star) = reference_star(&record) {
        let path = dir.join("reference.csv");
        write_reference(create_file(&path)?, &star)?;
        written.push(path);
    }
    for p in &written {
        manifest.add_file(&out, p)?;
    }
    manifest.save(&out)?;
    println!("{}", written[0].display());
    Ok(())
}

pub fn probe(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, out, mut manifest, record, train, _test) = load_run(args)?;
    let opts = cfg.probe.options(cfg.seed);
    eprintln!("probing {} directions over {} points", opts.directions, opts.t_grid.len());
    let probe = landscape_probe(&record.spec, &record.theta_star, &train, &opts)?;
    let dir = out.join(PROBE_DIR);
    create_dir(&dir)?;
    let curves = dir.join("landscape.csv");
    probe.write_csv(create_file(&curves)?).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", curves.display())))?;

    let fits = dir.join("fits.csv");
    let mut w = csv::Writer::from_writer(create_file(&fits)?);
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["schema_version", "direction", "a", "b", "c", "r2", "lambda", "radius", "r2_within_radius"]).map_err(csv_err)?;
    for &(lambda, radius) in &probe.radii {
        // A radius narrower than the grid spacing leaves too few points to fit.
        let inner = match probe.fit_within(radius) {
            Ok(fits) => fits.into_iter().map(|f| f.r2).collect(),
            Err(pacbayes::Error::InvalidArgument(msg)) => {
                eprintln!("  radius {radius:.2}: {msg}");
                vec![f64::NAN; probe.fits.len()]
            }
            Err(e) => return Err(e.into()),
        };
        for (d, (full, local)) in probe.fits.iter().zip(&inner).enumerate() {
            eprintln!("  direction {d}: R² {:.6} overall, {local:.6} within radius {radius:.2}", full.r2);
            w.write_record([
                LANDSCAPE_SCHEMA_VERSION.to_string(),
                d.to_string(),
                full.a.to_string(),
                full.b.to_string(),
                full.c.to_string(),
                full.r2.to_string(),
                lambda.to_string(),
                radius.to_string(),
                local.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    drop(w);
    manifest.add_file(&out, &curves)?;
    manifest.add_file(&out, &fits)?;
    manifest.save(&out)?;
    println!("{}", curves.display());
    Ok(())
}
